#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sweepctl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error
{
public:
  using Error::Error;
};

/// A polyhedron or linear system with no feasible point, or a point that
/// lies outside the set it was required to belong to.
class InfeasibleError : public Error
{
public:
  using Error::Error;
};

/// Raised by the time-stepping routines; carries the failing step index.
class SimulationError : public Error
{
public:
  SimulationError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step)
  {}

  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

class GeometryError : public Error
{
public:
  using Error::Error;
};

}  // namespace sweepctl
