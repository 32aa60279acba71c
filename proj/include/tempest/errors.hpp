#pragma once

#include <stdexcept>
#include <string>

namespace tempest {

/// Cholesky factorization hit a non-positive pivot: the input is not SPD.
class NotSpdError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every log-weight in an ensemble is -inf; nothing left to normalize.
class AllWeightsVanishedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A cached density value is NaN, so quadrature results would be meaningless.
class NonFiniteDensityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid experiment or sampler configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric failure inside a time-marching loop, annotated with the step index.
class SamplerError : public std::runtime_error {
 public:
  SamplerError(int step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}

  int step() const { return step_; }

 private:
  int step_;
};

}  // namespace tempest
