#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace efe {

// Axis names or cardinalities that do not line up across tensors or graph
// elements.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A slice that should be normalized sums to zero.
class DegenerateDistributionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An operation was handed an input that violates its precondition, e.g. an
// unnormalized distribution passed to entropy().
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// KL(p || q) with p(i) > 0 where q(i) = 0.
class DivergenceUndefinedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ModelValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ScheduleError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Every state of an edge received zero belief. Carries the offending edge.
class InconsistentEvidenceError : public std::runtime_error {
 public:
  InconsistentEvidenceError(std::string edge, const std::string& what)
      : std::runtime_error(what), edge_(std::move(edge)) {}
  const std::string& edge() const noexcept { return edge_; }

 private:
  std::string edge_;
};

class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Oracle computation refused because the instance exceeds the enumeration guard.
class GuardExceededError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace efe
