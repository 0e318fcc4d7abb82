#pragma once

#include <stdexcept>
#include <string>

namespace cavflow {

/// Input outside the physical domain of a model function (density outside [0, R], speed outside [0, V]).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Scenario or planner configuration that cannot be simulated.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A transition produced a state outside the admissible box beyond round-off.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, int cell) : std::runtime_error(what), cell_(cell) {}
  int cell() const noexcept { return cell_; }

 private:
  int cell_;
};

/// An enumeration would exceed its configured candidate budget.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cavflow
