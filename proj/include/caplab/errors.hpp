#pragma once

#include <stdexcept>
#include <string>

namespace caplab {

// Precondition / domain violations. The CLI maps these to exit code 1.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File and parse failures. The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training loss became non-finite at a given step.
class DivergenceError : public DomainError {
 public:
  DivergenceError(const std::string& what, long step)
      : DomainError(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace caplab
