#pragma once

#include <stdexcept>
#include <string>

namespace inflaquant {

// Input data or configuration is unusable. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateCovariateError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InvalidDimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// row is the 0-based observation index; the message shows the 1-based data row.
class DataValidationError : public ValidationError {
 public:
  DataValidationError(const std::string& what, long row)
      : ValidationError(what + " (data row " + std::to_string(row + 1) + ")"), row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A chain could not continue. Maps to CLI exit code 3.
class SamplerAbort : public std::runtime_error {
 public:
  SamplerAbort(const std::string& what, long iteration, std::string block)
      : std::runtime_error(what + " [iteration " + std::to_string(iteration) +
                           ", block " + block + "]"),
        iteration_(iteration),
        block_(std::move(block)) {}
  long iteration() const { return iteration_; }
  const std::string& block() const { return block_; }

 private:
  long iteration_;
  std::string block_;
};

}  // namespace inflaquant
