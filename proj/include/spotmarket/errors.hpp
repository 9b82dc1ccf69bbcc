#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace spotmarket {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside a curve's domain, or a total above merged capacity.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed curve (gaps, discontinuities, wrong curvature).
class CurveError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, std::vector<std::string> violated)
      : Error(what), violated_(std::move(violated)) {}
  const std::vector<std::string>& violated() const { return violated_; }

 private:
  std::vector<std::string> violated_;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> trace)
      : Error(what), trace_(std::move(trace)) {}
  // max change per sweep (or per outer iteration)
  const std::vector<double>& residual_trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::vector<std::string> problems)
      : Error(what), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

}  // namespace spotmarket
