#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace okf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error taxonomy shared by every module. Callers that need to distinguish
// failure classes (the CLI maps them onto exit codes) catch the subclasses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class NumericFailure : public Error {
 public:
  using Error::Error;
};

class SingularInnovation : public NumericFailure {
 public:
  using NumericFailure::NumericFailure;
};

class DegenerateGeometry : public NumericFailure {
 public:
  using NumericFailure::NumericFailure;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class CorruptData : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

inline void symmetrize(Mat& m) { m = (0.5 * (m + m.transpose())).eval(); }

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace okf
