#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace nmdp {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// How a value function is parameterized.
///
/// Tabular: one entry per state, identified up to translation and scale, so
/// draws are kept on the sum-zero hyperplane. Basis: coefficients on K
/// feature functions, identified up to scale only.
enum class Mode { tabular, basis };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

struct ValueFunction {
  Eigen::VectorXd values;
  Mode mode = Mode::tabular;
  bool sum_zero = false;

  ValueFunction() = default;
  ValueFunction(Eigen::VectorXd v, Mode m, bool zero_sum = false)
      : values(std::move(v)), mode(m), sum_zero(zero_sum) {}

  Eigen::Index size() const { return values.size(); }
  double operator()(Eigen::Index i) const { return values(i); }

  /// Throws InvalidArgument if an entry is non-finite or the sum-zero flag
  /// is set and |sum| > tol.
  void validate(double tol = 1e-9) const;
};

}  // namespace nmdp
