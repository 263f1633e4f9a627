#include "nmdp/types.hpp"

#include <cmath>

namespace nmdp {

std::string_view to_string(Mode mode) {
  return mode == Mode::tabular ? "tabular" : "basis";
}

Mode parse_mode(std::string_view text) {
  if (text == "tabular") return Mode::tabular;
  if (text == "basis") return Mode::basis;
  throw InvalidArgument("unknown mode '" + std::string(text) + "' (expected tabular|basis)");
}

void ValueFunction::validate(double tol) const {
  if (!values.allFinite()) throw InvalidArgument("value function has non-finite entries");
  if (sum_zero && std::abs(values.sum()) > tol) {
    throw InvalidArgument("value function flagged sum-zero but sums to " +
                          std::to_string(values.sum()));
  }
}

}  // namespace nmdp
