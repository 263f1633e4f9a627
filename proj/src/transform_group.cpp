#include "nmdp/transform_group.hpp"

#include <cmath>
#include <numeric>

namespace nmdp {

std::vector<int> AugmentedData::dims() const {
  std::vector<int> out;
  out.reserve(w.size());
  for (const auto& x : w) out.push_back(static_cast<int>(x.size()));
  return out;
}

long AugmentedData::total_dim() const {
  long n = 0;
  for (const auto& x : w) n += x.size();
  return n;
}

bool AugmentedData::satisfies_constraints(std::span<const int> chosen) const {
  if (chosen.size() != w.size()) return false;
  for (std::size_t t = 0; t < w.size(); ++t) {
    const int c = chosen[t];
    if (c < 0 || c >= w[t].size()) return false;
    if (w[t].maxCoeff() > w[t](c)) return false;
  }
  return true;
}

void TransformParams::validate() const {
  if (!(z1 > 0.0) || !std::isfinite(z1)) throw InvalidArgument("transform: z1 must be positive and finite");
  if (!std::isfinite(z2)) throw InvalidArgument("transform: z2 must be finite");
}

TransformParams compose(const TransformParams& z_tilde, const TransformParams& z, Convention convention) {
  z_tilde.validate();
  z.validate();
  const double scale = convention == Convention::root ? std::sqrt(z_tilde.z1) : z_tilde.z1;
  return {z_tilde.z1 * z.z1, z_tilde.z2 + z.z2 / scale};
}

TransformParams invert(const TransformParams& z, Convention convention) {
  z.validate();
  const double scale = convention == Convention::root ? std::sqrt(z.z1) : z.z1;
  return {1.0 / z.z1, -scale * z.z2};
}

TransformParams identity_transform() { return {1.0, 0.0}; }

Eigen::VectorXd phi(const Eigen::VectorXd& y, const TransformParams& z, Convention convention) {
  z.validate();
  const double scale = convention == Convention::root ? std::sqrt(z.z1) : z.z1;
  return (y.array() / scale - z.z2).matrix();
}

Eigen::VectorXd phi_inverse(const Eigen::VectorXd& y, const TransformParams& z, Convention convention) {
  z.validate();
  const double scale = convention == Convention::root ? std::sqrt(z.z1) : z.z1;
  return (scale * (y.array() + z.z2)).matrix();
}

AugmentedData apply_transform(const AugmentedData& w, const TransformParams& z, Direction direction,
                              Convention convention) {
  AugmentedData out;
  out.w.reserve(w.w.size());
  for (const auto& x : w.w) {
    out.w.push_back(direction == Direction::forward ? phi(x, z, convention) : phi_inverse(x, z, convention));
  }
  return out;
}

double log_jacobian(const TransformParams& z, long total_dim, Convention convention) {
  z.validate();
  const double q = static_cast<double>(total_dim);
  return convention == Convention::root ? -0.5 * q * std::log(z.z1) : -q * std::log(z.z1);
}

double log_jacobian(const TransformParams& z, std::span<const int> dims, Convention convention) {
  return log_jacobian(z, std::accumulate(dims.begin(), dims.end(), 0L), convention);
}

}  // namespace nmdp
