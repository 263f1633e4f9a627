#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nmdp/types.hpp"

namespace nmdp {

/// Latent utilities W_1..W_T; w[t] has one entry per legal action at t.
struct AugmentedData {
  std::vector<Eigen::VectorXd> w;

  int size() const { return static_cast<int>(w.size()); }
  std::vector<int> dims() const;
  long total_dim() const;
  /// True if w[t](chosen[t]) >= w[t](j) for every t and j.
  bool satisfies_constraints(std::span<const int> chosen) const;
};

/// Element (z1, z2) of the group R+ x R acting on utility vectors.
struct TransformParams {
  double z1 = 1.0;
  double z2 = 0.0;

  void validate() const;
};

/// How the scale acts. Root: phi_z(y) = y / sqrt(z1) - z2, the form under
/// which z1 scales the noise variance (used by the sampler). Linear:
/// phi_z(y) = y / z1 - z2.
enum class Convention { root, linear };

enum class Direction { forward, inverse };

/// The product z_tilde z, defined so that phi_{z_tilde} o phi_z = phi_{z_tilde z}.
TransformParams compose(const TransformParams& z_tilde, const TransformParams& z,
                        Convention convention = Convention::root);
TransformParams invert(const TransformParams& z, Convention convention = Convention::root);
TransformParams identity_transform();

Eigen::VectorXd phi(const Eigen::VectorXd& y, const TransformParams& z, Convention convention = Convention::root);
Eigen::VectorXd phi_inverse(const Eigen::VectorXd& y, const TransformParams& z,
                            Convention convention = Convention::root);

/// Forward applies phi_z to every w_t; inverse applies phi_z^{-1}, i.e.
/// sqrt(z1) (w_t + z2 1) under the root convention.
AugmentedData apply_transform(const AugmentedData& w, const TransformParams& z, Direction direction,
                              Convention convention = Convention::root);

/// log |d phi_z / dy| for y of total dimension sum(dims); constant in y.
double log_jacobian(const TransformParams& z, std::span<const int> dims, Convention convention = Convention::root);
double log_jacobian(const TransformParams& z, long total_dim, Convention convention = Convention::root);

}  // namespace nmdp
