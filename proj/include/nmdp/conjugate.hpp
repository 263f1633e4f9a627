#pragma once

#include <Eigen/Dense>

#include "nmdp/choice_model.hpp"
#include "nmdp/probability.hpp"
#include "nmdp/transform_group.hpp"

namespace nmdp {

/// One draw of the Step-2 block. `u` is the sampled coefficient vector in the
/// design's own coordinates; `v`, `z2` are recovered from it.
struct Step2Draw {
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  double z1 = 1.0;
  double z2 = 0.0;
};

/// The Gaussian/inverse-gamma block for (U, Z1) given stacked transformed
/// utilities w', with U = sqrt(Z1) V (plus sqrt(Z1) Z2 1 when translating).
/// Given Z1, U ~ N(A^{-1} X^T w', Z1 A^{-1}) with A = X^T X + I / kappa, and
/// Z1 ~ IG(a + sum M_t / 2, b + Q / 2), Q = w'^T w' - w'^T X A^{-1} X^T w'.
///
/// Design X: tabular with translation uses the stacked R; tabular without it
/// uses R B for an orthonormal sum-zero basis B; basis mode uses R directly.
/// A is factored once at construction.
class ConjugateSystem {
 public:
  ConjugateSystem(const Dataset& data, bool translate, double kappa);

  /// Orthonormal N x (N-1) basis of the sum-zero subspace.
  static Eigen::MatrixXd sum_zero_basis(int n);

  const Eigen::MatrixXd& design() const { return x_; }
  long rows() const { return x_.rows(); }
  int value_dim() const { return dim_; }

  Eigen::VectorXd posterior_mean(const Eigen::VectorXd& w_stacked) const;
  /// Q above, clamped at zero against rounding.
  double residual(const Eigen::VectorXd& w_stacked) const;

  /// With scale disabled Z1 is fixed at 1.
  Step2Draw draw(const Eigen::VectorXd& w_stacked, bool scale, const InverseGammaParams& ig, RngStream& rng) const;

  /// Maps u back to (v, z2) for a given z1.
  void recover(const Eigen::VectorXd& u, double z1, Eigen::VectorXd& v, double& z2) const;

 private:
  Mode mode_;
  bool translate_;
  double kappa_;
  int dim_;
  Eigen::MatrixXd x_;
  Eigen::MatrixXd basis_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

Eigen::VectorXd stack(const AugmentedData& w);
Eigen::MatrixXd stack_rows(const Dataset& data);

/// The same conditional written with the least-squares quantities; needs an
/// invertible X^T X. Used to cross-check ConjugateSystem (SSR + H = Q).
struct LeastSquaresStep2Moments {
  Eigen::VectorXd u_ls;
  double ssr = 0.0;
  double h = 0.0;
  Eigen::MatrixXd s;
  Eigen::VectorXd mean;
};

LeastSquaresStep2Moments least_squares_step2_moments(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, double kappa, double z1);

}  // namespace nmdp
