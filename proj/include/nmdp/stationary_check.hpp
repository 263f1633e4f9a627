#pragma once

#include <vector>

#include <Eigen/Dense>

#include "nmdp/probability.hpp"
#include "nmdp/sampler.hpp"

namespace nmdp {

/// One application of the transformation kernel Q with the latent target
/// f_Y = N(0, C), given its precision P = C^{-1}. Draws z from
/// f_Y(phi_z(y)) J_z(y) nu(dz) and returns phi_z(y) (root convention). nu is
/// the invariant measure that makes Q reversible: dz1 / z1 for scale only,
/// dz2 for translation only and z1^{-1/2} dz1 dz2 for both.
Eigen::VectorXd q_kernel_step(const Eigen::VectorXd& y, const Eigen::MatrixXd& precision, Moves moves, RngStream& rng);

struct QCheckReport {
  int draws = 0;
  std::vector<double> mean_in, mean_out;
  std::vector<double> var_in, var_out;
  /// Standard errors of mean_out and var_out against the exact moments.
  std::vector<double> mean_se, var_se;
  std::vector<double> ks_p_value;
  bool moments_ok = true;
  bool ks_ok = true;
  bool passed() const { return moments_ok && ks_ok; }
};

/// Draws y ~ N(0, C), applies Q once to each and checks the output against
/// the exact marginals: means and variances within 3 se, KS at level alpha.
QCheckReport stationary_check_q(const Eigen::MatrixXd& covariance, Moves moves, int draws, RngStream& rng,
                                double alpha = 0.001);

}  // namespace nmdp
