#pragma once

#include <functional>

#include <Eigen/Dense>

#include "nmdp/choice_model.hpp"
#include "nmdp/types.hpp"

namespace nmdp {

struct NelderMeadOptions {
  double initial_step = 1.0;
  /// Stops when the spread of simplex values falls below this.
  double tolerance = 1e-8;
  int max_evaluations = 4000;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Minimizes f from x0 with the standard reflection/expansion/contraction/
/// shrink simplex moves. Non-finite values count as +inf.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const NelderMeadOptions& options = {});

/// log P(row is chosen) for utilities mu under unit noise, by Gauss-Hermite
/// quadrature of E[prod_{i != row} Phi(Y + mu(row) - mu(i))], Y ~ N(0, 1),
/// summed in log space so tiny probabilities stay finite.
double log_choice_probability(const Eigen::VectorXd& mu, int row, int nodes = 32);

/// Unnormalized log posterior: quadrature log-likelihood plus the N(0, kappa I)
/// prior (dropped for infinite kappa). Tabular values are centred first.
double log_posterior_density(const ValueFunction& v, const Dataset& data, double kappa);

/// Approximate posterior mode, searched from the origin. Tabular results are
/// centred.
ValueFunction posterior_mode(const Dataset& data, double kappa, const NelderMeadOptions& options = {});

}  // namespace nmdp
