#pragma once

#include <Eigen/Dense>

#include "nmdp/probability.hpp"

namespace nmdp {

struct MhSettings {
  int newton_max_iters = 20;
  double newton_tol = 1e-9;
  /// Weight of a N(mean, 1) component mixed into the proposal when the
  /// Gaussian approximation is narrower than 1. The target's right tail
  /// decays like N(mu(chosen), 1), so without it p/q is unbounded and a
  /// latent stranded in that tail is never moved. 0 gives the pure
  /// Gaussian proposal.
  double defensive_weight = 0.1;

  void validate() const;
};

/// Gaussian approximation N(mean, variance) to the marginal of the chosen
/// utility. `refined` is false when Newton-Raphson failed and the crude
/// factor-merging values were kept.
struct ProposalParams {
  double mean = 0.0;
  double variance = 1.0;
  bool refined = true;
  double defensive_weight = 0.0;

  double sample(RngStream& rng) const;
  double log_density(double x) const;
};

/// Log of p_u(x) = N(x; mu(chosen), 1) prod_{i != chosen} Phi(x - mu(i)), the
/// unnormalized marginal density of w(chosen) under the truncated Gaussian.
double log_chosen_marginal(double x, const Eigen::VectorXd& mu, int chosen);

ProposalParams mh_proposal_params(const Eigen::VectorXd& mu, int chosen, const MhSettings& settings = {});

/// Independent Metropolis-Hastings update of w(chosen) against p_u, followed
/// by a fresh draw of every competitor from N(mu(j), 1) truncated above at
/// w(chosen). Returns true if the proposal was accepted.
bool mh_step_w(Eigen::VectorXd& w, const Eigen::VectorXd& mu, int chosen, RngStream& rng,
               const ProposalParams& proposal);
bool mh_step_w(Eigen::VectorXd& w, const Eigen::VectorXd& mu, int chosen, RngStream& rng,
               const MhSettings& settings = {});

/// Exact draw from N(mu, I) restricted to {w(chosen) >= w(j)}: the chosen
/// coordinate by rejection from N(mu(chosen), 1) with acceptance
/// prod Phi(x - mu(j)), then the competitors conditionally.
Eigen::VectorXd sample_w_exact(const Eigen::VectorXd& mu, int chosen, RngStream& rng,
                               long max_attempts = 100'000'000);

}  // namespace nmdp
