#include "nmdp/mh_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace nmdp {

void MhSettings::validate() const {
  if (newton_max_iters < 0) throw InvalidArgument("MH: Newton iteration count must be non-negative");
  if (!(newton_tol > 0.0)) throw InvalidArgument("MH: Newton tolerance must be positive");
  if (!(defensive_weight >= 0.0 && defensive_weight < 1.0)) {
    throw InvalidArgument("MH: defensive weight must lie in [0, 1)");
  }
}

double ProposalParams::sample(RngStream& rng) const {
  if (defensive_weight > 0.0 && rng.uniform() < defensive_weight) return mean + rng.normal();
  return mean + std::sqrt(variance) * rng.normal();
}

double ProposalParams::log_density(double x) const {
  const double main = normal_logpdf(x, mean, std::sqrt(variance));
  if (defensive_weight <= 0.0) return main;
  const double wide = normal_logpdf(x, mean, 1.0);
  const double a = std::log1p(-defensive_weight) + main;
  const double b = std::log(defensive_weight) + wide;
  const double top = std::max(a, b);
  return top + std::log(std::exp(a - top) + std::exp(b - top));
}

double log_chosen_marginal(double x, const Eigen::VectorXd& mu, int chosen) {
  double out = normal_logpdf(x, mu(chosen), 1.0);
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (i != chosen) out += std_normal_logcdf(x - mu(i));
  }
  return out;
}

namespace {

struct Derivatives {
  double first = 0.0;
  double second = -1.0;
};

Derivatives log_marginal_derivatives(double x, const Eigen::VectorXd& mu, int chosen) {
  Derivatives d;
  d.first = -(x - mu(chosen));
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (i == chosen) continue;
    const double t = x - mu(i);
    const double lam = inverse_mills_ratio(t);
    d.first += lam;
    d.second -= lam * (t + lam);
  }
  return d;
}

}  // namespace

ProposalParams mh_proposal_params(const Eigen::VectorXd& mu, int chosen, const MhSettings& settings) {
  if (mu.size() < 1) throw InvalidArgument("MH: need at least one action");
  if (chosen < 0 || chosen >= mu.size()) throw InvalidArgument("MH: chosen index out of range");

  // Crude start: treat each competitor above the running mean as a unit
  // Gaussian factor and merge it in; the rest contribute roughly 1.
  std::vector<double> others;
  others.reserve(static_cast<std::size_t>(mu.size()));
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (i != chosen) others.push_back(mu(i));
  }
  std::sort(others.begin(), others.end(), std::greater<>());
  double m = mu(chosen);
  double precision = 1.0;
  for (double mi : others) {
    if (mi > m) {
      m = (precision * m + mi) / (precision + 1.0);
      precision += 1.0;
    }
  }
  auto finish = [&](ProposalParams p) {
    if (p.variance < 1.0) p.defensive_weight = settings.defensive_weight;
    return p;
  };
  const ProposalParams crude = finish({m, 1.0 / precision, false});
  if (others.empty()) return {m, 1.0, true};

  double x = m;
  for (int it = 0; it <= settings.newton_max_iters; ++it) {
    const Derivatives d = log_marginal_derivatives(x, mu, chosen);
    if (!std::isfinite(d.first) || !std::isfinite(d.second) || !(d.second < 0.0)) return crude;
    if (std::abs(d.first) <= settings.newton_tol) return finish({x, -1.0 / d.second, true});
    if (it == settings.newton_max_iters) break;
    x -= d.first / d.second;
  }
  return crude;
}

bool mh_step_w(Eigen::VectorXd& w, const Eigen::VectorXd& mu, int chosen, RngStream& rng,
               const ProposalParams& proposal) {
  if (w.size() != mu.size()) throw InvalidArgument("MH: w and mu differ in length");
  const double current = w(chosen);
  const double candidate = proposal.sample(rng);
  const double log_ratio = (log_chosen_marginal(candidate, mu, chosen) - proposal.log_density(candidate)) -
                           (log_chosen_marginal(current, mu, chosen) - proposal.log_density(current));
  const bool accepted = log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio;
  const double top = accepted ? candidate : current;
  w(chosen) = top;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    if (j != chosen) w(j) = sample_truncated_normal(mu(j), 1.0, -kInfinity, top, rng);
  }
  return accepted;
}

bool mh_step_w(Eigen::VectorXd& w, const Eigen::VectorXd& mu, int chosen, RngStream& rng,
               const MhSettings& settings) {
  return mh_step_w(w, mu, chosen, rng, mh_proposal_params(mu, chosen, settings));
}

Eigen::VectorXd sample_w_exact(const Eigen::VectorXd& mu, int chosen, RngStream& rng, long max_attempts) {
  if (chosen < 0 || chosen >= mu.size()) throw InvalidArgument("exact step: chosen index out of range");
  double top = 0.0;
  bool done = false;
  for (long k = 0; k < max_attempts && !done; ++k) {
    const double x = mu(chosen) + rng.normal();
    double log_accept = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      if (i != chosen) log_accept += std_normal_logcdf(x - mu(i));
    }
    if (std::log(rng.uniform()) < log_accept) {
      top = x;
      done = true;
    }
  }
  if (!done) throw Error("exact step: rejection sampler exceeded its attempt budget; use the MH kernel");
  Eigen::VectorXd w(mu.size());
  w(chosen) = top;
  for (Eigen::Index j = 0; j < mu.size(); ++j) {
    if (j != chosen) w(j) = sample_truncated_normal(mu(j), 1.0, -kInfinity, top, rng);
  }
  return w;
}

}  // namespace nmdp
