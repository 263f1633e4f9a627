#include "nmdp/point_estimate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "nmdp/probability.hpp"

namespace nmdp {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const NelderMeadOptions& options) {
  const Eigen::Index n = x0.size();
  if (n < 1) throw InvalidArgument("nelder_mead: empty start point");
  if (!(options.initial_step > 0.0) || !(options.tolerance > 0.0) || options.max_evaluations < 1) {
    throw InvalidArgument("nelder_mead: bad options");
  }
  NelderMeadResult out;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++out.evaluations;
    const double y = f(x);
    return std::isfinite(y) ? y : kInfinity;
  };
  std::vector<Eigen::VectorXd> pts;
  std::vector<double> vals;
  pts.push_back(x0);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd p = x0;
    p(i) += options.initial_step;
    pts.push_back(std::move(p));
  }
  for (const auto& p : pts) vals.push_back(eval(p));
  std::vector<std::size_t> order(pts.size());

  while (out.evaluations < options.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];
    if (std::abs(vals[worst] - vals[best]) <= options.tolerance * (1.0 + std::abs(vals[best]))) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i != worst) centroid += pts[i];
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - pts[worst]);
    const double fr = eval(reflected);
    if (fr < vals[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(expanded);
      if (fe < fr) {
        pts[worst] = expanded;
        vals[worst] = fe;
      } else {
        pts[worst] = reflected;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = reflected;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(contracted);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = contracted;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  out.x = pts[static_cast<std::size_t>(it - vals.begin())];
  out.value = *it;
  return out;
}

namespace {

struct HermiteRule {
  std::vector<double> x;      // sqrt(2) * physicists' nodes
  std::vector<double> log_w;  // log(weight / sqrt(pi))
};

/// Golub-Welsch on the Hermite Jacobi matrix.
HermiteRule hermite_rule(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(j);
  HermiteRule rule;
  for (int k = 0; k < n; ++k) {
    const double v0 = eig.eigenvectors()(0, k);
    rule.x.push_back(std::sqrt(2.0) * eig.eigenvalues()(k));
    rule.log_w.push_back(std::log(v0 * v0));
  }
  return rule;
}

const HermiteRule& cached_rule(int n) {
  static const HermiteRule r16 = hermite_rule(16);
  static const HermiteRule r32 = hermite_rule(32);
  static const HermiteRule r64 = hermite_rule(64);
  if (n == 16) return r16;
  if (n == 32) return r32;
  if (n == 64) return r64;
  throw InvalidArgument("log_choice_probability: nodes must be 16, 32 or 64");
}

}  // namespace

double log_choice_probability(const Eigen::VectorXd& mu, int row, int nodes) {
  if (row < 0 || row >= mu.size()) throw InvalidArgument("log_choice_probability: row out of range");
  if (mu.size() == 1) return 0.0;
  const HermiteRule& rule = cached_rule(nodes);
  double top = -kInfinity;
  std::vector<double> terms(rule.x.size());
  for (std::size_t k = 0; k < rule.x.size(); ++k) {
    double s = rule.log_w[k];
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      if (i != row) s += std_normal_logcdf(rule.x[k] + mu(row) - mu(i));
    }
    terms[k] = s;
    top = std::max(top, s);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - top);
  return top + std::log(sum);
}

double log_posterior_density(const ValueFunction& v, const Dataset& data, double kappa) {
  if (v.size() != data.dim) throw InvalidArgument("log_posterior_density: dimension mismatch");
  Eigen::VectorXd x = v.values;
  if (data.mode == Mode::tabular) x.array() -= x.mean();
  double out = std::isfinite(kappa) ? -0.5 * x.squaredNorm() / kappa : 0.0;
  for (const auto& o : data.observations) out += log_choice_probability(o.r * x, o.chosen_row());
  return out;
}

ValueFunction posterior_mode(const Dataset& data, double kappa, const NelderMeadOptions& options) {
  if (data.dim < 1) throw InvalidArgument("posterior_mode: dataset has no dimension");
  auto objective = [&](const Eigen::VectorXd& x) {
    return -log_posterior_density(ValueFunction(x, data.mode), data, kappa);
  };
  NelderMeadResult r = nelder_mead(objective, Eigen::VectorXd::Zero(data.dim), options);
  // One restart from the best point guards against a collapsed simplex.
  r = nelder_mead(objective, r.x, options);
  Eigen::VectorXd x = r.x;
  if (data.mode == Mode::tabular) x.array() -= x.mean();
  return ValueFunction(x, data.mode, data.mode == Mode::tabular);
}

}  // namespace nmdp
