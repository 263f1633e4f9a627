#include "nmdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nmdp {

namespace {

int argmax_lowest(const Eigen::VectorXd& x) {
  int best = 0;
  for (int i = 1; i < x.size(); ++i) {
    if (x(i) > x(best)) best = i;
  }
  return best;
}

void check_beta(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("discount factor must lie in (0, 1)");
}

}  // namespace

TransitionModel::TransitionModel(std::vector<Eigen::MatrixXd> kernels) : kernels_(std::move(kernels)) {
  if (kernels_.empty()) throw InvalidArgument("transition model needs at least one action");
  const auto n = kernels_.front().rows();
  if (n < 1) throw InvalidArgument("transition model needs at least one state");
  for (std::size_t a = 0; a < kernels_.size(); ++a) {
    const auto& p = kernels_[a];
    if (p.rows() != n || p.cols() != n) {
      throw InvalidArgument("kernel for action " + std::to_string(a) + " is not " + std::to_string(n) + "x" +
                            std::to_string(n));
    }
    if (!p.allFinite() || p.minCoeff() < 0.0 || p.maxCoeff() > 1.0) {
      throw InvalidArgument("kernel for action " + std::to_string(a) + " has entries outside [0, 1]");
    }
    for (Eigen::Index x = 0; x < n; ++x) {
      const double s = p.row(x).sum();
      if (std::abs(s - 1.0) > kRowSumTolerance) {
        throw InvalidArgument("kernel for action " + std::to_string(a) + ", row " + std::to_string(x) +
                              " sums to " + std::to_string(s));
      }
    }
  }
}

nlohmann::json TransitionModel::to_json() const {
  nlohmann::json kernels = nlohmann::json::array();
  for (const auto& p : kernels_) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      rows.push_back(std::vector<double>(p.row(i).begin(), p.row(i).end()));
    }
    kernels.push_back(std::move(rows));
  }
  return {{"version", kFormatVersion}, {"N", num_states()}, {"M", num_actions()}, {"kernels", kernels}};
}

TransitionModel TransitionModel::from_json(const nlohmann::json& doc) {
  if (doc.value("version", kFormatVersion) != kFormatVersion) {
    throw InvalidArgument("unsupported transition model version");
  }
  const int n = doc.at("N").get<int>();
  const int m = doc.at("M").get<int>();
  const auto& ks = doc.at("kernels");
  if (static_cast<int>(ks.size()) != m) throw InvalidArgument("kernels array does not have M entries");
  std::vector<Eigen::MatrixXd> kernels;
  for (const auto& k : ks) {
    if (static_cast<int>(k.size()) != n) throw InvalidArgument("kernel does not have N rows");
    Eigen::MatrixXd p(n, n);
    for (int i = 0; i < n; ++i) {
      const auto row = k.at(i).get<std::vector<double>>();
      if (static_cast<int>(row.size()) != n) throw InvalidArgument("kernel row does not have N entries");
      for (int j = 0; j < n; ++j) p(i, j) = row[j];
    }
    kernels.push_back(std::move(p));
  }
  return TransitionModel(std::move(kernels));
}

ConvergenceError::ConvergenceError(ValueFunction last, double residual, int iterations)
    : Error("value iteration did not converge after " + std::to_string(iterations) +
            " iterations (residual " + std::to_string(residual) + ")"),
      last_(std::move(last)),
      residual_(residual),
      iterations_(iterations) {}

Eigen::VectorXd bellman_operator(const TransitionModel& model, const RewardFunction& reward, double beta,
                                 const Eigen::VectorXd& v) {
  const int n = model.num_states();
  if (v.size() != n || reward.r.size() != n) throw InvalidArgument("bellman operator: dimension mismatch");
  Eigen::VectorXd best = Eigen::VectorXd::Constant(n, -kInfinity);
  for (int a = 0; a < model.num_actions(); ++a) {
    best = best.cwiseMax(model.kernel(a) * v);
  }
  return reward.r + beta * best;
}

ValueFunction value_iteration(const TransitionModel& model, const RewardFunction& reward, double beta, double tol,
                              int max_iters) {
  check_beta(beta);
  if (!(tol > 0.0)) throw InvalidArgument("value iteration: tol must be positive");
  if (!reward.r.allFinite()) throw InvalidArgument("value iteration: reward has non-finite entries");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(model.num_states());
  double residual = kInfinity;
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd next = bellman_operator(model, reward, beta, v);
    residual = (next - v).lpNorm<Eigen::Infinity>();
    if (residual <= tol) return ValueFunction(std::move(v), Mode::tabular);
    v = std::move(next);
  }
  throw ConvergenceError(ValueFunction(std::move(v), Mode::tabular), residual, max_iters);
}

RMatrix transition_matrix(const TransitionModel& model, int state, std::span<const int> legal_actions) {
  if (legal_actions.empty()) throw InvalidArgument("transition matrix: legal action set is empty");
  if (state < 0 || state >= model.num_states()) throw InvalidArgument("transition matrix: state out of range");
  std::vector<int> labels(legal_actions.begin(), legal_actions.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  RMatrix out;
  out.state = state;
  out.rows.resize(static_cast<Eigen::Index>(labels.size()), model.num_states());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= model.num_actions()) {
      throw InvalidArgument("transition matrix: action " + std::to_string(labels[i]) + " out of range");
    }
    out.rows.row(static_cast<Eigen::Index>(i)) = model.kernel(labels[i]).row(state);
  }
  out.action_labels = std::move(labels);
  return out;
}

RMatrix transition_matrix(const TransitionModel& model, int state) {
  std::vector<int> all(model.num_actions());
  for (int a = 0; a < model.num_actions(); ++a) all[a] = a;
  return transition_matrix(model, state, all);
}

int optimal_policy(const ValueFunction& v, const RMatrix& r) {
  if (r.action_labels.empty()) throw InvalidArgument("optimal policy: legal action set is empty");
  if (v.mode != Mode::tabular || v.size() != r.rows.cols()) {
    throw InvalidArgument("optimal policy: needs a tabular value function of length N");
  }
  return r.action_labels[argmax_lowest(r.rows * v.values)];
}

int optimal_policy(const ValueFunction& v, const TransitionModel& model, int state) {
  return optimal_policy(v, transition_matrix(model, state));
}

int sample_next_state(const TransitionModel& model, int state, int action, RngStream& rng) {
  const auto& row = model.kernel(action).row(state);
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    acc += row(j);
    if (u < acc) return static_cast<int>(j);
  }
  // Rounding left u above the accumulated mass; fall back to the last state with mass.
  for (Eigen::Index j = row.size() - 1; j >= 0; --j) {
    if (row(j) > 0.0) return static_cast<int>(j);
  }
  return static_cast<int>(row.size() - 1);
}

PolicyEvaluation evaluate_policy(const TransitionModel& model, const RewardFunction& reward, double beta,
                                 std::span<const int> policy, int start_state, int num_rollouts, int horizon,
                                 std::uint64_t rng_seed) {
  check_beta(beta);
  const int n = model.num_states();
  if (static_cast<int>(policy.size()) != n) throw InvalidArgument("evaluate policy: policy must cover every state");
  if (reward.r.size() != n) throw InvalidArgument("evaluate policy: reward length differs from N");
  if (start_state < 0 || start_state >= n) throw InvalidArgument("evaluate policy: start state out of range");
  if (num_rollouts < 1 || horizon < 1) throw InvalidArgument("evaluate policy: need rollouts and horizon >= 1");
  for (int a : policy) {
    if (a < 0 || a >= model.num_actions()) throw InvalidArgument("evaluate policy: action out of range");
  }

  const RngStream base(rng_seed);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int i = 0; i < num_rollouts; ++i) {
    RngStream rng = base.split(static_cast<std::uint64_t>(i));
    int x = start_state;
    double discount = 1.0;
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      total += discount * reward.r(x);
      discount *= beta;
      if (t + 1 < horizon) x = sample_next_state(model, x, policy[x], rng);
    }
    sum += total;
    sum_sq += total * total;
  }
  PolicyEvaluation out;
  out.estimate = sum / num_rollouts;
  if (num_rollouts > 1) {
    const double var = std::max(0.0, (sum_sq - num_rollouts * out.estimate * out.estimate) / (num_rollouts - 1));
    out.standard_error = std::sqrt(var / num_rollouts);
  }
  out.truncation_bound = std::pow(beta, horizon) * reward.r.lpNorm<Eigen::Infinity>() / (1.0 - beta);
  return out;
}

TransitionModel random_transition_model(int num_states, int num_actions, RngStream& rng, double concentration) {
  if (num_states < 1 || num_actions < 1) throw InvalidArgument("random model: need N, M >= 1");
  std::vector<Eigen::MatrixXd> kernels;
  for (int a = 0; a < num_actions; ++a) {
    Eigen::MatrixXd p(num_states, num_states);
    for (int x = 0; x < num_states; ++x) {
      for (int j = 0; j < num_states; ++j) p(x, j) = rng.gamma(concentration);
      p.row(x) /= p.row(x).sum();
    }
    kernels.push_back(std::move(p));
  }
  return TransitionModel(std::move(kernels));
}

}  // namespace nmdp
