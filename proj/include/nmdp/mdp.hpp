#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nmdp/probability.hpp"
#include "nmdp/types.hpp"

namespace nmdp {

/// Per-action N x N row-stochastic kernels, P_a(x, x') = p(x' | x, a).
class TransitionModel {
 public:
  static constexpr double kRowSumTolerance = 1e-12;
  static constexpr int kFormatVersion = 1;

  /// Rejects kernels that are not square, not all the same size, have
  /// entries outside [0, 1] or rows that do not sum to one within 1e-12.
  explicit TransitionModel(std::vector<Eigen::MatrixXd> kernels);

  int num_states() const { return static_cast<int>(kernels_.front().rows()); }
  int num_actions() const { return static_cast<int>(kernels_.size()); }
  const Eigen::MatrixXd& kernel(int action) const { return kernels_.at(action); }
  double probability(int state, int action, int next) const { return kernels_[action](state, next); }

  nlohmann::json to_json() const;
  static TransitionModel from_json(const nlohmann::json& doc);

 private:
  std::vector<Eigen::MatrixXd> kernels_;
};

/// Rows of R_x, restricted to the legal actions of state x (ascending).
struct RMatrix {
  int state = 0;
  Eigen::MatrixXd rows;
  std::vector<int> action_labels;
};

struct RewardFunction {
  Eigen::VectorXd r;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(ValueFunction last, double residual, int iterations);
  const ValueFunction& last_iterate() const { return last_; }
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  ValueFunction last_;
  double residual_;
  int iterations_;
};

/// (T V)(x) = max_a { r(x) + beta sum_x' p(x'|x,a) V(x') }.
Eigen::VectorXd bellman_operator(const TransitionModel& model, const RewardFunction& reward, double beta,
                                 const Eigen::VectorXd& v);

/// Iterates the Bellman operator from V = 0 and returns the first iterate
/// with ||T(V) - V||_inf <= tol. Throws ConvergenceError otherwise.
ValueFunction value_iteration(const TransitionModel& model, const RewardFunction& reward, double beta, double tol,
                              int max_iters);

RMatrix transition_matrix(const TransitionModel& model, int state, std::span<const int> legal_actions);
RMatrix transition_matrix(const TransitionModel& model, int state);

/// argmax_a (R_x v)(a), lowest index on ties. Returns the action label.
int optimal_policy(const ValueFunction& v, const TransitionModel& model, int state);
int optimal_policy(const ValueFunction& v, const RMatrix& r);

struct PolicyEvaluation {
  double estimate = 0.0;
  double standard_error = 0.0;
  /// Bound on the discarded tail, beta^horizon ||r||_inf / (1 - beta).
  double truncation_bound = 0.0;
};

/// Monte Carlo estimate of C_mu(x1) = E sum_{t>=1} beta^{t-1} r(X_t), truncated
/// after `horizon` rewards. Rollout i uses stream i of `rng_seed`.
PolicyEvaluation evaluate_policy(const TransitionModel& model, const RewardFunction& reward, double beta,
                                 std::span<const int> policy, int start_state, int num_rollouts, int horizon,
                                 std::uint64_t rng_seed);

/// Samples x' ~ p(. | x, a).
int sample_next_state(const TransitionModel& model, int state, int action, RngStream& rng);

/// Random kernels with Dirichlet(concentration) rows.
TransitionModel random_transition_model(int num_states, int num_actions, RngStream& rng,
                                        double concentration = 1.0);

}  // namespace nmdp
