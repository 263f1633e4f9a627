#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nmdp/mdp.hpp"
#include "nmdp/probability.hpp"
#include "nmdp/types.hpp"

namespace nmdp {

/// One observed decision. `r` holds one row per legal action, in the order of
/// `legal_actions`; its columns are states (tabular) or basis functions.
struct Observation {
  nlohmann::json state;
  int action = 0;
  std::vector<int> legal_actions;
  Eigen::MatrixXd r;

  /// Position of `action` within `legal_actions`.
  int chosen_row() const;
  int num_actions() const { return static_cast<int>(legal_actions.size()); }
  void validate() const;
};

struct Dataset {
  Mode mode = Mode::tabular;
  int dim = 0;
  std::vector<Observation> observations;
  nlohmann::json metadata = nlohmann::json::object();

  int size() const { return static_cast<int>(observations.size()); }
  bool empty() const { return observations.empty(); }
  /// Sum over observations of the legal-set size.
  long total_rows() const;
  /// Observations [begin, end).
  Dataset slice(int begin, int end) const;
  /// An empty dataset is allowed here; callers that need T >= 1 check it.
  void validate() const;
};

// JSON Lines: a header object {"mode", "dim", "metadata"} then one observation
// per line {"t", "state", "legal_actions", "action", "R"}.
void write_dataset(const Dataset& data, std::ostream& out);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

/// Lowest index among the maxima.
int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& x);

struct ActionDraw {
  int row = 0;
  Eigen::VectorXd noise;
};

/// argmax_i { noise(i) + (R v)(i) } with noise ~ N(0, noise_sd^2 I).
/// noise_sd = 0 yields the deterministic argmax (the noise vector is zero).
ActionDraw sample_action(const Eigen::VectorXd& v, const Eigen::MatrixXd& r, RngStream& rng, double noise_sd = 1.0);

struct ChoiceMethod {
  enum class Kind { monte_carlo, quadrature };
  Kind kind = Kind::monte_carlo;
  long samples = 0;

  static ChoiceMethod monte_carlo(long n) { return {Kind::monte_carlo, n}; }
  static ChoiceMethod quadrature() { return {Kind::quadrature, 0}; }
};

struct ChoiceEstimate {
  double probability = 0.0;
  double standard_error = 0.0;
};

/// P(row is chosen | v) under unit-variance noise. Monte Carlo counts argmax
/// hits; quadrature integrates phi(x - mu_row) prod_{i != row} Phi(x - mu_i).
ChoiceEstimate choice_probability(const Eigen::VectorXd& v, const Eigen::MatrixXd& r, int row,
                                  const ChoiceMethod& method, RngStream& rng);

/// Tabular: sqrt(z1) (v + z2 1). Basis: sqrt(z1) v; a non-zero z2 is rejected
/// because the basis likelihood is not translation invariant.
ValueFunction transform_params(const ValueFunction& v, double z1, double z2);

struct LogLikelihoodEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  bool has_zero = false;
  std::vector<ChoiceEstimate> terms;
};

/// Sum of log choice probabilities from precomputed per-observation estimates.
LogLikelihoodEstimate sum_log_choice(std::span<const ChoiceEstimate> terms);

/// Monte Carlo log-likelihood for validation; -inf (has_zero) if any
/// observation is never hit.
LogLikelihoodEstimate log_likelihood_mc(const ValueFunction& v, const Dataset& data, long n, RngStream& rng);

/// Simulates T decisions on a finite MDP under the noisy action model.
/// start_state < 0 draws the first state uniformly.
Dataset simulate_tabular_dataset(const TransitionModel& model, const ValueFunction& v, int num_steps, RngStream& rng,
                                 int start_state = -1);

}  // namespace nmdp
