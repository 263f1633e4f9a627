#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nmdp/choice_model.hpp"
#include "nmdp/diagnostics.hpp"
#include "nmdp/point_estimate.hpp"
#include "nmdp/sampler.hpp"
#include "nmdp/serve.hpp"
#include "nmdp/tetris.hpp"

namespace nmdp::experiments {

enum class Scale { desk, paper };
std::string_view to_string(Scale scale);
Scale parse_scale(std::string_view text);

/// Deterministic child seed for a tagged sub-task.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// Type-7 sample quantile.
double quantile(std::vector<double> values, double p);
double interquartile_range(const std::vector<double>& values);

// Prediction.

struct PredictionReport {
  std::vector<int> predicted;  // rows into each observation's R
  std::vector<int> actual;
  double error = 0.0;
  /// 1 - mean(1 / M_t): expected error of a uniform guess.
  double uniform_baseline = 0.0;
  nlohmann::json to_json() const;
};

/// MAP prediction for every observation of the holdout. Throws on an empty
/// holdout or a mode / dimension mismatch.
PredictionReport predict_holdout(const PosteriorSamples& posterior, const Dataset& holdout, int max_draws,
                                 RngStream& rng);
PredictionReport predict_holdout(const std::vector<Eigen::VectorXd>& draws, const Dataset& holdout, RngStream& rng);

// Toy example: random 7-state, 3-action MDP, 20 observations, value drawn
// from the prior, every move variant run on the same data.

struct ToyOptions {
  int states = 7;
  int actions = 3;
  int steps = 20;
  SamplerConfig sampler = default_toy_sampler();
  int max_lag = 50;
  std::uint64_t seed = 1;

  static SamplerConfig default_toy_sampler();
  void validate() const;
  nlohmann::json to_json() const;
};

struct ToyVariant {
  Moves moves = Moves::none;
  PosteriorSamples samples;
  std::vector<AcfReport> acf;  // one per component
};

struct ToyResult {
  ToyOptions options;
  ValueFunction truth;
  Dataset data;
  std::vector<ToyVariant> variants;  // none, scale, translate, scale+translate

  const ToyVariant& variant(Moves moves) const;
  /// Components where the PX-DA(scale+translate) ACF stays within k_se
  /// combined se of the DA ACF at every lag in [1, max_lag].
  int dominated_components(double k_se) const;
  double min_acceptance() const;
  nlohmann::json to_json() const;
};

ToyResult run_toy(const ToyOptions& options);
/// toy_report.json, toy_acf.csv (variant,component,lag,acf,se), toy_data.jsonl.
void write_toy(const ToyResult& result, const std::filesystem::path& dir);

// Experiment 1: Tetris data from known value functions.

struct Exp1Options {
  std::vector<Eigen::Vector3d> truths = {Eigen::Vector3d(-3, -15, -1), Eigen::Vector3d(0, 5, 0),
                                         Eigen::Vector3d(-20, 0, 1)};
  std::vector<int> sizes = {10, 20, 50, 100};
  int holdout = 400;
  SamplerConfig sampler = default_tetris_sampler();
  /// Posterior draws kept for prediction and self-play.
  int prediction_draws = 200;
  int self_play_games = 100;
  int self_play_steps = 250;
  /// Self-play only for the first this many truths.
  int self_play_truths = 1;
  /// Start each chain at the approximate posterior mode instead of v = 0.
  bool init_at_mode = true;
  std::uint64_t seed = 1;

  static SamplerConfig default_tetris_sampler();
  void validate() const;
  nlohmann::json to_json() const;
};

struct Exp1SizeResult {
  int size = 0;
  PosteriorSamples samples;
  PredictionReport prediction;
};

struct Exp1TruthResult {
  Eigen::Vector3d truth;
  Dataset data;  // training prefix followed by the holdout
  std::vector<Exp1SizeResult> sizes;
  /// Per component: posterior mass within +-50% of the true value, largest size.
  std::vector<double> mass_near_truth;
  std::vector<int> self_play_steps;

  const Exp1SizeResult& largest() const { return sizes.back(); }
  int survivors(int steps) const;
  /// True if each error is at most the previous one plus slack.
  bool error_nonincreasing(double slack) const;
};

struct Exp1Result {
  Exp1Options options;
  std::vector<Exp1TruthResult> truths;
  nlohmann::json to_json() const;
};

Exp1TruthResult run_exp1_truth(const Exp1Options& options, std::size_t truth_index);
Exp1Result run_exp1(const Exp1Options& options);
/// exp1_report.json, exp1_errors.csv, per-truth datasets and posterior traces.
void write_exp1(const Exp1Result& result, const std::filesystem::path& dir);

// Scripted protocol clients.

/// What a scripted player does with one state: an action (or nothing) after
/// a delay in seconds.
struct Decision {
  std::optional<tetris::TetrisAction> action;
  double delay_s = 0.0;
};

using Policy = std::function<Decision(const tetris::GameState& state, const std::vector<tetris::TetrisAction>& legal,
                                      int seq)>;

struct ScriptedSessionOptions {
  std::string host = "127.0.0.1";
  int port = 0;
  std::string mode = "record";
  double tau_s = 10.0;
  int blocks = 100;
  std::optional<std::uint64_t> seed;
  /// A pending answer is dropped when the next state arrives first, as a
  /// player would once the block has fallen. When false the answer is sent
  /// anyway and draws a deadline rejection.
  bool abandon_on_new_state = true;
  bool download = true;
  double receive_timeout_s = 120.0;
};

struct ScriptedSession {
  int states = 0;
  int actions_sent = 0;
  int late_rejections = 0;
  int illegal_rejections = 0;
  int cleared_rows = 0;
  int restarts = 0;
  int mimic_actions = 0;
  /// Mimic actions missing from the preceding state's legal list.
  int illegal_mimic_actions = 0;
  /// States whose board or legal list disagrees with a local replay.
  int desyncs = 0;
  /// The actions the server reported as applied, in order (-1 never occurs;
  /// default falls are reported as the unrotated centred placement).
  std::vector<tetris::TetrisAction> applied;
  nlohmann::json end;
  std::optional<Dataset> dataset;
};

/// Plays one session against a running server. Mimic sessions ignore the
/// policy.
ScriptedSession run_scripted_session(const ScriptedSessionOptions& options, const Policy& policy);

/// Noisy argmax of R_t v with unit noise, answering after the given delay.
Policy noisy_player(const ValueFunction& v, std::uint64_t seed, std::function<double(int)> delay_s);

// Experiment 2 protocol: a scripted player records a long session without
// time pressure; inference and prediction as in Experiment 1.

struct Exp2Options {
  Eigen::Vector3d player_value = Eigen::Vector3d(-3, -15, -1);
  int decisions = 500;
  int train = 100;
  std::vector<int> sizes = {10, 20, 50, 100};
  SamplerConfig sampler = Exp1Options::default_tetris_sampler();
  int prediction_draws = 200;
  bool init_at_mode = true;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

struct Exp2Result {
  Exp2Options options;
  ScriptedSession session;
  Dataset data;
  std::vector<Exp1SizeResult> sizes;
  nlohmann::json to_json() const;
};

Exp2Result run_exp2_protocol(const Exp2Options& options);
void write_exp2(const Exp2Result& result, const std::filesystem::path& dir);

// Experiment 3 protocol: the same block sequence under shrinking decision
// deadlines, answered by a noisy player with log-normal think times.

struct Exp3Options {
  Eigen::Vector3d player_value = Eigen::Vector3d(-3, -15, -1);
  std::vector<double> taus = {10, 5, 3, 1};
  int blocks = 100;
  /// Think time ~ LogNormal(log(median), sigma^2), drawn once per block and
  /// shared by all deadlines.
  double think_median_s = 3.0;
  double think_sigma = 0.8;
  /// Wall-clock seconds per protocol second, so a desk run stays short.
  double time_scale = 0.02;
  SamplerConfig sampler = Exp1Options::default_tetris_sampler();
  /// Chains on small datasets run until observations x iterations reaches
  /// this budget (never fewer than sampler.iterations, at most
  /// max_iterations); burn-in scales with them. 0 disables.
  double latent_budget = 2e6;
  int max_iterations = 1000000;
  bool init_at_mode = true;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  std::vector<double> think_times() const;
  /// The sampler config for a dataset with this many observations.
  SamplerConfig sampler_for(int observations) const;
};

struct Exp3TauResult {
  double tau = 0.0;
  ScriptedSession session;
  Dataset data;
  std::optional<PosteriorSamples> samples;  // absent with no observations
  std::vector<double> iqr;                  // per component
};

struct Exp3Result {
  Exp3Options options;
  std::vector<Exp3TauResult> taus;

  std::vector<int> counts() const;
  bool counts_strictly_decreasing() const;
  /// Each IQR at least `ratio` times the one for the previous (longer)
  /// deadline, and the shortest deadline's IQR strictly above the longest's.
  bool iqr_widening(double ratio) const;
  nlohmann::json to_json() const;
};

Exp3Result run_exp3_protocol(const Exp3Options& options);
void write_exp3(const Exp3Result& result, const std::filesystem::path& dir);

/// Scale::paper sets 5e5 iterations; burn-in is 1e4, or half the chain with half_burn_in.
void apply_scale(SamplerConfig& config, Scale scale, bool half_burn_in = false);

/// run_chain, optionally started at posterior_mode(data, config.kappa).
PosteriorSamples run_chain_from(const Dataset& data, SamplerConfig config, bool init_at_mode);

}  // namespace nmdp::experiments
