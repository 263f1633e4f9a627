#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nmdp/choice_model.hpp"
#include "nmdp/conjugate.hpp"
#include "nmdp/mh_kernel.hpp"
#include "nmdp/probability.hpp"
#include "nmdp/transform_group.hpp"

namespace nmdp {

/// Which working-parameter moves PX-DA adds; none is standard DA.
enum class Moves { none, scale, translate, scale_translate };

std::string_view to_string(Moves moves);
Moves parse_moves(std::string_view text);
inline bool has_scale(Moves m) { return m == Moves::scale || m == Moves::scale_translate; }
inline bool has_translate(Moves m) { return m == Moves::translate || m == Moves::scale_translate; }

enum class Step1Method { exact, metropolis_hastings };

std::string_view to_string(Step1Method method);
Step1Method parse_step1(std::string_view text);

struct SamplerConfig {
  Mode mode = Mode::tabular;
  Moves moves = Moves::scale_translate;
  double kappa = 2500.0;
  InverseGammaParams ig{3.0, 1e5};
  int iterations = 20000;
  int burn_in = 5000;
  int thinning = 1;
  Step1Method step1 = Step1Method::metropolis_hastings;
  MhSettings mh;
  std::uint64_t seed = 1;
  /// Initial v is init_value * 1 (0 gives the feasible default) unless
  /// init holds a full starting vector.
  double init_value = 0.0;
  std::vector<double> init;

  void validate() const;
  nlohmann::json to_json() const;
  static SamplerConfig from_json(const nlohmann::json& doc);
};

struct ChainState {
  ValueFunction v;
  AugmentedData w;
  long iteration = 0;
};

struct Step1Result {
  AugmentedData w_prime;
  TransformParams z;
  /// Per observation: 1 if the MH proposal was accepted (always 1 for exact).
  std::vector<char> accepted;
  int newton_fallbacks = 0;
};

struct Step2Result {
  ValueFunction v;
  double z1 = 1.0;
  double z2 = 0.0;
  AugmentedData w;
};

/// DA / PX-DA Gibbs sampler over (V, W_{1:T}) for one dataset.
class PxdaSampler {
 public:
  PxdaSampler(Dataset data, SamplerConfig config);

  const SamplerConfig& config() const { return config_; }
  const Dataset& data() const { return data_; }
  const std::vector<int>& chosen() const { return chosen_; }
  const ConjugateSystem& system() const { return system_; }

  /// v = init (or init_value * 1); w_t = R_t v with w_t(a_t) raised to max_j w_t(j).
  ChainState initial_state() const;

  /// Draws working parameters from their priors (omitted if improper), then
  /// each W_t from its truncated Gaussian, and returns W' = phi_z^{-1}(W).
  Step1Result step1(const ChainState& state, RngStream& rng) const;
  /// Joint draw of (V, Z) given W' and the untransformed W = phi_z(W').
  Step2Result step2(const AugmentedData& w_prime, RngStream& rng) const;
  ChainState iterate(const ChainState& state, RngStream& rng, Step1Result* step1_out = nullptr) const;

  /// R_t v for every t.
  std::vector<Eigen::VectorXd> utilities(const ValueFunction& v) const;

 private:
  Dataset data_;
  SamplerConfig config_;
  std::vector<int> chosen_;
  ConjugateSystem system_;
};

struct AcceptanceStats {
  std::vector<long> accepted;
  std::vector<long> proposed;
  long newton_fallbacks = 0;

  double overall() const;
  std::vector<double> per_observation() const;
};

struct PosteriorSamples {
  Mode mode = Mode::tabular;
  int dim = 0;
  std::vector<long> iterations;
  std::vector<ValueFunction> draws;
  AcceptanceStats acceptance;
  nlohmann::json config = nlohmann::json::object();
  double wall_time_s = 0.0;
  bool diverged = false;
  std::string divergence_note;

  int size() const { return static_cast<int>(draws.size()); }
  bool empty() const { return draws.empty(); }
  /// draws x dim.
  Eigen::MatrixXd matrix() const;
  Eigen::VectorXd mean() const;
  std::vector<double> component(int k) const;
  /// At most max_draws values, evenly spaced through the stored draws.
  std::vector<Eigen::VectorXd> thinned_values(int max_draws) const;
};

/// Runs config.iterations PX-DA iterations from the initial state, keeping
/// every thinning-th draw after burn-in. Acceptance counts cover the kept
/// (post burn-in) iterations.
PosteriorSamples run_chain(const Dataset& data, const SamplerConfig& config);

/// Growth of ||v|| across the four quarters of the stored draws, or any
/// non-finite draw. Empty string when nothing suspicious is seen.
std::string detect_divergence(const std::vector<ValueFunction>& draws);

// JSON Lines: {"type":"config",...}, then {"iter":k,"v":[...]} per draw, then
// {"type":"summary",...}. Floats carry 17 significant digits.
void write_posterior(const PosteriorSamples& samples, std::ostream& out);
PosteriorSamples read_posterior(std::istream& in);
void save_posterior(const PosteriorSamples& samples, const std::filesystem::path& path);
PosteriorSamples load_posterior(const std::filesystem::path& path);

/// %.17g.
std::string format_double(double x);

}  // namespace nmdp
