#include "nmdp/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <thread>

#include "nmdp/mdp.hpp"

namespace nmdp::experiments {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Scale scale) { return scale == Scale::desk ? "desk" : "paper"; }

Scale parse_scale(std::string_view text) {
  if (text == "desk") return Scale::desk;
  if (text == "paper") return Scale::paper;
  throw InvalidArgument("unknown scale '" + std::string(text) + "' (expected desk or paper)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double interquartile_range(const std::vector<double>& values) {
  return quantile(values, 0.75) - quantile(values, 0.25);
}

void apply_scale(SamplerConfig& config, Scale scale, bool half_burn_in) {
  if (scale == Scale::paper) {
    config.iterations = 500000;
    config.burn_in = half_burn_in ? 250000 : 10000;
  }
}

PosteriorSamples run_chain_from(const Dataset& data, SamplerConfig config, bool init_at_mode) {
  if (init_at_mode && data.size() > 0) {
    const ValueFunction mode = posterior_mode(data, config.kappa);
    config.init.assign(mode.values.begin(), mode.values.end());
  }
  return run_chain(data, config);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

json chain_json(const PosteriorSamples& s) {
  json out = summarize(s).to_json();
  out["diverged"] = s.diverged;
  if (s.diverged) out["divergence_note"] = s.divergence_note;
  out["wall_time_s"] = s.wall_time_s;
  return out;
}

void save_trace(const PosteriorSamples& s, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_trace_csv(s, out);
}

}  // namespace

json PredictionReport::to_json() const {
  return {{"error", error}, {"uniform_baseline", uniform_baseline}, {"holdout", actual.size()},
          {"predicted", predicted}, {"actual", actual}};
}

PredictionReport predict_holdout(const std::vector<Eigen::VectorXd>& draws, const Dataset& holdout, RngStream& rng) {
  if (holdout.observations.empty()) throw InvalidArgument("predict: empty holdout");
  if (draws.empty()) throw InvalidArgument("predict: no posterior draws");
  PredictionReport report;
  double inverse_sizes = 0.0;
  for (const auto& o : holdout.observations) {
    if (o.r.cols() != draws.front().size()) throw InvalidArgument("predict: posterior dimension does not match R");
    report.predicted.push_back(tetris::map_predicted_action(draws, o.r, rng));
    report.actual.push_back(o.chosen_row());
    inverse_sizes += 1.0 / o.num_actions();
  }
  report.error = tetris::action_error(report.predicted, report.actual);
  report.uniform_baseline = 1.0 - inverse_sizes / static_cast<double>(holdout.size());
  return report;
}

PredictionReport predict_holdout(const PosteriorSamples& posterior, const Dataset& holdout, int max_draws,
                                 RngStream& rng) {
  if (posterior.mode != holdout.mode) throw InvalidArgument("predict: posterior and holdout modes differ");
  if (posterior.dim != holdout.dim) throw InvalidArgument("predict: posterior and holdout dimensions differ");
  if (posterior.empty()) throw InvalidArgument("predict: posterior has no draws");
  return predict_holdout(posterior.thinned_values(max_draws), holdout, rng);
}

// Toy example.

SamplerConfig ToyOptions::default_toy_sampler() {
  SamplerConfig c;
  c.mode = Mode::tabular;
  c.kappa = 2500.0;
  c.ig = {1.0, 1.0};
  c.iterations = 20000;
  c.burn_in = 10000;
  return c;
}

void ToyOptions::validate() const {
  if (states < 2 || actions < 2 || steps < 1) throw InvalidArgument("toy: need >= 2 states, >= 2 actions, >= 1 step");
  if (sampler.mode != Mode::tabular) throw InvalidArgument("toy: sampler must be tabular");
  sampler.validate();
  if (max_lag < 1 || 2 * max_lag >= sampler.iterations - sampler.burn_in) {
    throw InvalidArgument("toy: max_lag needs more than 2 * max_lag kept draws");
  }
}

json ToyOptions::to_json() const {
  return {{"states", states}, {"actions", actions}, {"steps", steps}, {"max_lag", max_lag},
          {"seed", seed},     {"sampler", sampler.to_json()}};
}

const ToyVariant& ToyResult::variant(Moves moves) const {
  for (const auto& v : variants) {
    if (v.moves == moves) return v;
  }
  throw InvalidArgument("toy: variant not run");
}

int ToyResult::dominated_components(double k_se) const {
  const auto& da = variant(Moves::none);
  const auto& px = variant(Moves::scale_translate);
  int count = 0;
  for (std::size_t k = 0; k < da.acf.size(); ++k) {
    if (acf_dominated(px.acf[k], da.acf[k], k_se, 1, options.max_lag)) ++count;
  }
  return count;
}

double ToyResult::min_acceptance() const {
  double lo = 1.0;
  for (const auto& v : variants) lo = std::min(lo, v.samples.acceptance.overall());
  return lo;
}

json ToyResult::to_json() const {
  json vs = json::array();
  for (const auto& v : variants) {
    json acf1 = json::array();
    for (const auto& a : v.acf) acf1.push_back(a.acf.at(1));
    vs.push_back({{"moves", to_string(v.moves)},
                  {"summary", chain_json(v.samples)},
                  {"mean", vector_json(v.samples.mean())},
                  {"acf_lag1", acf1}});
  }
  return {{"experiment", "toy"},
          {"config", options.to_json()},
          {"truth", vector_json(truth.values)},
          {"variants", vs},
          {"min_acceptance", min_acceptance()},
          {"px_dominates_da_components", dominated_components(2.0)}};
}

ToyResult run_toy(const ToyOptions& options) {
  options.validate();
  ToyResult result;
  result.options = options;
  RngStream rng(options.seed, 0);
  const TransitionModel model = random_transition_model(options.states, options.actions, rng);
  result.truth = sample_sum_zero_gaussian({options.states, options.sampler.kappa}, rng);
  result.data = simulate_tabular_dataset(model, result.truth, options.steps, rng);
  result.data.metadata["truth"] = vector_json(result.truth.values);
  result.data.metadata["config"] = options.to_json();
  for (Moves moves : {Moves::none, Moves::scale, Moves::translate, Moves::scale_translate}) {
    SamplerConfig c = options.sampler;
    c.moves = moves;
    c.seed = derive_seed(options.seed, 1);
    ToyVariant v;
    v.moves = moves;
    v.samples = run_chain(result.data, c);
    for (int k = 0; k < options.states; ++k) {
      v.acf.push_back(autocorrelation(v.samples.component(k), options.max_lag, k));
    }
    result.variants.push_back(std::move(v));
  }
  return result;
}

void write_toy(const ToyResult& result, const fs::path& dir) {
  fs::create_directories(dir);
  write_json(dir / "toy_report.json", result.to_json());
  save_dataset(result.data, dir / "toy_data.jsonl");
  std::ofstream csv(dir / "toy_acf.csv");
  if (!csv) throw Error("cannot write " + (dir / "toy_acf.csv").string());
  csv << "variant,component,lag,acf,se\n";
  for (const auto& v : result.variants) {
    for (const auto& a : v.acf) {
      for (std::size_t i = 0; i < a.lags.size(); ++i) {
        csv << to_string(v.moves) << ',' << (a.component + 1) << ',' << a.lags[i] << ',' << format_double(a.acf[i])
            << ',' << format_double(a.se[i]) << '\n';
      }
    }
  }
}

// Experiment 1.

SamplerConfig Exp1Options::default_tetris_sampler() {
  SamplerConfig c;
  c.mode = Mode::basis;
  c.moves = Moves::scale;
  c.kappa = 2500.0;
  c.ig = {3.0, 1e5};
  c.iterations = 20000;
  c.burn_in = 5000;
  return c;
}

void Exp1Options::validate() const {
  if (truths.empty()) throw InvalidArgument("exp1: no value functions");
  if (sizes.empty()) throw InvalidArgument("exp1: no inference sizes");
  if (!std::is_sorted(sizes.begin(), sizes.end()) || sizes.front() < 1) {
    throw InvalidArgument("exp1: sizes must be positive and increasing");
  }
  if (holdout < 1) throw InvalidArgument("exp1: holdout must be positive");
  if (sampler.mode != Mode::basis) throw InvalidArgument("exp1: sampler must be in basis mode");
  sampler.validate();
  if (prediction_draws < 1 || self_play_games < 0 || self_play_steps < 1 || self_play_truths < 0) {
    throw InvalidArgument("exp1: bad prediction or self-play settings");
  }
}

json Exp1Options::to_json() const {
  json t = json::array();
  for (const auto& v : truths) t.push_back(vector_json(v));
  return {{"truths", t},
          {"sizes", sizes},
          {"holdout", holdout},
          {"prediction_draws", prediction_draws},
          {"self_play_games", self_play_games},
          {"self_play_steps", self_play_steps},
          {"self_play_truths", self_play_truths},
          {"init_at_mode", init_at_mode},
          {"seed", seed},
          {"sampler", sampler.to_json()}};
}

int Exp1TruthResult::survivors(int steps) const {
  return static_cast<int>(std::count_if(self_play_steps.begin(), self_play_steps.end(),
                                        [steps](int s) { return s >= steps; }));
}

bool Exp1TruthResult::error_nonincreasing(double slack) const {
  for (std::size_t i = 1; i < sizes.size(); ++i) {
    if (sizes[i].prediction.error > sizes[i - 1].prediction.error + slack) return false;
  }
  return true;
}

namespace {

std::vector<Exp1SizeResult> infer_sizes(const Dataset& train, const Dataset& holdout, const std::vector<int>& sizes,
                                        const SamplerConfig& base, bool init_at_mode, int prediction_draws,
                                        std::uint64_t seed) {
  std::vector<Exp1SizeResult> out;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] > train.size()) throw InvalidArgument("inference size exceeds the training data");
    Exp1SizeResult r;
    r.size = sizes[i];
    SamplerConfig c = base;
    c.seed = derive_seed(seed, 100 + i);
    r.samples = run_chain_from(train.slice(0, sizes[i]), c, init_at_mode);
    RngStream prng(derive_seed(seed, 200 + i));
    r.prediction = predict_holdout(r.samples, holdout, prediction_draws, prng);
    out.push_back(std::move(r));
  }
  return out;
}

json sizes_json(const std::vector<Exp1SizeResult>& sizes) {
  json out = json::array();
  for (const auto& s : sizes) {
    out.push_back({{"size", s.size},
                   {"error", s.prediction.error},
                   {"uniform_baseline", s.prediction.uniform_baseline},
                   {"acceptance", s.samples.acceptance.overall()},
                   {"mean", vector_json(s.samples.mean())},
                   {"summary", chain_json(s.samples)}});
  }
  return out;
}

}  // namespace

Exp1TruthResult run_exp1_truth(const Exp1Options& options, std::size_t index) {
  options.validate();
  if (index >= options.truths.size()) throw InvalidArgument("exp1: truth index out of range");
  Exp1TruthResult result;
  result.truth = options.truths[index];
  const std::uint64_t seed = derive_seed(options.seed, index);
  const ValueFunction v(result.truth, Mode::basis);
  const int train_size = options.sizes.back();
  RngStream data_rng(seed, 0);
  result.data = tetris::generate_data(v, train_size + options.holdout, data_rng);
  result.data.metadata["train"] = train_size;
  result.data.metadata["holdout"] = options.holdout;
  const Dataset train = result.data.slice(0, train_size);
  const Dataset holdout = result.data.slice(train_size, train_size + options.holdout);
  result.sizes = infer_sizes(train, holdout, options.sizes, options.sampler, options.init_at_mode,
                             options.prediction_draws, seed);

  const PosteriorSamples& last = result.largest().samples;
  for (int k = 0; k < 3; ++k) {
    const double t = result.truth(k);
    const double half_width = 0.5 * std::abs(t);
    const auto x = last.component(k);
    const auto near = std::count_if(x.begin(), x.end(), [&](double y) { return std::abs(y - t) <= half_width; });
    result.mass_near_truth.push_back(x.empty() ? 0.0 : static_cast<double>(near) / static_cast<double>(x.size()));
  }
  if (static_cast<int>(index) < options.self_play_truths) {
    const auto draws = last.thinned_values(options.prediction_draws);
    for (int g = 0; g < options.self_play_games; ++g) {
      RngStream game(derive_seed(seed, 1000 + static_cast<std::uint64_t>(g)));
      result.self_play_steps.push_back(tetris::map_self_play(draws, options.self_play_steps, game));
    }
  }
  return result;
}

json Exp1Result::to_json() const {
  json ts = json::array();
  for (const auto& t : truths) {
    json entry = {{"truth", vector_json(t.truth)},
                  {"sizes", sizes_json(t.sizes)},
                  {"mass_near_truth", t.mass_near_truth},
                  {"error_nonincreasing_0.05", t.error_nonincreasing(0.05)}};
    if (!t.self_play_steps.empty()) {
      entry["self_play_steps"] = t.self_play_steps;
      entry["self_play_survivors"] = t.survivors(options.self_play_steps);
    }
    ts.push_back(std::move(entry));
  }
  return {{"experiment", "exp1"}, {"config", options.to_json()}, {"truths", ts}};
}

Exp1Result run_exp1(const Exp1Options& options) {
  Exp1Result result;
  result.options = options;
  for (std::size_t i = 0; i < options.truths.size(); ++i) result.truths.push_back(run_exp1_truth(options, i));
  return result;
}

void write_exp1(const Exp1Result& result, const fs::path& dir) {
  fs::create_directories(dir);
  write_json(dir / "exp1_report.json", result.to_json());
  std::ofstream csv(dir / "exp1_errors.csv");
  if (!csv) throw Error("cannot write " + (dir / "exp1_errors.csv").string());
  csv << "truth,size,error,uniform_baseline,acceptance\n";
  for (std::size_t i = 0; i < result.truths.size(); ++i) {
    const auto& t = result.truths[i];
    for (const auto& s : t.sizes) {
      csv << (i + 1) << ',' << s.size << ',' << format_double(s.prediction.error) << ','
          << format_double(s.prediction.uniform_baseline) << ',' << format_double(s.samples.acceptance.overall())
          << '\n';
    }
    save_dataset(t.data, dir / ("exp1_truth" + std::to_string(i + 1) + "_data.jsonl"));
    save_trace(t.largest().samples, dir / ("exp1_truth" + std::to_string(i + 1) + "_trace.csv"));
  }
}

// Scripted sessions.

namespace {

std::vector<tetris::TetrisAction> legal_from_message(const json& msg) {
  std::vector<tetris::TetrisAction> out;
  for (const auto& a : msg.at("legal")) out.push_back({a.at("rot").get<int>(), a.at("col").get<int>()});
  return out;
}

}  // namespace

ScriptedSession run_scripted_session(const ScriptedSessionOptions& options, const Policy& policy) {
  using Clock = std::chrono::steady_clock;
  serve::Client client;
  client.connect(options.host, options.port);
  json start = {{"type", "start"}, {"mode", options.mode}, {"tau_s", options.tau_s}, {"blocks", options.blocks}};
  if (options.seed) start["seed"] = *options.seed;
  client.send(start);

  ScriptedSession out;
  std::optional<tetris::GameState> last;
  std::vector<tetris::TetrisAction> last_legal;
  int last_seq = -1;
  std::deque<json> queued;
  const auto timeout = std::chrono::milliseconds(static_cast<long>(options.receive_timeout_s * 1000));
  auto next = [&]() -> json {
    if (!queued.empty()) {
      json m = std::move(queued.front());
      queued.pop_front();
      return m;
    }
    auto m = client.receive(timeout);
    if (!m) throw Error("scripted client: server went quiet");
    return *m;
  };

  for (;;) {
    json msg = next();
    const std::string type = msg.value("type", "");
    if (type == "end") {
      out.end = msg;
      break;
    }
    if (type == "cleared") {
      out.cleared_rows += msg.value("rows", 0);
      continue;
    }
    if (type == "rejected") {
      const std::string reason = msg.value("reason", "");
      if (reason == "deadline") ++out.late_rejections;
      if (reason == "illegal") ++out.illegal_rejections;
      continue;
    }
    if (type == "mimic_action") {
      ++out.mimic_actions;
      const tetris::TetrisAction a{msg.at("rot").get<int>(), msg.at("col").get<int>()};
      if (std::find(last_legal.begin(), last_legal.end(), a) == last_legal.end()) ++out.illegal_mimic_actions;
      continue;
    }
    if (type != "state") throw Error("scripted client: unexpected message " + msg.dump());

    const auto received = Clock::now();
    tetris::GameState state = serve::state_from_message(msg);
    const auto legal = legal_from_message(msg);
    const int seq = msg.at("seq").get<int>();
    if (last && seq == last_seq) {
      // Re-sent after a rejected action: nothing may have moved.
      if (!(state.board == last->board) || state.piece != last->piece) ++out.desyncs;
    } else if (seq == 0) {
      if (!(state.board == tetris::Board(state.board.height(), state.board.width()))) ++out.desyncs;
    } else if (last && seq == last_seq + 1 && msg.contains("prev") && msg["prev"].value("seq", -1) == last_seq) {
      // Replay the server's report of the previous move on our copy of the board.
      const json& prev = msg["prev"];
      const tetris::TetrisAction a{prev.at("rot").get<int>(), prev.at("col").get<int>()};
      out.applied.push_back(a);
      tetris::Board expected = tetris::step(*last, a).state.board;
      if (msg.value("restart", false)) {
        ++out.restarts;
        expected = tetris::Board(state.board.height(), state.board.width());
      }
      if (!(expected == state.board)) ++out.desyncs;
    } else {
      ++out.desyncs;
    }
    if (tetris::legal_actions(state) != legal) ++out.desyncs;
    ++out.states;
    last = state;
    last_seq = seq;
    last_legal = legal;
    if (options.mode != "record") continue;

    const Decision d = policy(state, legal, seq);
    if (!d.action) continue;
    bool abandoned = false;
    const auto due = received + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(d.delay_s));
    while (Clock::now() < due) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(due - Clock::now());
      if (left.count() <= 0) break;
      auto m = client.receive(left);
      if (!m) break;
      queued.push_back(*m);
      if (m->value("type", "") == "state" && m->value("seq", -1) != seq && options.abandon_on_new_state) {
        abandoned = true;
        break;
      }
    }
    if (abandoned) continue;
    client.send({{"type", "action"}, {"rot", d.action->rotation}, {"col", d.action->column}, {"seq", seq}});
    ++out.actions_sent;
  }

  if (options.download && out.end.value("reason", "") == "complete") {
    client.send({{"type", "download"}});
    for (;;) {
      json m = next();
      if (m.value("type", "") == "dataset") {
        out.dataset = serve::dataset_from_message(m);
        break;
      }
    }
  }
  client.close();
  return out;
}

Policy noisy_player(const ValueFunction& v, std::uint64_t seed, std::function<double(int)> delay_s) {
  auto rng = std::make_shared<RngStream>(seed);
  return [v, rng, delay_s = std::move(delay_s)](const tetris::GameState& state,
                                                const std::vector<tetris::TetrisAction>& legal, int seq) {
    const ActionDraw draw = sample_action(v.values, tetris::feature_r_matrix(state, legal), *rng);
    return Decision{legal[static_cast<std::size_t>(draw.row)], delay_s(seq)};
  };
}

// Experiment 2 protocol.

void Exp2Options::validate() const {
  if (decisions < 2 || train < 1 || train >= decisions) throw InvalidArgument("exp2: need 0 < train < decisions");
  if (sizes.empty() || !std::is_sorted(sizes.begin(), sizes.end()) || sizes.front() < 1 || sizes.back() > train) {
    throw InvalidArgument("exp2: sizes must be increasing and within the training split");
  }
  if (sampler.mode != Mode::basis) throw InvalidArgument("exp2: sampler must be in basis mode");
  sampler.validate();
  if (prediction_draws < 1) throw InvalidArgument("exp2: prediction_draws must be positive");
}

json Exp2Options::to_json() const {
  return {{"player_value", vector_json(player_value)},
          {"decisions", decisions},
          {"train", train},
          {"sizes", sizes},
          {"prediction_draws", prediction_draws},
          {"init_at_mode", init_at_mode},
          {"seed", seed},
          {"sampler", sampler.to_json()}};
}

json Exp2Result::to_json() const {
  return {{"experiment", "exp2-protocol"},
          {"config", options.to_json()},
          {"observations", data.size()},
          {"session", {{"states", session.states}, {"desyncs", session.desyncs}, {"restarts", session.restarts}}},
          {"sizes", sizes_json(sizes)}};
}

Exp2Result run_exp2_protocol(const Exp2Options& options) {
  options.validate();
  Exp2Result result;
  result.options = options;
  serve::ServeConfig sc;
  sc.seed = options.seed;
  serve::Server server(sc);
  ScriptedSessionOptions so;
  so.port = server.start();
  so.tau_s = 60.0;
  so.blocks = options.decisions;
  so.seed = derive_seed(options.seed, 0);
  result.session = run_scripted_session(
      so, noisy_player(ValueFunction(options.player_value, Mode::basis), derive_seed(options.seed, 1),
                       [](int) { return 0.0; }));
  server.stop();
  if (!result.session.dataset) throw Error("exp2: session produced no dataset");
  result.data = *result.session.dataset;
  result.data.metadata["player_value"] = vector_json(options.player_value);
  if (result.data.size() < options.decisions) throw Error("exp2: scripted player missed decisions");
  const Dataset train = result.data.slice(0, options.train);
  const Dataset holdout = result.data.slice(options.train, result.data.size());
  result.sizes = infer_sizes(train, holdout, options.sizes, options.sampler, options.init_at_mode,
                             options.prediction_draws, options.seed);
  return result;
}

void write_exp2(const Exp2Result& result, const fs::path& dir) {
  fs::create_directories(dir);
  write_json(dir / "exp2_report.json", result.to_json());
  save_dataset(result.data, dir / "exp2_session.jsonl");
  std::ofstream csv(dir / "exp2_errors.csv");
  if (!csv) throw Error("cannot write " + (dir / "exp2_errors.csv").string());
  csv << "size,error,uniform_baseline,acceptance\n";
  for (const auto& s : result.sizes) {
    csv << s.size << ',' << format_double(s.prediction.error) << ',' << format_double(s.prediction.uniform_baseline)
        << ',' << format_double(s.samples.acceptance.overall()) << '\n';
  }
  save_trace(result.sizes.back().samples, dir / "exp2_trace.csv");
}

// Experiment 3 protocol.

void Exp3Options::validate() const {
  if (taus.empty()) throw InvalidArgument("exp3: no deadlines");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0)) throw InvalidArgument("exp3: deadlines must be positive");
    if (i > 0 && !(taus[i] < taus[i - 1])) throw InvalidArgument("exp3: deadlines must be decreasing");
  }
  if (blocks < 1) throw InvalidArgument("exp3: blocks must be positive");
  if (!(think_median_s > 0.0) || !(think_sigma >= 0.0)) throw InvalidArgument("exp3: bad think-time law");
  if (!(time_scale > 0.0)) throw InvalidArgument("exp3: time_scale must be positive");
  if (sampler.mode != Mode::basis) throw InvalidArgument("exp3: sampler must be in basis mode");
  if (!(latent_budget >= 0.0) || max_iterations < sampler.iterations) {
    throw InvalidArgument("exp3: bad iteration budget");
  }
  sampler.validate();
}

SamplerConfig Exp3Options::sampler_for(int observations) const {
  SamplerConfig c = sampler;
  if (latent_budget <= 0.0 || observations < 1) return c;
  const double wanted = std::min(latent_budget / observations, static_cast<double>(max_iterations));
  if (wanted > c.iterations) {
    const double ratio = wanted / c.iterations;
    c.iterations = static_cast<int>(wanted);
    c.burn_in = static_cast<int>(c.burn_in * ratio);
  }
  return c;
}

json Exp3Options::to_json() const {
  return {{"player_value", vector_json(player_value)},
          {"taus", taus},
          {"blocks", blocks},
          {"think_median_s", think_median_s},
          {"think_sigma", think_sigma},
          {"time_scale", time_scale},
          {"latent_budget", latent_budget},
          {"max_iterations", max_iterations},
          {"init_at_mode", init_at_mode},
          {"seed", seed},
          {"sampler", sampler.to_json()}};
}

std::vector<double> Exp3Options::think_times() const {
  RngStream rng(derive_seed(seed, 2));
  std::vector<double> out;
  for (int k = 0; k < blocks; ++k) out.push_back(think_median_s * std::exp(think_sigma * rng.normal()));
  return out;
}

std::vector<int> Exp3Result::counts() const {
  std::vector<int> out;
  for (const auto& t : taus) out.push_back(t.data.size());
  return out;
}

bool Exp3Result::counts_strictly_decreasing() const {
  const auto c = counts();
  for (std::size_t i = 1; i < c.size(); ++i) {
    if (!(c[i] < c[i - 1])) return false;
  }
  return true;
}

bool Exp3Result::iqr_widening(double ratio) const {
  if (taus.size() < 2) return false;
  for (const auto& t : taus) {
    if (t.iqr.size() != 3) return false;
  }
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 1; i < taus.size(); ++i) {
      if (taus[i].iqr[k] < ratio * taus[i - 1].iqr[k]) return false;
    }
    if (!(taus.back().iqr[k] > taus.front().iqr[k])) return false;
  }
  return true;
}

json Exp3Result::to_json() const {
  json ts = json::array();
  for (const auto& t : taus) {
    json entry = {{"tau", t.tau},
                  {"observations", t.data.size()},
                  {"late_rejections", t.session.late_rejections},
                  {"desyncs", t.session.desyncs},
                  {"restarts", t.session.restarts},
                  {"iqr", t.iqr}};
    if (t.samples) {
      entry["mean"] = vector_json(t.samples->mean());
      entry["summary"] = chain_json(*t.samples);
    }
    ts.push_back(std::move(entry));
  }
  return {{"experiment", "exp3-protocol"},
          {"config", options.to_json()},
          {"taus", ts},
          {"counts_strictly_decreasing", counts_strictly_decreasing()},
          {"iqr_widening_0.8", iqr_widening(0.8)}};
}

Exp3Result run_exp3_protocol(const Exp3Options& options) {
  options.validate();
  Exp3Result result;
  result.options = options;
  const auto think = options.think_times();
  const ValueFunction v(options.player_value, Mode::basis);

  serve::ServeConfig sc;
  sc.seed = options.seed;
  serve::Server server(sc);
  const int port = server.start();
  for (std::size_t i = 0; i < options.taus.size(); ++i) {
    Exp3TauResult r;
    r.tau = options.taus[i];
    ScriptedSessionOptions so;
    so.port = port;
    so.tau_s = r.tau * options.time_scale;
    so.blocks = options.blocks;
    so.seed = derive_seed(options.seed, 0);
    const double scale = options.time_scale;
    r.session = run_scripted_session(so, noisy_player(v, derive_seed(options.seed, 10 + i), [&think, scale](int k) {
                                       return think.at(static_cast<std::size_t>(k)) * scale;
                                     }));
    if (!r.session.dataset) throw Error("exp3: session produced no dataset");
    r.data = *r.session.dataset;
    r.data.metadata["tau_protocol_s"] = r.tau;
    r.data.metadata["player_value"] = vector_json(options.player_value);
    result.taus.push_back(std::move(r));
  }
  server.stop();

  for (std::size_t i = 0; i < result.taus.size(); ++i) {
    auto& r = result.taus[i];
    if (r.data.size() == 0) continue;
    SamplerConfig c = options.sampler_for(r.data.size());
    c.seed = derive_seed(options.seed, 100 + i);
    r.samples = run_chain_from(r.data, c, options.init_at_mode);
    for (int k = 0; k < 3; ++k) r.iqr.push_back(interquartile_range(r.samples->component(k)));
  }
  return result;
}

void write_exp3(const Exp3Result& result, const fs::path& dir) {
  fs::create_directories(dir);
  write_json(dir / "exp3_report.json", result.to_json());
  std::ofstream csv(dir / "exp3_summary.csv");
  if (!csv) throw Error("cannot write " + (dir / "exp3_summary.csv").string());
  csv << "tau,observations,iqr1,iqr2,iqr3\n";
  for (const auto& t : result.taus) {
    csv << format_double(t.tau) << ',' << t.data.size();
    for (int k = 0; k < 3; ++k) csv << ',' << (t.iqr.empty() ? std::string("nan") : format_double(t.iqr[k]));
    csv << '\n';
    const std::string stem = "exp3_tau" + format_double(t.tau);
    save_dataset(t.data, dir / (stem + "_session.jsonl"));
    if (t.samples) save_trace(*t.samples, dir / (stem + "_trace.csv"));
  }
}

}  // namespace nmdp::experiments
