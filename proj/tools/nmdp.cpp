#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "json_config.hpp"
#include "nmdp/choice_model.hpp"
#include "nmdp/diagnostics.hpp"
#include "nmdp/experiments.hpp"
#include "nmdp/mdp.hpp"
#include "nmdp/point_estimate.hpp"
#include "nmdp/sampler.hpp"
#include "nmdp/serve.hpp"
#include "nmdp/tetris.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nmdp;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct SamplerFlags {
  std::string moves = "scale+translate";
  std::string kappa = "2500";
  double ig_a = 3.0;
  double ig_b = 1e5;
  int iterations = 20000;
  int burn_in = 5000;
  int thinning = 1;
  std::string step1 = "mh";
  int newton_iters = 20;
  double newton_tol = 1e-9;
  double defensive_weight = 0.1;
  std::string init = "zero";
  std::string scale = "desk";
  CLI::Option* iterations_opt = nullptr;
  CLI::Option* burn_in_opt = nullptr;
  CLI::Option* moves_opt = nullptr;

  void add(CLI::App* app) {
    moves_opt = app->add_option("--moves", moves, "none|scale|translate|scale+translate (basis mode: scale)")
                    ->capture_default_str();
    app->add_option("--kappa", kappa, "prior variance of V (number or inf)")->capture_default_str();
    app->add_option("--ig-a", ig_a, "inverse-gamma shape for z1 (a = b = 0: improper)")->capture_default_str();
    app->add_option("--ig-b", ig_b, "inverse-gamma scale for z1")->capture_default_str();
    iterations_opt = app->add_option("--iterations", iterations)->capture_default_str();
    burn_in_opt = app->add_option("--burn-in", burn_in)->capture_default_str();
    app->add_option("--thinning", thinning)->capture_default_str();
    app->add_option("--step1", step1, "exact|mh")->capture_default_str();
    app->add_option("--newton-iters", newton_iters)->capture_default_str();
    app->add_option("--newton-tol", newton_tol)->capture_default_str();
    app->add_option("--defensive-weight", defensive_weight, "weight of the N(m, 1) proposal component")
        ->capture_default_str();
    app->add_option("--init", init, "zero|mode|<v1,v2,...>: chain starting point")->capture_default_str();
    app->add_option("--scale", scale, "desk|paper: paper uses 5e5 iterations and 1e4 burn-in")
        ->capture_default_str();
  }

  SamplerConfig build(Mode mode, std::uint64_t seed) const {
    SamplerConfig c;
    c.mode = mode;
    c.moves = parse_moves(moves);
    if (mode == Mode::basis && moves_opt->count() == 0) c.moves = Moves::scale;
    c.kappa = kappa == "inf" ? kInfinity : std::stod(kappa);
    c.ig = {ig_a, ig_b};
    c.iterations = iterations;
    c.burn_in = burn_in;
    if (experiments::parse_scale(scale) == experiments::Scale::paper) {
      if (iterations_opt->count() == 0) c.iterations = 500000;
      if (burn_in_opt->count() == 0) c.burn_in = 10000;
    }
    c.thinning = thinning;
    c.step1 = parse_step1(step1);
    c.mh.newton_max_iters = newton_iters;
    c.mh.newton_tol = newton_tol;
    c.mh.defensive_weight = defensive_weight;
    c.seed = seed;
    if (init != "zero" && init != "mode") {
      std::stringstream ss(init);
      std::string item;
      while (std::getline(ss, item, ',')) c.init.push_back(std::stod(item));
    }
    c.validate();
    return c;
  }
};

std::vector<Eigen::VectorXd> read_draws(const std::string& posterior, const std::vector<double>& value, int max_draws,
                                        std::optional<PosteriorSamples>& loaded) {
  if (!value.empty()) return {to_vector(value)};
  if (posterior.empty()) throw InvalidArgument("need --posterior or --value");
  loaded = load_posterior(posterior);
  return loaded->thinned_values(max_draws);
}

int run_generate(const json& config, const std::string& env, const std::vector<double>& value, int steps,
                 int height, int width, int states, int actions, double prior_kappa, std::uint64_t seed,
                 const fs::path& out) {
  fs::create_directories(out);
  RngStream rng(seed);
  Dataset data;
  if (env == "tetris") {
    const Eigen::VectorXd v = value.empty() ? Eigen::VectorXd(Eigen::Vector3d(-3, -15, -1)) : to_vector(value);
    tetris::GenerateOptions opts;
    opts.height = height;
    opts.width = width;
    data = tetris::generate_data(ValueFunction(v, Mode::basis), steps, rng, opts);
  } else if (env == "tabular") {
    const TransitionModel model = random_transition_model(states, actions, rng);
    ValueFunction v;
    if (value.empty()) {
      v = sample_sum_zero_gaussian({states, prior_kappa}, rng);
    } else {
      v = ValueFunction(to_vector(value), Mode::tabular);
      if (v.size() != states) throw InvalidArgument("--value needs one entry per state");
    }
    data = simulate_tabular_dataset(model, v, steps, rng);
    data.metadata["v"] = std::vector<double>(v.values.begin(), v.values.end());
    write_json(out / "model.json", model.to_json());
  } else {
    throw InvalidArgument("unknown --env '" + env + "' (tetris|tabular)");
  }
  data.metadata["config"] = config;
  save_dataset(data, out / "dataset.jsonl");
  std::printf("wrote %d observations to %s\n", data.size(), (out / "dataset.jsonl").c_str());
  return 0;
}

int run_infer(const json& config, const SamplerFlags& flags, const std::string& data_path, int max_lag,
              std::uint64_t seed, const fs::path& out) {
  const Dataset data = load_dataset(data_path);
  SamplerConfig c = flags.build(data.mode, seed);
  if (flags.init == "mode") {
    const ValueFunction mode = posterior_mode(data, c.kappa);
    c.init.assign(mode.values.begin(), mode.values.end());
  }
  PosteriorSamples s = run_chain(data, c);
  s.config["cli"] = config;
  fs::create_directories(out);
  save_posterior(s, out / "posterior.jsonl");
  json summary = summarize(s).to_json();
  summary["config"] = config;
  summary["sampler"] = c.to_json();
  summary["diverged"] = s.diverged;
  summary["divergence_note"] = s.divergence_note;
  summary["wall_time_s"] = s.wall_time_s;
  write_json(out / "summary.json", summary);
  {
    std::ofstream f(out / "trace.csv");
    write_trace_csv(s, f);
  }
  {
    std::ofstream f(out / "histogram.csv");
    write_histogram_csv(s, 40, f);
  }
  const int lag = std::min(max_lag, (s.size() - 1) / 2);
  for (int k = 0; k < s.dim && lag >= 1; ++k) {
    try {
      const AcfReport acf = autocorrelation(s.component(k), lag, k);
      std::ofstream f(out / ("acf_v" + std::to_string(k + 1) + ".csv"));
      write_acf_csv(acf, f);
    } catch (const InvalidArgument& e) {
      std::fprintf(stderr, "acf for v%d skipped: %s\n", k + 1, e.what());
    }
  }
  std::printf("draws %d  acceptance %.4f  wall %.1fs\n", s.size(), s.acceptance.overall(), s.wall_time_s);
  const Eigen::VectorXd mean = s.mean();
  std::printf("posterior mean:");
  for (Eigen::Index k = 0; k < mean.size(); ++k) std::printf(" %.6g", mean(k));
  std::printf("\n");
  if (s.diverged) std::fprintf(stderr, "warning: possible divergence: %s\n", s.divergence_note.c_str());
  return 0;
}

int run_predict(const json& config, const std::string& posterior, const std::vector<double>& value,
                const std::string& holdout_path, int max_draws, std::uint64_t seed, const fs::path& out) {
  const Dataset holdout = load_dataset(holdout_path);
  std::optional<PosteriorSamples> loaded;
  const auto draws = read_draws(posterior, value, max_draws, loaded);
  if (loaded) {
    if (loaded->mode != holdout.mode) throw InvalidArgument("posterior and holdout modes differ");
    if (loaded->dim != holdout.dim) throw InvalidArgument("posterior and holdout dimensions differ");
  }
  RngStream rng(seed);
  const auto report = experiments::predict_holdout(draws, holdout, rng);
  fs::create_directories(out);
  json doc = report.to_json();
  doc["config"] = config;
  doc["draws_used"] = draws.size();
  write_json(out / "predictions.json", doc);
  std::printf("action error %.4f  uniform baseline %.4f  (%zu holdout states)\n", report.error,
              report.uniform_baseline, report.actual.size());
  return 0;
}

int run_serve(const std::string& host, int port, const std::string& posterior, int mimic_draws, int interval_ms,
              int height, int width, double duration_s, std::uint64_t seed, const fs::path& out) {
  serve::ServeConfig sc;
  sc.host = host;
  sc.port = port;
  sc.seed = seed;
  sc.height = height;
  sc.width = width;
  sc.out_dir = out;
  sc.mimic_draws = mimic_draws;
  sc.mimic_interval_ms = interval_ms;
  if (!posterior.empty()) sc.posterior = std::make_shared<PosteriorSamples>(load_posterior(posterior));
  serve::Server server(sc);
  const int bound = server.start();
  std::printf("listening on %s:%d\n", host.c_str(), bound);
  std::fflush(stdout);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration_s);
  while (!g_stop && (duration_s <= 0.0 || std::chrono::steady_clock::now() < until)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  server.stop();
  std::printf("served %zu sessions\n", server.sessions().size());
  return 0;
}

int run_replicate(const json& config, const std::string& experiment, const std::string& scale_text,
                  double time_scale, std::uint64_t seed, const fs::path& out) {
  const auto scale = experiments::parse_scale(scale_text);
  fs::create_directories(out);
  json report;
  if (experiment == "toy") {
    experiments::ToyOptions o;
    o.seed = seed;
    experiments::apply_scale(o.sampler, scale, true);
    const auto r = experiments::run_toy(o);
    experiments::write_toy(r, out);
    std::printf("toy: min acceptance %.4f, PX-DA(scale+translate) ACF within 2 se of DA on %d/%d components\n",
                r.min_acceptance(), r.dominated_components(2.0), o.states);
    report = r.to_json();
  } else if (experiment == "exp1") {
    experiments::Exp1Options o;
    o.seed = seed;
    experiments::apply_scale(o.sampler, scale);
    const auto r = experiments::run_exp1(o);
    experiments::write_exp1(r, out);
    for (const auto& t : r.truths) {
      std::printf("v = (%g, %g, %g):", t.truth(0), t.truth(1), t.truth(2));
      for (const auto& s : t.sizes) std::printf("  n=%d err=%.3f", s.size, s.prediction.error);
      if (!t.self_play_steps.empty()) {
        std::printf("  survivors(250)=%d/%zu", t.survivors(o.self_play_steps), t.self_play_steps.size());
      }
      std::printf("\n");
    }
    report = r.to_json();
  } else if (experiment == "exp2-protocol") {
    experiments::Exp2Options o;
    o.seed = seed;
    experiments::apply_scale(o.sampler, scale);
    const auto r = experiments::run_exp2_protocol(o);
    experiments::write_exp2(r, out);
    std::printf("exp2-protocol: %d recorded decisions;", r.data.size());
    for (const auto& s : r.sizes) std::printf("  n=%d err=%.3f", s.size, s.prediction.error);
    std::printf("\n");
    report = r.to_json();
  } else if (experiment == "exp3-protocol") {
    experiments::Exp3Options o;
    o.seed = seed;
    o.time_scale = time_scale;
    experiments::apply_scale(o.sampler, scale);
    const auto r = experiments::run_exp3_protocol(o);
    experiments::write_exp3(r, out);
    for (const auto& t : r.taus) {
      std::printf("tau=%gs: %d observations", t.tau, t.data.size());
      if (!t.iqr.empty()) std::printf("  IQR (%.3g, %.3g, %.3g)", t.iqr[0], t.iqr[1], t.iqr[2]);
      std::printf("\n");
    }
    report = r.to_json();
  } else {
    throw InvalidArgument("unknown experiment '" + experiment + "' (toy|exp1|exp2-protocol|exp3-protocol)");
  }
  write_json(out / "config.json", config);
  return 0;
}

int run_diag(const json& config, const std::vector<std::string>& posteriors, std::vector<std::string> labels,
             int max_lag, const fs::path& out) {
  if (posteriors.empty()) throw InvalidArgument("need at least one --posterior");
  if (labels.empty()) {
    for (std::size_t i = 0; i < posteriors.size(); ++i) labels.push_back(fs::path(posteriors[i]).parent_path().filename());
  }
  if (labels.size() != posteriors.size()) throw InvalidArgument("one --label per --posterior");
  fs::create_directories(out);
  std::vector<PosteriorSamples> chains;
  for (const auto& p : posteriors) chains.push_back(load_posterior(p));
  json doc = {{"config", config}, {"chains", json::array()}};
  for (std::size_t i = 0; i < chains.size(); ++i) {
    json entry = summarize(chains[i]).to_json();
    entry["label"] = labels[i];
    entry["diverged"] = chains[i].diverged;
    doc["chains"].push_back(entry);
    for (int k = 0; k < chains[i].dim; ++k) {
      const AcfReport acf = autocorrelation(chains[i].component(k), max_lag, k);
      std::ofstream f(out / ("acf_" + labels[i] + "_v" + std::to_string(k + 1) + ".csv"));
      write_acf_csv(acf, f);
    }
  }
  if (chains.size() > 1) {
    for (int k = 0; k < chains.front().dim; ++k) {
      std::vector<AcfReport> reports;
      for (const auto& c : chains) reports.push_back(autocorrelation(c.component(k), max_lag, k));
      std::ofstream f(out / ("comparison_v" + std::to_string(k + 1) + ".csv"));
      write_comparison_csv(compare_chains(reports, labels), f);
    }
  }
  write_json(out / "diagnostics.json", doc);
  std::printf("%s\n", doc["chains"].dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian inverse reinforcement learning with PX-DA"};
  app.config_formatter(std::make_shared<cli::JsonConfig>());
  app.set_config("--config", "", "JSON file of option values ({\"infer\": {\"iterations\": 1000}})");
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out = "out";

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset")->configurable();
  std::string env = "tetris";
  std::vector<double> value;
  int steps = 500;
  int height = tetris::kDefaultHeight;
  int width = tetris::kDefaultWidth;
  int states = 7;
  int actions = 3;
  double prior_kappa = 2500.0;
  gen->add_option("--env", env, "tetris|tabular")->capture_default_str();
  gen->add_option("--value", value, "true value function (default tetris (-3,-15,-1), tabular: prior draw)")
      ->delimiter(',');
  gen->add_option("--steps", steps)->capture_default_str();
  gen->add_option("--height", height)->capture_default_str();
  gen->add_option("--width", width)->capture_default_str();
  gen->add_option("--states", states)->capture_default_str();
  gen->add_option("--actions", actions)->capture_default_str();
  gen->add_option("--prior-kappa", prior_kappa, "prior variance for a drawn tabular value")->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--out", out)->capture_default_str();

  auto* inf = app.add_subcommand("infer", "run the PX-DA sampler on a dataset")->configurable();
  std::string data_path;
  SamplerFlags flags;
  int max_lag = 50;
  inf->add_option("--data", data_path)->required();
  flags.add(inf);
  inf->add_option("--max-lag", max_lag)->capture_default_str();
  inf->add_option("--seed", seed)->capture_default_str();
  inf->add_option("--out", out)->capture_default_str();

  auto* pred = app.add_subcommand("predict", "MAP action predictions on a holdout")->configurable();
  std::string posterior;
  std::string holdout;
  int draws = 200;
  pred->add_option("--posterior", posterior);
  pred->add_option("--value", value, "single value function used as the posterior")->delimiter(',');
  pred->add_option("--holdout", holdout)->required();
  pred->add_option("--draws", draws, "posterior draws used (evenly thinned)")->capture_default_str();
  pred->add_option("--seed", seed)->capture_default_str();
  pred->add_option("--out", out)->capture_default_str();

  auto* srv = app.add_subcommand("serve", "record/mimic Tetris sessions over TCP")->configurable();
  std::string host = "127.0.0.1";
  int port = 8765;
  int interval_ms = 0;
  double duration_s = 0.0;
  srv->add_option("--host", host)->capture_default_str();
  srv->add_option("--port", port, "0 picks a free port")->capture_default_str();
  srv->add_option("--posterior", posterior, "posterior for mimic sessions");
  srv->add_option("--mimic-draws", draws)->capture_default_str();
  srv->add_option("--mimic-interval-ms", interval_ms)->capture_default_str();
  srv->add_option("--height", height)->capture_default_str();
  srv->add_option("--width", width)->capture_default_str();
  srv->add_option("--duration", duration_s, "seconds to serve (0: until interrupted)")->capture_default_str();
  srv->add_option("--seed", seed)->capture_default_str();
  srv->add_option("--out", out, "directory for recorded sessions")->capture_default_str();

  auto* rep = app.add_subcommand("replicate", "scripted replication of an experiment")->configurable();
  std::string experiment;
  std::string scale = "desk";
  double time_scale = 0.02;
  rep->add_option("experiment", experiment, "toy|exp1|exp2-protocol|exp3-protocol")->required();
  rep->add_option("--scale", scale, "desk|paper")->capture_default_str();
  rep->add_option("--time-scale", time_scale, "exp3: wall seconds per protocol second")->capture_default_str();
  rep->add_option("--seed", seed)->capture_default_str();
  rep->add_option("--out", out)->capture_default_str();

  auto* dia = app.add_subcommand("diag", "autocorrelation and summary of posterior files")->configurable();
  std::vector<std::string> posteriors;
  std::vector<std::string> labels;
  dia->add_option("--posterior", posteriors)->required();
  dia->add_option("--label", labels);
  dia->add_option("--max-lag", max_lag)->capture_default_str();
  dia->add_option("--out", out)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  json config = cli::JsonConfig::resolved(&app);
  // The output location never changes results; leaving it out keeps same-seed
  // runs byte-identical wherever they are written.
  for (auto& [name, section] : config.items()) {
    if (section.is_object()) section.erase("out");
  }

  try {
    if (gen->parsed()) {
      return run_generate(config, env, value, steps, height, width, states, actions, prior_kappa, seed, out);
    }
    if (inf->parsed()) return run_infer(config, flags, data_path, max_lag, seed, out);
    if (pred->parsed()) return run_predict(config, posterior, value, holdout, draws, seed, out);
    if (srv->parsed()) {
      return run_serve(host, port, posterior, draws, interval_ms, height, width, duration_s, seed, out);
    }
    if (rep->parsed()) return run_replicate(config, experiment, scale, time_scale, seed, out);
    if (dia->parsed()) return run_diag(config, posteriors, labels, max_lag, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
