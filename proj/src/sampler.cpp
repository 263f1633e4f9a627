#include "nmdp/sampler.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace nmdp {

std::string_view to_string(Moves moves) {
  switch (moves) {
    case Moves::none: return "none";
    case Moves::scale: return "scale";
    case Moves::translate: return "translate";
    case Moves::scale_translate: return "scale+translate";
  }
  return "none";
}

Moves parse_moves(std::string_view text) {
  if (text == "none" || text == "da") return Moves::none;
  if (text == "scale") return Moves::scale;
  if (text == "translate") return Moves::translate;
  if (text == "scale+translate" || text == "scale_translate" || text == "both") return Moves::scale_translate;
  throw InvalidArgument("unknown moves '" + std::string(text) + "' (none|scale|translate|scale+translate)");
}

std::string_view to_string(Step1Method method) {
  return method == Step1Method::exact ? "exact" : "metropolis-hastings";
}

Step1Method parse_step1(std::string_view text) {
  if (text == "exact") return Step1Method::exact;
  if (text == "metropolis-hastings" || text == "mh") return Step1Method::metropolis_hastings;
  throw InvalidArgument("unknown step1 method '" + std::string(text) + "' (exact|mh)");
}

namespace {

nlohmann::json number_or_inf(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double read_number_or_inf(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
    throw InvalidArgument("expected a number or \"inf\", got '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

void SamplerConfig::validate() const {
  if (!(kappa > 0.0)) throw InvalidArgument("config: kappa must be positive (inf allowed)");
  ig.validate();
  if (ig.improper() && !has_scale(moves)) {
    throw InvalidArgument("config: the improper inverse-gamma prior requires a scale move");
  }
  if (has_translate(moves) && mode != Mode::tabular) {
    throw InvalidArgument("config: translation moves are only valid in tabular mode");
  }
  if (iterations < 1) throw InvalidArgument("config: iterations must be positive");
  if (burn_in < 0 || burn_in >= iterations) throw InvalidArgument("config: need 0 <= burn_in < iterations");
  if (thinning < 1) throw InvalidArgument("config: thinning must be positive");
  if (!std::isfinite(init_value)) throw InvalidArgument("config: init_value must be finite");
  for (double x : init) {
    if (!std::isfinite(x)) throw InvalidArgument("config: init must be finite");
  }
  mh.validate();
}

nlohmann::json SamplerConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"moves", to_string(moves)},
          {"kappa", number_or_inf(kappa)},
          {"ig_a", ig.a},
          {"ig_b", ig.b},
          {"iterations", iterations},
          {"burn_in", burn_in},
          {"thinning", thinning},
          {"step1", to_string(step1)},
          {"newton_max_iters", mh.newton_max_iters},
          {"newton_tol", mh.newton_tol},
          {"defensive_weight", mh.defensive_weight},
          {"seed", seed},
          {"init_value", init_value},
          {"init", init}};
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& doc) {
  SamplerConfig c;
  if (doc.contains("mode")) c.mode = parse_mode(doc["mode"].get<std::string>());
  if (doc.contains("moves")) c.moves = parse_moves(doc["moves"].get<std::string>());
  if (doc.contains("kappa")) c.kappa = read_number_or_inf(doc["kappa"]);
  c.ig.a = doc.value("ig_a", c.ig.a);
  c.ig.b = doc.value("ig_b", c.ig.b);
  c.iterations = doc.value("iterations", c.iterations);
  c.burn_in = doc.value("burn_in", c.burn_in);
  c.thinning = doc.value("thinning", c.thinning);
  if (doc.contains("step1")) c.step1 = parse_step1(doc["step1"].get<std::string>());
  c.mh.newton_max_iters = doc.value("newton_max_iters", c.mh.newton_max_iters);
  c.mh.newton_tol = doc.value("newton_tol", c.mh.newton_tol);
  c.mh.defensive_weight = doc.value("defensive_weight", c.mh.defensive_weight);
  c.seed = doc.value("seed", c.seed);
  c.init_value = doc.value("init_value", c.init_value);
  if (doc.contains("init")) c.init = doc["init"].get<std::vector<double>>();
  c.validate();
  return c;
}

namespace {

SamplerConfig checked(SamplerConfig config, const Dataset& data) {
  config.validate();
  data.validate();
  if (data.mode != config.mode) throw InvalidArgument("sampler: dataset mode differs from the configured mode");
  if (!config.init.empty() && static_cast<int>(config.init.size()) != data.dim) {
    throw InvalidArgument("sampler: init has the wrong dimension");
  }
  if (has_translate(config.moves)) {
    // Translation invariance relies on R_t 1 = 1.
    for (const auto& o : data.observations) {
      const Eigen::VectorXd sums = o.r.rowwise().sum();
      if ((sums.array() - 1.0).abs().maxCoeff() > 1e-9) {
        throw InvalidArgument("sampler: translation moves need transition rows summing to 1");
      }
    }
  }
  return config;
}

}  // namespace

PxdaSampler::PxdaSampler(Dataset data, SamplerConfig config)
    : data_(std::move(data)),
      config_(checked(std::move(config), data_)),
      system_(data_, has_translate(config_.moves), config_.kappa) {
  chosen_.reserve(data_.observations.size());
  for (const auto& o : data_.observations) chosen_.push_back(o.chosen_row());
}

ChainState PxdaSampler::initial_state() const {
  ChainState s;
  if (!config_.init.empty()) {
    const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(config_.init.data(), data_.dim);
    s.v = ValueFunction(v, data_.mode, data_.mode == Mode::tabular && std::abs(v.sum()) < 1e-9);
  } else {
    s.v = ValueFunction(Eigen::VectorXd::Constant(data_.dim, config_.init_value), data_.mode,
                        data_.mode == Mode::tabular && config_.init_value == 0.0);
  }
  // Latents start at their means with the chosen entry lifted to the top, so
  // the first Step 2 sees residuals of the right size.
  for (std::size_t t = 0; t < data_.observations.size(); ++t) {
    Eigen::VectorXd w = data_.observations[t].r * s.v.values;
    w(chosen_[t]) = w.maxCoeff();
    s.w.w.push_back(std::move(w));
  }
  return s;
}

std::vector<Eigen::VectorXd> PxdaSampler::utilities(const ValueFunction& v) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(data_.observations.size());
  for (const auto& o : data_.observations) out.push_back(o.r * v.values);
  return out;
}

Step1Result PxdaSampler::step1(const ChainState& state, RngStream& rng) const {
  Step1Result out;
  if (has_scale(config_.moves) && config_.ig.proper()) out.z.z1 = sample_inverse_gamma(config_.ig, rng);
  if (has_translate(config_.moves) && std::isfinite(config_.kappa)) {
    out.z.z2 = std::sqrt(config_.kappa / data_.dim) * rng.normal();
  }
  const auto mu = utilities(state.v);
  AugmentedData w;
  w.w.reserve(mu.size());
  out.accepted.assign(mu.size(), 1);
  for (std::size_t t = 0; t < mu.size(); ++t) {
    if (config_.step1 == Step1Method::exact) {
      w.w.push_back(sample_w_exact(mu[t], chosen_[t], rng));
      continue;
    }
    Eigen::VectorXd wt = state.w.w.at(t);
    const ProposalParams proposal = mh_proposal_params(mu[t], chosen_[t], config_.mh);
    if (!proposal.refined) ++out.newton_fallbacks;
    out.accepted[t] = mh_step_w(wt, mu[t], chosen_[t], rng, proposal) ? 1 : 0;
    w.w.push_back(std::move(wt));
  }
  out.w_prime = apply_transform(w, out.z, Direction::inverse);
  return out;
}

Step2Result PxdaSampler::step2(const AugmentedData& w_prime, RngStream& rng) const {
  const Step2Draw d = system_.draw(stack(w_prime), has_scale(config_.moves), config_.ig, rng);
  Step2Result out;
  out.v = ValueFunction(d.v, data_.mode, data_.mode == Mode::tabular);
  out.z1 = d.z1;
  out.z2 = d.z2;
  out.w = apply_transform(w_prime, {d.z1, d.z2}, Direction::forward);
  return out;
}

ChainState PxdaSampler::iterate(const ChainState& state, RngStream& rng, Step1Result* step1_out) const {
  Step1Result s1 = step1(state, rng);
  Step2Result s2 = step2(s1.w_prime, rng);
  ChainState next;
  next.v = std::move(s2.v);
  next.w = std::move(s2.w);
  next.iteration = state.iteration + 1;
  if (step1_out) *step1_out = std::move(s1);
  return next;
}

double AcceptanceStats::overall() const {
  long a = 0;
  long p = 0;
  for (std::size_t t = 0; t < accepted.size(); ++t) {
    a += accepted[t];
    p += proposed[t];
  }
  return p == 0 ? 1.0 : static_cast<double>(a) / static_cast<double>(p);
}

std::vector<double> AcceptanceStats::per_observation() const {
  std::vector<double> out(accepted.size(), 1.0);
  for (std::size_t t = 0; t < accepted.size(); ++t) {
    if (proposed[t] > 0) out[t] = static_cast<double>(accepted[t]) / static_cast<double>(proposed[t]);
  }
  return out;
}

Eigen::MatrixXd PosteriorSamples::matrix() const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(draws.size()), dim);
  for (std::size_t i = 0; i < draws.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = draws[i].values.transpose();
  return m;
}

Eigen::VectorXd PosteriorSamples::mean() const {
  if (draws.empty()) throw InvalidArgument("posterior: no draws");
  return matrix().colwise().mean().transpose();
}

std::vector<double> PosteriorSamples::component(int k) const {
  if (k < 0 || k >= dim) throw InvalidArgument("posterior: component out of range");
  std::vector<double> out;
  out.reserve(draws.size());
  for (const auto& d : draws) out.push_back(d(k));
  return out;
}

std::vector<Eigen::VectorXd> PosteriorSamples::thinned_values(int max_draws) const {
  if (max_draws < 1) throw InvalidArgument("posterior: need at least one draw");
  const std::size_t n = draws.size();
  const std::size_t keep = std::min<std::size_t>(n, static_cast<std::size_t>(max_draws));
  std::vector<Eigen::VectorXd> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(draws[i * n / keep].values);
  return out;
}

std::string detect_divergence(const std::vector<ValueFunction>& draws) {
  for (const auto& d : draws) {
    if (!d.values.allFinite()) return "non-finite value function draw";
  }
  const std::size_t n = draws.size();
  if (n < 8) return {};
  double q[4] = {0, 0, 0, 0};
  for (int k = 0; k < 4; ++k) {
    const std::size_t lo = n * k / 4;
    const std::size_t hi = n * (k + 1) / 4;
    for (std::size_t i = lo; i < hi; ++i) q[k] += draws[i].values.norm();
    q[k] /= static_cast<double>(hi - lo);
  }
  if (q[1] > 2.0 * q[0] && q[2] > 2.0 * q[1] && q[3] > 2.0 * q[2]) {
    return "||v|| doubles across every quarter of the chain; the posterior may be improper";
  }
  return {};
}

PosteriorSamples run_chain(const Dataset& data, const SamplerConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const PxdaSampler sampler(data, config);
  RngStream rng(config.seed);
  PosteriorSamples out;
  out.mode = data.mode;
  out.dim = data.dim;
  out.config = config.to_json();
  out.acceptance.accepted.assign(data.observations.size(), 0);
  out.acceptance.proposed.assign(data.observations.size(), 0);

  ChainState state = sampler.initial_state();
  Step1Result s1;
  for (int it = 1; it <= config.iterations; ++it) {
    state = sampler.iterate(state, rng, &s1);
    if (it <= config.burn_in) continue;
    for (std::size_t t = 0; t < s1.accepted.size(); ++t) {
      out.acceptance.accepted[t] += s1.accepted[t];
      out.acceptance.proposed[t] += 1;
    }
    out.acceptance.newton_fallbacks += s1.newton_fallbacks;
    if ((it - config.burn_in) % config.thinning == 0) {
      out.iterations.push_back(it);
      out.draws.push_back(state.v);
    }
  }
  out.divergence_note = detect_divergence(out.draws);
  out.diverged = !out.divergence_note.empty();
  out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "NaN";
  if (std::isinf(x)) return x > 0 ? "Infinity" : "-Infinity";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_posterior(const PosteriorSamples& samples, std::ostream& out) {
  nlohmann::json head = {{"type", "config"}, {"mode", to_string(samples.mode)}, {"dim", samples.dim},
                         {"config", samples.config}};
  out << head.dump() << '\n';
  for (std::size_t i = 0; i < samples.draws.size(); ++i) {
    out << "{\"iter\":" << samples.iterations[i] << ",\"v\":[";
    const auto& v = samples.draws[i].values;
    for (Eigen::Index k = 0; k < v.size(); ++k) out << (k ? "," : "") << format_double(v(k));
    out << "]}\n";
  }
  nlohmann::json summary = {{"type", "summary"},
                            {"draws", samples.draws.size()},
                            {"acceptance_overall", samples.acceptance.overall()},
                            {"accepted", samples.acceptance.accepted},
                            {"proposed", samples.acceptance.proposed},
                            {"newton_fallbacks", samples.acceptance.newton_fallbacks},
                            {"wall_time_s", samples.wall_time_s},
                            {"diverged", samples.diverged},
                            {"divergence_note", samples.divergence_note}};
  out << summary.dump() << '\n';
}

PosteriorSamples read_posterior(std::istream& in) {
  PosteriorSamples s;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.contains("iter")) {
      if (!have_header) throw InvalidArgument("posterior: draw before the config line");
      const auto v = j.at("v").get<std::vector<double>>();
      if (static_cast<int>(v.size()) != s.dim) throw InvalidArgument("posterior: draw has the wrong length");
      s.iterations.push_back(j.at("iter").get<long>());
      s.draws.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), s.dim), s.mode, s.mode == Mode::tabular);
      continue;
    }
    const auto type = j.value("type", std::string());
    if (type == "config") {
      s.mode = parse_mode(j.at("mode").get<std::string>());
      s.dim = j.at("dim").get<int>();
      s.config = j.value("config", nlohmann::json::object());
      have_header = true;
    } else if (type == "summary") {
      s.acceptance.accepted = j.value("accepted", std::vector<long>{});
      s.acceptance.proposed = j.value("proposed", std::vector<long>{});
      s.acceptance.newton_fallbacks = j.value("newton_fallbacks", 0L);
      s.wall_time_s = j.value("wall_time_s", 0.0);
      s.diverged = j.value("diverged", false);
      s.divergence_note = j.value("divergence_note", std::string());
    }
  }
  if (!have_header) throw InvalidArgument("posterior: missing config line");
  return s;
}

void save_posterior(const PosteriorSamples& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_posterior(samples, out);
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

PosteriorSamples load_posterior(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open posterior '" + path.string() + "'");
  return read_posterior(in);
}

}  // namespace nmdp
