#include "nmdp/choice_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace nmdp {

int Observation::chosen_row() const {
  const auto it = std::find(legal_actions.begin(), legal_actions.end(), action);
  if (it == legal_actions.end()) throw InvalidArgument("observation: action is not in the legal set");
  return static_cast<int>(it - legal_actions.begin());
}

void Observation::validate() const {
  if (legal_actions.empty()) throw InvalidArgument("observation: empty legal action set");
  if (r.rows() != static_cast<Eigen::Index>(legal_actions.size())) {
    throw InvalidArgument("observation: R has " + std::to_string(r.rows()) + " rows but " +
                          std::to_string(legal_actions.size()) + " legal actions");
  }
  if (!r.allFinite()) throw InvalidArgument("observation: R has non-finite entries");
  (void)chosen_row();
}

long Dataset::total_rows() const {
  long n = 0;
  for (const auto& o : observations) n += o.num_actions();
  return n;
}

Dataset Dataset::slice(int begin, int end) const {
  if (begin < 0 || end > size() || begin > end) throw InvalidArgument("dataset slice out of range");
  Dataset out;
  out.mode = mode;
  out.dim = dim;
  out.metadata = metadata;
  out.observations.assign(observations.begin() + begin, observations.begin() + end);
  return out;
}

void Dataset::validate() const {
  if (dim < 1) throw InvalidArgument("dataset: column dimension must be positive");
  for (std::size_t t = 0; t < observations.size(); ++t) {
    const auto& o = observations[t];
    o.validate();
    if (o.r.cols() != dim) {
      throw InvalidArgument("dataset: observation " + std::to_string(t) + " has " + std::to_string(o.r.cols()) +
                            " columns, expected " + std::to_string(dim));
    }
  }
}

void write_dataset(const Dataset& data, std::ostream& out) {
  nlohmann::json header = {{"mode", to_string(data.mode)}, {"dim", data.dim}, {"metadata", data.metadata}};
  out << header.dump() << '\n';
  for (std::size_t t = 0; t < data.observations.size(); ++t) {
    const auto& o = data.observations[t];
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < o.r.rows(); ++i) {
      rows.push_back(std::vector<double>(o.r.row(i).begin(), o.r.row(i).end()));
    }
    nlohmann::json line = {{"t", t}, {"state", o.state}, {"legal_actions", o.legal_actions},
                           {"action", o.action}, {"R", std::move(rows)}};
    out << line.dump() << '\n';
  }
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("dataset: missing header line");
  const auto header = nlohmann::json::parse(line);
  Dataset data;
  data.mode = parse_mode(header.at("mode").get<std::string>());
  data.dim = header.at("dim").get<int>();
  data.metadata = header.value("metadata", nlohmann::json::object());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Observation o;
    o.state = j.at("state");
    o.action = j.at("action").get<int>();
    o.legal_actions = j.at("legal_actions").get<std::vector<int>>();
    const auto& rows = j.at("R");
    o.r.resize(static_cast<Eigen::Index>(rows.size()), data.dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto row = rows[i].get<std::vector<double>>();
      if (static_cast<int>(row.size()) != data.dim) throw InvalidArgument("dataset: R row has the wrong length");
      for (int k = 0; k < data.dim; ++k) o.r(static_cast<Eigen::Index>(i), k) = row[k];
    }
    data.observations.push_back(std::move(o));
  }
  data.validate();
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_dataset(data, out);
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() == 0) throw InvalidArgument("argmax of an empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < x.size(); ++i) {
    if (x(i) > x(best)) best = i;
  }
  return static_cast<int>(best);
}

ActionDraw sample_action(const Eigen::VectorXd& v, const Eigen::MatrixXd& r, RngStream& rng, double noise_sd) {
  if (r.cols() != v.size()) throw InvalidArgument("sample action: R columns do not match v");
  if (r.rows() == 0) throw InvalidArgument("sample action: no legal actions");
  ActionDraw out;
  out.noise.resize(r.rows());
  for (Eigen::Index i = 0; i < r.rows(); ++i) out.noise(i) = noise_sd == 0.0 ? 0.0 : noise_sd * rng.normal();
  out.row = argmax_lowest(out.noise + r * v);
  return out;
}

ChoiceEstimate choice_probability(const Eigen::VectorXd& v, const Eigen::MatrixXd& r, int row,
                                  const ChoiceMethod& method, RngStream& rng) {
  if (r.cols() != v.size()) throw InvalidArgument("choice probability: R columns do not match v");
  if (row < 0 || row >= r.rows()) throw InvalidArgument("choice probability: row out of range");
  const Eigen::VectorXd mu = r * v;

  if (method.kind == ChoiceMethod::Kind::monte_carlo) {
    if (method.samples <= 0) throw InvalidArgument("choice probability: Monte Carlo needs n > 0");
    long hits = 0;
    Eigen::VectorXd u(mu.size());
    for (long s = 0; s < method.samples; ++s) {
      for (Eigen::Index i = 0; i < mu.size(); ++i) u(i) = mu(i) + rng.normal();
      if (argmax_lowest(u) == row) ++hits;
    }
    const double n = static_cast<double>(method.samples);
    const double p = hits / n;
    return {p, std::sqrt(p * (1.0 - p) / n)};
  }

  // One-dimensional form of the orthant integral: condition on the chosen
  // utility and integrate out the independent competitors.
  const double centre = mu(row);
  auto integrand = [&](double x) {
    double log_f = std_normal_logpdf(x - centre);
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      if (i != row) log_f += std_normal_logcdf(x - mu(i));
    }
    return std::exp(log_f);
  };
  double err = 0.0;
  const double p = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, centre - 12.0,
                                                                                 centre + 12.0, 20, 1e-14, &err);
  return {std::clamp(p, 0.0, 1.0), 0.0};
}

ValueFunction transform_params(const ValueFunction& v, double z1, double z2) {
  if (!(z1 > 0.0)) throw InvalidArgument("transform: z1 must be positive");
  const double s = std::sqrt(z1);
  if (v.mode == Mode::basis) {
    if (z2 != 0.0) throw InvalidArgument("transform: translation is not an invariance in basis mode");
    return ValueFunction(s * v.values, Mode::basis);
  }
  return ValueFunction(s * (v.values.array() + z2).matrix(), Mode::tabular, false);
}

LogLikelihoodEstimate sum_log_choice(std::span<const ChoiceEstimate> terms) {
  LogLikelihoodEstimate out;
  out.terms.assign(terms.begin(), terms.end());
  double var = 0.0;
  for (const auto& c : terms) {
    if (!(c.probability > 0.0)) {
      out.has_zero = true;
      continue;
    }
    out.value += std::log(c.probability);
    const double rel = c.standard_error / c.probability;
    var += rel * rel;
  }
  if (out.has_zero) {
    out.value = -kInfinity;
    out.standard_error = kInfinity;
  } else {
    out.standard_error = std::sqrt(var);
  }
  return out;
}

LogLikelihoodEstimate log_likelihood_mc(const ValueFunction& v, const Dataset& data, long n, RngStream& rng) {
  if (v.mode != data.mode || v.size() != data.dim) {
    throw InvalidArgument("log likelihood: value function does not match the dataset mode/dimension");
  }
  std::vector<ChoiceEstimate> terms;
  terms.reserve(data.observations.size());
  for (const auto& o : data.observations) {
    terms.push_back(choice_probability(v.values, o.r, o.chosen_row(), ChoiceMethod::monte_carlo(n), rng));
  }
  return sum_log_choice(terms);
}

Dataset simulate_tabular_dataset(const TransitionModel& model, const ValueFunction& v, int num_steps, RngStream& rng,
                                 int start_state) {
  if (v.mode != Mode::tabular || v.size() != model.num_states()) {
    throw InvalidArgument("simulate: need a tabular value function of length N");
  }
  Dataset data;
  data.mode = Mode::tabular;
  data.dim = model.num_states();
  data.metadata = {{"source", "synthetic"}, {"env", "mdp"}};
  int x = start_state >= 0 ? start_state : rng.uniform_int(0, model.num_states() - 1);
  for (int t = 0; t < num_steps; ++t) {
    const RMatrix r = transition_matrix(model, x);
    const ActionDraw draw = sample_action(v.values, r.rows, rng);
    Observation o;
    o.state = x;
    o.legal_actions = r.action_labels;
    o.action = r.action_labels[draw.row];
    o.r = r.rows;
    data.observations.push_back(std::move(o));
    x = sample_next_state(model, x, data.observations.back().action, rng);
  }
  return data;
}

}  // namespace nmdp
