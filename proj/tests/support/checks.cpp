#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nmdp/conjugate.hpp"
#include "nmdp/diagnostics.hpp"
#include "nmdp/mdp.hpp"
#include "nmdp/mh_kernel.hpp"
#include "test_util.hpp"

namespace nmdp::test {

namespace {

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) e = std::max(e, rel_err(a(i), b(i)));
  return e;
}

TransformParams random_z(RngStream& rng) { return {std::exp(rng.normal(0.0, 1.0)), rng.normal(0.0, 2.0)}; }

/// Piecewise-linear CDF through tabulated points.
struct TabulatedCdf {
  std::vector<double> x;
  std::vector<double> f;

  double operator()(double t) const {
    if (t <= x.front()) return 0.0;
    if (t >= x.back()) return 1.0;
    const auto it = std::upper_bound(x.begin(), x.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - x.begin());
    const double w = (t - x[i - 1]) / (x[i] - x[i - 1]);
    return f[i - 1] + w * (f[i] - f[i - 1]);
  }
};

/// Accumulates the integral of g over the grid and normalizes.
TabulatedCdf tabulate(const std::function<double(double)>& g, std::vector<double> grid) {
  TabulatedCdf out;
  out.x = std::move(grid);
  out.f.assign(out.x.size(), 0.0);
  for (std::size_t i = 1; i < out.x.size(); ++i) {
    out.f[i] = out.f[i - 1] + integrate_fixed(g, out.x[i - 1], out.x[i]);
  }
  const double total = out.f.back();
  for (double& v : out.f) v /= total;
  return out;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
  return out;
}

}  // namespace

GroupLawReport check_group_laws(int instances, std::uint64_t seed) {
  RngStream rng(seed);
  GroupLawReport r;
  r.instances = instances;
  const std::vector<int> dims{3, 5, 4};
  for (int i = 0; i < instances; ++i) {
    for (Convention c : {Convention::root, Convention::linear}) {
      const TransformParams a = random_z(rng), b = random_z(rng), d = random_z(rng);
      Eigen::VectorXd y(6);
      for (Eigen::Index k = 0; k < y.size(); ++k) y(k) = rng.normal(0.0, 3.0);

      const Eigen::VectorXd lhs = phi(phi(y, b, c), a, c);
      r.max_error = std::max(r.max_error, max_rel_err(lhs, phi(y, compose(a, b, c), c)));
      r.max_error = std::max(r.max_error, max_rel_err(phi(phi(y, a, c), invert(a, c), c), y));
      r.max_error = std::max(r.max_error, max_rel_err(phi_inverse(phi(y, a, c), a, c), y));
      r.max_error = std::max(r.max_error, max_rel_err(phi_inverse(y, a, c), phi(y, invert(a, c), c)));
      const TransformParams e = compose(a, invert(a, c), c);
      r.max_error = std::max({r.max_error, rel_err(e.z1, 1.0), std::abs(e.z2)});
      const Eigen::VectorXd left = phi(y, compose(compose(a, b, c), d, c), c);
      const Eigen::VectorXd right = phi(y, compose(a, compose(b, d, c), c), c);
      r.max_error = std::max(r.max_error, max_rel_err(left, right));
      // log J_a(phi_b(y)) = log J_{ab}(y) - log J_b(y); J is constant in y.
      const double cocycle = log_jacobian(a, dims, c) - (log_jacobian(compose(a, b, c), dims, c) -
                                                         log_jacobian(b, dims, c));
      r.max_error = std::max(r.max_error, std::abs(cocycle) / std::max(1.0, std::abs(log_jacobian(a, dims, c))));
    }
  }
  return r;
}

Step2Instance Step2Instance::make() {
  Step2Instance s;
  s.data.mode = Mode::basis;
  s.data.dim = 1;
  const double rows[3][2] = {{1.0, 0.5}, {2.0, -1.0}, {0.3, 1.2}};
  for (int t = 0; t < 3; ++t) {
    Observation o;
    o.state = t;
    o.legal_actions = {0, 1};
    o.action = 0;
    o.r = Eigen::MatrixXd(2, 1);
    o.r << rows[t][0], rows[t][1];
    s.data.observations.push_back(o);
  }
  s.w = Eigen::VectorXd(6);
  s.w << 1.1, 0.2, 2.5, -0.7, 0.1, 1.5;
  const Eigen::VectorXd x = stack_rows(s.data).col(0);
  s.xx = x.squaredNorm();
  s.xw = x.dot(s.w);
  s.ww = s.w.squaredNorm();
  return s;
}

double Step2Instance::log_density(double u, double z1) const {
  // IG(z1; a, b) x N(u; 0, kappa z1) x N(w; X u, z1 I).
  const double d = static_cast<double>(w.size());
  const double ss = ww - 2.0 * u * xw + u * u * xx + u * u / kappa;
  return -(ig.a + 1.0) * std::log(z1) - ig.b / z1 - 0.5 * std::log(z1) - 0.5 * d * std::log(z1) - 0.5 * ss / z1;
}

Step2OracleReport check_step2_oracle(int draws, std::uint64_t seed) {
  const Step2Instance inst = Step2Instance::make();
  const ConjugateSystem sys(inst.data, false, inst.kappa);
  RngStream rng(seed);
  std::vector<double> us, zs;
  for (int i = 0; i < draws; ++i) {
    const Step2Draw d = sys.draw(inst.w, true, inst.ig, rng);
    us.push_back(d.u(0));
    zs.push_back(d.z1);
  }

  // Scale of the target, used only to place the quadrature grids.
  const double m = sys.posterior_mean(inst.w)(0);
  const double zmode = (inst.ig.b + 0.5 * sys.residual(inst.w)) / (inst.ig.a + 0.5 * 6 + 1.5);
  const double offset = inst.log_density(m, zmode);
  const double x2 = inst.xx + 1.0 / inst.kappa;
  auto f = [&](double u, double z1) { return std::exp(inst.log_density(u, z1) - offset); };

  // Marginal of u: integrate z1 = exp(s) out (Jacobian z1).
  auto g_u = [&](double u) {
    return integrate([&](double s) { return f(u, std::exp(s)) * std::exp(s); }, std::log(zmode) - 8,
                     std::log(zmode) + 12);
  };
  const double u_sd = std::sqrt(zmode / x2);
  const TabulatedCdf cdf_u = tabulate(g_u, linspace(m - 40 * u_sd, m + 40 * u_sd, 1601));

  // Marginal of z1 on a log grid: integrate u out.
  auto g_s = [&](double s) {
    const double z1 = std::exp(s);
    const double half = 40.0 * std::sqrt(z1 / x2);
    return integrate([&](double u) { return f(u, z1); }, m - half, m + half) * z1;
  };
  const TabulatedCdf cdf_s = tabulate(g_s, linspace(std::log(zmode) - 8, std::log(zmode) + 12, 1601));

  std::vector<double> log_z(zs.size());
  std::transform(zs.begin(), zs.end(), log_z.begin(), [](double z) { return std::log(z); });
  Step2OracleReport r;
  r.draws = draws;
  const KsResult ku = ks_test(us, [&](double t) { return cdf_u(t); });
  const KsResult kz = ks_test(log_z, [&](double t) { return cdf_s(t); });
  r.ks_u = ku.statistic;
  r.p_u = ku.p_value;
  r.ks_z1 = kz.statistic;
  r.p_z1 = kz.p_value;
  return r;
}

MhStationarityReport check_mh_stationarity(int draws, int steps, std::uint64_t seed) {
  const Eigen::Vector3d mu(0.5, 1.2, -0.3);
  const int chosen = 0;
  RngStream rng(seed);
  const ProposalParams prop = mh_proposal_params(mu, chosen);
  std::vector<double> moved, fresh;
  long accepted = 0;
  for (int i = 0; i < draws; ++i) {
    Eigen::VectorXd w = sample_w_exact(mu, chosen, rng);
    for (int k = 0; k < steps; ++k) accepted += mh_step_w(w, mu, chosen, rng, prop);
    moved.push_back(w(chosen));
    fresh.push_back(sample_w_exact(mu, chosen, rng)(chosen));
  }
  const TabulatedCdf cdf = tabulate([&](double x) { return std::exp(log_chosen_marginal(x, mu, chosen)); },
                                    linspace(-9.0, 10.0, 1901));
  MhStationarityReport r;
  r.draws = draws;
  r.steps = steps;
  r.p_two_sample = ks_test_two_sample(moved, fresh).p_value;
  r.p_quadrature = ks_test(moved, [&](double t) { return cdf(t); }).p_value;
  r.acceptance = static_cast<double>(accepted) / (static_cast<double>(draws) * steps);
  return r;
}

ArgmaxInvarianceReport check_argmax_invariance(int instances, std::uint64_t seed) {
  RngStream rng(seed);
  ArgmaxInvarianceReport r;
  r.instances = instances;
  for (int i = 0; i < instances; ++i) {
    const int m = rng.uniform_int(2, 8), n = rng.uniform_int(2, 8);
    Eigen::MatrixXd rows(m, n);
    for (int a = 0; a < m; ++a) {
      for (int j = 0; j < n; ++j) rows(a, j) = rng.uniform();
      rows.row(a) /= rows.row(a).sum();
    }
    Eigen::VectorXd v(n);
    for (int j = 0; j < n; ++j) v(j) = rng.normal(0.0, 5.0);
    const double z1 = std::exp(rng.normal(0.0, 2.0)), z2 = rng.normal(0.0, 10.0);
    const ActionDraw base = sample_action(v, rows, rng);
    const ValueFunction t = transform_params(ValueFunction(v, Mode::tabular), z1, z2);
    const int moved = argmax_lowest(std::sqrt(z1) * base.noise + rows * t.values);
    if (moved != base.row) ++r.mismatches;
  }
  return r;
}

CrossSamplerReport check_cross_sampler(int iterations, std::uint64_t seed) {
  RngStream rng(seed);
  const TransitionModel model = random_transition_model(3, 2, rng);
  const ValueFunction truth(Eigen::Vector3d(1.0, -0.5, -0.5), Mode::tabular, true);
  const Dataset data = simulate_tabular_dataset(model, truth, 5, rng);
  CrossSamplerReport r;
  for (Moves moves : {Moves::none, Moves::scale, Moves::translate, Moves::scale_translate}) {
    SamplerConfig c;
    c.mode = Mode::tabular;
    c.moves = moves;
    c.kappa = 4.0;
    c.ig = {3.0, 3.0};
    c.iterations = iterations;
    c.burn_in = iterations / 10;
    c.seed = seed + 17;
    const PosteriorSamples s = run_chain(data, c);
    Eigen::VectorXd se(s.dim);
    for (int k = 0; k < s.dim; ++k) {
      const auto series = s.component(k);
      se(k) = std::sqrt(std::max(asymptotic_variance(series).value, 0.0) / series.size());
    }
    r.variants.emplace_back(to_string(moves));
    r.means.push_back(s.mean());
    r.se.push_back(se);
  }
  for (std::size_t i = 1; i < r.means.size(); ++i) {
    for (Eigen::Index k = 0; k < r.means[i].size(); ++k) {
      const double combined = std::hypot(r.se[i](k), r.se[0](k));
      r.max_z = std::max(r.max_z, std::abs(r.means[i](k) - r.means[0](k)) / combined);
    }
  }
  return r;
}

std::string footprint_table() {
  std::ostringstream out;
  for (int p = 1; p <= tetris::kNumPieces; ++p) {
    for (int rot = 0; rot < tetris::kNumRotations; ++rot) {
      const tetris::Footprint& f = tetris::footprint(p, rot);
      out << tetris::piece_letter(p) << ' ' << rot << ' ' << f.width << 'x' << f.height << '\n';
      for (int row = f.height - 1; row >= 0; --row) {
        for (int col = 0; col < f.width; ++col) {
          const bool on = std::any_of(f.cells.begin(), f.cells.end(),
                                      [&](const tetris::Cell& c) { return c.row == row && c.col == col; });
          out << (on ? '#' : '.');
        }
        out << '\n';
      }
    }
  }
  return out.str();
}

namespace {

int piece_from_letter(char c) {
  for (int p = 1; p <= tetris::kNumPieces; ++p) {
    if (tetris::piece_letter(p) == c) return p;
  }
  throw InvalidArgument(std::string("unknown piece letter ") + c);
}

void check_scenarios(const std::filesystem::path& file, TetrisEngineReport& r) {
  std::ifstream in(file);
  if (!in) {
    r.scenario_failures++;
    r.messages.push_back("missing " + file.string());
    return;
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("scenario ", 0) != 0) continue;
    const std::string name = line.substr(9);
    std::string key, piece;
    int rotation = 0, column = 0, cleared = 0;
    in >> key >> piece >> key >> rotation >> key >> column >> key >> cleared >> key;
    std::vector<std::string> before, after;
    std::vector<std::string>* target = &before;
    while (in >> line && line != "end") {
      if (line == "after") {
        target = &after;
        continue;
      }
      target->push_back(line);
    }
    ++r.scenarios;
    const tetris::GameState state{tetris::Board::from_text(before), piece_from_letter(piece.at(0)), false};
    const tetris::StepOutcome out = tetris::step(state, {rotation, column});
    if (out.state.board.to_text() != after || out.rows_cleared != cleared) {
      r.scenario_failures++;
      r.messages.push_back("scenario " + name + " differs from golden board");
    }
  }
}

void check_features(TetrisEngineReport& r) {
  auto expect = [&](const tetris::Board& b, double f1, double f2, double f3, const std::string& what) {
    const tetris::FeatureVector f = tetris::features(b);
    if (f.max_height != f1 || f.holes != f2 || f.bumpiness != f3) {
      r.feature_failures++;
      r.messages.push_back("features of " + what);
    }
  };
  expect(tetris::Board(), 0, 0, 0, "empty board");
  tetris::Board column;
  for (int row = 0; row < 3; ++row) column.set(row, 4, true);
  expect(column, 3, 0, 18, "single interior column of height 3");
  tetris::Board edge;
  for (int row = 0; row < 3; ++row) edge.set(row, 0, true);
  expect(edge, 3, 0, 9, "single edge column of height 3");
  tetris::Board hole;
  for (int col = 0; col < 10; ++col) {
    if (col != 2) hole.set(0, col, true);
  }
  hole.set(1, 2, true);
  expect(hole, 2, 1, 2, "covered hole");

  // Square piece on the empty board.
  const tetris::GameState o{tetris::Board(), tetris::O, false};
  const auto legal = tetris::legal_actions(o);
  const Eigen::MatrixXd rm = tetris::feature_r_matrix(o, legal);
  for (std::size_t i = 0; i < legal.size(); ++i) {
    const bool edge_col = legal[i].column == 0 || legal[i].column == 8;
    const Eigen::Vector3d want(2, 0, edge_col ? 4 : 8);
    if (rm.row(static_cast<Eigen::Index>(i)).transpose() != want) {
      r.feature_failures++;
      r.messages.push_back("O-piece feature row");
    }
  }
}

}  // namespace

TetrisEngineReport check_tetris_engine(int plays, std::uint64_t seed, const std::filesystem::path& golden_dir) {
  TetrisEngineReport r;
  RngStream rng(seed);
  tetris::GameState state = tetris::new_game(rng);
  while (r.plays < plays) {
    const auto legal = tetris::legal_actions(state);
    if (legal.empty()) {
      state = tetris::new_game(rng);
      continue;
    }
    const auto& a = legal[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(legal.size()) - 1))];
    const int before = state.board.occupied_count();
    const tetris::StepOutcome out = tetris::step(state, a);
    ++r.plays;
    const int after = out.state.board.occupied_count();
    bool ok = after == before + 4 - state.board.width() * out.rows_cleared;
    for (int row = 0; row < out.state.board.height(); ++row) ok = ok && !out.state.board.row_full(row);
    for (int col = 0; col < out.state.board.width(); ++col) {
      int h = 0;
      for (int row = 0; row < out.state.board.height(); ++row) {
        if (out.state.board.occupied(row, col)) h = row + 1;
      }
      ok = ok && h == out.state.board.column_height(col);
    }
    if (!ok) r.conservation_failures++;
    state = out.state;
    state.piece = tetris::random_piece(rng);
  }

  std::ifstream fp(golden_dir / "footprints.txt");
  std::stringstream golden;
  golden << fp.rdbuf();
  const std::string want = golden.str(), have = footprint_table();
  if (want != have) {
    r.footprint_mismatches++;
    r.messages.push_back("footprints differ from golden table");
  }
  check_scenarios(golden_dir / "boards.txt", r);
  check_features(r);
  return r;
}

}  // namespace nmdp::test
