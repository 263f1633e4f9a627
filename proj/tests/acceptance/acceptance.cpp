// Acceptance runner: one PASS/FAIL line per criterion. With no arguments every
// criterion runs; otherwise only the named ones. Exit status is non-zero if
// any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "nmdp/experiments.hpp"

using namespace nmdp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string join(const std::vector<double>& xs, const char* format) {
  std::string out = "(";
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + fmt(format, xs[i]);
  return out + ")";
}

// Tolerances.
constexpr int kGroupInstances = 1000;
constexpr double kGroupTol = 1e-12;
constexpr int kConjugacyDraws = 100000;
constexpr int kMhDraws = 10000;
constexpr int kMhSteps = 10;
constexpr double kKsLevel = 0.001;
constexpr double kToyAcceptanceMin = 0.90;
constexpr double kTetrisAcceptanceLo = 0.4;
constexpr double kTetrisAcceptanceHi = 0.95;
constexpr double kAcfSe = 2.0;
constexpr int kAcfComponentsNeeded = 6;
constexpr int kArgmaxInstances = 1000;
constexpr int kCrossIterations = 50000;
constexpr double kCrossMaxZ = 3.0;
constexpr int kTetrisPlays = 10000;
constexpr double kMassNearTruth = 0.5;
constexpr double kErrorSlack = 0.05;
constexpr int kSurvivalSteps = 250;
constexpr int kSurvivorsNeeded = 60;
constexpr double kIqrRatio = 0.8;

Outcome group_laws() {
  const auto r = test::check_group_laws(kGroupInstances, 1);
  return {r.max_error <= kGroupTol, fmt("max error %.3g over %d instances (tol %.0e)", r.max_error, r.instances, kGroupTol)};
}

Outcome conjugacy_oracle() {
  const auto r = test::check_step2_oracle(kConjugacyDraws, 1);
  return {r.p_u > kKsLevel && r.p_z1 > kKsLevel,
          fmt("KS p(u) = %.4f, p(z1) = %.4f with %d draws (need > %.3f)", r.p_u, r.p_z1, r.draws, kKsLevel)};
}

Outcome mh_stationarity() {
  const auto r = test::check_mh_stationarity(kMhDraws, kMhSteps, 1);
  return {r.p_two_sample > kKsLevel && r.p_quadrature > kKsLevel,
          fmt("KS p vs exact draws = %.4f, p vs quadrature = %.4f, %d copies x %d steps, acceptance %.3f (need > %.3f)",
              r.p_two_sample, r.p_quadrature, r.draws, r.steps, r.acceptance, kKsLevel)};
}

experiments::Exp1Options exp1_first_truth() {
  experiments::Exp1Options o;
  o.truths = {Eigen::Vector3d(-3, -15, -1)};
  return o;
}

Outcome acceptance_rates() {
  const auto toy = experiments::run_toy(experiments::ToyOptions{});
  experiments::Exp1Options o = exp1_first_truth();
  o.sizes = {100};
  o.self_play_games = 0;
  const auto tetris = experiments::run_exp1_truth(o, 0);
  const double toy_rate = toy.min_acceptance();
  const double tetris_rate = tetris.largest().samples.acceptance.overall();
  const bool toy_ok = toy_rate >= kToyAcceptanceMin;
  const bool tetris_ok = tetris_rate >= kTetrisAcceptanceLo && tetris_rate <= kTetrisAcceptanceHi;
  return {toy_ok && tetris_ok,
          fmt("toy min over variants %.4f (need >= %.2f) %s; tetris T=100 %.4f (need [%.2f, %.2f]) %s", toy_rate,
              kToyAcceptanceMin, toy_ok ? "ok" : "out", tetris_rate, kTetrisAcceptanceLo, kTetrisAcceptanceHi,
              tetris_ok ? "ok" : "out")};
}

Outcome acf_ordering() {
  const auto toy = experiments::run_toy(experiments::ToyOptions{});
  const int n = toy.dominated_components(kAcfSe);
  return {n >= kAcfComponentsNeeded,
          fmt("PX-DA(scale+translate) within %.0f se of DA at lags 1-%d on %d/%zu components (need >= %d), %d iterations",
              kAcfSe, toy.options.max_lag, n, toy.variants.front().acf.size(), kAcfComponentsNeeded,
              toy.options.sampler.iterations)};
}

Outcome argmax_invariance() {
  const auto r = test::check_argmax_invariance(kArgmaxInstances, 1);
  return {r.mismatches == 0, fmt("%d mismatches over %d instances", r.mismatches, r.instances)};
}

Outcome cross_sampler() {
  const auto r = test::check_cross_sampler(kCrossIterations, 1);
  std::string means;
  for (std::size_t i = 0; i < r.variants.size(); ++i) {
    std::vector<double> m(r.means[i].data(), r.means[i].data() + r.means[i].size());
    means += " " + r.variants[i] + join(m, "%.3f");
  }
  return {r.max_z <= kCrossMaxZ,
          fmt("max |z| vs DA %.3f (need <= %.1f), %d iterations;", r.max_z, kCrossMaxZ, kCrossIterations) + means};
}

Outcome tetris_engine() {
  const auto r = test::check_tetris_engine(kTetrisPlays, 1, NMDP_GOLDEN_DIR);
  std::string detail = fmt("%d plays: %d conservation, %d footprint, %d/%d scenario, %d feature failures", r.plays,
                           r.conservation_failures, r.footprint_mismatches, r.scenario_failures, r.scenarios,
                           r.feature_failures);
  for (const auto& m : r.messages) detail += "; " + m;
  return {r.passed(), detail};
}

Outcome exp1_desk() {
  const auto o = exp1_first_truth();
  const auto r = experiments::run_exp1_truth(o, 0);
  bool mass_ok = true;
  for (double m : r.mass_near_truth) mass_ok = mass_ok && m >= kMassNearTruth;
  std::vector<double> errors;
  for (const auto& s : r.sizes) errors.push_back(s.prediction.error);
  const bool error_ok = r.error_nonincreasing(kErrorSlack);
  const int survivors = r.survivors(kSurvivalSteps);
  const bool survive_ok = survivors >= kSurvivorsNeeded;
  return {mass_ok && error_ok && survive_ok,
          fmt("(a) mass within 50%% of truth %s need >= %.2f %s; ", join(r.mass_near_truth, "%.3f").c_str(),
              kMassNearTruth, mass_ok ? "ok" : "out") +
              fmt("(b) error over sizes 10/20/50/100 %s slack %.2f %s; ", join(errors, "%.3f").c_str(), kErrorSlack,
                  error_ok ? "ok" : "out") +
              fmt("(c) self-play survivors at %d steps %d/%zu need >= %d %s", kSurvivalSteps, survivors,
                  r.self_play_steps.size(), kSurvivorsNeeded, survive_ok ? "ok" : "out")};
}

Outcome exp3_protocol() {
  const auto r = experiments::run_exp3_protocol(experiments::Exp3Options{});
  std::ostringstream detail;
  detail << "counts";
  for (int c : r.counts()) detail << ' ' << c;
  detail << (r.counts_strictly_decreasing() ? " strictly decreasing" : " NOT strictly decreasing") << "; IQR";
  for (const auto& t : r.taus) detail << " tau=" << t.tau << join(t.iqr, "%.3g");
  const bool widening = r.iqr_widening(kIqrRatio);
  detail << (widening ? " widening" : " NOT widening") << " (slack ratio " << kIqrRatio << ")";
  return {r.counts_strictly_decreasing() && widening, detail.str()};
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {"group_laws", 1, group_laws},
      {"conjugacy_oracle", 60, conjugacy_oracle},
      {"mh_stationarity", 60, mh_stationarity},
      {"acceptance_rates", 600, acceptance_rates},
      {"acf_ordering", 300, acf_ordering},
      {"argmax_invariance", 1, argmax_invariance},
      {"cross_sampler", 300, cross_sampler},
      {"tetris_engine", 10, tetris_engine},
      {"exp1_desk", 1800, exp1_desk},
      {"exp3_protocol", 1800, exp3_protocol},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> selected(argv + 1, argv + argc);
  for (const auto& name : selected) {
    bool known = false;
    for (const auto& c : criteria()) known = known || c.name == name;
    if (!known) {
      std::fprintf(stderr, "unknown criterion: %s\n", name.c_str());
      return 2;
    }
  }
  int failures = 0;
  for (const auto& c : criteria()) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.name) == selected.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = secs <= c.budget_s;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::printf("%s %s: %s [%.2fs, budget %.0fs%s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs,
                c.budget_s, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
