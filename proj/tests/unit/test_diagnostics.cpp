#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "nmdp/diagnostics.hpp"
#include "nmdp/probability.hpp"

using namespace nmdp;

namespace {

std::vector<double> ar1(double rho, int n, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> x(n);
  double prev = rng.normal() / std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i) {
    prev = rho * prev + rng.normal();
    x[i] = prev;
  }
  return x;
}

// Variance of batch means times the batch length.
double batch_means_variance(const std::vector<double>& x, int batches) {
  const int len = static_cast<int>(x.size()) / batches;
  std::vector<double> means(batches, 0.0);
  double grand = 0.0;
  for (int b = 0; b < batches; ++b) {
    for (int i = 0; i < len; ++i) means[b] += x[b * len + i];
    means[b] /= len;
    grand += means[b];
  }
  grand /= batches;
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  return len * ss / (batches - 1);
}

}  // namespace

TEST_CASE("autocorrelation") {
  SUBCASE("white noise") {
    const std::vector<double> x = ar1(0.0, 20000, 1);
    const AcfReport r = autocorrelation(x, 20);
    CHECK(r.lags.size() == 21);
    CHECK(r.acf[0] == doctest::Approx(1.0).epsilon(1e-12));
    int outside = 0;
    for (int k = 1; k <= 20; ++k) outside += std::abs(r.acf[k]) > 3 * r.se[k];
    CHECK(outside <= 1);
    CHECK(r.se[1] == doctest::Approx(1.0 / std::sqrt(20000.0)).epsilon(1e-9));
  }
  SUBCASE("AR(1) with rho 0.9 decays geometrically") {
    const std::vector<double> x = ar1(0.9, 100000, 2);
    const AcfReport r = autocorrelation(x, 10);
    for (int k = 1; k <= 10; ++k) CHECK(std::abs(r.acf[k] - std::pow(0.9, k)) < 4 * r.se[k]);
  }
  SUBCASE("unchanged by negation and affine rescaling") {
    std::vector<double> x = ar1(0.6, 500, 3);
    const AcfReport a = autocorrelation(x, 10);
    for (double& v : x) v = -3.0 * v + 7.0;
    const AcfReport b = autocorrelation(x, 10);
    for (int k = 0; k <= 10; ++k) CHECK(a.acf[k] == doctest::Approx(b.acf[k]).epsilon(1e-10));
  }
  SUBCASE("errors") {
    const std::vector<double> x = ar1(0.0, 10, 4);
    CHECK_THROWS_AS(autocorrelation(x, 5), InvalidArgument);
    CHECK_THROWS_AS(autocorrelation(x, -1), InvalidArgument);
    const std::vector<double> flat(100, 2.0);
    CHECK_THROWS_AS(autocorrelation(flat, 5), InvalidArgument);
  }
}

TEST_CASE("asymptotic variance") {
  SUBCASE("iid series gives the marginal variance") {
    const std::vector<double> x = ar1(0.0, 50000, 5);
    CHECK(asymptotic_variance(x).value == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("AR(1) 0.5 against the closed form and batch means") {
    const std::vector<double> x = ar1(0.5, 200000, 6);
    const AsymptoticVariance a = asymptotic_variance(x);
    CHECK(a.value == doctest::Approx(4.0).epsilon(0.06));
    CHECK(a.value == doctest::Approx(batch_means_variance(x, 400)).epsilon(0.25));
    CHECK_FALSE(a.negative);
    CHECK(asymptotic_variance(x, 30).value == doctest::Approx(4.0).epsilon(0.08));
  }
  SUBCASE("duplicating every draw doubles it") {
    const std::vector<double> x = ar1(0.0, 40000, 7);
    std::vector<double> twice;
    for (double v : x) twice.insert(twice.end(), {v, v});
    CHECK(asymptotic_variance(twice, 10).value / asymptotic_variance(x, 10).value ==
          doctest::Approx(2.0).epsilon(0.05));
  }
  SUBCASE("window must be short") {
    const std::vector<double> x = ar1(0.0, 20, 8);
    CHECK_THROWS_AS(asymptotic_variance(x, 10), InvalidArgument);
  }
}

TEST_CASE("effective sample size") {
  const std::vector<double> iid = ar1(0.0, 20000, 9);
  const double e = effective_sample_size(iid);
  CHECK(e > 0.9 * 20000);
  CHECK(e <= 20000);
  const std::vector<double> sticky = ar1(0.9, 100000, 10);
  CHECK(effective_sample_size(sticky) == doctest::Approx(100000 * 0.1 / 1.9).epsilon(0.15));
}

TEST_CASE("chain comparison") {
  const AcfReport fast = autocorrelation(ar1(0.5, 20000, 11), 5);
  const AcfReport slow = autocorrelation(ar1(0.9, 20000, 12), 5);
  SUBCASE("identical chains tie") {
    const std::vector<AcfReport> r = {fast, fast};
    const OrderingReport o = compare_chains(r, {"a", "b"});
    for (const auto& row : o.rows) CHECK(row.lowest == -1);
  }
  SUBCASE("lower autocorrelation wins") {
    const std::vector<AcfReport> r = {slow, fast};
    const OrderingReport o = compare_chains(r, {"slow", "fast"});
    for (std::size_t i = 1; i < o.rows.size(); ++i) CHECK(o.rows[i].lowest == 1);
    CHECK(acf_dominated(fast, slow, 2.0, 1, 5));
    CHECK_FALSE(acf_dominated(slow, fast, 2.0, 1, 5));
    std::ostringstream csv;
    write_comparison_csv(o, csv);
    CHECK(csv.str().rfind("lag,slow_acf,slow_se,fast_acf,fast_se,lowest\n", 0) == 0);
    CHECK(csv.str().find(",fast\n") != std::string::npos);
  }
  SUBCASE("mismatched lags") {
    const AcfReport shorter = autocorrelation(ar1(0.5, 2000, 13), 3);
    const std::vector<AcfReport> r = {fast, shorter};
    CHECK_THROWS_AS(compare_chains(r, {"a", "b"}), InvalidArgument);
    CHECK_THROWS_AS(acf_dominated(fast, shorter, 2.0, 1, 3), InvalidArgument);
    CHECK_THROWS_AS(compare_chains(r, {"a"}), InvalidArgument);
  }
}

TEST_CASE("csv exports") {
  PosteriorSamples s;
  s.mode = Mode::basis;
  s.dim = 2;
  for (int i = 0; i < 4; ++i) {
    s.draws.emplace_back(Eigen::Vector2d(i, -i), Mode::basis);
    s.iterations.push_back(10 + i);
  }
  std::ostringstream trace, hist, acf;
  write_trace_csv(s, trace);
  CHECK(trace.str() == "iter,v1,v2\n10,0,0\n11,1,-1\n12,2,-2\n13,3,-3\n");
  write_histogram_csv(s, 2, hist);
  CHECK(hist.str().rfind("component,bin_lo,bin_hi,count\n", 0) == 0);
  CHECK_THROWS_AS(write_histogram_csv(s, 0, hist), InvalidArgument);
  write_acf_csv(autocorrelation(ar1(0.0, 100, 14), 2), acf);
  CHECK(acf.str().rfind("lag,acf,se\n0,1,", 0) == 0);
}

TEST_CASE("Kolmogorov-Smirnov") {
  CHECK(kolmogorov_tail(0.0) == doctest::Approx(1.0));
  CHECK(kolmogorov_tail(1.3581) == doctest::Approx(0.05).epsilon(0.01));
  CHECK(kolmogorov_tail(1.6276) == doctest::Approx(0.01).epsilon(0.01));
  CHECK(kolmogorov_tail(10.0) < 1e-30);

  RngStream rng(15);
  std::vector<double> u(5000), v(5000);
  for (auto& x : u) x = rng.uniform();
  for (auto& x : v) x = rng.uniform();
  const auto uniform = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(ks_test(u, uniform).p_value > 0.001);
  CHECK(ks_test(u, [](double x) { return std::clamp(x * x, 0.0, 1.0); }).p_value < 1e-6);
  CHECK(ks_test_two_sample(u, v).p_value > 0.001);
  std::vector<double> shifted = v;
  for (auto& x : shifted) x += 0.1;
  CHECK(ks_test_two_sample(u, shifted).p_value < 1e-6);
  CHECK_THROWS_AS(ks_test(std::vector<double>{}, uniform), InvalidArgument);
}
