#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nmdp/sampler.hpp"

namespace nmdp {

/// Biased (1/n) autocorrelation estimates with Bartlett standard errors,
/// se_k = sqrt((1 + 2 sum_{j<k} acf_j^2) / n).
struct AcfReport {
  int component = 0;
  std::vector<int> lags;
  std::vector<double> acf;
  std::vector<double> se;
};

/// Needs length > 2 max_lag; throws on a constant series.
AcfReport autocorrelation(std::span<const double> series, int max_lag, int component = 0);

struct AsymptoticVariance {
  double value = 0.0;
  int window = 0;
  /// The truncated estimate went negative; the value is reported unclipped.
  bool negative = false;
};

/// c0 + 2 sum_{i=1..window} c_i. Needs window < length / 2.
AsymptoticVariance asymptotic_variance(std::span<const double> series, int window);
/// Window chosen as the first lag whose ACF drops below 0.05.
AsymptoticVariance asymptotic_variance(std::span<const double> series);

/// n c0 / sigma^2, capped to (0, n].
double effective_sample_size(std::span<const double> series);

struct ChainSummary {
  int draws = 0;
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<double> ess;
  double acceptance_overall = 1.0;
  double acceptance_min = 1.0;
  double acceptance_max = 1.0;

  nlohmann::json to_json() const;
};

ChainSummary summarize(const PosteriorSamples& samples);

struct LagComparison {
  int lag = 0;
  std::vector<double> acf;
  std::vector<double> se;
  /// Index of the lowest ACF, or -1 when every pair is within one combined se.
  int lowest = -1;
};

struct OrderingReport {
  std::vector<std::string> labels;
  std::vector<LagComparison> rows;
};

/// All reports must share the same lags.
OrderingReport compare_chains(std::span<const AcfReport> reports, const std::vector<std::string>& labels);

/// True if acf_a(k) <= acf_b(k) + k_se * sqrt(se_a(k)^2 + se_b(k)^2) for
/// every lag in [lag_lo, lag_hi].
bool acf_dominated(const AcfReport& a, const AcfReport& b, double k_se, int lag_lo, int lag_hi);

void write_acf_csv(const AcfReport& report, std::ostream& out);
void write_trace_csv(const PosteriorSamples& samples, std::ostream& out);
void write_histogram_csv(const PosteriorSamples& samples, int bins, std::ostream& out);
void write_comparison_csv(const OrderingReport& report, std::ostream& out);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Limiting Kolmogorov tail probability P(K > lambda).
double kolmogorov_tail(double lambda);
KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf);
KsResult ks_test_two_sample(std::span<const double> a, std::span<const double> b);

}  // namespace nmdp
