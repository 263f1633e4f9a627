#include "nmdp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace nmdp {

namespace {

std::vector<double> autocovariance(std::span<const double> x, int max_lag) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - mean;
  std::vector<double> c(static_cast<std::size_t>(max_lag) + 1, 0.0);
  for (int k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) s += d[i] * d[i + k];
    c[k] = s / static_cast<double>(n);
  }
  return c;
}

void check_series(std::span<const double> x, int max_lag) {
  if (max_lag < 0) throw InvalidArgument("acf: max_lag must be non-negative");
  if (x.size() <= 2 * static_cast<std::size_t>(max_lag) || x.size() < 2) {
    throw InvalidArgument("acf: series length must exceed 2 * max_lag");
  }
}

}  // namespace

AcfReport autocorrelation(std::span<const double> series, int max_lag, int component) {
  check_series(series, max_lag);
  const auto c = autocovariance(series, max_lag);
  if (!(c[0] > 0.0)) throw InvalidArgument("acf: series has zero variance");
  AcfReport r;
  r.component = component;
  const double n = static_cast<double>(series.size());
  double cum = 0.0;
  for (int k = 0; k <= max_lag; ++k) {
    r.lags.push_back(k);
    const double rho = k == 0 ? 1.0 : c[k] / c[0];
    r.acf.push_back(rho);
    r.se.push_back(k == 0 ? 0.0 : std::sqrt((1.0 + 2.0 * cum) / n));
    if (k > 0) cum += rho * rho;
  }
  return r;
}

AsymptoticVariance asymptotic_variance(std::span<const double> series, int window) {
  if (window < 0 || 2 * static_cast<std::size_t>(window) >= series.size()) {
    throw InvalidArgument("asymptotic variance: need window < length / 2");
  }
  const auto c = autocovariance(series, window);
  if (!(c[0] > 0.0)) throw InvalidArgument("asymptotic variance: series has zero variance");
  AsymptoticVariance out;
  out.window = window;
  out.value = c[0];
  for (int k = 1; k <= window; ++k) out.value += 2.0 * c[k];
  out.negative = out.value < 0.0;
  return out;
}

AsymptoticVariance asymptotic_variance(std::span<const double> series) {
  check_series(series, 1);
  const std::size_t n = series.size();
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  auto lag_cov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) s += (series[i] - mean) * (series[i + k] - mean);
    return s / static_cast<double>(n);
  };
  const double c0 = lag_cov(0);
  if (!(c0 > 0.0)) throw InvalidArgument("asymptotic variance: series has zero variance");
  AsymptoticVariance out;
  out.value = c0;
  const std::size_t max_lag = (n - 1) / 2;
  for (std::size_t k = 1; k <= max_lag; ++k) {
    const double ck = lag_cov(k);
    out.window = static_cast<int>(k);
    out.value += 2.0 * ck;
    if (ck / c0 < 0.05) break;
  }
  out.negative = out.value < 0.0;
  return out;
}

double effective_sample_size(std::span<const double> series) {
  const double n = static_cast<double>(series.size());
  const auto var = asymptotic_variance(series);
  const auto c = autocovariance(series, 0);
  if (var.negative || var.value <= 0.0) return n;
  return std::clamp(n * c[0] / var.value, 1.0 / n, n);
}

nlohmann::json ChainSummary::to_json() const {
  return {{"draws", draws}, {"mean", mean}, {"sd", sd}, {"ess", ess},
          {"acceptance_overall", acceptance_overall}, {"acceptance_min", acceptance_min},
          {"acceptance_max", acceptance_max}};
}

ChainSummary summarize(const PosteriorSamples& samples) {
  ChainSummary s;
  s.draws = samples.size();
  for (int k = 0; k < samples.dim; ++k) {
    const auto x = samples.component(k);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= std::max<std::size_t>(x.size(), 1);
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
    s.mean.push_back(mean);
    s.sd.push_back(sd);
    // Constant components (e.g. N = 1 tabular) have no meaningful ESS.
    s.ess.push_back(sd > 0.0 && x.size() >= 4 ? effective_sample_size(x) : static_cast<double>(x.size()));
  }
  s.acceptance_overall = samples.acceptance.overall();
  const auto per = samples.acceptance.per_observation();
  if (!per.empty()) {
    s.acceptance_min = *std::min_element(per.begin(), per.end());
    s.acceptance_max = *std::max_element(per.begin(), per.end());
  }
  return s;
}

OrderingReport compare_chains(std::span<const AcfReport> reports, const std::vector<std::string>& labels) {
  if (reports.empty()) throw InvalidArgument("compare chains: no reports");
  if (labels.size() != reports.size()) throw InvalidArgument("compare chains: one label per report");
  for (const auto& r : reports) {
    if (r.lags != reports.front().lags) throw InvalidArgument("compare chains: reports have different lags");
  }
  OrderingReport out;
  out.labels = labels;
  for (std::size_t i = 0; i < reports.front().lags.size(); ++i) {
    LagComparison row;
    row.lag = reports.front().lags[i];
    for (const auto& r : reports) {
      row.acf.push_back(r.acf[i]);
      row.se.push_back(r.se[i]);
    }
    const auto best = std::min_element(row.acf.begin(), row.acf.end()) - row.acf.begin();
    bool separated = true;
    for (std::size_t j = 0; j < row.acf.size(); ++j) {
      if (static_cast<long>(j) == best) continue;
      const double band = std::hypot(row.se[best], row.se[j]);
      if (row.acf[j] - row.acf[best] <= band) separated = false;
    }
    row.lowest = separated && row.acf.size() > 1 ? static_cast<int>(best) : -1;
    out.rows.push_back(std::move(row));
  }
  return out;
}

bool acf_dominated(const AcfReport& a, const AcfReport& b, double k_se, int lag_lo, int lag_hi) {
  if (a.lags != b.lags) throw InvalidArgument("acf comparison: reports have different lags");
  for (std::size_t i = 0; i < a.lags.size(); ++i) {
    if (a.lags[i] < lag_lo || a.lags[i] > lag_hi) continue;
    if (a.acf[i] > b.acf[i] + k_se * std::hypot(a.se[i], b.se[i])) return false;
  }
  return true;
}

void write_acf_csv(const AcfReport& report, std::ostream& out) {
  out << "lag,acf,se\n";
  for (std::size_t i = 0; i < report.lags.size(); ++i) {
    out << report.lags[i] << ',' << format_double(report.acf[i]) << ',' << format_double(report.se[i]) << '\n';
  }
}

void write_trace_csv(const PosteriorSamples& samples, std::ostream& out) {
  out << "iter";
  for (int k = 0; k < samples.dim; ++k) out << ",v" << (k + 1);
  out << '\n';
  for (std::size_t i = 0; i < samples.draws.size(); ++i) {
    out << samples.iterations[i];
    for (int k = 0; k < samples.dim; ++k) out << ',' << format_double(samples.draws[i](k));
    out << '\n';
  }
}

void write_histogram_csv(const PosteriorSamples& samples, int bins, std::ostream& out) {
  if (bins < 1) throw InvalidArgument("histogram: bins must be positive");
  out << "component,bin_lo,bin_hi,count\n";
  for (int k = 0; k < samples.dim; ++k) {
    const auto x = samples.component(k);
    if (x.empty()) continue;
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it;
    const double width = *hi_it > lo ? (*hi_it - lo) / bins : 1.0;
    std::vector<long> counts(static_cast<std::size_t>(bins), 0);
    for (double v : x) counts[std::min<std::size_t>(static_cast<std::size_t>((v - lo) / width), bins - 1)]++;
    for (int b = 0; b < bins; ++b) {
      out << (k + 1) << ',' << format_double(lo + b * width) << ',' << format_double(lo + (b + 1) * width) << ','
          << counts[b] << '\n';
    }
  }
}

void write_comparison_csv(const OrderingReport& report, std::ostream& out) {
  out << "lag";
  for (const auto& l : report.labels) out << ',' << l << "_acf," << l << "_se";
  out << ",lowest\n";
  for (const auto& row : report.rows) {
    out << row.lag;
    for (std::size_t j = 0; j < row.acf.size(); ++j) out << ',' << format_double(row.acf[j]) << ',' << format_double(row.se[j]);
    out << ',' << (row.lowest >= 0 ? report.labels[row.lowest] : "tie") << '\n';
  }
}

double kolmogorov_tail(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw InvalidArgument("KS: empty sample");
  std::vector<double> x(sample.begin(), sample.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double rn = std::sqrt(n);
  return {d, kolmogorov_tail((rn + 0.12 + 0.11 / rn) * d)};
}

KsResult ks_test_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("KS: empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::abs(i / n - j / m));
  }
  const double ne = std::sqrt(n * m / (n + m));
  return {d, kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d)};
}

}  // namespace nmdp
