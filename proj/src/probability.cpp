#include "nmdp/probability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace nmdp {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kTailSwitch = 4.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// Standardized draws. a < b throughout.
double body_sample(double a, double b, RngStream& rng) {
  const double pa = std_normal_cdf(a);
  const double pb = std_normal_cdf(b);
  if (!(pb > pa)) return std::isfinite(a) && std::isfinite(b) ? 0.5 * (a + b) : (std::isfinite(a) ? a : b);
  const double u = pa + (pb - pa) * rng.uniform();
  return std::clamp(std_normal_quantile(u), a, b);
}

// a >= kTailSwitch.
double tail_sample(double a, double b, RngStream& rng) {
  if (std::isfinite(b) && b - a < 1.0 / a) {
    for (;;) {
      const double x = a + (b - a) * rng.uniform();
      if (rng.uniform() < std::exp(0.5 * (a * a - x * x))) return x;
    }
  }
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double x = a - std::log(rng.uniform()) / rate;
    if (x > b) continue;
    const double d = x - rate;
    if (rng.uniform() < std::exp(-0.5 * d * d)) return x;
  }
}

double standard_truncated(double a, double b, RngStream& rng) {
  if (a >= kTailSwitch) return tail_sample(a, b, rng);
  if (b <= -kTailSwitch) return -tail_sample(-b, -a, rng);
  if (a >= 0.0) return -body_sample(-b, -a, rng);
  return body_sample(a, b, rng);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

RngStream RngStream::split(std::uint64_t child) const {
  return RngStream(seed_, splitmix64(stream_ ^ splitmix64(child + 1)));
}

double RngStream::uniform() {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(engine_);
    if (u > 0.0) return u;
  }
}

double RngStream::normal() { return normal_(engine_); }

double RngStream::gamma(double shape) {
  return std::gamma_distribution<double>(shape, 1.0)(engine_);
}

int RngStream::uniform_int(int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(engine_);
}

double erfcx(double x) {
  if (x < 25.0) return std::exp(x * x) * std::erfc(x);
  // Continued fraction; converges in a handful of terms this far out.
  double k = x;
  for (int n = 40; n >= 1; --n) k = x + 0.5 * n / k;
  return 1.0 / (std::sqrt(std::numbers::pi) * k);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double std_normal_logcdf(double x) {
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
  if (x > -5.0) return std::log(0.5 * std::erfc(-x * kInvSqrt2));
  return std::log(0.5 * erfcx(-x * kInvSqrt2)) - 0.5 * x * x;
}

double std_normal_logpdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - kLogSqrt2Pi - std::log(sd);
}

double std_normal_quantile(double p) {
  if (p <= 0.0) return -kInfinity;
  if (p >= 1.0) return kInfinity;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double inverse_mills_ratio(double x) {
  if (x > 0.0) return std::exp(std_normal_logpdf(x) - std_normal_logcdf(x));
  return std::sqrt(2.0 / std::numbers::pi) / erfcx(-x * kInvSqrt2);
}

double sample_truncated_normal(double mean, double sd, double lower, double upper, RngStream& rng) {
  if (!(sd > 0.0) || !std::isfinite(sd)) throw InvalidArgument("truncated normal: sd must be positive");
  if (!(lower < upper)) throw InvalidArgument("truncated normal: lower must be below upper");
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;
  return mean + sd * standard_truncated(a, b, rng);
}

Eigen::MatrixXd SumZeroGaussianPrior::covariance() const {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(dim, dim, 1.0 / dim);
  return kappa * (Eigen::MatrixXd::Identity(dim, dim) - ones);
}

ValueFunction sample_sum_zero_gaussian(const SumZeroGaussianPrior& prior, RngStream& rng) {
  if (prior.dim < 1) throw InvalidArgument("sum-zero prior: dimension must be positive");
  if (!(prior.kappa > 0.0)) throw InvalidArgument("sum-zero prior: kappa must be positive");
  if (!prior.proper()) throw InvalidArgument("sum-zero prior: cannot sample with kappa = inf");
  Eigen::VectorXd u(prior.dim);
  const double sd = std::sqrt(prior.kappa);
  for (int i = 0; i < prior.dim; ++i) u(i) = sd * rng.normal();
  u.array() -= u.mean();
  return ValueFunction(std::move(u), Mode::tabular, true);
}

void InverseGammaParams::validate() const {
  if (!(a >= 0.0) || !(b >= 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw InvalidArgument("inverse gamma: a and b must be finite and non-negative");
  }
  if (!proper() && !improper()) {
    throw InvalidArgument("inverse gamma: use a > 0, b > 0, or a = b = 0 for the improper prior");
  }
}

double sample_inverse_gamma(const InverseGammaParams& params, RngStream& rng) {
  if (!params.proper()) throw InvalidArgument("inverse gamma: cannot sample an improper prior");
  return params.b / rng.gamma(params.a);
}

double log_density_inverse_gamma(double x, const InverseGammaParams& params) {
  if (!(x > 0.0)) return -kInfinity;
  if (params.improper()) return -std::log(x);
  return params.a * std::log(params.b) - std::lgamma(params.a) - (params.a + 1.0) * std::log(x) -
         params.b / x;
}

}  // namespace nmdp
