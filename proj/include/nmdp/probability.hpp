#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

#include "nmdp/types.hpp"

namespace nmdp {

/// A reproducible random stream keyed by (seed, stream id).
///
/// Streams with different ids are seeded through std::seed_seq from both
/// words, so chains and rollouts can be given independent streams without
/// coordinating. The same (seed, stream) always yields the same sequence
/// for a given build.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  /// Child stream derived from this stream's key (not its position).
  RngStream split(std::uint64_t child) const;

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  /// Gamma(shape, 1).
  double gamma(double shape);
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Standard normal utilities. All are accurate in the far tails.
double std_normal_cdf(double x);
double std_normal_logcdf(double x);
double std_normal_logpdf(double x);
double std_normal_quantile(double p);
double normal_logpdf(double x, double mean, double sd);
/// phi(x) / Phi(x), evaluated without underflow for very negative x.
double inverse_mills_ratio(double x);
/// exp(x^2) * erfc(x).
double erfcx(double x);

/// Draw from N(mean, sd^2) restricted to [lower, upper]; either bound may be
/// infinite. Inverse-CDF in the body; exponential-proposal rejection when
/// the interval lies more than 4 sd from the mean.
double sample_truncated_normal(double mean, double sd, double lower, double upper, RngStream& rng);

/// N(0, kappa I_N) conditioned on sum(V) = 0. kappa = +inf is representable
/// (flat prior) but cannot be sampled.
struct SumZeroGaussianPrior {
  int dim = 1;
  double kappa = 1.0;

  bool proper() const { return std::isfinite(kappa); }
  /// kappa (I - 11^T/N), the covariance of the full N-vector.
  Eigen::MatrixXd covariance() const;
};

ValueFunction sample_sum_zero_gaussian(const SumZeroGaussianPrior& prior, RngStream& rng);

/// Inverse gamma with density proportional to x^{-a-1} exp(-b/x).
/// a = b = 0 encodes the improper prior 1/x.
struct InverseGammaParams {
  double a = 1.0;
  double b = 1.0;

  bool improper() const { return a == 0.0 && b == 0.0; }
  bool proper() const { return a > 0.0 && b > 0.0; }
  void validate() const;
};

double sample_inverse_gamma(const InverseGammaParams& params, RngStream& rng);
double log_density_inverse_gamma(double x, const InverseGammaParams& params);

}  // namespace nmdp
