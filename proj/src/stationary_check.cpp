#include "nmdp/stationary_check.hpp"

#include <cmath>

#include "nmdp/diagnostics.hpp"

namespace nmdp {

Eigen::VectorXd q_kernel_step(const Eigen::VectorXd& y, const Eigen::MatrixXd& precision, Moves moves,
                              RngStream& rng) {
  const Eigen::Index q = y.size();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(q);
  const double a = y.dot(precision * y);
  const double b = y.dot(precision * ones);
  const double d = ones.dot(precision * ones);
  double s = 1.0;
  double z2 = 0.0;
  switch (moves) {
    case Moves::none:
      return y;
    case Moves::scale:
      s = 1.0 / std::sqrt(sample_inverse_gamma({0.5 * q, 0.5 * a}, rng));
      break;
    case Moves::translate:
      z2 = b / d + rng.normal() / std::sqrt(d);
      break;
    case Moves::scale_translate: {
      const double a_prime = a - b * b / d;
      s = 1.0 / std::sqrt(sample_inverse_gamma({0.5 * (q - 1), 0.5 * a_prime}, rng));
      z2 = s * b / d + rng.normal() / std::sqrt(d);
      break;
    }
  }
  return (s * y.array() - z2).matrix();
}

QCheckReport stationary_check_q(const Eigen::MatrixXd& covariance, Moves moves, int draws, RngStream& rng,
                                double alpha) {
  const Eigen::Index q = covariance.rows();
  if (q < 1 || covariance.cols() != q) throw InvalidArgument("Q check: covariance must be square");
  if (has_translate(moves) && has_scale(moves) && q < 2) {
    throw InvalidArgument("Q check: scale+translate needs at least two coordinates");
  }
  if (draws < 10) throw InvalidArgument("Q check: need at least 10 draws");
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw InvalidArgument("Q check: covariance is not positive definite");
  const Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(q, q));
  const Eigen::MatrixXd l = llt.matrixL();

  Eigen::MatrixXd in(draws, q);
  Eigen::MatrixXd out(draws, q);
  Eigen::VectorXd xi(q);
  for (int i = 0; i < draws; ++i) {
    for (Eigen::Index k = 0; k < q; ++k) xi(k) = rng.normal();
    const Eigen::VectorXd y = l * xi;
    in.row(i) = y.transpose();
    out.row(i) = q_kernel_step(y, precision, moves, rng).transpose();
  }

  QCheckReport r;
  r.draws = draws;
  const double n = draws;
  for (Eigen::Index k = 0; k < q; ++k) {
    const double var = covariance(k, k);
    const double sd = std::sqrt(var);
    auto moments = [&](const Eigen::MatrixXd& m, double& mean, double& second) {
      mean = m.col(k).mean();
      second = m.col(k).squaredNorm() / n;
    };
    double m_in, s_in, m_out, s_out;
    moments(in, m_in, s_in);
    moments(out, m_out, s_out);
    r.mean_in.push_back(m_in);
    r.mean_out.push_back(m_out);
    r.var_in.push_back(s_in);
    r.var_out.push_back(s_out);
    // Exact target: mean 0, E y^2 = var, Var(y^2) = 2 var^2.
    r.mean_se.push_back(sd / std::sqrt(n));
    r.var_se.push_back(std::sqrt(2.0) * var / std::sqrt(n));
    if (std::abs(m_out) > 3.0 * r.mean_se.back() || std::abs(s_out - var) > 3.0 * r.var_se.back()) {
      r.moments_ok = false;
    }
    std::vector<double> col(out.col(k).data(), out.col(k).data() + draws);
    const double p = ks_test(col, [sd](double x) { return std_normal_cdf(x / sd); }).p_value;
    r.ks_p_value.push_back(p);
    if (p < alpha) r.ks_ok = false;
  }
  return r;
}

}  // namespace nmdp
