#include "nmdp/conjugate.hpp"

#include <cmath>
#include <string>

namespace nmdp {

Eigen::VectorXd stack(const AugmentedData& w) {
  Eigen::VectorXd out(w.total_dim());
  Eigen::Index k = 0;
  for (const auto& x : w.w) {
    out.segment(k, x.size()) = x;
    k += x.size();
  }
  return out;
}

Eigen::MatrixXd stack_rows(const Dataset& data) {
  Eigen::MatrixXd out(data.total_rows(), data.dim);
  Eigen::Index k = 0;
  for (const auto& o : data.observations) {
    out.middleRows(k, o.r.rows()) = o.r;
    k += o.r.rows();
  }
  return out;
}

Eigen::MatrixXd ConjugateSystem::sum_zero_basis(int n) {
  if (n < 1) throw InvalidArgument("sum-zero basis: n must be positive");
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n - 1);
  for (int k = 1; k < n; ++k) {
    const double norm = std::sqrt(static_cast<double>(k) * (k + 1));
    for (int i = 0; i < k; ++i) b(i, k - 1) = 1.0 / norm;
    b(k, k - 1) = -static_cast<double>(k) / norm;
  }
  return b;
}

ConjugateSystem::ConjugateSystem(const Dataset& data, bool translate, double kappa)
    : mode_(data.mode), translate_(translate), kappa_(kappa), dim_(data.dim) {
  if (!(kappa > 0.0)) throw InvalidArgument("step 2: kappa must be positive");
  if (translate && data.mode != Mode::tabular) throw InvalidArgument("step 2: translation needs tabular mode");
  const Eigen::MatrixXd r = stack_rows(data);
  if (mode_ == Mode::tabular && !translate_) {
    basis_ = sum_zero_basis(dim_);
    x_ = r * basis_;
  } else {
    x_ = r;
  }
  const Eigen::Index p = x_.cols();
  Eigen::MatrixXd a = x_.transpose() * x_;
  if (std::isfinite(kappa_)) {
    a.diagonal().array() += 1.0 / kappa_;
  } else if (p > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a, Eigen::EigenvaluesOnly);
    const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < p; ++i) {
      if (eig.eigenvalues()(i) > 1e-10 * std::max(top, 1.0)) ++rank;
    }
    if (rank < p) {
      throw InvalidArgument("step 2: the Gram matrix of the stacked design is rank deficient (rank " +
                            std::to_string(rank) + " of " + std::to_string(p) +
                            ") and kappa = inf leaves the posterior improper; use a finite kappa");
    }
  }
  if (p > 0) {
    llt_.compute(a);
    if (llt_.info() != Eigen::Success) throw Error("step 2: Cholesky factorization failed");
  }
}

Eigen::VectorXd ConjugateSystem::posterior_mean(const Eigen::VectorXd& w_stacked) const {
  if (w_stacked.size() != x_.rows()) throw InvalidArgument("step 2: stacked utilities have the wrong length");
  if (x_.cols() == 0) return Eigen::VectorXd(0);
  return llt_.solve(x_.transpose() * w_stacked);
}

double ConjugateSystem::residual(const Eigen::VectorXd& w_stacked) const {
  const Eigen::VectorXd mean = posterior_mean(w_stacked);
  const double fit = x_.cols() == 0 ? 0.0 : (x_.transpose() * w_stacked).dot(mean);
  return std::max(0.0, w_stacked.squaredNorm() - fit);
}

void ConjugateSystem::recover(const Eigen::VectorXd& u, double z1, Eigen::VectorXd& v, double& z2) const {
  const double s = std::sqrt(z1);
  if (mode_ == Mode::basis) {
    v = u / s;
    z2 = 0.0;
  } else if (translate_) {
    const double centre = u.mean();
    z2 = centre / s;
    v = (u.array() - centre).matrix() / s;
  } else {
    v = dim_ > 1 ? Eigen::VectorXd(basis_ * u / s) : Eigen::VectorXd::Zero(dim_);
    z2 = 0.0;
  }
}

Step2Draw ConjugateSystem::draw(const Eigen::VectorXd& w_stacked, bool scale, const InverseGammaParams& ig,
                                RngStream& rng) const {
  const Eigen::VectorXd mean = posterior_mean(w_stacked);
  Step2Draw out;
  if (scale) {
    const InverseGammaParams post{ig.a + 0.5 * static_cast<double>(x_.rows()), ig.b + 0.5 * residual(w_stacked)};
    if (!post.proper()) throw Error("step 2: the conditional of z1 is degenerate (zero residual, improper prior)");
    out.z1 = sample_inverse_gamma(post, rng);
  }
  out.u = mean;
  if (x_.cols() > 0) {
    Eigen::VectorXd xi(x_.cols());
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = rng.normal();
    out.u += std::sqrt(out.z1) * llt_.matrixU().solve(xi);
  }
  recover(out.u, out.z1, out.v, out.z2);
  return out;
}

LeastSquaresStep2Moments least_squares_step2_moments(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, double kappa, double z1) {
  const Eigen::Index p = x.cols();
  const Eigen::MatrixXd g = x.transpose() * x;
  Eigen::LLT<Eigen::MatrixXd> g_llt(g);
  if (g_llt.info() != Eigen::Success) throw InvalidArgument("least-squares step 2: X^T X is not invertible");
  const Eigen::MatrixXd g_inv = g_llt.solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::VectorXd xtw = x.transpose() * w;
  LeastSquaresStep2Moments out;
  out.u_ls = g_inv * xtw;
  out.ssr = w.squaredNorm() - xtw.dot(out.u_ls);
  const Eigen::MatrixXd m = kappa * Eigen::MatrixXd::Identity(p, p) + g_inv;
  out.h = out.u_ls.dot(m.llt().solve(out.u_ls));
  out.s = (Eigen::MatrixXd::Identity(p, p) / kappa + g) / z1;
  out.mean = out.s.llt().solve(xtw) / z1;
  return out;
}

}  // namespace nmdp
