#include <doctest.h>

#include <cmath>
#include <vector>

#include "nmdp/mdp.hpp"

using namespace nmdp;

namespace {

TransitionModel deterministic(const std::vector<std::vector<int>>& next) {
  // next[a][x] is the successor of x under a.
  const int n = static_cast<int>(next.front().size());
  std::vector<Eigen::MatrixXd> kernels;
  for (const auto& row : next) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int x = 0; x < n; ++x) p(x, row[x]) = 1.0;
    kernels.push_back(p);
  }
  return TransitionModel(kernels);
}

}  // namespace

TEST_CASE("transition model rejects malformed kernels") {
  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.6, 0.0, 1.0;
  CHECK_THROWS_AS(TransitionModel({bad}), InvalidArgument);
  Eigen::MatrixXd neg(2, 2);
  neg << 1.5, -0.5, 0.0, 1.0;
  CHECK_THROWS_AS(TransitionModel({neg}), InvalidArgument);
  CHECK_THROWS_AS(TransitionModel({Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(3, 3)}), InvalidArgument);
  CHECK_THROWS_AS(TransitionModel({}), InvalidArgument);
}

TEST_CASE("transition model json round trip") {
  RngStream rng(3);
  const TransitionModel m = random_transition_model(4, 3, rng);
  const TransitionModel back = TransitionModel::from_json(m.to_json());
  for (int a = 0; a < 3; ++a) CHECK(back.kernel(a) == m.kernel(a));
}

TEST_CASE("value iteration") {
  SUBCASE("single state geometric series") {
    const TransitionModel m({Eigen::MatrixXd::Ones(1, 1)});
    const ValueFunction v = value_iteration(m, {Eigen::VectorXd::Ones(1)}, 0.5, 1e-12, 1000);
    CHECK(v(0) == doctest::Approx(2.0).epsilon(1e-10));
  }
  SUBCASE("tiny discount returns the reward") {
    RngStream rng(5);
    const TransitionModel m = random_transition_model(4, 2, rng);
    Eigen::VectorXd r(4);
    r << 1, -2, 0.5, 3;
    const ValueFunction v = value_iteration(m, {r}, 1e-12, 1e-14, 100);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(v(i) - r(i)) < 1e-6);
  }
  SUBCASE("deterministic chain against path enumeration") {
    // 0 -> 1 -> 2 (absorbing, zero reward) under action 0; action 1 stays put.
    const TransitionModel m = deterministic({{1, 2, 2}, {0, 1, 2}});
    Eigen::VectorXd r(3);
    r << 1.0, 2.0, 0.0;
    const double beta = 0.9;
    const ValueFunction v = value_iteration(m, {r}, beta, 1e-12, 10000);
    for (int x = 0; x < 3; ++x) {
      double best = -1e300;
      // Enumerate stationary deterministic policies over 200 steps.
      for (int p = 0; p < 8; ++p) {
        int s = x;
        double total = 0.0, disc = 1.0;
        for (int t = 0; t <= 200; ++t) {
          total += disc * r(s);
          disc *= beta;
          Eigen::Index next = 0;
          m.kernel((p >> s) & 1).row(s).maxCoeff(&next);
          s = static_cast<int>(next);
        }
        best = std::max(best, total);
      }
      CHECK(v(x) == doctest::Approx(best).epsilon(1e-8));
    }
  }
  SUBCASE("fixed point and failure") {
    RngStream rng(7);
    const TransitionModel m = random_transition_model(5, 3, rng);
    Eigen::VectorXd r = Eigen::VectorXd::LinSpaced(5, -1, 1);
    const ValueFunction v = value_iteration(m, {r}, 0.95, 1e-10, 100000);
    const Eigen::VectorXd tv = bellman_operator(m, {r}, 0.95, v.values);
    CHECK((tv - v.values).cwiseAbs().maxCoeff() <= 1e-10);
    try {
      (void)value_iteration(m, {r}, 0.95, 1e-10, 3);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.iterations() == 3);
      CHECK(e.residual() > 1e-10);
      CHECK(e.last_iterate().size() == 5);
    }
    CHECK_THROWS_AS(value_iteration(m, {r}, 1.0, 1e-10, 10), InvalidArgument);
    CHECK_THROWS_AS(value_iteration(m, {r}, 0.5, 0.0, 10), InvalidArgument);
  }
}

TEST_CASE("bellman operator is a contraction") {
  RngStream rng(11);
  const TransitionModel m = random_transition_model(6, 3, rng);
  const RewardFunction r{Eigen::VectorXd::Random(6)};
  const double beta = 0.8;
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd a(6), b(6);
    for (int k = 0; k < 6; ++k) {
      a(k) = rng.normal(0, 10);
      b(k) = rng.normal(0, 10);
    }
    const double lhs = (bellman_operator(m, r, beta, a) - bellman_operator(m, r, beta, b)).cwiseAbs().maxCoeff();
    CHECK(lhs <= beta * (a - b).cwiseAbs().maxCoeff() + 1e-12);
  }
}

TEST_CASE("optimal policy") {
  const TransitionModel m = deterministic({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}});
  CHECK(optimal_policy(ValueFunction(Eigen::VectorXd::Zero(3), Mode::tabular), m, 0) == 0);
  CHECK(optimal_policy(ValueFunction(Eigen::Vector3d(0, 5, 0), Mode::tabular), m, 2) == 1);

  RngStream rng(13);
  const TransitionModel rm = random_transition_model(4, 3, rng);
  const ValueFunction v = value_iteration(rm, {Eigen::Vector4d(1, 0, -1, 2)}, 0.9, 1e-10, 10000);
  for (int x = 0; x < 4; ++x) {
    int best = 0;
    double best_val = -1e300;
    for (int a = 0; a < 3; ++a) {
      double s = 0.0;
      for (int y = 0; y < 4; ++y) s += rm.probability(x, a, y) * v(y);
      if (s > best_val) {
        best_val = s;
        best = a;
      }
    }
    CHECK(optimal_policy(v, rm, x) == best);
    ValueFunction shifted(v.values.array() + 7.5, Mode::tabular);
    CHECK(optimal_policy(shifted, rm, x) == best);
  }
}

TEST_CASE("transition matrix restriction") {
  RngStream rng(17);
  const TransitionModel m = random_transition_model(5, 3, rng);
  const RMatrix full = transition_matrix(m, 2);
  REQUIRE(full.rows.rows() == 3);
  for (int a = 0; a < 3; ++a) CHECK(full.rows.row(a) == m.kernel(a).row(2));
  const std::vector<int> only{1};
  const RMatrix one = transition_matrix(m, 4, only);
  CHECK(one.rows.rows() == 1);
  CHECK(one.rows.row(0) == m.kernel(1).row(4));
  const std::vector<int> subset{2, 0};
  const RMatrix sub = transition_matrix(m, 3, subset);
  CHECK(sub.action_labels == std::vector<int>{0, 2});
  for (int i = 0; i < 2; ++i) {
    for (int y = 0; y < 5; ++y) CHECK(sub.rows(i, y) == m.probability(3, sub.action_labels[i], y));
    CHECK(sub.rows.row(i).sum() == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(transition_matrix(m, 0, std::vector<int>{}), InvalidArgument);
}

TEST_CASE("policy evaluation") {
  const TransitionModel one({Eigen::MatrixXd::Ones(1, 1)});
  const std::vector<int> pol{0};
  const PolicyEvaluation e = evaluate_policy(one, {Eigen::VectorXd::Ones(1)}, 0.5, pol, 0, 100, 60, 1);
  CHECK(e.estimate == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(e.truncation_bound < 1e-15);

  const TransitionModel cycle = deterministic({{1, 2, 0}});
  const std::vector<int> pol3{0, 0, 0};
  const PolicyEvaluation z = evaluate_policy(cycle, {Eigen::VectorXd::Zero(3)}, 0.5, pol3, 0, 10, 50, 1);
  CHECK(z.estimate == 0.0);

  // Rewards 1, 2, 3 repeating: sum over k of 0.5^{3k} (1 + 2 * 0.5 + 3 * 0.25).
  const PolicyEvaluation c = evaluate_policy(cycle, {Eigen::Vector3d(1, 2, 3)}, 0.5, pol3, 0, 10, 200, 1);
  CHECK(c.estimate == doctest::Approx((1.0 + 1.0 + 0.75) / (1.0 - 0.125)).epsilon(1e-12));

  RngStream rng(19);
  const TransitionModel rm = random_transition_model(3, 2, rng);
  const std::vector<int> p2{1, 0, 1};
  const PolicyEvaluation a = evaluate_policy(rm, {Eigen::Vector3d(1, 0, 2)}, 0.7, p2, 0, 500, 80, 42);
  const PolicyEvaluation b = evaluate_policy(rm, {Eigen::Vector3d(1, 0, 2)}, 0.7, p2, 0, 500, 80, 42);
  CHECK(a.estimate == b.estimate);
  // Exact value: (I - beta P_mu)^{-1} r.
  Eigen::Matrix3d pmu;
  for (int x = 0; x < 3; ++x) pmu.row(x) = rm.kernel(p2[x]).row(x);
  const Eigen::Vector3d exact = (Eigen::Matrix3d::Identity() - 0.7 * pmu).inverse() * Eigen::Vector3d(1, 0, 2);
  CHECK(std::abs(a.estimate - exact(0)) < 4 * a.standard_error + 1e-9);
}
