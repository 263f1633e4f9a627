#include <doctest.h>

#include <cmath>
#include <vector>

#include "checks.hpp"
#include "nmdp/transform_group.hpp"

using namespace nmdp;

TEST_CASE("compose under the linear convention") {
  const TransformParams c = compose({2, 3}, {4, 5}, Convention::linear);
  CHECK(c.z1 == 8.0);
  CHECK(c.z2 == 5.5);
  RngStream rng(1);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd y(4);
    for (int k = 0; k < 4; ++k) y(k) = rng.normal();
    const Eigen::VectorXd lhs = phi(phi(y, {4, 5}, Convention::linear), {2, 3}, Convention::linear);
    CHECK((lhs - phi(y, c, Convention::linear)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("group laws hold pointwise") {
  const test::GroupLawReport r = test::check_group_laws(200, 2);
  CHECK(r.max_error <= 1e-12);
}

TEST_CASE("identity and inverse") {
  const TransformParams e = identity_transform();
  CHECK(e.z1 == 1.0);
  CHECK(e.z2 == 0.0);
  const TransformParams z{2.5, -1.5};
  for (Convention c : {Convention::root, Convention::linear}) {
    const TransformParams back = compose(z, invert(z, c), c);
    CHECK(back.z1 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(std::abs(back.z2) < 1e-12);
  }
  CHECK_THROWS_AS(TransformParams({0.0, 1.0}).validate(), InvalidArgument);
}

TEST_CASE("apply_transform") {
  RngStream rng(3);
  AugmentedData w;
  std::vector<int> chosen;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd x(3);
    for (int k = 0; k < 3; ++k) x(k) = rng.normal(0, 4);
    Eigen::Index top = 0;
    x.maxCoeff(&top);
    chosen.push_back(static_cast<int>(top));
    w.w.push_back(x);
  }
  REQUIRE(w.satisfies_constraints(chosen));
  const AugmentedData same = apply_transform(w, identity_transform(), Direction::forward);
  const AugmentedData same_inv = apply_transform(w, identity_transform(), Direction::inverse);
  for (int t = 0; t < w.size(); ++t) {
    CHECK(same.w[t] == w.w[t]);
    CHECK(same_inv.w[t] == w.w[t]);
  }
  for (int i = 0; i < 50; ++i) {
    const TransformParams z{std::exp(rng.normal()), rng.normal(0, 3)};
    const AugmentedData f = apply_transform(w, z, Direction::forward);
    const AugmentedData back = apply_transform(f, z, Direction::inverse);
    CHECK(f.satisfies_constraints(chosen));
    for (int t = 0; t < w.size(); ++t) REQUIRE((back.w[t] - w.w[t]).cwiseAbs().maxCoeff() < 1e-12 * 50);
    // Inverse is sqrt(z1)(w + z2).
    const AugmentedData inv = apply_transform(w, z, Direction::inverse);
    CHECK((inv.w[0] - std::sqrt(z.z1) * (w.w[0].array() + z.z2).matrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("log_jacobian") {
  const std::vector<int> pairs{2, 2, 2};
  CHECK(log_jacobian({1.0, 0.0}, pairs) == 0.0);
  CHECK(log_jacobian({4.0, 0.0}, pairs) == doctest::Approx(-3.0 * std::log(4.0)));
  const std::vector<int> tetris_like{3, 5, 4};
  CHECK(log_jacobian({std::exp(2.0), 0.0}, tetris_like) == doctest::Approx(-12.0));
  CHECK(log_jacobian({std::exp(2.0), 0.0}, 12L) == doctest::Approx(-12.0));
}
