#include <doctest.h>

#include <random>

#include "errors.hpp"
#include "lie.hpp"
#include "oracles.hpp"

using namespace pcsrod;

namespace {

Twist random_twist(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Twist t;
  for (int i = 0; i < 6; ++i) t(i) = g(rng);
  return t;
}

Pose random_pose(std::mt19937_64& rng) {
  return exp_se3(random_twist(rng, 0.8), 1.0);
}

}  // namespace

TEST_SUITE_BEGIN("lie");

TEST_CASE("exp of zero strain is a pure identity") {
  const Pose h = exp_se3(Twist::Zero(), 0.3);
  CHECK((h.rotation - Mat3::Identity()).norm() == doctest::Approx(0.0));
  CHECK(h.position.norm() == doctest::Approx(0.0));
}

TEST_CASE("exp matches RK4 integration of dH/ds = H [xi x]") {
  const double len = 0.4;
  Twist xi = make_twist(Vec3(0, 0, M_PI / len), Vec3(1, 0, 0));
  Pose h = exp_se3(xi, len);
  // half-turn about z
  CHECK(h.rotation(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(h.rotation(1, 1) == doctest::Approx(-1.0).epsilon(1e-9));
  Pose ref = oracles::integrate_exp(xi, len);
  CHECK((h.rotation - ref.rotation).norm() < 1e-8);
  CHECK((h.position - ref.position).norm() < 1e-8);

  std::mt19937_64 rng(7);
  for (int i = 0; i < 50; ++i) {
    xi = random_twist(rng, 2.0);
    const double s = 0.5 * (i + 1) / 50.0;
    h = exp_se3(xi, s);
    ref = oracles::integrate_exp(xi, s);
    CHECK((h.rotation - ref.rotation).norm() < 1e-8);
    CHECK((h.position - ref.position).norm() < 1e-8);
  }
}

TEST_CASE("exp branches agree at the small-angle threshold") {
  const Twist lo = make_twist(Vec3(0, 1e-9, 0), Vec3(0, 0, 1));
  const Twist hi =
      make_twist(Vec3(0, 2e-6 * (1.0 + 1e-9), 0), Vec3(0, 0, 1));
  const Twist lo2 =
      make_twist(Vec3(0, 2e-6 * (1.0 - 1e-9), 0), Vec3(0, 0, 1));
  const Pose a = exp_se3(hi, 0.5);
  const Pose b = exp_se3(lo2, 0.5);
  CHECK((a.rotation - b.rotation).norm() < 1e-12);
  CHECK((a.position - b.position).norm() < 1e-12);
  // tiny curvature agrees with the quadrature-free straight limit
  const Pose c = exp_se3(lo, 0.5);
  CHECK((c.position - Vec3(0, 0, 0.5)).norm() < 1e-9);
}

TEST_CASE("exp rotation block equals Rodrigues axis-angle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, M_PI);
  for (int i = 0; i < 200; ++i) {
    Vec3 axis = Vec3::Random();
    axis.normalize();
    const double angle = u(rng);
    const Twist xi = make_twist(angle * axis, Vec3::Zero());
    const Pose h = exp_se3(xi, 1.0);
    const Mat3 ref = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    CHECK((h.rotation - ref).norm() < 1e-10);
  }
}

TEST_CASE("one-parameter subgroup property") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Twist xi = random_twist(rng, 3.0);
    const double s1 = 0.3 * i / 100.0 + 0.01;
    const double s2 = 0.25;
    const Pose whole = exp_se3(xi, s1 + s2);
    const Pose split = compose(exp_se3(xi, s1), exp_se3(xi, s2));
    CHECK((whole.rotation - split.rotation).norm() < 1e-9);
    CHECK((whole.position - split.position).norm() < 1e-9);
  }
}

TEST_CASE("exp rejects non-finite input") {
  Twist bad = Twist::Zero();
  bad(2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(exp_se3(bad, 0.1), InvalidArgumentError);
  CHECK_THROWS_AS(exp_se3(Twist::Zero(), -1.0), InvalidArgumentError);
}

TEST_CASE("log inverts exp") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    Twist xi = random_twist(rng, 1.0);
    // keep the rotation angle clear of pi
    if (angular_part(xi).norm() > 3.0) xi *= 2.9 / angular_part(xi).norm();
    const Pose h = exp_se3(xi, 1.0);
    const Twist back = log_se3(h);
    CHECK((back - xi).norm() < 1e-9 * std::max(1.0, xi.norm()));
  }
}

TEST_CASE("adjoint of identity and pure translation") {
  CHECK((adjoint(Pose::Identity()) - Mat6::Identity()).norm() == doctest::Approx(0.0));
  Pose t;
  t.position = Vec3(1, 2, 3);
  const Mat6 ad = adjoint(t);
  CHECK((ad.topLeftCorner<3, 3>() - Mat3::Identity()).norm() == doctest::Approx(0.0));
  CHECK((ad.bottomRightCorner<3, 3>() - Mat3::Identity()).norm() == doctest::Approx(0.0));
  CHECK((ad.bottomLeftCorner<3, 3>() - hat3(t.position)).norm() == doctest::Approx(0.0));
  CHECK(ad.topRightCorner<3, 3>().norm() == doctest::Approx(0.0));
}

TEST_CASE("adjoint is a homomorphism and inverts cleanly") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    CHECK((adjoint(compose(a, b)) - adjoint(a) * adjoint(b)).norm() < 1e-9);
    CHECK((adjoint(a) * adjoint_inverse(a) - Mat6::Identity()).norm() < 1e-10);
    CHECK((adjoint_inverse(a) - adjoint(inverse(a))).norm() < 1e-10);
  }
}

TEST_CASE("tangent operator trivial cases") {
  CHECK((tangent_operator(Twist::Zero(), 0.7) - 0.7 * Mat6::Identity()).norm() ==
        doctest::Approx(0.0));
  std::mt19937_64 rng(17);
  CHECK(tangent_operator(random_twist(rng), 0.0).norm() == doctest::Approx(0.0));
}

TEST_CASE("tangent operator matches quadrature of the adjoint") {
  const Twist unit_k = make_twist(Vec3(0, 0, 1), Vec3::Zero());
  CHECK((tangent_operator(unit_k, 1.0) - oracles::quadrature_tangent(unit_k, 1.0))
            .norm() < 1e-10);
  std::mt19937_64 rng(19);
  for (int i = 0; i < 200; ++i) {
    const Twist xi = random_twist(rng, 3.0);
    const double s = 0.02 + 0.6 * (i / 200.0);
    CHECK((tangent_operator(xi, s) - oracles::quadrature_tangent(xi, s)).norm() <
          1e-10);
  }
  // tiny curvature with large translational strain stresses the coefficient
  // cancellation
  for (double k : {1e-8, 1e-5, 1e-3, 0.04, 0.06, 0.3}) {
    const Twist xi = make_twist(Vec3(0, k, 0), Vec3(0.3, -2.0, 1.0));
    CHECK((tangent_operator(xi, 1.0) - oracles::quadrature_tangent(xi, 1.0))
              .norm() < 1e-11);
  }
}

TEST_CASE("tangent operator is continuous across its series crossover") {
  const Twist a = make_twist(Vec3(0.05 * (1 + 1e-13), 0, 0), Vec3(0, 1, 2));
  const Twist b = make_twist(Vec3(0.05 * (1 - 1e-13), 0, 0), Vec3(0, 1, 2));
  CHECK((tangent_operator(a, 1.0) - tangent_operator(b, 1.0)).norm() < 1e-12);
}

TEST_CASE("tangent operator composition rule") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    const Twist xi = random_twist(rng, 3.0);
    const double s1 = 0.35, s2 = 0.2;
    const Mat6 lhs = tangent_operator(xi, s1 + s2);
    const Mat6 rhs = tangent_operator(xi, s1) +
                     adjoint(exp_se3(xi, s1)) * tangent_operator(xi, s2);
    CHECK((lhs - rhs).norm() < 1e-9);
  }
}

TEST_CASE("small adjoint basics") {
  CHECK(small_adjoint(Twist::Zero()).norm() == doctest::Approx(0.0));
  std::mt19937_64 rng(29);
  for (int i = 0; i < 100; ++i) {
    const Twist a = random_twist(rng), b = random_twist(rng);
    CHECK((small_adjoint(a) * b + small_adjoint(b) * a).norm() < 1e-12);
    // bilinearity
    CHECK((small_adjoint(2.0 * a + b) - 2.0 * small_adjoint(a) - small_adjoint(b))
              .norm() < 1e-12);
  }
}

TEST_CASE("d/dt Ad_H = Ad_H ad_eta via finite differences") {
  std::mt19937_64 rng(31);
  const double dt = 1e-6;
  for (int i = 0; i < 50; ++i) {
    const Pose h = random_pose(rng);
    const Twist eta = random_twist(rng);
    const Pose hp = compose(h, exp_se3(dt * eta, 1.0));
    const Pose hm = compose(h, exp_se3(-dt * eta, 1.0));
    const Mat6 fd = (adjoint(hp) - adjoint(hm)) / (2.0 * dt);
    CHECK((fd - adjoint(h) * small_adjoint(eta)).norm() < 1e-5);
  }
}

TEST_CASE("tangent operator twist-derivative matches finite differences") {
  std::mt19937_64 rng(37);
  for (int i = 0; i < 50; ++i) {
    const Twist xi = random_twist(rng, 3.0);
    const Twist dxi = random_twist(rng, 1.0);
    const double s = 0.4;
    const double h = 1e-7;
    const Mat6 fd =
        (tangent_operator(xi + h * dxi, s) - tangent_operator(xi - h * dxi, s)) /
        (2.0 * h);
    const Mat6 an = tangent_operator_dxi(xi, dxi, s);
    CHECK((fd - an).norm() < 1e-6 * std::max(1.0, an.norm()));
  }
}

TEST_CASE("cached tangent derivative series evaluates anywhere in range") {
  std::mt19937_64 rng(41);
  const Twist xi = random_twist(rng, 4.0);
  const Twist dxi = random_twist(rng, 2.0);
  const TangentDxiSeries series(xi, dxi, 0.5);
  for (double s : {0.05, 0.21, 0.37, 0.5}) {
    CHECK((series.eval(s) - tangent_operator_dxi(xi, dxi, s)).norm() < 1e-12);
  }
}

TEST_SUITE_END();
