#include <doctest.h>

#include <random>

#include "errors.hpp"
#include "oracles.hpp"
#include "rod_model.hpp"
#include "test_fixtures.hpp"

using namespace pcsrod;

TEST_SUITE_BEGIN("rodmodel");

TEST_CASE("model validation") {
  auto segs = testing::blade_segments();
  RodMaterial mat{61.6e9, 0.36};
  CHECK_NOTHROW(RodModel(segs, mat));
  auto bad = segs;
  bad[2].length = 0.0;
  CHECK_THROWS_AS(RodModel(bad, mat), ConfigError);
  bad = segs;
  bad[0].section_area = -1.0;
  CHECK_THROWS_AS(RodModel(bad, mat), ConfigError);
}

TEST_CASE("boundaries and locate") {
  const RodModel model = testing::blade_model();
  CHECK(model.boundary(0) == 0.0);
  CHECK(model.total_length() == doctest::Approx(0.45));
  auto [i0, x0] = model.locate(0.0);
  CHECK(i0 == 0);
  CHECK(x0 == 0.0);
  auto [iL, xL] = model.locate(model.total_length());
  CHECK(iL == model.segment_count() - 1);
  CHECK(xL == doctest::Approx(model.segment(iL).length));
  CHECK_THROWS_AS(model.locate(-0.01), DataError);
  CHECK_THROWS_AS(model.locate(model.total_length() + 0.01), DataError);
}

TEST_CASE("rest pose of a straight rod is a pure translation") {
  const RodModel model = testing::straight_model(3);
  const RodState st = rest_state(model);
  for (double s : {0.0, 0.123, 0.3}) {
    const Pose h = pose_at(model, st, s);
    CHECK((h.rotation - Mat3::Identity()).norm() < 1e-12);
    CHECK((h.position - Vec3(0, 0, s)).norm() < 1e-12);
  }
}

TEST_CASE("quarter-turn single segment matches RK4") {
  SegmentSpec seg;
  seg.length = 0.5;
  seg.second_moments = Vec3(1e-8, 1e-8, 2e-8);
  seg.section_area = 1e-4;
  seg.linear_density = 0.15;
  seg.dof_mask = {true, true, true, false, false, false};
  const RodModel model({seg}, RodMaterial{1e9, 0.3});
  RodState st = rest_state(model);
  st.strain[0](1) = M_PI / (2.0 * seg.length);  // ky
  const Pose tip = pose_at(model, st, seg.length);
  const Pose ref = oracles::integrate_exp(st.strain[0], seg.length);
  CHECK((tip.rotation - ref.rotation).norm() < 1e-8);
  CHECK((tip.position - ref.position).norm() < 1e-8);
  // 90 degrees about y: local z maps to world x
  CHECK((tip.rotation * Vec3(0, 0, 1) - Vec3(1, 0, 0)).norm() < 1e-9);
}

TEST_CASE("pose is continuous across segment boundaries") {
  const RodModel model = testing::blade_model();
  std::mt19937_64 rng(2);
  const RodState st = oracles::random_state(model, rng);
  for (int i = 1; i < model.segment_count(); ++i) {
    const double b = model.boundary(i);
    const Pose lo = pose_at(model, st, b - 1e-13);
    const Pose hi = pose_at(model, st, b + 1e-13);
    CHECK((lo.rotation - hi.rotation).norm() < 1e-11);
    CHECK((lo.position - hi.position).norm() < 1e-11);
  }
}

TEST_CASE("velocity: zero rates give zero twist, base twist transports rigidly") {
  const RodModel model = testing::blade_model();
  std::mt19937_64 rng(4);
  RodState st = oracles::random_state(model, rng, 3.0, 0.0, false);
  st.base_twist.setZero();
  CHECK(velocity_at(model, st, 0.31).norm() < 1e-14);

  st.base_twist = make_twist(Vec3(0.2, -0.1, 0.4), Vec3(1, 2, -0.5));
  const double s = 0.27;
  const Kinematics kin(model, st);
  const Twist v = kin.velocity_at(s);
  const Twist expected =
      adjoint_inverse(between(st.base_pose, kin.pose_at(s))) * st.base_twist;
  CHECK((v - expected).norm() < 1e-12);
}

TEST_CASE("velocity matches finite differences of pose") {
  const RodModel model = testing::blade_model();
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const RodState st = oracles::random_state(model, rng, 3.0, 1.0, true);
    const double s = 0.45 * (trial + 0.5) / 20.0;
    const double dt = 1e-6;
    RodState fwd = st, bwd = st;
    const VecX rates = pack_velocity(model, st);
    apply_increment(model, fwd, dt * rates);
    // base retraction in apply_increment is exp(dt*eta), consistent with a
    // body-twist step
    apply_increment(model, bwd, -dt * rates);
    const Pose hs = pose_at(model, st, s);
    const Twist fd = (log_se3(between(pose_at(model, bwd, s), pose_at(model, fwd, s)))) /
                     (2.0 * dt);
    const Twist v = velocity_at(model, st, s);
    CHECK((fd - v).norm() < 1e-4 * std::max(1.0, v.norm()));
    (void)hs;
  }
}

TEST_CASE("jacobian columns vanish for outboard segments") {
  const RodModel model = testing::blade_model();
  std::mt19937_64 rng(8);
  const RodState st = oracles::random_state(model, rng);
  const double s = 0.5 * model.boundary(1);  // inside segment 0
  const MatX jac = jacobian_at(model, st, s);
  for (int j = 1; j < model.segment_count(); ++j) {
    CHECK(jac.middleCols<6>(6 + 6 * j).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("straight rod at rest: base block is the rigid transport adjoint") {
  const RodModel model = testing::straight_model(4);
  const RodState st = rest_state(model);
  const double tip = model.total_length();
  const MatX jac = jacobian_at(model, st, tip);
  Pose offset;
  offset.position = Vec3(0, 0, tip);
  CHECK((jac.leftCols<6>() - adjoint_inverse(offset)).norm() < 1e-12);
}

TEST_CASE("J qdot equals velocity for random states") {
  const RodModel model = testing::blade_model();
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const RodState st = oracles::random_state(model, rng, 3.0, 1.5, true);
    const double s = model.total_length() * (0.997 * trial / 100.0 + 0.001);
    const Kinematics kin(model, st);
    const VecX qd = pack_velocity(model, st);
    const Twist lhs = kin.jacobian_at(s) * qd;
    const Twist rhs = kin.velocity_at(s);
    CHECK((lhs - rhs).norm() < 1e-10 * std::max(1.0, rhs.norm()));
  }
}

TEST_CASE("jacobian matches finite differences") {
  const RodModel model = testing::blade_model();
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const RodState st = oracles::random_state(model, rng, 2.0, 0.0, true);
    const double s = model.total_length() * (trial + 0.5) / 10.0;
    const MatX jac = jacobian_at(model, st, s);
    const MatX ref = oracles::fd_jacobian_at(model, st, s);
    for (int c : model.active_coords(false)) {
      CHECK((jac.col(c) - ref.col(c)).norm() <
            1e-5 * std::max(1.0, ref.col(c).norm()));
    }
  }
}

TEST_CASE("marker position composes pose and offset") {
  const RodModel model = testing::blade_model();
  std::mt19937_64 rng(14);
  const RodState st = oracles::random_state(model, rng);
  MarkerAttachment at{0.2, Vec3(0.01, -0.02, 0.005), "m"};
  const Pose h = pose_at(model, st, at.s);
  CHECK((marker_position(model, st, at) - (h.position + h.rotation * at.offset))
            .norm() < 1e-12);
  at.offset.setZero();
  CHECK((marker_position(model, st, at) - h.position).norm() < 1e-12);
}

TEST_CASE("marker jacobian matches finite differences and masking") {
  const RodModel model = testing::blade_model();
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const RodState st = oracles::random_state(model, rng, 2.0, 0.0, true);
    const MarkerAttachment at{0.45 * (trial + 0.5) / 10.0, Vec3(0.0, 0.015, 0.01),
                              "m"};
    const MatX jac = marker_jacobian(model, st, at);
    const MatX ref = oracles::fd_marker_jacobian(model, st, at);
    for (int c : model.active_coords(false)) {
      CHECK((jac.col(c) - ref.col(c)).norm() <
            1e-5 * std::max(1.0, ref.col(c).norm()));
    }
    // masked columns are zero
    for (int i = 0; i < model.segment_count(); ++i) {
      for (int c = 0; c < 6; ++c) {
        if (!model.segment(i).dof_mask[c]) {
          CHECK(jac.col(model.strain_coord(i, c)).norm() == doctest::Approx(0.0));
        }
      }
    }
  }
}

TEST_CASE("rigid segments contribute no active coordinates") {
  const RodModel model = testing::blade_model();
  for (const auto& [seg, axis] : model.active_angular_coords()) {
    CHECK(seg < 5);  // segments 5 and 6 (0-based) are rigid
    (void)axis;
  }
  CHECK(model.active_strain_coords().size() == 15);
}

TEST_SUITE_END();
