#include "dynamics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <cmath>
#include <deque>

#include "errors.hpp"

namespace pcsrod {

namespace {

// 5-point Gauss-Legendre nodes/weights on [0, 1]
constexpr int kQuad = 5;
const double kQuadNode[kQuad] = {0.04691007703066800, 0.23076534494715845,
                                 0.5, 0.76923465505284155, 0.95308992296933200};
const double kQuadWeight[kQuad] = {0.11846344252809454, 0.23931433524968324,
                                   0.28444444444444444, 0.23931433524968324,
                                   0.11846344252809454};

struct Node {
  double x = 0.0;  // offset into the segment
  double w = 0.0;  // quadrature weight scaled by segment length
  Mat6 ad_inv;     // Ad^-1 of exp(xi, x)
  Mat6 tan;        // T(xi, x)
  Twist eta;
  Twist acc;
  Vec6 phi;        // momentum-rate density at the node
};

struct SegmentSweep {
  std::vector<Node> nodes;
  Mat6 ad_inv_full;
};

struct Sweep {
  std::vector<SegmentSweep> seg;
  Twist base_acc_eff;  // base acceleration minus the gravity twist
};

VecX masked_qdd(const RodModel& model, const VecX& qdd) {
  VecX out = qdd;
  for (int i = 0; i < model.segment_count(); ++i) {
    for (int c = 0; c < 6; ++c) {
      if (!model.segment(i).dof_mask[c]) out(model.strain_coord(i, c)) = 0.0;
    }
  }
  return out;
}

// Outward velocity/acceleration recursion evaluated at the quadrature nodes.
// Within a segment, eta(x) = Ad^-1 (eta_prev + T xidot) and
// acc(x) = Ad^-1 (acc_prev + T xiddot + dT[xidot] xidot) - ad_zeta eta(x)
// with zeta the segment's own velocity contribution. Gravity rides along as
// a constant offset injected into the base acceleration.
Sweep run_sweep(const RodModel& model, const Kinematics& kin, const VecX& qdd,
                const Vec3& gravity) {
  const RodState& state = kin.state();
  const VecX qdd_m = masked_qdd(model, qdd);
  Sweep sw;
  sw.base_acc_eff =
      Twist(qdd_m.head<6>()) -
      make_twist(Vec3::Zero(), state.base_pose.rotation.transpose() * gravity);
  sw.seg.resize(model.segment_count());

  Twist eta_prev = state.base_twist;
  Twist acc_prev = sw.base_acc_eff;
  for (int i = 0; i < model.segment_count(); ++i) {
    const double l = model.segment(i).length;
    const Twist& xi = state.strain[i];
    const Twist& rate = kin.segment_rate(i);
    const Twist xidd = qdd_m.segment<6>(6 + 6 * i);
    const Vec6 inertia = model.section_inertia(i);
    const TangentDxiSeries dtan(xi, rate, l);

    SegmentSweep& seg = sw.seg[i];
    seg.nodes.resize(kQuad);
    for (int k = 0; k < kQuad; ++k) {
      Node& nd = seg.nodes[k];
      nd.x = l * kQuadNode[k];
      nd.w = l * kQuadWeight[k];
      nd.ad_inv = adjoint_inverse(exp_se3(xi, nd.x));
      nd.tan = tangent_operator(xi, nd.x);
      const Twist zeta = nd.ad_inv * (nd.tan * rate);
      nd.eta = nd.ad_inv * (eta_prev + nd.tan * rate);
      nd.acc = nd.ad_inv * (acc_prev + nd.tan * xidd + dtan.eval(nd.x) * rate) -
               small_adjoint(zeta) * nd.eta;
      const Vec6 momentum = inertia.cwiseProduct(nd.eta);
      nd.phi = inertia.cwiseProduct(nd.acc) -
               small_adjoint(nd.eta).transpose() * momentum;
    }
    seg.ad_inv_full = adjoint_inverse(exp_se3(xi, l));
    const Mat6& tan_full = kin.segment_tangent(i);
    const Twist zeta = seg.ad_inv_full * (tan_full * rate);
    const Twist eta_end = seg.ad_inv_full * (eta_prev + tan_full * rate);
    const Twist acc_end =
        seg.ad_inv_full * (acc_prev + tan_full * xidd + dtan.eval(l) * rate) -
        small_adjoint(zeta) * eta_end;
    eta_prev = eta_end;
    acc_prev = acc_end;
  }
  return sw;
}

Vec6 base_attachment_force(const RodModel& model, const RodState& state,
                           const Sweep& sw) {
  const Mat6& mb = model.base_inertia();
  if (mb.isZero(0.0)) return Vec6::Zero();
  const Vec6 momentum = mb * state.base_twist;
  return mb * sw.base_acc_eff -
         small_adjoint(state.base_twist).transpose() * momentum;
}

// Mass matrix and zero-acceleration bias over a column subset. The node
// Jacobians are built by transporting the running boundary matrix G, keeping
// the cost linear in the node count.
void assemble_subset(const RodModel& model, const RodState& state,
                     const Vec3& gravity, const std::vector<int>& cols,
                     MatX& mass, VecX& bias) {
  const Kinematics kin(model, state);
  const Sweep sw =
      run_sweep(model, kin, VecX::Zero(model.coord_count()), gravity);
  const int ns = static_cast<int>(cols.size());
  std::vector<int> pos(model.coord_count(), -1);
  for (int c = 0; c < ns; ++c) pos[cols[c]] = c;

  mass.setZero(ns, ns);
  bias.setZero(ns);

  MatX g = MatX::Zero(6, ns);  // column blocks transported to the segment start
  for (int j = 0; j < 6; ++j) {
    if (pos[j] >= 0) g(j, pos[j]) = 1.0;
  }
  MatX jac(6, ns), mj(6, ns);
  for (int i = 0; i < model.segment_count(); ++i) {
    const Vec6 inertia = model.section_inertia(i);
    const SegmentSweep& seg = sw.seg[i];
    for (const Node& nd : seg.nodes) {
      jac.noalias() = nd.ad_inv * g;
      const Mat6 own = nd.ad_inv * nd.tan;
      for (int c = 0; c < 6; ++c) {
        const int p = pos[model.strain_coord(i, c)];
        if (p >= 0) jac.col(p) = own.col(c);
      }
      mj.noalias() = inertia.asDiagonal() * jac;
      mass.noalias() += nd.w * jac.transpose() * mj;
      bias.noalias() += nd.w * (jac.transpose() * nd.phi);
    }
    const Mat6 own_full = seg.ad_inv_full * kin.segment_tangent(i);
    g = (seg.ad_inv_full * g).eval();
    for (int c = 0; c < 6; ++c) {
      const int p = pos[model.strain_coord(i, c)];
      if (p >= 0) g.col(p) = own_full.col(c);
    }
  }

  const Vec6 fb = base_attachment_force(model, state, sw);
  const Mat6& mb = model.base_inertia();
  for (int r = 0; r < 6; ++r) {
    if (pos[r] < 0) continue;
    bias(pos[r]) += fb(r);
    for (int c = 0; c < 6; ++c) {
      if (pos[c] >= 0) mass(pos[r], pos[c]) += mb(r, c);
    }
  }
}

Vec6 wrench_in_local_frame(const Kinematics& kin, const AppliedWrench& aw) {
  if (aw.wrench.frame == WrenchFrame::Local) return aw.wrench.stacked();
  const Mat3 rt = kin.pose_at(aw.s).rotation.transpose();
  return make_twist(rt * aw.wrench.moment, rt * aw.wrench.force);
}

VecX stiffness_full(const RodModel& model, const ViscoElasticity& ve) {
  if (ve.stiffness.rows() != model.segment_count() || ve.stiffness.cols() != 3 ||
      ve.damping.rows() != model.segment_count() || ve.damping.cols() != 3) {
    throw ConfigError("viscoelasticity shape does not match the model");
  }
  if (ve.stiffness.minCoeff() < 0 || ve.damping.minCoeff() < 0) {
    throw ConfigError("viscoelastic coefficients must be nonnegative");
  }
  VecX k = VecX::Zero(model.coord_count());
  for (int i = 0; i < model.segment_count(); ++i) {
    for (int ax = 0; ax < 3; ++ax) {
      k(model.strain_coord(i, ax)) = ve.stiffness(i, ax);
    }
  }
  return k;
}

VecX damping_full(const RodModel& model, const ViscoElasticity& ve) {
  VecX d = VecX::Zero(model.coord_count());
  for (int i = 0; i < model.segment_count(); ++i) {
    for (int ax = 0; ax < 3; ++ax) {
      d(model.strain_coord(i, ax)) = ve.damping(i, ax);
    }
  }
  return d;
}

VecX strain_departure_full(const RodModel& model, const RodState& state) {
  VecX dq = VecX::Zero(model.coord_count());
  for (int i = 0; i < model.segment_count(); ++i) {
    for (int ax = 0; ax < 3; ++ax) {
      dq(model.strain_coord(i, ax)) =
          model.segment(i).rest_strain(ax) - state.strain[i](ax);
    }
  }
  return dq;
}

}  // namespace

MassBias mass_bias(const RodModel& model, const RodState& state,
                   const Vec3& gravity) {
  MassBias out;
  std::vector<int> cols(model.coord_count());
  for (int c = 0; c < model.coord_count(); ++c) cols[c] = c;
  assemble_subset(model, state, gravity, cols, out.mass, out.bias);
  return out;
}

VecX inverse_dynamics(const RodModel& model, const RodState& state,
                      const VecX& qdd, const Vec3& gravity,
                      const std::vector<AppliedWrench>& external) {
  if (qdd.size() != model.coord_count()) {
    throw DataError("inverse dynamics: wrong acceleration size");
  }
  const Kinematics kin(model, state);
  const Sweep sw = run_sweep(model, kin, qdd, gravity);

  struct LocalWrench {
    Mat6 ad_inv, tan;
    Vec6 f;
  };
  std::vector<std::vector<LocalWrench>> per_segment(model.segment_count());
  for (const AppliedWrench& aw : external) {
    const auto [i, x] = model.locate(aw.s);
    LocalWrench lw;
    lw.ad_inv = adjoint_inverse(exp_se3(state.strain[i], x));
    lw.tan = tangent_operator(state.strain[i], x);
    lw.f = wrench_in_local_frame(kin, aw);
    per_segment[i].push_back(lw);
  }

  VecX out = VecX::Zero(model.coord_count());
  Vec6 w_next = Vec6::Zero();  // outboard wrench at the next segment start
  for (int i = model.segment_count() - 1; i >= 0; --i) {
    const SegmentSweep& seg = sw.seg[i];
    Vec6 w_seg = Vec6::Zero();
    Vec6 q_i = Vec6::Zero();
    for (const Node& nd : seg.nodes) {
      const Vec6 psi = nd.w * (nd.ad_inv.transpose() * nd.phi);
      w_seg += psi;
      q_i += nd.tan.transpose() * psi;
    }
    for (const LocalWrench& lw : per_segment[i]) {
      const Vec6 psi = lw.ad_inv.transpose() * (-lw.f);
      w_seg += psi;
      q_i += lw.tan.transpose() * psi;
    }
    const Vec6 w_trans = seg.ad_inv_full.transpose() * w_next;
    q_i += kin.segment_tangent(i).transpose() * w_trans;
    out.segment<6>(6 + 6 * i) = q_i;
    w_next = w_seg + w_trans;
  }
  out.head<6>() = w_next + base_attachment_force(model, state, sw);
  return out;
}

VecX generalized_elastic_force(const RodModel& model, const ViscoElasticity& ve,
                               const RodState& state) {
  const VecX k = stiffness_full(model, ve);
  const VecX d = damping_full(model, ve);
  const VecX dq = strain_departure_full(model, state);
  const VecX qd = pack_velocity(model, state);
  VecX tau = VecX::Zero(model.coord_count());
  for (int c = 6; c < model.coord_count(); ++c) {
    tau(c) = k(c) * dq(c) - d(c) * qd(c);
  }
  return tau;
}

Twist body_acceleration_at(const RodModel& model, const RodState& state,
                           const VecX& qdd, double s) {
  const Kinematics kin(model, state);
  const VecX qdd_m = masked_qdd(model, qdd);
  const auto [target, x_target] = model.locate(s);

  Twist eta_prev = state.base_twist;
  Twist acc_prev = qdd_m.head<6>();
  for (int i = 0; i <= target; ++i) {
    const double x = i == target ? x_target : model.segment(i).length;
    const Twist& xi = state.strain[i];
    const Twist& rate = kin.segment_rate(i);
    const Twist xidd = qdd_m.segment<6>(6 + 6 * i);
    const Mat6 ad_inv = adjoint_inverse(exp_se3(xi, x));
    const Mat6 tan = tangent_operator(xi, x);
    const Twist zeta = ad_inv * (tan * rate);
    const Twist eta = ad_inv * (eta_prev + tan * rate);
    const Twist acc =
        ad_inv * (acc_prev + tan * xidd + tangent_operator_dxi(xi, rate, x) * rate) -
        small_adjoint(zeta) * eta;
    eta_prev = eta;
    acc_prev = acc;
  }
  return acc_prev;
}

std::vector<Vec6> estimate_grf(const RodModel& model, const FrameSeries& series,
                               double contact_s, const Vec3& gravity) {
  if (!series.has_strain()) throw DataError("grf: series carries no strains");
  if (!series.has_acc()) {
    throw DataError("grf: series carries no accelerations; differentiate first");
  }
  const int n = series.frame_count();
  std::vector<Vec6> out(n);
  for (int kf = 0; kf < n; ++kf) {
    const RodState st = state_at(model, series, kf);
    const VecX qdd = acceleration_at(model, series, kf);
    const VecX force = inverse_dynamics(model, st, qdd, gravity, {});
    const Kinematics kin(model, st);
    const Pose contact = kin.pose_at(contact_s);
    const Mat6 ad_rel = adjoint(between(st.base_pose, contact));
    const Eigen::JacobiSVD<Mat6> svd(ad_rel);
    const double cond =
        svd.singularValues()(0) / std::max(svd.singularValues()(5), 1e-300);
    if (!(cond < 1e8)) {
      throw NumericalError("grf: contact transport ill-conditioned");
    }
    // J0 = Ad^-1 of the base-to-contact pose, so J0^-T = Ad^T
    const Vec6 f_local = ad_rel.transpose() * force.head<6>();
    out[kf] = make_twist(contact.rotation * angular_part(f_local),
                         contact.rotation * linear_part(f_local));
  }
  return out;
}

EnergyBreakdown mechanical_energy(const RodModel& model,
                                  const ViscoElasticity& ve,
                                  const RodState& state, const Vec3& gravity) {
  const Kinematics kin(model, state);
  EnergyBreakdown e;
  for (int i = 0; i < model.segment_count(); ++i) {
    const double l = model.segment(i).length;
    const Vec6 inertia = model.section_inertia(i);
    const double rho_a = model.segment(i).linear_density;
    for (int k = 0; k < kQuad; ++k) {
      const double s = model.boundary(i) + l * kQuadNode[k];
      const double w = l * kQuadWeight[k];
      const Twist eta = kin.velocity_at(s);
      e.kinetic += 0.5 * w * eta.dot(inertia.cwiseProduct(eta));
      e.gravitational -= w * rho_a * gravity.dot(kin.pose_at(s).position);
    }
  }
  const Mat6& mb = model.base_inertia();
  if (!mb.isZero(0.0)) {
    e.kinetic += 0.5 * state.base_twist.dot(mb * state.base_twist);
    const double mass = mb(3, 3);
    if (mass > 0) {
      const Vec3 com = vee3(Mat3(mb.topRightCorner<3, 3>())) / mass;
      e.gravitational -= mass * gravity.dot(state.base_pose.position +
                                            state.base_pose.rotation * com);
    }
  }
  const VecX kdiag = stiffness_full(model, ve);
  const VecX dq = strain_departure_full(model, state);
  e.elastic = 0.5 * dq.dot(kdiag.cwiseProduct(dq));
  return e;
}

std::vector<AppliedWrench> LoadSchedule::eval(double t) const {
  if (type == Type::None || t < t_on) return {};
  double scale = 0.0;
  const double tt = t - t_on;
  auto smooth = [](double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
  };
  switch (type) {
    case Type::Constant:
      scale = ramp > 0 ? smooth(tt / ramp) : 1.0;
      break;
    case Type::HoldRelease:
      if (t >= t_release) return {};
      scale = ramp > 0 ? smooth(tt / ramp) : 1.0;
      break;
    case Type::Chirp:
      scale = std::sin(2.0 * M_PI *
                       (chirp_f0 * tt + 0.5 * (chirp_f1 - chirp_f0) * tt * tt));
      break;
    case Type::None:
      return {};
  }
  AppliedWrench aw;
  aw.s = s;
  aw.wrench = Wrench::FromStacked(scale * wrench, frame);
  return {aw};
}

bool LoadSchedule::quiescent(double t) const {
  switch (type) {
    case Type::None:
      return true;
    case Type::Constant:
    case Type::Chirp:
      return t < t_on;
    case Type::HoldRelease:
      return t < t_on || t >= t_release;
  }
  return true;
}

namespace {

struct StepResult {
  RodState state;
  VecX qdd;  // full width
};

StepResult integrate_step(const RodModel& model, const ViscoElasticity& ve,
                          const RodState& state,
                          const std::vector<AppliedWrench>& external,
                          const SimOptions& opt) {
  if (!(opt.dt > 0)) throw ConfigError("simulate: dt must be positive");
  const std::vector<int> cols = model.active_coords(opt.base_locked);
  const int ns = static_cast<int>(cols.size());
  const int nq = model.coord_count();
  const double dt = opt.dt;

  auto reduced = [&](const VecX& full) {
    VecX r(ns);
    for (int c = 0; c < ns; ++c) r(c) = full(cols[c]);
    return r;
  };
  auto applied_force = [&](const RodState& st) {
    VecX f = VecX::Zero(nq);
    if (!external.empty()) {
      const Kinematics kin(model, st);
      for (const AppliedWrench& aw : external) {
        const MatX jac = kin.jacobian_geometric(aw.s);
        f.noalias() += jac.transpose() * wrench_in_local_frame(kin, aw);
      }
    }
    return f;
  };

  const VecX kfull = stiffness_full(model, ve);
  const VecX dfull = damping_full(model, ve);

  if (opt.scheme == Integrator::Rk4) {
    // explicit oracle scheme; the base pose moves on a chart anchored at the
    // step-start pose
    struct Flat {
      VecX chi;  // base chart coords (6) then strains (6N)
      VecX vel;  // full-width generalized velocity
    };
    auto to_state = [&](const Flat& f) {
      RodState st = state;
      if (!opt.base_locked) {
        st.base_pose =
            compose(state.base_pose, exp_se3(Twist(f.chi.head<6>()), 1.0));
      }
      unpack_strain(model, VecX(f.chi.tail(nq - 6)), st);
      unpack_velocity(model, f.vel, st);
      clamp_to_mask(model, st);
      return st;
    };
    auto deriv = [&](const Flat& f, VecX* qdd_out) {
      const RodState st = to_state(f);
      MatX mass;
      VecX bias;
      assemble_subset(model, st, opt.gravity, cols, mass, bias);
      const VecX tau = generalized_elastic_force(model, ve, st);
      const VecX rhs = reduced(tau + applied_force(st)) - bias;
      Eigen::LLT<MatX> llt(mass);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("simulate: mass matrix factorization failed");
      }
      const VecX acc = llt.solve(rhs);
      VecX qdd_full = VecX::Zero(nq);
      for (int c = 0; c < ns; ++c) qdd_full(cols[c]) = acc(c);
      if (qdd_out) *qdd_out = qdd_full;
      Flat d;
      d.chi = f.vel;
      if (opt.base_locked) d.chi.head<6>().setZero();
      d.vel = qdd_full;
      return d;
    };

    Flat y;
    y.chi = VecX::Zero(nq);
    y.chi.tail(nq - 6) = pack_strain(model, state);
    y.vel = pack_velocity(model, state);
    VecX qdd0(nq);
    const Flat k1 = deriv(y, &qdd0);
    const Flat k2 = deriv(
        Flat{y.chi + 0.5 * dt * k1.chi, y.vel + 0.5 * dt * k1.vel}, nullptr);
    const Flat k3 = deriv(
        Flat{y.chi + 0.5 * dt * k2.chi, y.vel + 0.5 * dt * k2.vel}, nullptr);
    const Flat k4 =
        deriv(Flat{y.chi + dt * k3.chi, y.vel + dt * k3.vel}, nullptr);
    Flat fin;
    fin.chi = y.chi + dt / 6.0 * (k1.chi + 2.0 * k2.chi + 2.0 * k3.chi + k4.chi);
    fin.vel = y.vel + dt / 6.0 * (k1.vel + 2.0 * k2.vel + 2.0 * k3.vel + k4.vel);
    StepResult res;
    res.state = to_state(fin);
    res.qdd = qdd0;
    return res;
  }

  const VecX dq = strain_departure_full(model, state);
  const VecX v_full = pack_velocity(model, state);
  const VecX v = reduced(v_full);
  const VecX k_r = reduced(kfull);
  const VecX d_r = reduced(dfull);
  const VecX kdq = reduced(kfull.cwiseProduct(dq));

  auto write_state = [&](const VecX& dq_step, const VecX& v_new) {
    RodState out = state;
    VecX delta = VecX::Zero(nq);
    VecX vel_full = v_full;
    for (int c = 0; c < ns; ++c) {
      delta(cols[c]) = dq_step(c);
      vel_full(cols[c]) = v_new(c);
    }
    apply_increment(model, out, delta);
    unpack_velocity(model, vel_full, out);
    clamp_to_mask(model, out);
    return out;
  };
  auto solve_implicit = [&](const MatX& mass, const VecX& rhs, double h) {
    MatX lhs = mass;
    lhs.diagonal() += h * h * k_r + h * d_r;
    Eigen::LLT<MatX> llt(lhs);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("simulate: implicit system factorization failed");
    }
    return VecX(llt.solve(rhs));
  };

  MatX mass;
  VecX bias;
  assemble_subset(model, state, opt.gravity, cols, mass, bias);

  if (opt.scheme == Integrator::SemiImplicitEuler) {
    // linearly implicit Euler: strongly damped, monotone on passive systems
    const VecX f_ns = reduced(applied_force(state)) - bias;
    const VecX v_next = solve_implicit(mass, mass * v + dt * (f_ns + kdq), dt);
    StepResult res;
    res.state = write_state(dt * v_next, v_next);
    res.qdd = VecX::Zero(nq);
    for (int c = 0; c < ns; ++c) res.qdd(cols[c]) = (v_next(c) - v(c)) / dt;
    return res;
  }

  // IMEX midpoint: a stiff-safe implicit Euler half step predicts the
  // midpoint state; inertial bias and external load are evaluated there and
  // the viscoelastic force is taken at the (q,v) midpoint, which reduces to
  // the energy-conserving trapezoid on the linear part.
  const VecX f_ns0 = reduced(applied_force(state)) - bias;
  const double h = 0.5 * dt;
  const VecX v_half = solve_implicit(mass, mass * v + h * (f_ns0 + kdq), h);
  const RodState mid = write_state(h * v_half, v_half);

  MatX mass_h;
  VecX bias_h;
  assemble_subset(model, mid, opt.gravity, cols, mass_h, bias_h);
  const VecX f_ns_h = reduced(applied_force(mid)) - bias_h;

  MatX lhs = mass_h;
  lhs.diagonal() += 0.25 * dt * dt * k_r + 0.5 * dt * d_r;
  const VecX rhs = mass_h * v + dt * (f_ns_h + kdq) -
                   0.25 * dt * dt * k_r.cwiseProduct(v) -
                   0.5 * dt * d_r.cwiseProduct(v);
  Eigen::LLT<MatX> llt(lhs);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("simulate: implicit system factorization failed");
  }
  const VecX v_next = llt.solve(rhs);

  StepResult res;
  res.state = write_state(0.5 * dt * (v + v_next), v_next);
  res.qdd = VecX::Zero(nq);
  for (int c = 0; c < ns; ++c) res.qdd(cols[c]) = (v_next(c) - v(c)) / dt;
  return res;
}

// Instantaneous generalized acceleration at the current state, used for
// recorded frames (the step schemes only expose a step-average rate).
VecX instantaneous_qdd(const RodModel& model, const ViscoElasticity& ve,
                       const RodState& state,
                       const std::vector<AppliedWrench>& external,
                       const SimOptions& opt) {
  const std::vector<int> cols = model.active_coords(opt.base_locked);
  const int ns = static_cast<int>(cols.size());
  MatX mass;
  VecX bias;
  assemble_subset(model, state, opt.gravity, cols, mass, bias);
  VecX rhs_full = generalized_elastic_force(model, ve, state);
  if (!external.empty()) {
    const Kinematics kin(model, state);
    for (const AppliedWrench& aw : external) {
      const MatX jac = kin.jacobian_geometric(aw.s);
      rhs_full.noalias() += jac.transpose() * wrench_in_local_frame(kin, aw);
    }
  }
  VecX rhs(ns);
  for (int c = 0; c < ns; ++c) rhs(c) = rhs_full(cols[c]);
  rhs -= bias;
  Eigen::LLT<MatX> llt(mass);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("simulate: mass matrix factorization failed");
  }
  const VecX acc = llt.solve(rhs);
  VecX qdd = VecX::Zero(model.coord_count());
  for (int c = 0; c < ns; ++c) qdd(cols[c]) = acc(c);
  return qdd;
}

bool state_finite(const RodModel& model, const RodState& state) {
  if (!state.base_pose.rotation.allFinite() ||
      !state.base_pose.position.allFinite() || !state.base_twist.allFinite()) {
    return false;
  }
  for (int i = 0; i < model.segment_count(); ++i) {
    if (!state.strain[i].allFinite() || !state.strain_rate[i].allFinite()) {
      return false;
    }
  }
  return true;
}

}  // namespace

RodState forward_dynamics_step(const RodModel& model, const ViscoElasticity& ve,
                               const RodState& state,
                               const std::vector<AppliedWrench>& external,
                               const SimOptions& options) {
  return integrate_step(model, ve, state, external, options).state;
}

RodState solve_static_equilibrium(const RodModel& model,
                                  const ViscoElasticity& ve,
                                  const std::vector<AppliedWrench>& external,
                                  const Vec3& gravity, double tol,
                                  int max_iters) {
  const std::vector<int> cols = model.active_coords(true);
  const int ns = static_cast<int>(cols.size());
  if (ns == 0) return rest_state(model);

  auto residual = [&](const RodState& st) {
    VecX r_full = generalized_elastic_force(model, ve, st) -
                  inverse_dynamics(model, st, VecX::Zero(model.coord_count()),
                                   gravity, external);
    VecX r(ns);
    for (int c = 0; c < ns; ++c) r(c) = r_full(cols[c]);
    return r;
  };

  RodState state = rest_state(model);
  VecX r = residual(state);
  double lambda = 1e-6;
  for (int it = 0; it < max_iters; ++it) {
    if (r.norm() < tol) break;
    // finite-difference Jacobian of the residual over active coordinates
    MatX jac(ns, ns);
    const double h = 1e-7;
    for (int c = 0; c < ns; ++c) {
      VecX delta = VecX::Zero(model.coord_count());
      delta(cols[c]) = h;
      RodState plus = state, minus = state;
      apply_increment(model, plus, delta);
      apply_increment(model, minus, -delta);
      jac.col(c) = (residual(plus) - residual(minus)) / (2.0 * h);
    }
    for (int retry = 0; retry < 60; ++retry) {
      MatX damped = jac.transpose() * jac;
      damped.diagonal() += lambda * damped.diagonal().cwiseAbs().cwiseMax(1e-30);
      const VecX step = damped.ldlt().solve(-jac.transpose() * r);
      RodState cand = state;
      VecX delta = VecX::Zero(model.coord_count());
      for (int c = 0; c < ns; ++c) delta(cols[c]) = step(c);
      apply_increment(model, cand, delta);
      const VecX r_cand = residual(cand);
      if (r_cand.norm() < r.norm()) {
        state = std::move(cand);
        r = r_cand;
        lambda = std::max(lambda / 10.0, 1e-12);
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e12) {
        throw NumericalError("static equilibrium: Newton iteration stalled");
      }
    }
  }
  if (!(r.norm() < tol * 1e3)) {
    throw NumericalError("static equilibrium: did not converge");
  }
  return state;
}

void simulate(const RodModel& model, const ViscoElasticity& ve,
              const RodState& initial, const LoadSchedule& schedule,
              double duration, const SimOptions& options, int decimation,
              const SimSink& sink) {
  if (!(duration >= 0)) throw ConfigError("simulate: negative duration");
  if (decimation < 1) decimation = 1;
  const int steps = static_cast<int>(std::llround(duration / options.dt));

  RodState state = initial;
  clamp_to_mask(model, state);

  std::deque<std::pair<double, double>> window;  // (t, kinetic + elastic)
  for (int n = 0; n <= steps; ++n) {
    const double t = n * options.dt;
    if (!state_finite(model, state)) {
      throw InstabilityError("simulate: state diverged to non-finite values");
    }
    const std::vector<AppliedWrench> external = schedule.eval(t);
    const bool record = (n % decimation == 0) || n == steps;
    const bool quiet = schedule.quiescent(t);

    EnergyBreakdown energy;
    if (record || (options.check_stability && quiet)) {
      energy = mechanical_energy(model, ve, state, options.gravity);
      if (!std::isfinite(energy.mechanical())) {
        throw InstabilityError("simulate: energy diverged to non-finite values");
      }
    }
    if (options.check_stability) {
      if (!quiet) {
        window.clear();
      } else {
        window.emplace_back(t, energy.mechanical());
        while (window.size() > 1 && window.front().first < t - 1.0) {
          window.pop_front();
        }
        if (t - window.front().first >= 1.0 - 0.5 * options.dt &&
            energy.mechanical() > 10.0 * window.front().second + 1e-12) {
          throw InstabilityError("simulate: energy grew more than 10x over 1 s");
        }
      }
    }

    if (record && sink) {
      SimRecord rec;
      rec.t = t;
      rec.state = state;
      rec.qdd = instantaneous_qdd(model, ve, state, external, options);
      rec.applied =
          external.empty() ? Vec6::Zero() : external[0].wrench.stacked();
      rec.energy = energy;
      sink(rec);
    }
    if (n < steps) {
      try {
        state = integrate_step(model, ve, state, external, options).state;
      } catch (const InvalidArgumentError&) {
        // a non-finite evaluation mid-step is a numerical explosion here
        throw InstabilityError("simulate: step diverged to non-finite values");
      }
    }
  }
}

}  // namespace pcsrod
