#include "lie.hpp"

#include <cmath>

#include "errors.hpp"

namespace pcsrod {

namespace {
constexpr double kSmallAngle = 1e-6;  // branch threshold on ||k|| * arclen
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.position = a.rotation * b.position + a.position;
  return out;
}

Pose inverse(const Pose& a) {
  Pose out;
  out.rotation = a.rotation.transpose();
  out.position = -(out.rotation * a.position);
  return out;
}

Pose between(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation.transpose() * b.rotation;
  out.position = a.rotation.transpose() * (b.position - a.position);
  return out;
}

Mat3 hat3(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

Vec3 vee3(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

Pose exp_se3(const Twist& xi, double arclen) {
  if (!xi.allFinite() || !std::isfinite(arclen)) {
    throw InvalidArgumentError("exp_se3: non-finite input");
  }
  if (arclen < 0) {
    throw InvalidArgumentError("exp_se3: negative arclength");
  }
  const Vec3 w = arclen * angular_part(xi);
  const Vec3 v = arclen * linear_part(xi);
  const double theta = w.norm();
  const Mat3 wx = hat3(w);
  const Mat3 wx2 = wx * wx;

  double a, b, c;  // R = I + a wx + b wx^2, V = I + b wx + c wx^2
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
    c = 1.0 / 6.0 - t2 / 120.0;
  } else {
    a = std::sin(theta) / theta;
    const double sh = std::sin(0.5 * theta) / theta;  // stable (1-cos)/theta^2
    b = 2.0 * sh * sh;
    c = (theta - std::sin(theta)) / (theta * theta * theta);
  }

  Pose out;
  out.rotation = Mat3::Identity() + a * wx + b * wx2;
  out.position = v + b * (wx * v) + c * (wx2 * v);
  return out;
}

Twist log_se3(const Pose& h) {
  const Mat3& r = h.rotation;
  const double cos_theta = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(cos_theta);

  Vec3 w;
  if (theta < 1e-5) {
    const double t2 = theta * theta;
    w = (0.5 + t2 / 12.0 + 7.0 * t2 * t2 / 720.0) * vee3(r - r.transpose());
  } else if (theta < M_PI - 1e-4) {
    w = theta / (2.0 * std::sin(theta)) * vee3(r - r.transpose());
  } else {
    // Near pi the antisymmetric part degenerates; recover the axis from the
    // symmetric part and fix signs with the off-diagonal residue.
    const Mat3 s = (r + Mat3::Identity()) / 2.0;
    int k;
    s.diagonal().maxCoeff(&k);
    Vec3 axis = s.col(k) / std::sqrt(std::max(s(k, k), 1e-300));
    axis.normalize();
    const Vec3 anti = vee3(r - r.transpose());
    if (axis.dot(anti) < 0) axis = -axis;
    w = theta * axis;
  }

  const Mat3 wx = hat3(w);
  const Mat3 wx2 = wx * wx;
  double cinv;  // V^-1 = I - wx/2 + cinv wx^2
  if (theta < 1e-5) {
    cinv = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    const double a = std::sin(theta) / theta;
    const double b = (1.0 - std::cos(theta)) / (theta * theta);
    cinv = (1.0 - a / (2.0 * b)) / (theta * theta);
  }
  const Vec3 u = h.position - 0.5 * (wx * h.position) + cinv * (wx2 * h.position);
  return make_twist(w, u);
}

Mat6 adjoint(const Pose& h) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = h.rotation;
  ad.bottomRightCorner<3, 3>() = h.rotation;
  ad.bottomLeftCorner<3, 3>() = hat3(h.position) * h.rotation;
  return ad;
}

Mat6 adjoint_inverse(const Pose& h) {
  Mat6 ad = Mat6::Zero();
  const Mat3 rt = h.rotation.transpose();
  ad.topLeftCorner<3, 3>() = rt;
  ad.bottomRightCorner<3, 3>() = rt;
  ad.bottomLeftCorner<3, 3>() = -rt * hat3(h.position);
  return ad;
}

Mat6 small_adjoint(const Twist& xi) {
  Mat6 ad = Mat6::Zero();
  const Mat3 kx = hat3(angular_part(xi));
  ad.topLeftCorner<3, 3>() = kx;
  ad.bottomRightCorner<3, 3>() = kx;
  ad.bottomLeftCorner<3, 3>() = hat3(linear_part(xi));
  return ad;
}

Mat6 tangent_operator(const Twist& xi, double arclen) {
  if (!xi.allFinite() || !std::isfinite(arclen) || arclen < 0) {
    throw InvalidArgumentError("tangent_operator: invalid input");
  }
  const Mat6 a = arclen * small_adjoint(xi);
  const Mat6 a2 = a * a;
  const double theta = arclen * angular_part(xi).norm();

  // Coefficient numerators cancel to O(theta^2..theta^5); below the crossover
  // the Taylor forms are exact to machine precision, above it the half-angle
  // identities keep the cosine terms stable.
  double b1, b2, b3, b4;
  if (theta < 0.05) {
    const double t2 = theta * theta;
    const double t4 = t2 * t2;
    b1 = 0.5 - t4 / 720.0 + t4 * t2 / 20160.0;
    b2 = 1.0 / 6.0 - t4 / 5040.0 + t4 * t2 / 181440.0;
    b3 = 1.0 / 24.0 - t2 / 360.0 + t4 / 13440.0 - t4 * t2 / 907200.0;
    b4 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0;
  } else {
    const double st = std::sin(theta);
    const double ct = std::cos(theta);
    const double t2 = theta * theta;
    const double sh = std::sin(0.5 * theta);
    const double one_m_cos = 2.0 * sh * sh;  // 1 - cos(theta), no cancellation
    b1 = (4.0 * one_m_cos - theta * st) / (2.0 * t2);
    b2 = (4.0 * theta - 5.0 * st + theta * ct) / (2.0 * t2 * theta);
    b3 = (2.0 * one_m_cos - theta * st) / (2.0 * t2 * t2);
    b4 = (2.0 * theta - 3.0 * st + theta * ct) / (2.0 * t2 * t2 * theta);
  }

  return arclen * (Mat6::Identity() + b1 * a + b2 * a2 + b3 * (a * a2) + b4 * (a2 * a2));
}

TangentDxiSeries::TangentDxiSeries(const Twist& xi, const Twist& dxi, double max_arclen) {
  const Mat6 a = small_adjoint(xi);
  const Mat6 b = small_adjoint(dxi);
  // T(xi, s) = sum_n s^(n+1)/(n+1)! A^n; differentiating A^n in direction B
  // gives C_n = A C_{n-1} + B A^(n-1), C_1 = B.
  Mat6 c = b;
  Mat6 apow = Mat6::Identity();  // A^(n-1)
  const double anorm = a.norm();
  double factorial = 2.0;  // (n+1)! for n = 1
  double spow = max_arclen * max_arclen;
  double scale = 0.0;
  for (int n = 1; n <= 80; ++n) {
    coeff_.push_back(c);
    const double bound = spow / factorial * c.norm();
    scale = std::max(scale, bound);
    if (n >= 4 && bound < 1e-18 * scale) break;
    apow = a * apow;
    c = a * c + b * apow;
    factorial *= static_cast<double>(n + 2);
    spow *= max_arclen;
  }
}

Mat6 TangentDxiSeries::eval(double arclen) const {
  Mat6 d = Mat6::Zero();
  double factorial = 2.0;
  double spow = arclen * arclen;
  for (std::size_t m = 0; m < coeff_.size(); ++m) {
    d += spow / factorial * coeff_[m];
    factorial *= static_cast<double>(m + 3);
    spow *= arclen;
  }
  return d;
}

Mat6 tangent_operator_dxi(const Twist& xi, const Twist& dxi, double arclen) {
  return TangentDxiSeries(xi, dxi, arclen).eval(arclen);
}

}  // namespace pcsrod
