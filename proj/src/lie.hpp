#pragma once

#include <Eigen/Dense>
#include <vector>

namespace pcsrod {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// A 6-vector twist is ordered (angular, linear). The same block order is used
// by every 6x6 operator in this library. Whether a twist is a strain (rad/m,
// dimensionless) or a velocity (rad/s, m/s) is carried by context.
using Twist = Vec6;

inline Vec3 angular_part(const Twist& t) { return t.head<3>(); }
inline Vec3 linear_part(const Twist& t) { return t.tail<3>(); }
inline Twist make_twist(const Vec3& angular, const Vec3& linear) {
  Twist t;
  t << angular, linear;
  return t;
}

// Rigid transform: x_world = R * x_local + p.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();

  static Pose Identity() { return {}; }
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& a);
// Relative pose a^-1 * b without forming the inverse.
Pose between(const Pose& a, const Pose& b);

Mat3 hat3(const Vec3& w);
Vec3 vee3(const Mat3& m);

// Closed-form exponential of arclen * [xi x] on SE(3). Uses a 2nd-order
// Taylor branch when ||k|| * arclen < 1e-6.
Pose exp_se3(const Twist& xi, double arclen);

// Inverse of exp_se3 with arclen = 1; rotation angle must be < pi.
Twist log_se3(const Pose& h);

// Adjoint of SE(3): [[R, 0], [ [p x] R, R ]].
Mat6 adjoint(const Pose& h);
Mat6 adjoint_inverse(const Pose& h);

// se(3) adjoint ad_xi = [[k x, 0], [u x, k x]]; ad_xi eta = -ad_eta xi.
Mat6 small_adjoint(const Twist& xi);

// Tangent operator of the exponential map:
//   T(xi, s) = integral_0^s Ad_{exp(u [xi x])} du.
// Evaluated in closed form as s * (I + b1 A + b2 A^2 + b3 A^3 + b4 A^4) with
// A = ad_{s xi} and trigonometric coefficients of theta = s ||k||; a Taylor
// branch covers theta < 1e-6. Satisfies T(xi, s1+s2) =
// T(xi, s1) + Ad_{exp(xi, s1)} T(xi, s2).
Mat6 tangent_operator(const Twist& xi, double arclen);

// Directional derivative of the tangent operator with respect to the twist:
//   d/de T(xi + e*dxi, s) at e = 0,
// evaluated by the commutator power series (converges factorially).
Mat6 tangent_operator_dxi(const Twist& xi, const Twist& dxi, double arclen);

// Same derivative with the s-independent series coefficients cached, for
// evaluation at several abscissae within one segment.
class TangentDxiSeries {
 public:
  TangentDxiSeries(const Twist& xi, const Twist& dxi, double max_arclen);
  Mat6 eval(double arclen) const;

 private:
  std::vector<Mat6> coeff_;  // coeff_[n] multiplies s^(n+2) / (n+2)!
};

}  // namespace pcsrod
