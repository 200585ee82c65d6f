#include "m2m/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace m2m {

namespace {

// Rotation vector in the x-y plane whose exponential maps t onto e3.
struct TiltResult {
  Vec2 v1 = Vec2::Zero();
  bool boundary = false;
};

TiltResult tilt_from_translation(const Vec3& t_in) {
  const Vec3 t = t_in.normalized();
  // t x e3 = (t_y, -t_x, 0)
  const Vec2 axis(t.y(), -t.x());
  const double s = axis.norm();
  TiltResult out;
  if (s < 1e-15) {
    if (t.z() < 0.0) {
      out.v1 = Vec2(kPi, 0.0);
      out.boundary = true;
    }
    return out;
  }
  const double angle = std::atan2(s, t.z());
  out.v1 = angle * axis / s;
  return out;
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

bool RelativePose::is_valid(double tol) const {
  if (!R.allFinite() || !t.allFinite()) return false;
  const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(R.determinant() - 1.0) <= tol && std::abs(t.norm() - 1.0) <= tol;
}

bool PoseParams::in_domain(double tol) const {
  return v1.norm() <= kPi + tol && v2.norm() <= kPi + tol;
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return S;
}

Mat3 exp_so3(const Vec3& v) {
  const double angle = v.norm();
  if (angle < 1e-12) return Mat3::Identity() + skew(v);
  const Vec3 a = v / angle;
  const double c = std::cos(angle);
  return c * Mat3::Identity() + (1.0 - c) * a * a.transpose() + std::sin(angle) * skew(a);
}

LogResult log_so3(const Mat3& R) {
  const Vec3 w = 0.5 * Vec3(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  const double s = w.norm();
  const double c = 0.5 * (R.trace() - 1.0);
  const double angle = std::atan2(s, c);

  LogResult out;
  if (angle < 1e-6) {
    // angle / sin(angle) = 1 + angle^2 / 6 + ...
    out.v = w * (1.0 + angle * angle / 6.0);
    return out;
  }
  if (kPi - angle > 1e-3) {
    out.v = w * (angle / s);
    return out;
  }

  // Near pi the skew part vanishes; recover the axis from a a^T.
  const Mat3 sym = 0.5 * (R + R.transpose());
  const Mat3 aat = (sym - c * Mat3::Identity()) / (1.0 - c);
  Eigen::Index k = 0;
  aat.diagonal().maxCoeff(&k);
  Vec3 a = aat.col(k) / std::sqrt(std::max(aat(k, k), 1e-300));
  a.normalize();
  if (a.dot(w) < 0.0) a = -a;
  out.v = angle * a;
  out.boundary = kPi - angle < 1e-9;
  return out;
}

Mat3 rot_z(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  Mat3 R;
  R << c, -s, 0.0,
       s, c, 0.0,
       0.0, 0.0, 1.0;
  return R;
}

double wrap_two_pi(double angle) {
  double r = std::fmod(angle, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double circular_distance(double a, double b) {
  const double d = wrap_two_pi(a - b);
  return d > kPi ? kTwoPi - d : d;
}

double vector_angle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

double rotation_distance(const Mat3& a, const Mat3& b) {
  const Mat3 rel = a.transpose() * b;
  return std::acos(clamp_unit(0.5 * rel.trace() - 0.5));
}

CameraFrames frames_from_params(const PoseParams& params) {
  CameraFrames f;
  f.R1 = rot_z(params.phi) * exp_so3(planar(params.v1));
  f.R2 = exp_so3(planar(params.v2));
  return f;
}

RelativePose params_to_pose(const PoseParams& params) {
  const CameraFrames f = frames_from_params(params);
  RelativePose pose;
  pose.R = f.R1.transpose() * f.R2;
  pose.t = f.R1.transpose() * Vec3::UnitZ();
  return pose;
}

ParamsResult pose_to_params(const RelativePose& pose) {
  ParamsResult out;
  const TiltResult tilt = tilt_from_translation(pose.t);
  out.params.v1 = tilt.v1;
  out.boundary = tilt.boundary;

  // R2 = Rz(phi) M must have a rotation vector in the x-y plane, i.e. a
  // symmetric upper-left block; the two roots differ by pi and the one with
  // the larger trace keeps |v2| < pi.
  const Mat3 M = exp_so3(planar(tilt.v1)) * pose.R;
  const double a = M(0, 1) - M(1, 0);
  const double b = M(0, 0) + M(1, 1);
  double phi = 0.0;
  if (std::hypot(a, b) > 1e-15) {
    phi = std::atan2(a, b);
  } else {
    out.boundary = true;
  }
  out.params.phi = wrap_two_pi(phi);

  const LogResult log = log_so3(rot_z(phi) * M);
  out.params.v2 = Vec2(log.v.x(), log.v.y());
  out.boundary = out.boundary || log.boundary;
  return out;
}

CameraFrames canonical_frames(const RelativePose& pose) {
  CameraFrames f;
  f.R1 = exp_so3(planar(tilt_from_translation(pose.t).v1));
  f.R2 = f.R1 * pose.R;
  return f;
}

Polar polar(const Vec3& u) {
  Polar p;
  const double rho = std::hypot(u.x(), u.y());
  p.theta = std::atan2(rho, u.z());
  p.azimuth = rho > 0.0 ? wrap_two_pi(std::atan2(u.y(), u.x())) : 0.0;
  return p;
}

std::array<Polar, 2> polar_coords(const Mat3& R1, const Mat3& R2, const Vec3& x, const Vec3& y) {
  return {polar(R1 * x), polar(R2 * y)};
}

double omega(double epsilon, double theta1, double theta2) {
  const double s1 = std::sin(theta1);
  const double s2 = std::sin(theta2);
  if (theta1 < theta2) {
    if (s1 <= 0.0 || s2 <= 0.0) return kPi;
    const double se = std::sin(epsilon);
    const double a = se / s1;
    const double b = se / s2;
    if (a > 1.0 || b > 1.0) return kPi;
    return std::min(kPi, std::asin(a) + std::asin(b));
  }
  const double d = theta1 - theta2;
  if (d > 2.0 * epsilon) return kPi;  // outside both branches; callers gate on d
  const double den = s1 * s2;
  if (den <= 0.0) return kPi;
  // acos((cos 2e - c1 c2) / (s1 s2)) written as 2 asin(sqrt(.)) with the
  // numerator factored so that it stays non-negative inside the branch.
  const double half = std::sin(epsilon + 0.5 * d) * std::sin(epsilon - 0.5 * d) / den;
  if (half > 1.0) return kPi;
  return 2.0 * std::asin(std::sqrt(std::max(half, 0.0)));
}

bool feasibility_test(double epsilon, const Polar& a, const Polar& b) {
  if (a.theta - b.theta > 2.0 * epsilon) return false;
  return circular_distance(a.azimuth, b.azimuth) <= omega(epsilon, a.theta, b.theta);
}

namespace {

// Half the angle between the two rotated bearings, from polar coordinates.
double half_angle(const Polar& a, const Polar& b) {
  const double sd = std::sin(0.5 * (a.theta - b.theta));
  const double sp = std::sin(0.5 * circular_distance(a.azimuth, b.azimuth));
  const double v = sd * sd + std::sin(a.theta) * std::sin(b.theta) * sp * sp;
  return std::asin(std::sqrt(std::clamp(v, 0.0, 1.0)));
}

}  // namespace

double angular_residual(const Polar& a, const Polar& b, double tol) {
  if (a.theta >= b.theta) return half_angle(a, b);

  // omega(., theta1, theta2) is nondecreasing on [0, theta1] and reaches pi
  // past theta1, so the residual is the smallest feasible threshold.
  const double dphi = circular_distance(a.azimuth, b.azimuth);
  double lo = 0.0;
  double hi = a.theta + 1e-8;
  if (dphi > omega(hi, a.theta, b.theta)) return half_angle(a, b);
  if (dphi <= omega(0.0, a.theta, b.theta)) return 0.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (dphi <= omega(mid, a.theta, b.theta)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

double angular_residual(const RelativePose& pose, const Vec3& x, const Vec3& y, double tol) {
  const CameraFrames f = canonical_frames(pose);
  const auto pc = polar_coords(f.R1, f.R2, x, y);
  return angular_residual(pc[0], pc[1], tol);
}

ArcSet arcs_around(double center, double half_width) {
  ArcSet out;
  if (half_width >= kPi) {
    out.arcs[0] = {0.0, kTwoPi};
    out.count = 1;
    return out;
  }
  const double lo = center - half_width;
  const double hi = center + half_width;
  if (lo < 0.0) {
    out.arcs[0] = {0.0, hi};
    out.arcs[1] = {lo + kTwoPi, kTwoPi};
    out.count = 2;
  } else if (hi > kTwoPi) {
    out.arcs[0] = {0.0, hi - kTwoPi};
    out.arcs[1] = {lo, kTwoPi};
    out.count = 2;
  } else {
    out.arcs[0] = {lo, hi};
    out.count = 1;
  }
  return out;
}

ArcSet feasible_phi_arcs(const Polar& left_base, const Polar& right, double epsilon) {
  if (left_base.theta - right.theta > 2.0 * epsilon) return {};
  const double w = omega(epsilon, left_base.theta, right.theta);
  return arcs_around(wrap_two_pi(right.azimuth - left_base.azimuth), w);
}

ArcSet feasible_phi_interval(const Vec2& v1, const Vec2& v2, const Vec3& x, const Vec3& y,
                             double epsilon) {
  const Polar a = polar(exp_so3(planar(v1)) * x);
  const Polar b = polar(exp_so3(planar(v2)) * y);
  return feasible_phi_arcs(a, b, epsilon);
}

}  // namespace m2m
