#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Dense>

namespace m2m {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

/// A point expressed in the second camera frame as p maps to R p + t in the
/// first camera frame. The translation is a direction (unit norm).
struct RelativePose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::UnitZ();

  bool is_valid(double tol = 1e-9) const;
};

/// Dimension-reduced pose coordinates. `v1` and `v2` are rotation vectors
/// restricted to the x-y plane (disk of radius pi), `phi` is the common
/// rotation about the z axis applied to the first camera.
struct PoseParams {
  double phi = 0.0;
  Vec2 v1 = Vec2::Zero();
  Vec2 v2 = Vec2::Zero();

  bool in_domain(double tol = 1e-12) const;
};

/// Polar coordinates of a unit vector about the z axis.
struct Polar {
  double theta = 0.0;    // [0, pi]
  double azimuth = 0.0;  // [0, 2 pi)
};

struct LogResult {
  Vec3 v = Vec3::Zero();
  bool boundary = false;  // rotation angle numerically at pi; axis sign arbitrary
};

struct ParamsResult {
  PoseParams params;
  bool boundary = false;  // t = -e3 or |v2| = pi; reconstruction may not be unique
};

/// World frames of the two cameras for a parameter triple: the first camera
/// sits at the origin with orientation R1, the second at e3 with R2.
struct CameraFrames {
  Mat3 R1 = Mat3::Identity();
  Mat3 R2 = Mat3::Identity();
};

/// Closed arc of feasible phi, lo <= hi, both inside [0, 2 pi].
struct Arc {
  double lo = 0.0;
  double hi = 0.0;
};

/// Zero, one or two arcs; a wrapping arc is split at 0 / 2 pi.
struct ArcSet {
  std::array<Arc, 2> arcs{};
  std::size_t count = 0;

  bool empty() const { return count == 0; }
  bool full_circle() const { return count == 1 && arcs[0].lo <= 0.0 && arcs[0].hi >= kTwoPi; }
  const Arc* begin() const { return arcs.data(); }
  const Arc* end() const { return arcs.data() + count; }
};

Mat3 skew(const Vec3& v);
Mat3 exp_so3(const Vec3& v);
LogResult log_so3(const Mat3& R);
Mat3 rot_z(double angle);
inline Vec3 planar(const Vec2& v) { return Vec3(v.x(), v.y(), 0.0); }

/// Wraps an angle into [0, 2 pi).
double wrap_two_pi(double angle);
/// Absolute circular difference in [0, pi].
double circular_distance(double a, double b);

/// Angle between two (not necessarily unit) vectors, in [0, pi].
double vector_angle(const Vec3& a, const Vec3& b);
/// Geodesic distance acos((tr(A^T B) - 1) / 2) in [0, pi].
double rotation_distance(const Mat3& a, const Mat3& b);

CameraFrames frames_from_params(const PoseParams& params);
RelativePose params_to_pose(const PoseParams& params);
ParamsResult pose_to_params(const RelativePose& pose);

/// Frames with phi = 0 for a pose; any common z rotation gives the same pose.
CameraFrames canonical_frames(const RelativePose& pose);

Polar polar(const Vec3& u);
std::array<Polar, 2> polar_coords(const Mat3& R1, const Mat3& R2, const Vec3& x, const Vec3& y);

/// Half-width on |phi1 - phi2| under which an association is consistent at
/// threshold `epsilon`; returns pi whenever the closed form is undefined.
double omega(double epsilon, double theta1, double theta2);

/// Two-condition test theta1 - theta2 <= 2 eps and |phi1 - phi2| <= omega.
bool feasibility_test(double epsilon, const Polar& a, const Polar& b);

/// min over p of max(angle(x, p), angle(R y, p - t)), evaluated in the
/// rotated frames where the baseline is e3.
double angular_residual(const Polar& a, const Polar& b, double tol = 1e-10);
double angular_residual(const RelativePose& pose, const Vec3& x, const Vec3& y,
                        double tol = 1e-10);

/// Arcs of phi for which the association is feasible given polar coordinates
/// of x under Exp(v1) (phi = 0) and of y under Exp(v2).
/// Arc center +/- half_width on the circle, split at 0 / 2 pi; a half width
/// of pi or more gives the full circle.
ArcSet arcs_around(double center, double half_width);

ArcSet feasible_phi_arcs(const Polar& left_base, const Polar& right, double epsilon);
ArcSet feasible_phi_interval(const Vec2& v1, const Vec2& v2, const Vec3& x, const Vec3& y,
                             double epsilon);

}  // namespace m2m
