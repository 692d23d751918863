#include "rayzer/geometry.hpp"

#include <cmath>

namespace rayzer::geom {

bool Rotation::is_valid(double tol) const {
  Mat3 e = m.transpose() * m - Mat3::Identity();
  if (e.cwiseAbs().maxCoeff() > tol) return false;
  return std::fabs(m.determinant() - 1.0) <= tol;
}

bool CameraPose::is_identity(double tol) const {
  return (rot.m - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         t.cwiseAbs().maxCoeff() <= tol;
}

Rotation rotation_from_6d(const std::array<double, 6>& r6) {
  Vec3 a1(r6[0], r6[1], r6[2]);
  Vec3 a2(r6[3], r6[4], r6[5]);
  double n1 = a1.norm();
  if (n1 <= 1e-9) {
    throw DegenerateRotationInput("rotation_from_6d: first 3-vector is (near) zero");
  }
  Vec3 b1 = a1 / n1;
  Vec3 r = a2 - b1.dot(a2) * b1;
  double nr = r.norm();
  if (nr <= 1e-9 * std::max(1.0, a2.norm())) {
    throw DegenerateRotationInput(
        "rotation_from_6d: second 3-vector is parallel to the first");
  }
  Vec3 b2 = r / nr;
  Vec3 b3 = b1.cross(b2);
  Rotation out;
  out.m.col(0) = b1;
  out.m.col(1) = b2;
  out.m.col(2) = b3;
  return out;
}

std::array<double, 6> rotation_to_6d(const Rotation& r) {
  return {r.m(0, 0), r.m(1, 0), r.m(2, 0), r.m(0, 1), r.m(1, 1), r.m(2, 1)};
}

CameraPose pose_params_to_pose(const PoseParams& p) {
  CameraPose out;
  out.rot = rotation_from_6d({p.v[0], p.v[1], p.v[2], p.v[3], p.v[4], p.v[5]});
  out.t = Vec3(p.v[6], p.v[7], p.v[8]);
  return out;
}

PoseParams pose_to_params(const CameraPose& p) {
  PoseParams out;
  auto r6 = rotation_to_6d(p.rot);
  for (int i = 0; i < 6; ++i) out.v[i] = r6[i];
  out.v[6] = p.t.x();
  out.v[7] = p.t.y();
  out.v[8] = p.t.z();
  return out;
}

CameraPose compose(const CameraPose& a, const CameraPose& b) {
  CameraPose out;
  out.rot.m = a.rot.m * b.rot.m;
  out.t = a.rot.m * b.t + a.t;
  return out;
}

CameraPose invert(const CameraPose& a) {
  CameraPose out;
  out.rot.m = a.rot.m.transpose();
  out.t = -(out.rot.m * a.t);
  return out;
}

Mat3 intrinsics_matrix(const Intrinsics& i) {
  Mat3 k = Mat3::Zero();
  k(0, 0) = i.focal;
  k(1, 1) = i.focal;
  k(0, 2) = i.cx();
  k(1, 2) = i.cy();
  k(2, 2) = 1.0;
  return k;
}

RayMap pluecker_rays(const CameraPose& pose, const Intrinsics& intr) {
  RayMap map;
  map.height = intr.height;
  map.width = intr.width;
  map.rays.resize(size_t(intr.height) * intr.width);
  const double inv_f = 1.0 / intr.focal;
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      Vec3 d_cam((u + 0.5 - intr.cx()) * inv_f, (v + 0.5 - intr.cy()) * inv_f, 1.0);
      Vec3 d = (pose.rot.m * d_cam).normalized();
      map.at(v, u) = Ray{d, pose.t.cross(d)};
    }
  }
  return map;
}

namespace {

Eigen::Quaterniond quat_of(const Rotation& r) {
  Eigen::Quaterniond q(r.m);
  q.normalize();
  return q;
}

}  // namespace

CameraPose slerp_pose(const CameraPose& p0, const CameraPose& p1, double t,
                      double orbit_radius) {
  if (t == 0.0) return p0;
  if (t == 1.0) return p1;

  Eigen::Quaterniond q0 = quat_of(p0.rot);
  Eigen::Quaterniond q1 = quat_of(p1.rot);
  double dot = q0.dot(q1);
  if (std::fabs(dot) < 1e-9) {
    throw AntipodalRotations("slerp_pose: rotations are antipodal, arc is ambiguous");
  }
  if (dot < 0.0) {  // shorter arc
    q1.coeffs() = -q1.coeffs();
    dot = -dot;
  }
  dot = std::min(dot, 1.0);

  Eigen::Quaterniond q;
  double theta = std::acos(dot);
  if (theta < 1e-8) {  // nearly identical: nlerp is exact enough
    q.coeffs() = (1.0 - t) * q0.coeffs() + t * q1.coeffs();
  } else {
    double s = std::sin(theta);
    q.coeffs() = (std::sin((1.0 - t) * theta) / s) * q0.coeffs() +
                 (std::sin(t * theta) / s) * q1.coeffs();
  }
  q.normalize();

  CameraPose out;
  out.rot.m = q.toRotationMatrix();
  // Look-at-origin: the optical axis (third rotation column) points from the
  // center toward the origin, so center = -radius * R[:,2].
  out.t = -orbit_radius * out.rot.m.col(2);
  return out;
}

double rotation_geodesic_deg(const Rotation& a, const Rotation& b) {
  double tr = (a.m.transpose() * b.m).trace();
  double c = std::clamp((tr - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

}  // namespace rayzer::geom
