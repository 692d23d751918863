#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <vector>

namespace rayzer::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct DegenerateRotationInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct AntipodalRotations : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Rotation {
  Mat3 m = Mat3::Identity();

  // R^T R = I and det = +1, both within tol.
  bool is_valid(double tol = 1e-6) const;
};

// Camera-to-world transform; t is the camera center in world coordinates.
struct CameraPose {
  Rotation rot;
  Vec3 t = Vec3::Zero();

  bool is_identity(double tol = 0.0) const;
};

// Pinhole with a single focal length and centered principal point.
struct Intrinsics {
  double focal = 1.0;
  int width = 0;
  int height = 0;

  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }
};

struct Ray {
  Vec3 dir;     // unit
  Vec3 moment;  // camera_center x dir
};

struct RayMap {
  int height = 0;
  int width = 0;
  std::vector<Ray> rays;  // row-major

  Ray& at(int r, int c) { return rays[size_t(r) * width + c]; }
  const Ray& at(int r, int c) const { return rays[size_t(r) * width + c]; }
};

// 6D rotation parameterization + translation.
struct PoseParams {
  std::array<double, 9> v{1, 0, 0, 0, 1, 0, 0, 0, 0};
};

// Gram-Schmidt on the two 3-vectors; third column by cross product.
// Throws DegenerateRotationInput if the first vector is (near) zero or the
// second is parallel to the first within 1e-9.
Rotation rotation_from_6d(const std::array<double, 6>& r6);

// First two columns of the rotation, column-major: the 6D encoding.
std::array<double, 6> rotation_to_6d(const Rotation& r);

CameraPose pose_params_to_pose(const PoseParams& p);
PoseParams pose_to_params(const CameraPose& p);

// compose(a, b): apply b, then a. compose(a, invert(a)) == identity.
CameraPose compose(const CameraPose& a, const CameraPose& b);
CameraPose invert(const CameraPose& a);

Mat3 intrinsics_matrix(const Intrinsics& i);

// One ray per pixel center (u+0.5, v+0.5), world frame.
RayMap pluecker_rays(const CameraPose& pose, const Intrinsics& intr);

// Quaternion slerp along the shorter arc; the camera center is re-placed on
// the sphere of the given radius, consistent with a look-at-origin rotation.
// t=0 and t=1 return the endpoint poses exactly. Throws AntipodalRotations
// when the quaternion dot product vanishes (|dot| < 1e-9).
CameraPose slerp_pose(const CameraPose& p0, const CameraPose& p1, double t,
                      double orbit_radius);

// arccos((trace(a^T b) - 1) / 2) in degrees, clamped into [0, 180].
double rotation_geodesic_deg(const Rotation& a, const Rotation& b);

}  // namespace rayzer::geom
