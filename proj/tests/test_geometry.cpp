#include <doctest.h>

#include <cmath>

#include "rayzer/geometry.hpp"
#include "rayzer/rng.hpp"
#include "rayzer/synth_data.hpp"

using namespace rayzer;
using geom::Mat3;
using geom::Vec3;

namespace {

// Independent axis-angle oracle (Rodrigues formula).
Mat3 axis_angle(Vec3 axis, double deg) {
  axis.normalize();
  const double th = deg * M_PI / 180.0;
  Mat3 k;
  k << 0, -axis.z(), axis.y(), axis.z(), 0, -axis.x(), -axis.y(), axis.x(), 0;
  return Mat3::Identity() + std::sin(th) * k + (1 - std::cos(th)) * k * k;
}

Vec3 cross_oracle(const Vec3& a, const Vec3& b) {
  return Vec3(a.y() * b.z() - a.z() * b.y(), a.z() * b.x() - a.x() * b.z(),
              a.x() * b.y() - a.y() * b.x());
}

geom::Rotation random_rotation(Rng& rng) {
  geom::Rotation r;
  r.m = axis_angle(Vec3(rng.normal(), rng.normal(), rng.normal()),
                   rng.uniform(0.0, 180.0));
  return r;
}

geom::CameraPose random_pose(Rng& rng) {
  geom::CameraPose p;
  p.rot = random_rotation(rng);
  p.t = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  return p;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("rotation_from_6d Gram-Schmidt fixed points") {
  auto r = geom::rotation_from_6d({1, 0, 0, 0, 1, 0});
  CHECK((r.m - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);
  // scale invariance of the normalization
  auto r2 = geom::rotation_from_6d({2, 0, 0, 0, 3, 0});
  CHECK((r2.m - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rotation_from_6d produces SO(3), third column is a cross product") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    std::array<double, 6> r6;
    for (auto& v : r6) v = rng.uniform(-3, 3);
    geom::Rotation r;
    try {
      r = geom::rotation_from_6d(r6);
    } catch (const geom::DegenerateRotationInput&) {
      continue;  // legitimately rejected draw
    }
    CHECK(r.is_valid(1e-6));
    Vec3 c = cross_oracle(r.m.col(0), r.m.col(1));
    CHECK((r.m.col(2) - c).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rotation_from_6d per-3-vector scale invariance") {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    std::array<double, 6> r6;
    for (auto& v : r6) v = rng.uniform(-2, 2);
    double s = rng.uniform(0.1, 10.0), u = rng.uniform(0.1, 10.0);
    std::array<double, 6> scaled = {s * r6[0], s * r6[1], s * r6[2],
                                    u * r6[3], u * r6[4], u * r6[5]};
    geom::Rotation a, b;
    try {
      a = geom::rotation_from_6d(r6);
      b = geom::rotation_from_6d(scaled);
    } catch (const geom::DegenerateRotationInput&) {
      continue;
    }
    CHECK((a.m - b.m).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("rotation_from_6d degenerate inputs error explicitly") {
  CHECK_THROWS_AS(geom::rotation_from_6d({0, 0, 0, 0, 1, 0}),
                  geom::DegenerateRotationInput);
  CHECK_THROWS_AS(geom::rotation_from_6d({1, 0, 0, 2, 0, 0}),
                  geom::DegenerateRotationInput);
  CHECK_THROWS_AS(geom::rotation_from_6d({1, 0, 0, -3, 1e-12, 0}),
                  geom::DegenerateRotationInput);
}

TEST_CASE("pose_params_to_pose") {
  geom::PoseParams id;
  auto p = geom::pose_params_to_pose(id);
  CHECK(p.is_identity());

  geom::PoseParams tr;
  tr.v = {1, 0, 0, 0, 1, 0, 1, 2, 3};
  auto q = geom::pose_params_to_pose(tr);
  CHECK((q.rot.m - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(q.t == Vec3(1, 2, 3));

  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    geom::PoseParams pp;
    for (auto& v : pp.v) v = rng.uniform(-2, 2);
    try {
      CHECK(geom::pose_params_to_pose(pp).rot.is_valid(1e-6));
    } catch (const geom::DegenerateRotationInput&) {
    }
  }
}

TEST_CASE("compose and invert round-trip") {
  geom::CameraPose id;
  CHECK(geom::compose(id, id).is_identity());
  CHECK(geom::invert(id).is_identity());

  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    auto p = random_pose(rng);
    auto r = geom::compose(p, geom::invert(p));
    CHECK((r.rot.m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(r.t.cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("intrinsics_matrix layout and determinant") {
  geom::Intrinsics i{32.0, 32, 32};
  Mat3 k = geom::intrinsics_matrix(i);
  Mat3 want;
  want << 32, 0, 16, 0, 32, 16, 0, 0, 1;
  CHECK((k - want).cwiseAbs().maxCoeff() == 0.0);

  geom::Intrinsics big{256.0, 256, 256};
  Mat3 kb = geom::intrinsics_matrix(big);
  CHECK(kb(0, 2) == 128.0);
  CHECK(kb(1, 2) == 128.0);

  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    geom::Intrinsics a{rng.uniform(1.0, 500.0), 64, 48};
    CHECK(geom::intrinsics_matrix(a).determinant() ==
          doctest::Approx(a.focal * a.focal).epsilon(1e-12));
  }
}

TEST_CASE("pluecker_rays pinned center-pixel values") {
  // Odd dims put the center pixel's half-pixel ray exactly on the optical
  // axis: pixel 16 has center 16.5 = 33/2.
  geom::Intrinsics intr{33.0, 33, 33};
  geom::CameraPose id;
  auto map = geom::pluecker_rays(id, intr);
  const auto& r = map.at(16, 16);
  CHECK((r.dir - Vec3(0, 0, 1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.moment.cwiseAbs().maxCoeff() == 0.0);

  geom::CameraPose off;
  off.t = Vec3(1, 0, 0);
  auto map2 = geom::pluecker_rays(off, intr);
  const auto& r2 = map2.at(16, 16);
  CHECK((r2.dir - Vec3(0, 0, 1)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((r2.moment - cross_oracle(Vec3(1, 0, 0), Vec3(0, 0, 1))).cwiseAbs().maxCoeff() <
        1e-12);
  CHECK((r2.moment - Vec3(0, -1, 0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pluecker invariants over random cameras") {
  Rng rng(23);
  geom::Intrinsics intr{20.0, 8, 8};
  for (int i = 0; i < 50; ++i) {
    auto pose = random_pose(rng);
    auto map = geom::pluecker_rays(pose, intr);
    for (const auto& ray : map.rays) {
      CHECK(std::fabs(ray.dir.norm() - 1.0) < 1e-6);
      CHECK(std::fabs(ray.dir.dot(ray.moment)) < 1e-6);
      CHECK((ray.moment - cross_oracle(pose.t, ray.dir)).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("slerp_pose endpoints are exact") {
  auto p0 = synth::orbit_pose(10.0, 15.0);
  auto p1 = synth::orbit_pose(80.0, 15.0);
  auto a = geom::slerp_pose(p0, p1, 0.0, 1.0);
  auto b = geom::slerp_pose(p0, p1, 1.0, 1.0);
  CHECK((a.rot.m - p0.rot.m).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.t - p0.t).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.rot.m - p1.rot.m).cwiseAbs().maxCoeff() == 0.0);
  CHECK((b.t - p1.t).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("slerp_pose halves a z-axis orbit arc") {
  // Quaternion slerp oracle on z-axis rotations: the halfway pose of an
  // equal-elevation 0->90 degree orbit is the 45 degree pose.
  auto p0 = synth::orbit_pose(0.0, 20.0);
  auto p1 = synth::orbit_pose(90.0, 20.0);
  auto mid = geom::slerp_pose(p0, p1, 0.5, 1.0);
  auto want = synth::orbit_pose(45.0, 20.0);
  CHECK((mid.rot.m - want.rot.m).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((mid.t - want.t).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(std::fabs(mid.t.norm() - 1.0) < 1e-12);
}

TEST_CASE("slerp_pose rejects antipodal rotations") {
  geom::CameraPose p0;
  geom::CameraPose p1;
  p1.rot.m = axis_angle(Vec3(1, 0, 0), 180.0);
  CHECK_THROWS_AS(geom::slerp_pose(p0, p1, 0.5, 1.0), geom::AntipodalRotations);
}

TEST_CASE("rotation_geodesic_deg pinned values and metric properties") {
  geom::Rotation id;
  CHECK(geom::rotation_geodesic_deg(id, id) == 0.0);

  geom::Rotation flip;
  flip.m = axis_angle(Vec3(1, 0, 0), 180.0);
  CHECK(geom::rotation_geodesic_deg(id, flip) == doctest::Approx(180.0).epsilon(1e-9));

  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    geom::Rotation r;
    r.m = axis_angle(Vec3(rng.normal(), rng.normal(), rng.normal()), 30.0);
    CHECK(std::fabs(geom::rotation_geodesic_deg(id, r) - 30.0) < 1e-6);
  }

  for (int i = 0; i < 100; ++i) {
    auto a = random_rotation(rng), b = random_rotation(rng), c = random_rotation(rng);
    double ab = geom::rotation_geodesic_deg(a, b);
    double ba = geom::rotation_geodesic_deg(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(ab <= geom::rotation_geodesic_deg(a, c) + geom::rotation_geodesic_deg(c, b) +
              1e-6);
  }
}

TEST_CASE("rotation 6d round trip") {
  Rng rng(41);
  for (int i = 0; i < 50; ++i) {
    auto r = random_rotation(rng);
    auto back = geom::rotation_from_6d(geom::rotation_to_6d(r));
    CHECK((r.m - back.m).cwiseAbs().maxCoeff() < 1e-12);
  }
}

}  // TEST_SUITE
