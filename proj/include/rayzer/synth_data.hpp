#pragma once

#include <string>
#include <vector>

#include "rayzer/geometry.hpp"
#include "rayzer/image.hpp"

namespace rayzer::synth {

struct Sphere {
  geom::Vec3 center;  // inside the radius-0.4 ball
  double radius;      // in [0.05, 0.2]
  geom::Vec3 albedo;  // RGB in [0,1]
};

struct SceneSpec {
  uint64_t seed = 0;
  std::vector<Sphere> spheres;  // 3..8
  geom::Vec3 background;
  geom::Vec3 light_dir;  // unit, pointing toward the light
};

struct SequenceMeta {
  uint64_t scene_seed = 0;
  double elevation_deg = 0.0;
  double orbit_radius = 1.0;
  geom::Intrinsics intrinsics;
  std::vector<geom::CameraPose> poses;  // camera-to-world, one per frame
};

struct DatasetConfig {
  int n_scenes = 8;
  int frames_per_scene = 70;
  int resolution = 32;
  uint64_t seed = 1234;
  double train_fraction = 0.8;  // leading scenes are train, rest test
  int workers = 1;
};

SceneSpec make_scene(uint64_t seed);

// Azimuths evenly spaced over [0, 360); one elevation draw per sequence,
// uniform in [-20, 60] degrees; cameras on the unit sphere looking at the
// origin with world +z up. Azimuth 0 at elevation 0 puts the camera at
// (1,0,0).
SequenceMeta orbit_cameras(int n_frames, double elevation_deg, const geom::Intrinsics& intr);

// Camera pose for one orbit position; azimuth is wrapped mod 360 so a full
// revolution lands bit-exactly on the start pose.
geom::CameraPose orbit_pose(double azimuth_deg, double elevation_deg, double radius = 1.0);

// Analytic ray tracer: nearest positive ray-sphere hit, Lambertian shading
// with a 0.1 ambient floor on the albedo, background on miss.
Image render_gt(const SceneSpec& scene, const geom::CameraPose& pose,
                const geom::Intrinsics& intr);

// On-disk layout:
//   root/manifest.json                      scene ids + train/test split
//   root/scene_{id}/meta.json               seed, elevation, intrinsics, poses
//   root/scene_{id}/frame_{idx}.png         8-bit RGB
void write_dataset(const std::string& root, const DatasetConfig& cfg);

struct Sequence {
  std::vector<Image> images;
  SequenceMeta meta;
};

Sequence read_sequence(const std::string& root, int scene_id);

struct Manifest {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  int frames_per_scene = 0;
  int resolution = 0;
  uint64_t seed = 0;
};

Manifest read_manifest(const std::string& root);

// In-memory generation (same math as the on-disk path, minus PNG
// quantization): used by tests and the probing protocol.
Sequence generate_sequence(uint64_t scene_seed, int n_frames, int resolution);

uint64_t scene_seed_for(uint64_t dataset_seed, int scene_id);

}  // namespace rayzer::synth
