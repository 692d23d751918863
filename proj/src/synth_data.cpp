#include "rayzer/synth_data.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "rayzer/image_io.hpp"
#include "rayzer/rng.hpp"

namespace rayzer::synth {

namespace fs = std::filesystem;
using nlohmann::json;

static constexpr double kPi = 3.14159265358979323846;

uint64_t scene_seed_for(uint64_t dataset_seed, int scene_id) {
  Rng r(dataset_seed);
  return r.substream("scene" + std::to_string(scene_id)).next_u64();
}

SceneSpec make_scene(uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  Rng rng(seed);
  int n = rng.uniform_int(3, 8);
  s.spheres.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    Sphere sp;
    // Rejection-sample the center into the radius-0.4 ball.
    do {
      sp.center = geom::Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                             rng.uniform(-0.4, 0.4));
    } while (sp.center.norm() > 0.4);
    sp.radius = rng.uniform(0.05, 0.2);
    sp.albedo = geom::Vec3(rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0),
                           rng.uniform(0.1, 1.0));
    s.spheres.push_back(sp);
  }
  s.background = geom::Vec3(rng.uniform(0.0, 0.25), rng.uniform(0.0, 0.25),
                            rng.uniform(0.0, 0.25));
  geom::Vec3 l;
  do {
    l = geom::Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  } while (l.norm() < 1e-3 || l.norm() > 1.0);
  s.light_dir = l.normalized();
  return s;
}

geom::CameraPose orbit_pose(double azimuth_deg, double elevation_deg, double radius) {
  double az = std::fmod(azimuth_deg, 360.0);
  if (az < 0) az += 360.0;
  const double a = az * kPi / 180.0;
  const double e = elevation_deg * kPi / 180.0;
  geom::Vec3 center(radius * std::cos(e) * std::cos(a),
                    radius * std::cos(e) * std::sin(a), radius * std::sin(e));
  geom::Vec3 fwd = (-center).normalized();
  geom::Vec3 up(0, 0, 1);
  geom::Vec3 right = fwd.cross(up).normalized();
  geom::Vec3 down = fwd.cross(right);  // y axis points down in image space
  geom::CameraPose p;
  p.rot.m.col(0) = right;
  p.rot.m.col(1) = down;
  p.rot.m.col(2) = fwd;
  p.t = center;
  return p;
}

SequenceMeta orbit_cameras(int n_frames, double elevation_deg,
                           const geom::Intrinsics& intr) {
  if (n_frames < 2) throw std::invalid_argument("orbit_cameras: need >= 2 frames");
  SequenceMeta m;
  m.elevation_deg = elevation_deg;
  m.orbit_radius = 1.0;
  m.intrinsics = intr;
  m.poses.reserve(size_t(n_frames));
  for (int i = 0; i < n_frames; ++i)
    m.poses.push_back(orbit_pose(360.0 * i / n_frames, elevation_deg, 1.0));
  return m;
}

Image render_gt(const SceneSpec& scene, const geom::CameraPose& pose,
                const geom::Intrinsics& intr) {
  Image img(intr.height, intr.width);
  const double inv_f = 1.0 / intr.focal;
  const geom::Vec3 origin = pose.t;
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      geom::Vec3 d_cam((u + 0.5 - intr.cx()) * inv_f, (v + 0.5 - intr.cy()) * inv_f, 1.0);
      geom::Vec3 dir = (pose.rot.m * d_cam).normalized();

      double best_t = -1.0;
      const Sphere* hit = nullptr;
      for (const Sphere& sp : scene.spheres) {
        geom::Vec3 oc = origin - sp.center;
        double b = oc.dot(dir);
        double c = oc.squaredNorm() - sp.radius * sp.radius;
        double disc = b * b - c;
        if (disc < 0) continue;
        double sq = std::sqrt(disc);
        double t = -b - sq;
        if (t <= 1e-9) t = -b + sq;  // camera inside the sphere
        if (t > 1e-9 && (best_t < 0 || t < best_t)) {
          best_t = t;
          hit = &sp;
        }
      }

      geom::Vec3 color;
      if (hit) {
        geom::Vec3 p = origin + best_t * dir;
        geom::Vec3 n = (p - hit->center).normalized();
        double diffuse = std::max(0.0, n.dot(scene.light_dir));
        color = hit->albedo * (diffuse + 0.1);
      } else {
        color = scene.background;
      }
      for (int ch = 0; ch < 3; ++ch)
        img.at(v, u, ch) = float(std::clamp(color[ch], 0.0, 1.0));
    }
  }
  return img;
}

namespace {

geom::Intrinsics default_intrinsics(int resolution) {
  geom::Intrinsics intr;
  intr.width = resolution;
  intr.height = resolution;
  // Half-FOV ~37.6 deg: the radius-0.6 scene ball seen from distance 1 fits.
  intr.focal = 0.65 * resolution;
  return intr;
}

double sequence_elevation(uint64_t scene_seed) {
  Rng rng(scene_seed);
  return rng.substream("elevation").uniform(-20.0, 60.0);
}

json meta_to_json(const SequenceMeta& m) {
  json j;
  j["seed"] = m.scene_seed;
  j["elevation_deg"] = m.elevation_deg;
  j["orbit_radius"] = m.orbit_radius;
  j["intrinsics"] = {{"focal", m.intrinsics.focal},
                     {"width", m.intrinsics.width},
                     {"height", m.intrinsics.height}};
  json frames = json::array();
  for (const auto& p : m.poses) {
    json mat = json::array();  // 3x4 row-major camera-to-world
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) mat.push_back(p.rot.m(r, c));
      mat.push_back(p.t[r]);
    }
    frames.push_back({{"pose", mat}});
  }
  j["frames"] = frames;
  return j;
}

SequenceMeta meta_from_json(const json& j) {
  SequenceMeta m;
  m.scene_seed = j.at("seed").get<uint64_t>();
  m.elevation_deg = j.at("elevation_deg").get<double>();
  m.orbit_radius = j.at("orbit_radius").get<double>();
  m.intrinsics.focal = j.at("intrinsics").at("focal").get<double>();
  m.intrinsics.width = j.at("intrinsics").at("width").get<int>();
  m.intrinsics.height = j.at("intrinsics").at("height").get<int>();
  for (const auto& f : j.at("frames")) {
    const auto& mat = f.at("pose");
    geom::CameraPose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rot.m(r, c) = mat.at(size_t(r * 4 + c)).get<double>();
      p.t[r] = mat.at(size_t(r * 4 + 3)).get<double>();
    }
    m.poses.push_back(p);
  }
  return m;
}

SequenceMeta build_meta(uint64_t scene_seed, int n_frames, int resolution) {
  SequenceMeta meta =
      orbit_cameras(n_frames, sequence_elevation(scene_seed), default_intrinsics(resolution));
  meta.scene_seed = scene_seed;
  return meta;
}

}  // namespace

Sequence generate_sequence(uint64_t scene_seed, int n_frames, int resolution) {
  Sequence seq;
  seq.meta = build_meta(scene_seed, n_frames, resolution);
  SceneSpec scene = make_scene(scene_seed);
  seq.images.reserve(size_t(n_frames));
  for (const auto& pose : seq.meta.poses)
    seq.images.push_back(render_gt(scene, pose, seq.meta.intrinsics));
  return seq;
}

void write_dataset(const std::string& root, const DatasetConfig& cfg) {
  if (cfg.n_scenes <= 0) throw std::invalid_argument("write_dataset: n_scenes must be > 0");
  fs::create_directories(root);

  auto write_scene = [&](int id) {
    const uint64_t seed = scene_seed_for(cfg.seed, id);
    Sequence seq = generate_sequence(seed, cfg.frames_per_scene, cfg.resolution);
    fs::path dir = fs::path(root) / ("scene_" + std::to_string(id));
    fs::create_directories(dir);
    for (size_t i = 0; i < seq.images.size(); ++i)
      write_png((dir / ("frame_" + std::to_string(i) + ".png")).string(), seq.images[i]);
    std::ofstream out(dir / "meta.json");
    out << meta_to_json(seq.meta).dump(2) << "\n";
  };

  if (cfg.workers > 1) {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < cfg.workers; ++t)
      pool.emplace_back([&] {
        for (int id; (id = next.fetch_add(1)) < cfg.n_scenes;) write_scene(id);
      });
    for (auto& th : pool) th.join();
  } else {
    for (int id = 0; id < cfg.n_scenes; ++id) write_scene(id);
  }

  int n_train = std::max(1, int(std::floor(cfg.n_scenes * cfg.train_fraction)));
  if (n_train >= cfg.n_scenes && cfg.n_scenes > 1) n_train = cfg.n_scenes - 1;
  json manifest;
  manifest["seed"] = cfg.seed;
  manifest["frames_per_scene"] = cfg.frames_per_scene;
  manifest["resolution"] = cfg.resolution;
  json scenes = json::array();
  for (int id = 0; id < cfg.n_scenes; ++id)
    scenes.push_back({{"id", id}, {"split", id < n_train ? "train" : "test"}});
  manifest["scenes"] = scenes;
  std::ofstream out(fs::path(root) / "manifest.json");
  out << manifest.dump(2) << "\n";
}

Manifest read_manifest(const std::string& root) {
  fs::path p = fs::path(root) / "manifest.json";
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing dataset manifest: " + p.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt dataset manifest " + p.string() + ": " + e.what());
  }
  Manifest m;
  m.seed = j.at("seed").get<uint64_t>();
  m.frames_per_scene = j.at("frames_per_scene").get<int>();
  m.resolution = j.at("resolution").get<int>();
  for (const auto& s : j.at("scenes")) {
    int id = s.at("id").get<int>();
    if (s.at("split").get<std::string>() == "train")
      m.train_ids.push_back(id);
    else
      m.test_ids.push_back(id);
  }
  return m;
}

Sequence read_sequence(const std::string& root, int scene_id) {
  fs::path dir = fs::path(root) / ("scene_" + std::to_string(scene_id));
  fs::path meta_path = dir / "meta.json";
  std::ifstream in(meta_path);
  if (!in) throw std::runtime_error("missing scene metadata: " + meta_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt scene metadata " + meta_path.string() + ": " +
                             e.what());
  }
  Sequence seq;
  seq.meta = meta_from_json(j);
  seq.images.reserve(seq.meta.poses.size());
  for (size_t i = 0; i < seq.meta.poses.size(); ++i)
    seq.images.push_back(read_png((dir / ("frame_" + std::to_string(i) + ".png")).string()));
  return seq;
}

}  // namespace rayzer::synth
