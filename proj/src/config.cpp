#include "rayzer/config.hpp"

#include <filesystem>
#include <fstream>

namespace rayzer::cfg {

std::string conditioning_name(model::Conditioning c) {
  switch (c) {
    case model::Conditioning::Pluecker: return "pluecker";
    case model::Conditioning::Se3Token: return "se3-token";
    case model::Conditioning::LatentCamera: return "latent-camera";
  }
  return "pluecker";
}

model::Conditioning conditioning_from_name(const std::string& s) {
  if (s == "pluecker") return model::Conditioning::Pluecker;
  if (s == "se3-token") return model::Conditioning::Se3Token;
  if (s == "latent-camera") return model::Conditioning::LatentCamera;
  throw std::invalid_argument("unknown conditioning mode: " + s);
}

static std::string canonical_name(model::Canonical c) {
  return c == model::Canonical::MiddleFrame ? "middle-frame" : "first-frame";
}

static model::Canonical canonical_from_name(const std::string& s) {
  if (s == "middle-frame") return model::Canonical::MiddleFrame;
  if (s == "first-frame") return model::Canonical::FirstFrame;
  throw std::invalid_argument("unknown canonical mode: " + s);
}

json model_config_to_json(const model::ModelConfig& m) {
  return json{{"image_h", m.image_h},
              {"image_w", m.image_w},
              {"patch", m.patch},
              {"dim", m.dim},
              {"heads", m.heads},
              {"mlp_ratio", m.mlp_ratio},
              {"layers_camera", m.layers_camera},
              {"layers_scene", m.layers_scene},
              {"layers_render", m.layers_render},
              {"latent_tokens", m.latent_tokens},
              {"conditioning", conditioning_name(m.conditioning)},
              {"canonical", canonical_name(m.canonical)}};
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig m;
  m.image_h = j.at("image_h").get<int>();
  m.image_w = j.at("image_w").get<int>();
  m.patch = j.at("patch").get<int>();
  m.dim = j.at("dim").get<int>();
  m.heads = j.at("heads").get<int>();
  m.mlp_ratio = j.at("mlp_ratio").get<int>();
  m.layers_camera = j.at("layers_camera").get<int>();
  m.layers_scene = j.at("layers_scene").get<int>();
  m.layers_render = j.at("layers_render").get<int>();
  m.latent_tokens = j.at("latent_tokens").get<int>();
  m.conditioning = conditioning_from_name(j.at("conditioning").get<std::string>());
  m.canonical = canonical_from_name(j.at("canonical").get<std::string>());
  return m;
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "toy") {
    c.model = model::ModelConfig::toy();
    c.train = train::TrainConfig::toy();
    c.gen_scenes = 8;
  } else if (name == "paper") {
    c.model = model::ModelConfig::paper();
    c.train = train::TrainConfig::paper();
    c.gen_scenes = 64;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return c;
}

json to_flat_json(const RunConfig& c) {
  json f;
  f["run.preset"] = c.preset;
  f["run.dataset"] = c.dataset_root;
  f["run.out_dir"] = c.out_dir;
  f["run.seed"] = c.seed;
  f["run.workers"] = c.workers;

  const json m = model_config_to_json(c.model);
  for (auto& [k, v] : m.items()) f["model." + k] = v;

  f["train.k_a"] = c.train.k_a;
  f["train.k_b"] = c.train.k_b;
  f["train.range_start_lo"] = c.train.range_start[0];
  f["train.range_start_hi"] = c.train.range_start[1];
  f["train.range_end_lo"] = c.train.range_end[0];
  f["train.range_end_hi"] = c.train.range_end[1];
  f["train.total_iters"] = c.train.total_iters;
  f["train.warmup_iters"] = c.train.warmup_iters;
  f["train.peak_lr"] = c.train.peak_lr;
  f["train.final_lr"] = c.train.final_lr;
  f["train.batch_size"] = c.train.batch_size;
  f["train.lambda_percep"] = c.train.lambda_percep;
  f["train.grad_clip"] = c.train.grad_clip;
  f["train.checkpoint_every"] = c.train.checkpoint_every;
  f["train.unordered"] = c.train.unordered;

  f["data.scenes"] = c.gen_scenes;
  f["data.frames"] = c.gen_frames;

  f["eval.mode"] = c.eval_mode;
  f["eval.max_scenes"] = c.eval_max_scenes;

  f["probe.train_seqs"] = c.probe_train_seqs;
  f["probe.eval_seqs"] = c.probe_eval_seqs;
  f["probe.steps"] = c.probe_steps;
  f["probe.lr"] = c.probe_lr;
  return f;
}

void apply_flat_json(RunConfig& c, const json& flat) {
  for (auto& [key, v] : flat.items()) {
    if (key == "run.preset") continue;  // consumed before defaults are built
    if (key == "run.dataset") c.dataset_root = v.get<std::string>();
    else if (key == "run.out_dir") c.out_dir = v.get<std::string>();
    else if (key == "run.seed") c.seed = v.get<uint64_t>();
    else if (key == "run.workers") c.workers = v.get<int>();
    else if (key == "model.image_h") c.model.image_h = v.get<int>();
    else if (key == "model.image_w") c.model.image_w = v.get<int>();
    else if (key == "model.patch") c.model.patch = v.get<int>();
    else if (key == "model.dim") c.model.dim = v.get<int>();
    else if (key == "model.heads") c.model.heads = v.get<int>();
    else if (key == "model.mlp_ratio") c.model.mlp_ratio = v.get<int>();
    else if (key == "model.layers_camera") c.model.layers_camera = v.get<int>();
    else if (key == "model.layers_scene") c.model.layers_scene = v.get<int>();
    else if (key == "model.layers_render") c.model.layers_render = v.get<int>();
    else if (key == "model.latent_tokens") c.model.latent_tokens = v.get<int>();
    else if (key == "model.conditioning")
      c.model.conditioning = conditioning_from_name(v.get<std::string>());
    else if (key == "model.canonical")
      c.model.canonical = canonical_from_name(v.get<std::string>());
    else if (key == "train.k_a") c.train.k_a = v.get<int>();
    else if (key == "train.k_b") c.train.k_b = v.get<int>();
    else if (key == "train.range_start_lo") c.train.range_start[0] = v.get<int>();
    else if (key == "train.range_start_hi") c.train.range_start[1] = v.get<int>();
    else if (key == "train.range_end_lo") c.train.range_end[0] = v.get<int>();
    else if (key == "train.range_end_hi") c.train.range_end[1] = v.get<int>();
    else if (key == "train.total_iters") c.train.total_iters = v.get<int>();
    else if (key == "train.warmup_iters") c.train.warmup_iters = v.get<int>();
    else if (key == "train.peak_lr") c.train.peak_lr = v.get<double>();
    else if (key == "train.final_lr") c.train.final_lr = v.get<double>();
    else if (key == "train.batch_size") c.train.batch_size = v.get<int>();
    else if (key == "train.lambda_percep") c.train.lambda_percep = v.get<double>();
    else if (key == "train.grad_clip") c.train.grad_clip = v.get<double>();
    else if (key == "train.checkpoint_every") c.train.checkpoint_every = v.get<int>();
    else if (key == "train.unordered") c.train.unordered = v.get<bool>();
    else if (key == "data.scenes") c.gen_scenes = v.get<int>();
    else if (key == "data.frames") c.gen_frames = v.get<int>();
    else if (key == "eval.mode") c.eval_mode = v.get<std::string>();
    else if (key == "eval.max_scenes") c.eval_max_scenes = v.get<int>();
    else if (key == "probe.train_seqs") c.probe_train_seqs = v.get<int>();
    else if (key == "probe.eval_seqs") c.probe_eval_seqs = v.get<int>();
    else if (key == "probe.steps") c.probe_steps = v.get<int>();
    else if (key == "probe.lr") c.probe_lr = v.get<double>();
    else throw std::invalid_argument("unknown config key: " + key);
  }
  c.train.seed = c.seed;
  c.train.workers = c.workers;
}

std::pair<std::string, json> parse_set_flag(const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("--set expects key=value, got: " + kv);
  const std::string key = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json v = json::parse(raw, nullptr, false);
  if (v.is_discarded()) v = raw;  // bare strings are fine
  return {key, v};
}

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::pair<std::string, json>>& overrides) {
  json file_flat = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file: " + config_path);
    in >> file_flat;
  }
  std::string preset = "toy";
  if (file_flat.contains("run.preset")) preset = file_flat["run.preset"].get<std::string>();
  for (const auto& [k, v] : overrides)
    if (k == "run.preset") preset = v.get<std::string>();

  RunConfig c = preset_config(preset);
  apply_flat_json(c, file_flat);
  json ov = json::object();
  for (const auto& [k, v] : overrides) ov[k] = v;
  apply_flat_json(c, ov);
  c.preset = preset;
  return c;
}

void dump_run_config(const RunConfig& c, const std::string& path) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config dump: " + path);
  out << to_flat_json(c).dump(2) << "\n";
}

}  // namespace rayzer::cfg
