#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "rayzer/model.hpp"
#include "rayzer/training.hpp"

namespace rayzer::cfg {

using json = nlohmann::json;

// Everything a command needs, resolvable from: preset defaults, an optional
// JSON config file of flat dotted keys, then --set k=v overrides.
struct RunConfig {
  std::string preset = "toy";  // "toy" | "paper"
  model::ModelConfig model;
  train::TrainConfig train;
  std::string dataset_root;
  std::string out_dir = "out";
  uint64_t seed = 1234;
  int workers = 1;

  int gen_scenes = 8;
  int gen_frames = 70;

  std::string eval_mode = "even";  // even | random
  int eval_max_scenes = 0;         // 0 = all

  int probe_train_seqs = 16;
  int probe_eval_seqs = 24;
  int probe_steps = 500;
  double probe_lr = 1e-3;
};

RunConfig preset_config(const std::string& name);

// Flat dotted-key view, e.g. {"model.dim": 64, "train.peak_lr": 3e-4}.
json to_flat_json(const RunConfig& c);

// Applies flat keys onto c; unknown keys throw std::invalid_argument.
void apply_flat_json(RunConfig& c, const json& flat);

// Parses "key=value" (value as JSON when possible, else string).
std::pair<std::string, json> parse_set_flag(const std::string& kv);

RunConfig load_run_config(const std::string& config_path /* may be empty */,
                          const std::vector<std::pair<std::string, json>>& overrides);

void dump_run_config(const RunConfig& c, const std::string& path);

// ModelConfig <-> JSON object (used by the checkpoint header).
json model_config_to_json(const model::ModelConfig& m);
model::ModelConfig model_config_from_json(const json& j);

std::string conditioning_name(model::Conditioning c);
model::Conditioning conditioning_from_name(const std::string& s);

}  // namespace rayzer::cfg
