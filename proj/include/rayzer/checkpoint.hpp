#pragma once

#include <map>
#include <string>

#include "rayzer/model.hpp"

namespace rayzer::ckpt {

// Self-describing binary container:
//   magic "RZCKPT01", u32 LE header length, header JSON (format version,
//   model config, training iteration, optimizer step count), u32 LE record
//   count, then per record: u32 name length, name bytes, u32 rows, u32 cols,
//   rows*cols little-endian float32 values.
//
// Model parameters are plain records; optimizer moments ride along as
// records prefixed "_opt.m." / "_opt.v.". Round-trips are bit-exact.

struct OptState {
  std::map<std::string, Tensor<float>> m, v;
  int adam_t = 0;
};

void save(const std::string& path, const model::ModelConfig& cfg,
          nn::Weights<float>& weights, int iter, const OptState* opt = nullptr);

struct Loaded {
  model::ModelConfig cfg;
  nn::Weights<float> weights;
  int iter = 0;
  OptState opt;
  bool has_opt = false;
};

Loaded load(const std::string& path);

}  // namespace rayzer::ckpt
