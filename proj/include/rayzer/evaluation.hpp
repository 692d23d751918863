#pragma once

#include <array>
#include <string>
#include <vector>

#include "rayzer/model.hpp"
#include "rayzer/synth_data.hpp"
#include "rayzer/training.hpp"

namespace rayzer::eval {

// ----- image metrics -----

// -10*log10(mse), capped at 99 dB (mse == 0 included).
double psnr_from_mse(double mse);
double psnr(const Image& a, const Image& b);

// Mean local SSIM over sliding 8x8 uniform windows, C1=(0.01)^2, C2=(0.03)^2,
// averaged across channels.
double ssim(const Image& a, const Image& b);

// ----- reports -----

struct SceneScore {
  int scene_id = 0;
  double psnr = 0;
  double ssim = 0;
};

struct NVSReport {
  std::vector<SceneScore> scenes;
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::string mode;
  int k_a = 0;
  int k_b = 0;
};

struct PoseAccuracyReport {
  std::array<double, 3> rot_acc{};    // R@10, R@20, R@30 degrees
  std::array<double, 3> trans_acc{};  // t@0.1, t@0.2, t@0.3 (scale-aligned)
  int n_pairs = 0;
};

void write_nvs_csv(const NVSReport& r, const std::string& path);
void write_nvs_json(const NVSReport& r, const std::string& path);
void write_pose_json(const PoseAccuracyReport& r, const std::string& path);

// ----- protocols -----

struct ProtocolConfig {
  int k_a = 3;
  int k_b = 2;
  std::array<int, 2> range{48, 65};  // final curriculum range drives sampling
  bool random_split = false;         // false: even interleaved B
  uint64_t seed = 1234;
  int max_scenes = 0;  // 0 = all
};

// The deterministic per-scene draw shared by all protocols.
struct ProtocolSample {
  std::vector<int> frames;
  train::SplitPlan split;
};
ProtocolSample sample_protocol(const synth::Sequence& seq, int scene_ord,
                               const ProtocolConfig& pc);

// Predicted-pose novel view synthesis: targets contribute only their pose
// estimate, never scene content.
NVSReport eval_nvs(const std::vector<synth::Sequence>& seqs,
                   const model::ModelConfig& mcfg, nn::Weights<float>& w,
                   const ProtocolConfig& pc);

// Position (in split.a) of the input whose frame index is nearest to the
// target's; ties go to the lower frame index.
int copy_nearest_choice(const std::vector<int>& frame_indices,
                        const std::vector<int>& a_positions, int b_position);

// Baseline that outputs the model's rendering of the nearest input view.
NVSReport copy_nearest_eval(const std::vector<synth::Sequence>& seqs,
                            const model::ModelConfig& mcfg, nn::Weights<float>& w,
                            const ProtocolConfig& pc);

// Renders targets by Slerp-interpolating the predicted poses of the two
// neighboring inputs; interpolation coefficients come from the ground-truth
// azimuths, the radius from the predicted centers. Inputs are chosen
// endpoint-inclusive so every target lies strictly inside the input span.
NVSReport interp_eval(const std::vector<synth::Sequence>& seqs,
                      const model::ModelConfig& mcfg, nn::Weights<float>& w,
                      const ProtocolConfig& pc);

// Endpoint-inclusive even input positions for interpolation protocols.
train::SplitPlan interp_split(int K, int K_A);

// ----- pose probing -----

struct ProbeConfig {
  int steps = 500;
  double lr = 1e-3;
  int K = 5;
  std::array<int, 2> range{48, 65};
  uint64_t seed = 1234;
};

// Trains a fresh two-layer MLP from frozen camera tokens [p*_i, p*_c] to the
// ground-truth canonical-relative poses (6D rotation + translation), then
// reports threshold accuracies on held-out sequences. Translation error is
// relative after a per-sequence least-squares scale fit.
PoseAccuracyReport probe_pose(const std::vector<synth::Sequence>& train_seqs,
                              const std::vector<synth::Sequence>& eval_seqs,
                              const model::ModelConfig& mcfg, nn::Weights<float>& backbone,
                              const ProbeConfig& pc);

}  // namespace rayzer::eval
