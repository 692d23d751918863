#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "rayzer/model.hpp"
#include "rayzer/split.hpp"
#include "rayzer/synth_data.hpp"

namespace rayzer::train {

struct TrainConfig {
  int k_a = 3;
  int k_b = 2;
  std::array<int, 2> range_start{24, 32};  // frame-distance curriculum
  std::array<int, 2> range_end{48, 65};
  int total_iters = 2000;
  int warmup_iters = 100;
  double peak_lr = 3e-4;
  double final_lr = 1e-4;
  int batch_size = 4;
  double lambda_percep = 0.2;
  double grad_clip = 1.0;
  uint64_t seed = 1234;
  int checkpoint_every = 500;
  bool unordered = false;  // shuffle sampled frames before index p.e. assignment
  int workers = 1;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;

  int K() const { return k_a + k_b; }
  void validate() const;

  static TrainConfig toy();
  static TrainConfig paper();  // Objaverse-protocol hyperparameters
};

// Component-wise linear interpolation of the frame-distance range, rounded to
// the nearest integer; exact at both endpoints.
std::array<int, 2> curriculum_range(int iter, int total, std::array<int, 2> start,
                                    std::array<int, 2> end);

// K sorted frame indices: window length D ~ U[lo,hi], window start uniform,
// first/last pinned to the window endpoints, interior frames drawn uniformly
// without replacement.
std::vector<int> sample_frame_window(int seq_len, std::array<int, 2> range, int K,
                                     Rng& rng);

// Linear warmup 0 -> peak over warmup iters, then cosine decay peak -> final.
double lr_at(int iter, const TrainConfig& cfg);

// ----- loss (usable at float for training and double for gradient checks) --

template <typename T>
struct LossParts {
  ad::Var<T> total;
  double mse = 0;
  double percep = 0;
};

// Mean over target views of MSE + lambda * Percep. Percep is an edge-aware
// substitute for a pretrained perceptual network: mean L1 distance between
// horizontal+vertical image gradients at 3 pyramid scales ([1,2,1] binomial
// blur, stride-2 subsample).
template <typename T>
LossParts<T> photometric_loss(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& pred,
                              const std::vector<const Image*>& gt, double lambda,
                              int H, int W);

// Plain-value form for tests and metrics.
double photometric_loss_value(const std::vector<Image>& pred,
                              const std::vector<Image>& gt, double lambda);

// ----- optimizer -----

class Adam {
 public:
  Adam(nn::Weights<float>& w, double beta1, double beta2, double eps);

  // w -= lr * m_hat / (sqrt(v_hat) + eps), reading gradients from w.
  void step(double lr);

  int t() const { return t_; }
  std::vector<Tensor<float>>& m() { return m_; }
  std::vector<Tensor<float>>& v() { return v_; }
  void set_t(int t) { t_ = t; }

 private:
  nn::Weights<float>* w_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Tensor<float>> m_, v_;
};

// ----- trainer -----

struct StepMetrics {
  int iter = 0;
  double loss = 0;
  double mse = 0;
  double percep = 0;
  double grad_norm = 0;  // post-clip global norm
  double lr = 0;
  double seconds = 0;
  bool finite = true;
};

class Trainer {
 public:
  Trainer(model::ModelConfig mcfg, TrainConfig tcfg,
          std::vector<synth::Sequence> scenes);

  StepMetrics step();

  int iter() const { return iter_; }
  void set_iter(int it) { iter_ = it; }
  nn::Weights<float>& weights() { return weights_; }
  Adam& optimizer() { return adam_; }
  const model::ModelConfig& model_config() const { return mcfg_; }
  const TrainConfig& train_config() const { return tcfg_; }

  // One drawn training sample (exposed for evaluation reuse).
  model::ViewBatch sample_batch(int scene_index, const std::vector<int>& frames) const;

 private:
  model::ModelConfig mcfg_;
  TrainConfig tcfg_;
  std::vector<synth::Sequence> scenes_;
  nn::Weights<float> weights_;
  Adam adam_;
  Rng data_rng_;
  Rng split_rng_;
  int iter_ = 0;
};

struct TrainRunResult {
  bool diverged = false;
  int final_iter = 0;
  double first_loss = 0;
  double last_loss = 0;
  std::string checkpoint_path;  // final or last-good
};

// Full loop: metrics CSV (iter,loss,mse,percep,grad_norm,lr,seconds),
// periodic checkpoints, divergence abort with the last finite weights saved.
TrainRunResult run_training(Trainer& trainer, const std::string& out_dir,
                            const std::function<void(const StepMetrics&)>& on_step = {});

}  // namespace rayzer::train

#include "rayzer/training_impl.hpp"
