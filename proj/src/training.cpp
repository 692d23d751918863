#include "rayzer/training.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "rayzer/checkpoint.hpp"

namespace rayzer::train {

namespace fs = std::filesystem;

// ----- split -----

bool SplitPlan::valid() const {
  std::vector<bool> seen(size_t(K()), false);
  for (int i : a) {
    if (i < 0 || i >= K() || seen[size_t(i)]) return false;
    seen[size_t(i)] = true;
  }
  for (int i : b) {
    if (i < 0 || i >= K() || seen[size_t(i)]) return false;
    seen[size_t(i)] = true;
  }
  return !a.empty() && !b.empty();
}

SplitPlan split_views(int K, int K_A, int K_B, SplitMode mode, Rng& rng) {
  if (K != K_A + K_B || K_A < 1 || K_B < 1)
    throw std::invalid_argument("split_views: need K == K_A + K_B with both >= 1");
  SplitPlan plan;
  std::vector<bool> in_b(size_t(K), false);
  if (mode == SplitMode::TestEven) {
    for (int j = 0; j < K_B; ++j) {
      int pos = int((2 * j + 1) * K / (2 * K_B));  // floor((j+0.5)*K/K_B)
      in_b[size_t(pos)] = true;
    }
  } else {
    std::vector<int> idx(size_t(K), 0);
    for (int i = 0; i < K; ++i) idx[size_t(i)] = i;
    for (int j = 0; j < K_B; ++j)
      std::swap(idx[size_t(j)], idx[size_t(rng.uniform_int(j, K - 1))]);
    for (int j = 0; j < K_B; ++j) in_b[size_t(idx[size_t(j)])] = true;
  }
  for (int i = 0; i < K; ++i) (in_b[size_t(i)] ? plan.b : plan.a).push_back(i);
  return plan;
}

// ----- schedules & sampling -----

std::array<int, 2> curriculum_range(int iter, int total, std::array<int, 2> start,
                                    std::array<int, 2> end) {
  if (iter < 0 || iter > total) throw std::invalid_argument("curriculum_range: bad iter");
  const double t = total == 0 ? 1.0 : double(iter) / double(total);
  auto lerp = [t](int a, int b) { return int(std::lround(a + t * (b - a))); };
  return {lerp(start[0], end[0]), lerp(start[1], end[1])};
}

std::vector<int> sample_frame_window(int seq_len, std::array<int, 2> range, int K,
                                     Rng& rng) {
  const int lo = range[0], hi = range[1];
  if (K < 2 || lo > hi || lo < K - 1)
    throw std::invalid_argument("sample_frame_window: need hi >= lo >= K-1 >= 1");
  if (seq_len <= hi)
    throw std::invalid_argument("sample_frame_window: sequence too short, need > " +
                                std::to_string(hi) + " frames, have " +
                                std::to_string(seq_len));
  const int dist = rng.uniform_int(lo, hi);
  const int start = rng.uniform_int(0, seq_len - 1 - dist);

  std::vector<int> out;
  out.reserve(size_t(K));
  out.push_back(start);
  // Selection sampling over the interior keeps the output sorted.
  int needed = K - 2;
  for (int f = start + 1; f < start + dist && needed > 0; ++f) {
    const int remaining = start + dist - f;
    if (int(rng.uniform_int(0, remaining - 1)) < needed) {
      out.push_back(f);
      --needed;
    }
  }
  out.push_back(start + dist);
  return out;
}

double lr_at(int iter, const TrainConfig& cfg) {
  if (iter < 0 || iter > cfg.total_iters) throw std::invalid_argument("lr_at: bad iter");
  if (iter < cfg.warmup_iters)
    return cfg.peak_lr * double(iter) / double(cfg.warmup_iters);
  const double span = double(cfg.total_iters - cfg.warmup_iters);
  const double progress = span == 0 ? 1.0 : double(iter - cfg.warmup_iters) / span;
  return cfg.final_lr +
         (cfg.peak_lr - cfg.final_lr) * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void TrainConfig::validate() const {
  if (k_a < 1 || k_b < 1) throw std::invalid_argument("TrainConfig: view counts >= 1");
  if (warmup_iters >= total_iters)
    throw std::invalid_argument("TrainConfig: warmup must be < total");
  if (range_start[0] > range_start[1] || range_end[0] > range_end[1])
    throw std::invalid_argument("TrainConfig: lo must be <= hi in curriculum ranges");
  if (lambda_percep < 0) throw std::invalid_argument("TrainConfig: lambda >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch size >= 1");
}

TrainConfig TrainConfig::toy() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.k_a = 12;
  c.k_b = 8;
  c.range_start = {24, 32};
  c.range_end = {48, 65};
  c.total_iters = 50000;
  c.warmup_iters = 3000;
  c.peak_lr = 4e-4;
  c.final_lr = 1.5e-4;
  c.batch_size = 256;
  c.lambda_percep = 0.2;
  c.grad_clip = 1.0;
  return c;
}

double photometric_loss_value(const std::vector<Image>& pred,
                              const std::vector<Image>& gt, double lambda) {
  if (pred.empty() || pred.size() != gt.size())
    throw std::invalid_argument("photometric_loss: prediction/target count mismatch");
  ad::Tape<double> tape;
  std::vector<ad::Var<double>> pv;
  std::vector<const Image*> gp;
  for (size_t i = 0; i < pred.size(); ++i) {
    pv.push_back(tape.constant(image_to_tensor<double>(pred[i])));
    gp.push_back(&gt[i]);
  }
  return photometric_loss(tape, pv, gp, lambda, pred[0].height, pred[0].width)
      .total.scalar();
}

// ----- optimizer -----

Adam::Adam(nn::Weights<float>& w, double beta1, double beta2, double eps)
    : w_(&w), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto& p : w.all()) {
    m_.emplace_back(p->values.rows, p->values.cols);
    v_.emplace_back(p->values.rows, p->values.cols);
  }
}

void Adam::step(double lr) {
  ++t_;
  const float b1 = float(beta1_), b2 = float(beta2_);
  const float bc1 = float(1.0 - std::pow(beta1_, t_));
  const float bc2 = float(1.0 - std::pow(beta2_, t_));
  const float flr = float(lr), feps = float(eps_);
  auto& params = w_->all();
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    float* m = m_[i].a.data();
    float* v = v_[i].a.data();
    const float* g = p.grad.a.data();
    float* x = p.values.a.data();
    for (size_t j = 0; j < p.values.a.size(); ++j) {
      m[j] = b1 * m[j] + (1.f - b1) * g[j];
      v[j] = b2 * v[j] + (1.f - b2) * g[j] * g[j];
      const float mh = m[j] / bc1;
      const float vh = v[j] / bc2;
      x[j] -= flr * mh / (std::sqrt(vh) + feps);
    }
  }
}

// ----- trainer -----

Trainer::Trainer(model::ModelConfig mcfg, TrainConfig tcfg,
                 std::vector<synth::Sequence> scenes)
    : mcfg_(std::move(mcfg)),
      tcfg_(std::move(tcfg)),
      scenes_(std::move(scenes)),
      weights_([&] {
        Rng init = Rng(tcfg_.seed).substream("init");
        return model::build_weights<float>(mcfg_, init);
      }()),
      adam_(weights_, tcfg_.beta1, tcfg_.beta2, tcfg_.adam_eps),
      data_rng_(Rng(tcfg_.seed).substream("data")),
      split_rng_(Rng(tcfg_.seed).substream("split")) {
  mcfg_.validate();
  tcfg_.validate();
  if (scenes_.empty()) throw std::invalid_argument("Trainer: no training scenes");
}

model::ViewBatch Trainer::sample_batch(int scene_index,
                                       const std::vector<int>& frames) const {
  const synth::Sequence& seq = scenes_[size_t(scene_index)];
  model::ViewBatch batch;
  batch.has_gt = true;
  batch.gt_intrinsics = seq.meta.intrinsics;
  for (int f : frames) {
    batch.images.push_back(seq.images[size_t(f)]);
    batch.frame_indices.push_back(f);
    batch.gt_poses.push_back(seq.meta.poses[size_t(f)]);
  }
  return batch;
}

StepMetrics Trainer::step() {
  const auto t0 = std::chrono::steady_clock::now();
  StepMetrics m;
  m.iter = iter_;
  m.lr = lr_at(iter_, tcfg_);

  const auto range =
      curriculum_range(iter_, tcfg_.total_iters, tcfg_.range_start, tcfg_.range_end);
  const int K = tcfg_.K();

  struct Task {
    model::ViewBatch batch;
    SplitPlan split;
    double loss = 0, mse = 0, percep = 0;
    std::vector<Tensor<float>> grads;
  };
  std::vector<Task> tasks(size_t(tcfg_.batch_size));

  // All randomness is drawn sequentially up front so worker count does not
  // change the sampled batch.
  for (auto& task : tasks) {
    const int scene = data_rng_.uniform_int(0, int(scenes_.size()) - 1);
    const int seq_len = int(scenes_[size_t(scene)].images.size());
    std::vector<int> frames = sample_frame_window(seq_len, range, K, data_rng_);
    if (tcfg_.unordered) {
      for (int j = K - 1; j > 0; --j)
        std::swap(frames[size_t(j)], frames[size_t(data_rng_.uniform_int(0, j))]);
    }
    task.batch = sample_batch(scene, frames);
    task.split = split_views(K, tcfg_.k_a, tcfg_.k_b, SplitMode::TrainRandom, split_rng_);
  }

  auto run_task = [&](Task& task) {
    task.grads.reserve(weights_.all().size());
    for (auto& p : weights_.all())
      task.grads.emplace_back(p->values.rows, p->values.cols);
    ad::Tape<float> tape;
    auto fw = model::forward_selfsup(tape, task.batch, task.split, mcfg_, weights_);
    std::vector<const Image*> gt;
    for (int b : task.split.b) gt.push_back(&task.batch.images[size_t(b)]);
    auto loss = photometric_loss(tape, fw.renders, gt, tcfg_.lambda_percep,
                                 mcfg_.image_h, mcfg_.image_w);
    task.loss = double(loss.total.scalar());
    task.mse = loss.mse;
    task.percep = loss.percep;
    tape.backward(loss.total);
    tape.harvest_buffers(task.grads);
  };

  const int workers = std::max(1, std::min(tcfg_.workers, int(tasks.size())));
  if (workers > 1) {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (size_t i; (i = next.fetch_add(1)) < tasks.size();) run_task(tasks[i]);
      });
    for (auto& th : pool) th.join();
  } else {
    for (auto& task : tasks) run_task(task);
  }

  const double inv_batch = 1.0 / double(tasks.size());
  for (const auto& task : tasks) {
    m.loss += task.loss * inv_batch;
    m.mse += task.mse * inv_batch;
    m.percep += task.percep * inv_batch;
  }
  if (!std::isfinite(m.loss)) {
    m.finite = false;  // weights are untouched; caller decides what to do
    return m;
  }

  // Merge per-sample gradients in sample order (bit-stable for any worker
  // count), then clip by global norm and step.
  weights_.zero_grads();
  auto& params = weights_.all();
  for (const auto& task : tasks) {
    for (size_t i = 0; i < params.size(); ++i) {
      float* dst = params[i]->grad.a.data();
      const float* src = task.grads[i].a.data();
      for (size_t j = 0; j < task.grads[i].a.size(); ++j)
        dst[j] += src[j] * float(inv_batch);
    }
  }

  double norm = std::sqrt(weights_.grad_norm_sq());
  if (norm > tcfg_.grad_clip && norm > 0) {
    const float s = float(tcfg_.grad_clip / norm);
    for (auto& p : params)
      for (auto& g : p->grad.a) g *= s;
    m.grad_norm = tcfg_.grad_clip;
  } else {
    m.grad_norm = norm;
  }

  adam_.step(m.lr);
  ++iter_;
  m.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

TrainRunResult run_training(Trainer& trainer, const std::string& out_dir,
                            const std::function<void(const StepMetrics&)>& on_step) {
  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
  const bool fresh = !fs::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw std::runtime_error("cannot open metrics stream: " + csv_path);
  if (fresh) csv << "iter,loss,mse,percep,grad_norm,lr,seconds\n";

  auto save_ckpt = [&](const std::string& name) {
    ckpt::OptState opt;
    opt.adam_t = trainer.optimizer().t();
    auto& params = trainer.weights().all();
    for (size_t i = 0; i < params.size(); ++i) {
      opt.m[params[i]->name] = trainer.optimizer().m()[i];
      opt.v[params[i]->name] = trainer.optimizer().v()[i];
    }
    const std::string path = (fs::path(out_dir) / name).string();
    ckpt::save(path, trainer.model_config(), trainer.weights(), trainer.iter(), &opt);
    return path;
  };

  TrainRunResult result;
  bool first = true;
  const int total = trainer.train_config().total_iters;
  const int every = trainer.train_config().checkpoint_every;
  while (trainer.iter() < total) {
    StepMetrics m = trainer.step();
    csv << m.iter << ',' << m.loss << ',' << m.mse << ',' << m.percep << ','
        << m.grad_norm << ',' << m.lr << ',' << m.seconds << '\n';
    csv.flush();
    if (on_step) on_step(m);
    if (!m.finite) {
      result.diverged = true;
      result.final_iter = m.iter;
      result.checkpoint_path = save_ckpt("ckpt_lastgood.rzck");
      return result;
    }
    if (first) {
      result.first_loss = m.loss;
      first = false;
    }
    result.last_loss = m.loss;
    if (every > 0 && trainer.iter() % every == 0 && trainer.iter() < total)
      save_ckpt("ckpt_latest.rzck");
  }
  result.final_iter = trainer.iter();
  result.checkpoint_path = save_ckpt("ckpt_final.rzck");
  return result;
}

}  // namespace rayzer::train
