#include "rayzer/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

namespace rayzer::eval {

using nlohmann::json;

// ----- metrics -----

double psnr_from_mse(double mse) {
  if (mse <= 0) return 99.0;
  return std::min(99.0, -10.0 * std::log10(mse));
}

static double mse_between(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: image shapes differ");
  double s = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    const double d = double(a.px[i]) - double(b.px[i]);
    s += d * d;
  }
  return s / double(a.px.size());
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse_between(a, b)); }

double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: image shapes differ");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int H = a.height, W = a.width;
  const int win = std::min({8, H, W});
  const double n = double(win) * double(win);

  // Summed-area tables per channel for x, y, x^2, y^2, xy.
  const int sw = W + 1;
  std::vector<double> sx(size_t(H + 1) * sw), sy(sx.size()), sxx(sx.size()),
      syy(sx.size()), sxy(sx.size());
  double total = 0;
  int count = 0;
  for (int ch = 0; ch < 3; ++ch) {
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const double x = a.at(r, c, ch), y = b.at(r, c, ch);
        const size_t i = size_t(r + 1) * sw + (c + 1);
        const size_t up = i - size_t(sw);
        sx[i] = x + sx[i - 1] + sx[up] - sx[up - 1];
        sy[i] = y + sy[i - 1] + sy[up] - sy[up - 1];
        sxx[i] = x * x + sxx[i - 1] + sxx[up] - sxx[up - 1];
        syy[i] = y * y + syy[i - 1] + syy[up] - syy[up - 1];
        sxy[i] = x * y + sxy[i - 1] + sxy[up] - sxy[up - 1];
      }
    auto box = [&](const std::vector<double>& s, int r, int c) {
      const size_t r0 = size_t(r) * sw, r1 = size_t(r + win) * sw;
      return s[r1 + size_t(c + win)] - s[r1 + size_t(c)] - s[r0 + size_t(c + win)] +
             s[r0 + size_t(c)];
    };
    for (int r = 0; r + win <= H; ++r)
      for (int c = 0; c + win <= W; ++c) {
        const double mx = box(sx, r, c) / n, my = box(sy, r, c) / n;
        const double vx = box(sxx, r, c) / n - mx * mx;
        const double vy = box(syy, r, c) / n - my * my;
        const double cov = box(sxy, r, c) / n - mx * my;
        total += ((2 * mx * my + c1) * (2 * cov + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  }
  return total / double(count);
}

// ----- report files -----

void write_nvs_csv(const NVSReport& r, const std::string& path) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path);
  out << "scene_id,psnr,ssim\n";
  for (const auto& s : r.scenes)
    out << s.scene_id << ',' << s.psnr << ',' << s.ssim << '\n';
}

void write_nvs_json(const NVSReport& r, const std::string& path) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  json j;
  j["mode"] = r.mode;
  j["k_a"] = r.k_a;
  j["k_b"] = r.k_b;
  j["mean_psnr"] = r.mean_psnr;
  j["mean_ssim"] = r.mean_ssim;
  j["scenes"] = json::array();
  for (const auto& s : r.scenes)
    j["scenes"].push_back({{"id", s.scene_id}, {"psnr", s.psnr}, {"ssim", s.ssim}});
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

void write_pose_json(const PoseAccuracyReport& r, const std::string& path) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  json j;
  j["rot_acc_10"] = r.rot_acc[0];
  j["rot_acc_20"] = r.rot_acc[1];
  j["rot_acc_30"] = r.rot_acc[2];
  j["trans_acc_0.1"] = r.trans_acc[0];
  j["trans_acc_0.2"] = r.trans_acc[1];
  j["trans_acc_0.3"] = r.trans_acc[2];
  j["pairs"] = r.n_pairs;
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

// ----- shared protocol sampling -----

ProtocolSample sample_protocol(const synth::Sequence& seq, int scene_ord,
                               const ProtocolConfig& pc) {
  Rng rng = Rng(pc.seed).substream("eval_scene" + std::to_string(scene_ord));
  ProtocolSample s;
  const int K = pc.k_a + pc.k_b;
  s.frames = train::sample_frame_window(int(seq.images.size()), pc.range, K, rng);
  s.split = train::split_views(K, pc.k_a, pc.k_b,
                               pc.random_split ? train::SplitMode::TestRandom
                                               : train::SplitMode::TestEven,
                               rng);
  return s;
}

static model::ViewBatch batch_from(const synth::Sequence& seq,
                                   const std::vector<int>& frames) {
  model::ViewBatch b;
  b.has_gt = true;
  b.gt_intrinsics = seq.meta.intrinsics;
  for (int f : frames) {
    b.images.push_back(seq.images[size_t(f)]);
    b.frame_indices.push_back(f);
    b.gt_poses.push_back(seq.meta.poses[size_t(f)]);
  }
  return b;
}

static void finalize(NVSReport& r) {
  for (const auto& s : r.scenes) {
    r.mean_psnr += s.psnr;
    r.mean_ssim += s.ssim;
  }
  if (!r.scenes.empty()) {
    r.mean_psnr /= double(r.scenes.size());
    r.mean_ssim /= double(r.scenes.size());
  }
}

static int scene_limit(const ProtocolConfig& pc, size_t n) {
  return pc.max_scenes > 0 ? std::min<int>(pc.max_scenes, int(n)) : int(n);
}

// ----- predicted-pose NVS -----

NVSReport eval_nvs(const std::vector<synth::Sequence>& seqs,
                   const model::ModelConfig& mcfg, nn::Weights<float>& w,
                   const ProtocolConfig& pc) {
  NVSReport report;
  report.mode = pc.random_split ? "random" : "even";
  report.k_a = pc.k_a;
  report.k_b = pc.k_b;
  const int limit = scene_limit(pc, seqs.size());
  for (int si = 0; si < limit; ++si) {
    const auto& seq = seqs[size_t(si)];
    ProtocolSample ps = sample_protocol(seq, si, pc);
    model::ViewBatch batch = batch_from(seq, ps.frames);
    ad::Tape<float> tape;
    auto fw = model::forward_selfsup(tape, batch, ps.split, mcfg, w);
    SceneScore sc{si, 0, 0};
    for (size_t bi = 0; bi < ps.split.b.size(); ++bi) {
      Image pred = tensor_to_image(fw.renders[bi].val(), mcfg.image_h, mcfg.image_w);
      const Image& gt = batch.images[size_t(ps.split.b[bi])];
      sc.psnr += psnr(pred, gt);
      sc.ssim += ssim(pred, gt);
    }
    sc.psnr /= double(ps.split.b.size());
    sc.ssim /= double(ps.split.b.size());
    report.scenes.push_back(sc);
  }
  finalize(report);
  return report;
}

// ----- copy-nearest baseline -----

int copy_nearest_choice(const std::vector<int>& frame_indices,
                        const std::vector<int>& a_positions, int b_position) {
  const int target = frame_indices[size_t(b_position)];
  int best = -1, best_gap = 0;
  for (int ap : a_positions) {
    const int gap = std::abs(frame_indices[size_t(ap)] - target);
    if (best < 0 || gap < best_gap ||
        (gap == best_gap &&
         frame_indices[size_t(ap)] < frame_indices[size_t(best)])) {
      best = ap;
      best_gap = gap;
    }
  }
  return best;
}

NVSReport copy_nearest_eval(const std::vector<synth::Sequence>& seqs,
                            const model::ModelConfig& mcfg, nn::Weights<float>& w,
                            const ProtocolConfig& pc) {
  NVSReport report;
  report.mode = "copy-nearest";
  report.k_a = pc.k_a;
  report.k_b = pc.k_b;
  const int limit = scene_limit(pc, seqs.size());
  for (int si = 0; si < limit; ++si) {
    const auto& seq = seqs[size_t(si)];
    ProtocolSample ps = sample_protocol(seq, si, pc);
    model::ViewBatch batch = batch_from(seq, ps.frames);
    model::SceneEncoding enc = model::encode_scene(batch, ps.split, mcfg, w);

    // Render each input view the baseline will copy from, once.
    std::map<int, Image> rendered_a;
    SceneScore sc{si, 0, 0};
    for (int bp : ps.split.b) {
      const int ap = copy_nearest_choice(batch.frame_indices, ps.split.a, bp);
      auto it = rendered_a.find(ap);
      if (it == rendered_a.end()) {
        Image img = model::render_latent_at_pose(enc.latent,
                                                 enc.cameras.poses[size_t(ap)],
                                                 enc.cameras.intrinsics.focal, mcfg, w);
        it = rendered_a.emplace(ap, std::move(img)).first;
      }
      const Image& gt = batch.images[size_t(bp)];
      sc.psnr += psnr(it->second, gt);
      sc.ssim += ssim(it->second, gt);
    }
    sc.psnr /= double(ps.split.b.size());
    sc.ssim /= double(ps.split.b.size());
    report.scenes.push_back(sc);
  }
  finalize(report);
  return report;
}

// ----- pose interpolation -----

train::SplitPlan interp_split(int K, int K_A) {
  if (K_A < 2 || K_A > K) throw std::invalid_argument("interp_split: need 2 <= K_A <= K");
  std::vector<bool> in_a(size_t(K), false);
  for (int j = 0; j < K_A; ++j)
    in_a[size_t(std::lround(double(j) * (K - 1) / double(K_A - 1)))] = true;
  train::SplitPlan plan;
  for (int i = 0; i < K; ++i) (in_a[size_t(i)] ? plan.a : plan.b).push_back(i);
  return plan;
}

static double gt_azimuth_deg(const geom::CameraPose& pose) {
  return std::atan2(pose.t.y(), pose.t.x()) * 180.0 / M_PI;
}

NVSReport interp_eval(const std::vector<synth::Sequence>& seqs,
                      const model::ModelConfig& mcfg, nn::Weights<float>& w,
                      const ProtocolConfig& pc) {
  NVSReport report;
  report.mode = "interp";
  report.k_a = pc.k_a;
  report.k_b = pc.k_b;
  const int limit = scene_limit(pc, seqs.size());
  for (int si = 0; si < limit; ++si) {
    const auto& seq = seqs[size_t(si)];
    Rng rng = Rng(pc.seed).substream("eval_scene" + std::to_string(si));
    const int K = pc.k_a + pc.k_b;
    std::vector<int> frames =
        train::sample_frame_window(int(seq.images.size()), pc.range, K, rng);
    train::SplitPlan split = interp_split(K, pc.k_a);
    model::ViewBatch batch = batch_from(seq, frames);
    model::SceneEncoding enc = model::encode_scene(batch, split, mcfg, w);

    SceneScore sc{si, 0, 0};
    for (int bp : split.b) {
      // Neighboring inputs around the target position.
      int lo = -1, hi = -1;
      for (int ap : split.a) {
        if (ap < bp) lo = ap;
        if (ap > bp) {
          hi = ap;
          break;
        }
      }
      if (lo < 0 || hi < 0)
        throw std::runtime_error("interp_eval: target outside the input azimuth span");
      const double az_lo = gt_azimuth_deg(batch.gt_poses[size_t(lo)]);
      const double az_hi = gt_azimuth_deg(batch.gt_poses[size_t(hi)]);
      const double az_t = gt_azimuth_deg(batch.gt_poses[size_t(bp)]);
      double span = az_hi - az_lo;
      if (span < 0) span += 360.0;
      double off = az_t - az_lo;
      if (off < 0) off += 360.0;
      const double t = span == 0 ? 0.0 : off / span;

      const auto& p0 = enc.cameras.poses[size_t(lo)];
      const auto& p1 = enc.cameras.poses[size_t(hi)];
      const double radius = 0.5 * (p0.t.norm() + p1.t.norm());
      geom::CameraPose pose = geom::slerp_pose(p0, p1, t, radius);
      Image pred = model::render_latent_at_pose(enc.latent, pose,
                                                enc.cameras.intrinsics.focal, mcfg, w);
      const Image& gt = batch.images[size_t(bp)];
      sc.psnr += psnr(pred, gt);
      sc.ssim += ssim(pred, gt);
    }
    sc.psnr /= double(split.b.size());
    sc.ssim /= double(split.b.size());
    report.scenes.push_back(sc);
  }
  finalize(report);
  return report;
}

// ----- pose probing -----

namespace {

struct ProbePair {
  std::vector<float> input;      // [p*_i, p*_c], 2d
  std::array<double, 9> target;  // 6D rotation + translation, canonical-relative
  int seq_ord = 0;
};

std::vector<ProbePair> collect_pairs(const std::vector<synth::Sequence>& seqs,
                                     const model::ModelConfig& mcfg,
                                     nn::Weights<float>& backbone, const ProbeConfig& pc,
                                     const char* stream) {
  std::vector<ProbePair> pairs;
  for (size_t si = 0; si < seqs.size(); ++si) {
    const auto& seq = seqs[si];
    Rng rng = Rng(pc.seed).substream(std::string(stream) + std::to_string(si));
    std::vector<int> frames =
        train::sample_frame_window(int(seq.images.size()), pc.range, pc.K, rng);
    model::ViewBatch batch = batch_from(seq, frames);
    model::CameraPrediction cams = model::infer_cameras(batch, mcfg, backbone);
    const int c = cams.canonical;
    const geom::CameraPose gt_canon_inv = geom::invert(batch.gt_poses[size_t(c)]);
    for (int i = 0; i < batch.K(); ++i) {
      if (i == c) continue;
      ProbePair pp;
      pp.seq_ord = int(si);
      pp.input.resize(size_t(2 * mcfg.dim));
      for (int d = 0; d < mcfg.dim; ++d) {
        pp.input[size_t(d)] = cams.camera_tokens(i, d);
        pp.input[size_t(mcfg.dim + d)] = cams.camera_tokens(c, d);
      }
      geom::CameraPose rel = geom::compose(gt_canon_inv, batch.gt_poses[size_t(i)]);
      auto r6 = geom::rotation_to_6d(rel.rot);
      for (int k = 0; k < 6; ++k) pp.target[size_t(k)] = r6[size_t(k)];
      for (int k = 0; k < 3; ++k) pp.target[size_t(6 + k)] = rel.t[k];
      pairs.push_back(std::move(pp));
    }
  }
  return pairs;
}

}  // namespace

PoseAccuracyReport probe_pose(const std::vector<synth::Sequence>& train_seqs,
                              const std::vector<synth::Sequence>& eval_seqs,
                              const model::ModelConfig& mcfg,
                              nn::Weights<float>& backbone, const ProbeConfig& pc) {
  if (train_seqs.empty() || eval_seqs.empty())
    throw std::invalid_argument("probe_pose: need labeled train and eval sequences");

  auto train_pairs = collect_pairs(train_seqs, mcfg, backbone, pc, "probe_train");
  auto eval_pairs = collect_pairs(eval_seqs, mcfg, backbone, pc, "probe_eval");

  // Fresh two-layer head, same wiring as the model's pose head (identity
  // anchor included); the backbone stays frozen.
  const int d = mcfg.dim;
  nn::Weights<float> head;
  head.add("probe.w1", 2 * d, d, nn::Init::TruncNormal);
  head.add("probe.w2", d, 9, nn::Init::TruncNormal);
  Rng init = Rng(pc.seed).substream("probe_init");
  head.init_params(init);

  Tensor<float> inputs(int(train_pairs.size()), 2 * d);
  Tensor<float> targets(int(train_pairs.size()), 9);
  const std::array<double, 9> anchor{1, 0, 0, 0, 1, 0, 0, 0, 0};
  for (size_t i = 0; i < train_pairs.size(); ++i) {
    for (int c = 0; c < 2 * d; ++c) inputs(int(i), c) = train_pairs[i].input[size_t(c)];
    for (int c = 0; c < 9; ++c)
      targets(int(i), c) = float(train_pairs[i].target[size_t(c)] - anchor[size_t(c)]);
  }

  train::Adam opt(head, 0.9, 0.95, 1e-8);
  for (int step = 0; step < pc.steps; ++step) {
    head.zero_grads();
    ad::Tape<float> tape;
    auto x = tape.constant(inputs);
    auto pred = nn::mlp2(tape, x, head, "probe");
    auto diff = ad::sub(pred, tape.constant(targets));
    auto loss = ad::mean_all(ad::mul(diff, diff));
    tape.backward(loss);
    tape.harvest();
    opt.step(pc.lr);
  }

  // Evaluate per-pair; translation threshold applies after a per-sequence
  // least-squares scale alignment.
  struct Pred {
    geom::Rotation rot;
    geom::Vec3 trans;
  };
  std::vector<Pred> preds(eval_pairs.size());
  {
    Tensor<float> ein(int(eval_pairs.size()), 2 * d);
    for (size_t i = 0; i < eval_pairs.size(); ++i)
      for (int c = 0; c < 2 * d; ++c) ein(int(i), c) = eval_pairs[i].input[size_t(c)];
    ad::Tape<float> tape;
    auto pred = nn::mlp2(tape, tape.constant(std::move(ein)), head, "probe");
    for (size_t i = 0; i < eval_pairs.size(); ++i) {
      std::array<double, 6> r6;
      for (int c = 0; c < 6; ++c)
        r6[size_t(c)] = double(pred.val()(int(i), c)) + anchor[size_t(c)];
      preds[i].rot = geom::rotation_from_6d(r6);
      for (int c = 0; c < 3; ++c)
        preds[i].trans[c] = double(pred.val()(int(i), 6 + c));
    }
  }

  std::map<int, std::pair<double, double>> scale_acc;  // seq -> (sum<t_hat,t>, sum|t_hat|^2)
  for (size_t i = 0; i < eval_pairs.size(); ++i) {
    geom::Vec3 gt_t(eval_pairs[i].target[6], eval_pairs[i].target[7],
                    eval_pairs[i].target[8]);
    auto& acc = scale_acc[eval_pairs[i].seq_ord];
    acc.first += preds[i].trans.dot(gt_t);
    acc.second += preds[i].trans.squaredNorm();
  }

  PoseAccuracyReport rep;
  rep.n_pairs = int(eval_pairs.size());
  const std::array<double, 3> rot_thr{10.0, 20.0, 30.0};
  const std::array<double, 3> t_thr{0.1, 0.2, 0.3};
  for (size_t i = 0; i < eval_pairs.size(); ++i) {
    geom::Rotation gt_rot = geom::rotation_from_6d(
        {eval_pairs[i].target[0], eval_pairs[i].target[1], eval_pairs[i].target[2],
         eval_pairs[i].target[3], eval_pairs[i].target[4], eval_pairs[i].target[5]});
    const double ang = geom::rotation_geodesic_deg(preds[i].rot, gt_rot);
    geom::Vec3 gt_t(eval_pairs[i].target[6], eval_pairs[i].target[7],
                    eval_pairs[i].target[8]);
    const auto& acc = scale_acc[eval_pairs[i].seq_ord];
    const double scale = acc.second > 0 ? acc.first / acc.second : 0.0;
    const double terr =
        (scale * preds[i].trans - gt_t).norm() / std::max(gt_t.norm(), 1e-9);
    for (int k = 0; k < 3; ++k) {
      if (ang < rot_thr[size_t(k)]) rep.rot_acc[size_t(k)] += 1;
      if (terr < t_thr[size_t(k)]) rep.trans_acc[size_t(k)] += 1;
    }
  }
  if (rep.n_pairs > 0)
    for (int k = 0; k < 3; ++k) {
      rep.rot_acc[size_t(k)] /= rep.n_pairs;
      rep.trans_acc[size_t(k)] /= rep.n_pairs;
    }
  return rep;
}

}  // namespace rayzer::eval
