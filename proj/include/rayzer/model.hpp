#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rayzer/geometry.hpp"
#include "rayzer/grad_check.hpp"
#include "rayzer/image.hpp"
#include "rayzer/nn.hpp"
#include "rayzer/split.hpp"

namespace rayzer::model {

using ad::Tape;
using ad::Var;
using nn::Weights;

// How predicted cameras condition scene reconstruction and rendering:
//   Pluecker     - pixel-aligned Plucker ray maps (the full model)
//   Se3Token     - per-view embedding of the 10-d (6D rotation + intrinsics)
//                  camera parameterization, no ray maps
//   LatentCamera - the camera tokens p* used directly, no explicit pose
enum class Conditioning { Pluecker, Se3Token, LatentCamera };

enum class Canonical { MiddleFrame, FirstFrame };

struct ModelConfig {
  int image_h = 32;
  int image_w = 32;
  int patch = 8;
  int dim = 64;
  int heads = 4;
  int mlp_ratio = 4;
  int layers_camera = 2;
  int layers_scene = 2;
  int layers_render = 2;
  int latent_tokens = 16;  // L
  Conditioning conditioning = Conditioning::Pluecker;
  Canonical canonical = Canonical::MiddleFrame;

  int grid_h() const { return image_h / patch; }
  int grid_w() const { return image_w / patch; }
  int tokens_per_view() const { return grid_h() * grid_w(); }
  int canonical_index(int K) const {
    return canonical == Canonical::MiddleFrame ? K / 2 : 0;
  }
  nn::LayerConfig layer_config() const { return {dim, heads, mlp_ratio}; }

  void validate() const;

  static ModelConfig toy();
  static ModelConfig paper();
};

// K views of one scene. Index positional embeddings use the position within
// this ordered set (0..K-1); frame_indices keep the original frame numbers
// for evaluation. Ground-truth cameras, when present, are never seen by the
// model - they exist for evaluation only.
struct ViewBatch {
  std::vector<Image> images;
  std::vector<int> frame_indices;
  std::vector<geom::CameraPose> gt_poses;
  geom::Intrinsics gt_intrinsics;
  bool has_gt = false;

  int K() const { return int(images.size()); }
};

struct CameraPrediction {
  std::vector<geom::CameraPose> poses;  // canonical entry is exactly identity
  geom::Intrinsics intrinsics;          // shared focal, config-sized image
  Tensor<float> camera_tokens;          // K x d, the updated p*
  int canonical = 0;
};

// ----- weight construction -----

// Parameter layout only (zero values); checkpoint loading fills it in.
template <typename T>
Weights<T> build_structure(const ModelConfig& cfg);

// Trunc-normal init plus depth-wise scaling of residual projections.
template <typename T>
Weights<T> build_weights(const ModelConfig& cfg, Rng& init_rng);

// ----- differentiable pipeline -----
//
// Everything below runs on a caller-provided tape so training, gradient
// checking (double) and inference (float) share one code path.

template <typename T>
struct CameraEstimate {
  std::vector<Var<T>> rot;     // per view: 3x3, rows are the R columns b1,b2,b3
  std::vector<Var<T>> center;  // per view: 1x3 camera center (world)
  Var<T> focal;                // 1x1, pixels
  Var<T> p_star;               // K x d updated camera tokens
  Var<T> pose_params;          // (K-1) x 9 for the non-canonical views
  int canonical = 0;
  std::vector<int> noncanonical;  // row order of pose_params
};

template <typename T>
struct ForwardResult {
  Var<T> tokens;                 // (K*hw) x d raw image tokens f
  CameraEstimate<T> cameras;
  Var<T> scene_latent;           // L x d  (z*)
  std::vector<Var<T>> renders;   // per B view, (H*W) x 3 in [0,1]
};

struct ForwardOptions {
  // Info-flow hook: when set, the conditioning for set A is injected as
  // constants (one (H*W)x6 ray map per A view in Pluecker mode), cutting the
  // predicted-camera pathway.
  const std::vector<Tensor<float>>* override_rays_a = nullptr;
  // Skip the per-target decoding when only cameras and z* are needed.
  bool render_targets = true;
};

template <typename T>
Var<T> tokenize_images(Tape<T>& tape, const ViewBatch& batch, const ModelConfig& cfg,
                       Weights<T>& w);

template <typename T>
CameraEstimate<T> estimate_cameras(Tape<T>& tape, const Var<T>& tokens, int K,
                                   const ModelConfig& cfg, Weights<T>& w);

// (H*W) x 6 Plucker ray map from a camera node triple. The canonical view
// passes constant identity rotation / zero center; the focal stays
// differentiable either way.
template <typename T>
Var<T> ray_map_node(Tape<T>& tape, const Var<T>& rot, const Var<T>& center,
                    const Var<T>& focal, const ModelConfig& cfg);

// x_A = MLP_fuse([f_A, r_A]); f_A must be raw tokenizer output rows.
template <typename T>
Var<T> fuse_ray_condition(Tape<T>& tape, const Var<T>& f_a, const Var<T>& cond_a,
                          const ModelConfig& cfg, Weights<T>& w);

template <typename T>
Var<T> reconstruct_scene(Tape<T>& tape, const Var<T>& x_a, const ModelConfig& cfg,
                         Weights<T>& w);

// Renders one view from the latent scene and a target ray map; Pluecker mode.
template <typename T>
Var<T> render_view(Tape<T>& tape, const Var<T>& scene, const Var<T>& ray_map,
                   const ModelConfig& cfg, Weights<T>& w);

template <typename T>
ForwardResult<T> forward_selfsup(Tape<T>& tape, const ViewBatch& batch,
                                 const train::SplitPlan& split, const ModelConfig& cfg,
                                 Weights<T>& w, const ForwardOptions& opts = {});

// ----- plain-value helpers -----

template <typename T>
CameraPrediction extract_cameras(const CameraEstimate<T>& est, const ModelConfig& cfg);

// Full-precision camera inference without keeping the graph.
CameraPrediction infer_cameras(const ViewBatch& batch, const ModelConfig& cfg,
                               Weights<float>& w);

// Scene encoding kept as plain values so many targets can be rendered
// without rebuilding the A-side graph.
struct SceneEncoding {
  Tensor<float> latent;  // L x d
  CameraPrediction cameras;
};

SceneEncoding encode_scene(const ViewBatch& batch, const train::SplitPlan& split,
                           const ModelConfig& cfg, Weights<float>& w);

// Renders at an arbitrary camera-to-world pose; the ray map enters as a
// constant. Pluecker conditioning only.
Image render_latent_at_pose(const Tensor<float>& latent, const geom::CameraPose& pose,
                            double focal, const ModelConfig& cfg, Weights<float>& w);

}  // namespace rayzer::model

#include "rayzer/model_impl.hpp"
