#include "rayzer/model.hpp"

namespace rayzer::model {

void ModelConfig::validate() const {
  if (image_h <= 0 || image_w <= 0 || patch <= 0)
    throw std::invalid_argument("ModelConfig: non-positive image/patch size");
  if (image_h % patch != 0 || image_w % patch != 0)
    throw std::invalid_argument("ModelConfig: patch size must divide image dims");
  if (dim % heads != 0)
    throw std::invalid_argument("ModelConfig: dim must be divisible by heads");
  if (dim % 4 != 0)
    throw std::invalid_argument("ModelConfig: dim must be divisible by 4 (2-D sin/cos)");
  if (layers_camera < 1 || layers_scene < 1 || layers_render < 1)
    throw std::invalid_argument("ModelConfig: layer counts must be >= 1");
  if (latent_tokens < 1) throw std::invalid_argument("ModelConfig: latent_tokens >= 1");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.image_h = c.image_w = 32;
  c.patch = 8;
  c.dim = 64;
  c.heads = 4;
  c.layers_camera = c.layers_scene = c.layers_render = 2;
  c.latent_tokens = 16;
  return c;
}

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.image_h = c.image_w = 256;
  c.patch = 16;
  c.dim = 768;
  c.heads = 12;
  c.layers_camera = c.layers_scene = c.layers_render = 8;
  c.latent_tokens = 3072;
  return c;
}

CameraPrediction infer_cameras(const ViewBatch& batch, const ModelConfig& cfg,
                               Weights<float>& w) {
  ad::Tape<float> tape;
  auto tokens = tokenize_images(tape, batch, cfg, w);
  auto est = estimate_cameras(tape, tokens, batch.K(), cfg, w);
  return extract_cameras(est, cfg);
}

SceneEncoding encode_scene(const ViewBatch& batch, const train::SplitPlan& split,
                           const ModelConfig& cfg, Weights<float>& w) {
  ad::Tape<float> tape;
  ForwardOptions opts;
  opts.render_targets = false;
  auto fw = forward_selfsup(tape, batch, split, cfg, w, opts);
  SceneEncoding enc;
  enc.latent = fw.scene_latent.val();
  enc.cameras = extract_cameras(fw.cameras, cfg);
  return enc;
}

Image render_latent_at_pose(const Tensor<float>& latent, const geom::CameraPose& pose,
                            double focal, const ModelConfig& cfg, Weights<float>& w) {
  if (cfg.conditioning != Conditioning::Pluecker)
    throw std::invalid_argument(
        "render_latent_at_pose: arbitrary poses need Pluecker conditioning");
  geom::Intrinsics intr;
  intr.focal = focal;
  intr.width = cfg.image_w;
  intr.height = cfg.image_h;
  geom::RayMap rm = geom::pluecker_rays(pose, intr);
  Tensor<float> rays(cfg.image_h * cfg.image_w, 6);
  for (int i = 0; i < rays.rows; ++i) {
    for (int c = 0; c < 3; ++c) {
      rays(i, c) = float(rm.rays[size_t(i)].dir[c]);
      rays(i, 3 + c) = float(rm.rays[size_t(i)].moment[c]);
    }
  }
  ad::Tape<float> tape;
  auto img = render_view(tape, tape.constant(latent), tape.constant(std::move(rays)),
                         cfg, w);
  return tensor_to_image(img.val(), cfg.image_h, cfg.image_w);
}

}  // namespace rayzer::model
