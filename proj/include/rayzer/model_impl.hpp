#pragma once

#include <algorithm>
#include <array>

// Templated implementation of the RayZer pipeline. Included by model.hpp.
//
// Token layout conventions (fixed, relied on by slicing):
//   tokenizer output f : view-major, (K*hw) x d, view i rows [i*hw, (i+1)*hw)
//   camera estimator   : {f, p} rows, p = K camera tokens appended after f
//   scene reconstructor: {z, x_A} rows, z = L latent seeds first
//   rendering decoder  : {r, z*} rows, r = hw target tokens first

namespace rayzer::model {

namespace detail {

constexpr double kDirEps = 1e-8;  // guard for in-graph normalizations

template <typename T>
Var<T> normalize_rows(Tape<T>& tape, const Var<T>& x) {
  (void)tape;
  Var<T> inv = ad::rsqrt(ad::rowsum(ad::mul(x, x)), T(kDirEps));
  return ad::mul(x, ad::colbcast(inv, x.cols()));
}

// Per-row cross product of two Nx3 values.
template <typename T>
Var<T> cross_rows(const Var<T>& a, const Var<T>& b) {
  Var<T> ax = ad::slice_cols(a, 0, 1), ay = ad::slice_cols(a, 1, 2),
         az = ad::slice_cols(a, 2, 3);
  Var<T> bx = ad::slice_cols(b, 0, 1), by = ad::slice_cols(b, 1, 2),
         bz = ad::slice_cols(b, 2, 3);
  return ad::concat_cols<T>({ad::sub(ad::mul(ay, bz), ad::mul(az, by)),
                             ad::sub(ad::mul(az, bx), ad::mul(ax, bz)),
                             ad::sub(ad::mul(ax, by), ad::mul(ay, bx))});
}

// 6D -> rotation (Gram-Schmidt, eps-guarded), batched over rows.
// Returns {b1, b2, b3}: the columns of R, each Nx3.
template <typename T>
std::array<Var<T>, 3> rotation_from_6d_rows(Tape<T>& tape, const Var<T>& p9) {
  Var<T> a1 = ad::slice_cols(p9, 0, 3);
  Var<T> a2 = ad::slice_cols(p9, 3, 6);
  Var<T> b1 = normalize_rows(tape, a1);
  Var<T> proj = ad::rowsum(ad::mul(b1, a2));
  Var<T> b2 = normalize_rows(tape, ad::sub(a2, ad::mul(ad::colbcast(proj, 3), b1)));
  Var<T> b3 = cross_rows(b1, b2);
  return {b1, b2, b3};
}

// Pixel-center offsets (u+0.5-cx, v+0.5-cy), one row per pixel.
template <typename T>
Tensor<T> pixel_offsets(const ModelConfig& cfg) {
  Tensor<T> uv(cfg.image_h * cfg.image_w, 2);
  const double cx = 0.5 * cfg.image_w, cy = 0.5 * cfg.image_h;
  for (int v = 0; v < cfg.image_h; ++v)
    for (int u = 0; u < cfg.image_w; ++u) {
      uv(v * cfg.image_w + u, 0) = T(u + 0.5 - cx);
      uv(v * cfg.image_w + u, 1) = T(v + 0.5 - cy);
    }
  return uv;
}

template <typename T>
Var<T> identity_rot_const(Tape<T>& tape) {
  Tensor<T> m(3, 3);
  m(0, 0) = m(1, 1) = m(2, 2) = T(1);
  return tape.constant(std::move(m));
}

// The anchor added to the pose head output: 6D identity + zero translation,
// so a zeroed head yields exactly identity poses.
template <typename T>
Tensor<T> identity_anchor_row() {
  Tensor<T> a(1, 9);
  a(0, 0) = T(1);
  a(0, 4) = T(1);
  return a;
}

template <typename T>
Var<T> ray_tokens(Tape<T>& tape, const Var<T>& ray_map, const ModelConfig& cfg,
                  Weights<T>& w, const std::string& embed_name) {
  Var<T> patches =
      ad::patchify_ch(ray_map, cfg.image_h, cfg.image_w, 6, cfg.patch);
  return nn::linear(tape, patches, w.get(embed_name));
}

}  // namespace detail

// ----- weights -----

template <typename T>
Weights<T> build_structure(const ModelConfig& cfg) {
  cfg.validate();
  Weights<T> w;
  const int d = cfg.dim;
  const int ps = 3 * cfg.patch * cfg.patch;
  const nn::LayerConfig lc = cfg.layer_config();

  w.add("tok.patch_embed", ps, d, nn::Init::TruncNormal);
  w.add("tok.pe_fuse", 2 * d, d, nn::Init::TruncNormal);

  w.add("cam.token", 1, d, nn::Init::TruncNormal);
  nn::add_stack_params(w, "cam.stack", cfg.layers_camera, lc);
  nn::add_mlp2_params(w, "cam.pose_head", 2 * d, d, 9);
  nn::add_mlp2_params(w, "cam.focal_head", d, d, 1);

  if (cfg.conditioning == Conditioning::Pluecker)
    w.add("scene.ray_embed", 6 * cfg.patch * cfg.patch, d, nn::Init::TruncNormal);
  if (cfg.conditioning == Conditioning::Se3Token)
    nn::add_mlp2_params(w, "scene.pose_embed", 10, d, d);
  nn::add_mlp2_params(w, "scene.fuse", 2 * d, d, d);
  w.add("scene.latent", cfg.latent_tokens, d, nn::Init::TruncNormal);
  nn::add_stack_params(w, "scene.stack", cfg.layers_scene, lc);

  if (cfg.conditioning == Conditioning::Pluecker)
    w.add("render.ray_embed", 6 * cfg.patch * cfg.patch, d, nn::Init::TruncNormal);
  else
    w.add("render.spatial_tokens", cfg.tokens_per_view(), d, nn::Init::TruncNormal);
  nn::add_stack_params(w, "render.stack", cfg.layers_render, lc);
  nn::add_mlp2_params(w, "render.rgb_head", d, d, ps);
  return w;
}

template <typename T>
Weights<T> build_weights(const ModelConfig& cfg, Rng& init_rng) {
  Weights<T> w = build_structure<T>(cfg);
  w.init_params(init_rng);
  nn::apply_depthwise_init(w, "cam.stack", cfg.layers_camera);
  nn::apply_depthwise_init(w, "scene.stack", cfg.layers_scene);
  nn::apply_depthwise_init(w, "render.stack", cfg.layers_render);
  return w;
}

// ----- tokenization -----

template <typename T>
Var<T> tokenize_images(Tape<T>& tape, const ViewBatch& batch, const ModelConfig& cfg,
                       Weights<T>& w) {
  const int K = batch.K();
  if (K < 2) throw std::invalid_argument("tokenize_images: need at least 2 views");
  for (const auto& img : batch.images)
    if (img.height != cfg.image_h || img.width != cfg.image_w)
      throw std::invalid_argument(
          "tokenize_images: image size " + std::to_string(img.width) + "x" +
          std::to_string(img.height) + " does not match config " +
          std::to_string(cfg.image_w) + "x" + std::to_string(cfg.image_h));

  const int hw = cfg.tokens_per_view();
  const int ps = 3 * cfg.patch * cfg.patch;
  Tensor<T> patches(K * hw, ps);
  Tensor<T> pe(K * hw, 2 * cfg.dim);
  for (int i = 0; i < K; ++i) {
    Tensor<T> p = patchify<T>(batch.images[size_t(i)], cfg.patch);
    std::copy(p.a.begin(), p.a.end(), patches.a.begin() + size_t(i) * hw * ps);
    auto idx_pe = nn::sinusoidal_pe(i, cfg.dim);
    for (int pr = 0; pr < cfg.grid_h(); ++pr)
      for (int pc = 0; pc < cfg.grid_w(); ++pc) {
        auto sp = nn::spatial_pe(pr, pc, cfg.dim);
        T* row = &pe.a[size_t(i * hw + pr * cfg.grid_w() + pc) * pe.cols];
        for (int c = 0; c < cfg.dim; ++c) {
          row[c] = T(sp[size_t(c)]);
          row[cfg.dim + c] = T(idx_pe[size_t(c)]);
        }
      }
  }
  Var<T> f = nn::linear(tape, tape.constant(std::move(patches)), w.get("tok.patch_embed"));
  Var<T> pos = nn::linear(tape, tape.constant(std::move(pe)), w.get("tok.pe_fuse"));
  return ad::add(f, pos);
}

// ----- camera estimation -----

template <typename T>
CameraEstimate<T> estimate_cameras(Tape<T>& tape, const Var<T>& tokens, int K,
                                   const ModelConfig& cfg, Weights<T>& w) {
  const int hw = cfg.tokens_per_view();
  if (tokens.rows() != K * hw)
    throw std::invalid_argument("estimate_cameras: token count mismatch");

  // Camera token repeated K times, plus the image index embedding.
  Tensor<T> idx_pe(K, cfg.dim);
  for (int i = 0; i < K; ++i) {
    auto v = nn::sinusoidal_pe(i, cfg.dim);
    for (int c = 0; c < cfg.dim; ++c) idx_pe(i, c) = T(v[size_t(c)]);
  }
  Var<T> p = ad::add(ad::rowbcast(tape.leaf(w.get("cam.token")), K),
                     tape.constant(std::move(idx_pe)));

  Var<T> y = ad::concat_rows<T>({tokens, p});
  y = nn::transformer_stack(tape, y, w, "cam.stack", cfg.layers_camera,
                            cfg.layer_config());
  // f* (the first K*hw rows) is context only and is dropped here.
  Var<T> p_star = ad::slice_rows(y, K * hw, K * hw + K);

  CameraEstimate<T> est;
  est.canonical = cfg.canonical_index(K);
  est.p_star = p_star;
  for (int i = 0; i < K; ++i)
    if (i != est.canonical) est.noncanonical.push_back(i);

  Var<T> canon = ad::slice_rows(p_star, est.canonical, est.canonical + 1);
  Var<T> others = ad::gather_rows(p_star, est.noncanonical);
  Var<T> head_in =
      ad::concat_cols<T>({others, ad::rowbcast(canon, int(est.noncanonical.size()))});
  Var<T> raw = nn::mlp2(tape, head_in, w, "cam.pose_head");
  est.pose_params = ad::add(
      raw, ad::rowbcast(tape.constant(detail::identity_anchor_row<T>()),
                        int(est.noncanonical.size())));

  auto cols = detail::rotation_from_6d_rows(tape, est.pose_params);
  Var<T> trans = ad::slice_cols(est.pose_params, 6, 9);

  est.rot.resize(size_t(K));
  est.center.resize(size_t(K));
  for (int r = 0; r < int(est.noncanonical.size()); ++r) {
    const int view = est.noncanonical[size_t(r)];
    est.rot[size_t(view)] = ad::concat_rows<T>({ad::slice_rows(cols[0], r, r + 1),
                                                ad::slice_rows(cols[1], r, r + 1),
                                                ad::slice_rows(cols[2], r, r + 1)});
    est.center[size_t(view)] = ad::slice_rows(trans, r, r + 1);
  }
  est.rot[size_t(est.canonical)] = detail::identity_rot_const(tape);
  est.center[size_t(est.canonical)] = tape.constant(Tensor<T>(1, 3));

  Var<T> focal_raw = nn::mlp2(tape, canon, w, "cam.focal_head");
  est.focal = ad::cmul(ad::exp_(focal_raw), T(cfg.image_w));
  return est;
}

// ----- ray maps -----

template <typename T>
Var<T> ray_map_node(Tape<T>& tape, const Var<T>& rot, const Var<T>& center,
                    const Var<T>& focal, const ModelConfig& cfg) {
  const int n = cfg.image_h * cfg.image_w;
  Var<T> uv = tape.constant(detail::pixel_offsets<T>(cfg));
  Var<T> ones = tape.constant(Tensor<T>::full(n, 1, T(1)));
  Var<T> xy = ad::scalar_mul(uv, ad::reciprocal(focal));
  Var<T> d_cam = ad::concat_cols<T>({xy, ones});
  // rot rows are the columns of R, so d_cam * rot = R * d_cam per row.
  Var<T> dir = detail::normalize_rows(tape, ad::matmul(d_cam, rot));

  Var<T> dx = ad::slice_cols(dir, 0, 1), dy = ad::slice_cols(dir, 1, 2),
         dz = ad::slice_cols(dir, 2, 3);
  Var<T> cx = ad::slice_cols(center, 0, 1), cy = ad::slice_cols(center, 1, 2),
         cz = ad::slice_cols(center, 2, 3);
  Var<T> mx = ad::sub(ad::scalar_mul(dz, cy), ad::scalar_mul(dy, cz));
  Var<T> my = ad::sub(ad::scalar_mul(dx, cz), ad::scalar_mul(dz, cx));
  Var<T> mz = ad::sub(ad::scalar_mul(dy, cx), ad::scalar_mul(dx, cy));
  return ad::concat_cols<T>({dir, mx, my, mz});
}

// ----- scene reconstruction -----

template <typename T>
Var<T> fuse_ray_condition(Tape<T>& tape, const Var<T>& f_a, const Var<T>& cond_a,
                          const ModelConfig& cfg, Weights<T>& w) {
  if (f_a.rows() != cond_a.rows())
    throw std::invalid_argument("fuse_ray_condition: token counts differ, " +
                                std::to_string(f_a.rows()) + " image vs " +
                                std::to_string(cond_a.rows()) + " condition");
  return nn::mlp2(tape, ad::concat_cols<T>({f_a, cond_a}), w, "scene.fuse");
}

template <typename T>
Var<T> reconstruct_scene(Tape<T>& tape, const Var<T>& x_a, const ModelConfig& cfg,
                         Weights<T>& w) {
  Var<T> y = ad::concat_rows<T>({tape.leaf(w.get("scene.latent")), x_a});
  y = nn::transformer_stack(tape, y, w, "scene.stack", cfg.layers_scene,
                            cfg.layer_config());
  return ad::slice_rows(y, 0, cfg.latent_tokens);  // x*_A is discarded
}

// ----- rendering -----

template <typename T>
Var<T> decode_rgb(Tape<T>& tape, const Var<T>& r_star, const ModelConfig& cfg,
                  Weights<T>& w) {
  Var<T> rgb = ad::sigmoid(nn::mlp2(tape, r_star, w, "render.rgb_head"));
  return ad::unpatchify_ch(rgb, cfg.image_h, cfg.image_w, 3, cfg.patch);
}

template <typename T>
Var<T> render_view(Tape<T>& tape, const Var<T>& scene, const Var<T>& ray_map,
                   const ModelConfig& cfg, Weights<T>& w) {
  Var<T> r = detail::ray_tokens(tape, ray_map, cfg, w, "render.ray_embed");
  Var<T> y = ad::concat_rows<T>({r, scene});
  y = nn::transformer_stack(tape, y, w, "render.stack", cfg.layers_render,
                            cfg.layer_config());
  return decode_rgb(tape, ad::slice_rows(y, 0, cfg.tokens_per_view()), cfg, w);
}

// Token-conditioned variant (Se3Token / LatentCamera): learnable patch-aligned
// spatial tokens are updated together with the view's camera token and the
// scene latents.
template <typename T>
Var<T> render_view_token(Tape<T>& tape, const Var<T>& scene, const Var<T>& cam_token,
                         const ModelConfig& cfg, Weights<T>& w) {
  Var<T> spatial = tape.leaf(w.get("render.spatial_tokens"));
  Var<T> y = ad::concat_rows<T>({spatial, cam_token, scene});
  y = nn::transformer_stack(tape, y, w, "render.stack", cfg.layers_render,
                            cfg.layer_config());
  return decode_rgb(tape, ad::slice_rows(y, 0, cfg.tokens_per_view()), cfg, w);
}

// ----- full pipeline -----

namespace detail {

// 10-d camera parameterization for Se3Token mode: 6D rotation + (fx, fy, cx, cy).
template <typename T>
Var<T> se3_cam_token(Tape<T>& tape, const CameraEstimate<T>& est, int view,
                     const ModelConfig& cfg, Weights<T>& w) {
  Var<T> rot6;
  if (view == est.canonical) {
    Tensor<T> id6(1, 6);
    id6(0, 0) = T(1);
    id6(0, 4) = T(1);
    rot6 = tape.constant(std::move(id6));
  } else {
    int r = int(std::find(est.noncanonical.begin(), est.noncanonical.end(), view) -
                est.noncanonical.begin());
    rot6 = ad::slice_cols(ad::slice_rows(est.pose_params, r, r + 1), 0, 6);
  }
  Tensor<T> pp_t(1, 2);
  pp_t(0, 0) = T(0.5 * cfg.image_w);
  pp_t(0, 1) = T(0.5 * cfg.image_h);
  Var<T> pp = tape.constant(std::move(pp_t));
  Var<T> in = ad::concat_cols<T>({rot6, est.focal, est.focal, pp});
  return nn::mlp2(tape, in, w, "scene.pose_embed");
}

}  // namespace detail

template <typename T>
ForwardResult<T> forward_selfsup(Tape<T>& tape, const ViewBatch& batch,
                                 const train::SplitPlan& split, const ModelConfig& cfg,
                                 Weights<T>& w, const ForwardOptions& opts) {
  const int K = batch.K();
  if (!split.valid() || split.K() != K)
    throw std::invalid_argument("forward_selfsup: split is not a disjoint cover");
  const int hw = cfg.tokens_per_view();

  ForwardResult<T> out;
  out.tokens = tokenize_images(tape, batch, cfg, w);
  out.cameras = estimate_cameras(tape, out.tokens, K, cfg, w);

  // Per-view conditioning for set A. Raw tokens f (not f*) keep set-B pixels
  // out of the scene pathway; the only remaining B influence is through the
  // predicted cameras, which the override hook can freeze.
  std::vector<Var<T>> f_slices, cond_slices;
  for (size_t ai = 0; ai < split.a.size(); ++ai) {
    const int v = split.a[ai];
    f_slices.push_back(ad::slice_rows(out.tokens, v * hw, (v + 1) * hw));
    switch (cfg.conditioning) {
      case Conditioning::Pluecker: {
        Var<T> rays;
        if (opts.override_rays_a) {
          rays = tape.constant(opts.override_rays_a->at(ai).template cast<T>());
        } else {
          rays = ray_map_node(tape, out.cameras.rot[size_t(v)],
                              out.cameras.center[size_t(v)], out.cameras.focal, cfg);
        }
        cond_slices.push_back(
            detail::ray_tokens(tape, rays, cfg, w, "scene.ray_embed"));
        break;
      }
      case Conditioning::Se3Token:
        cond_slices.push_back(
            ad::rowbcast(detail::se3_cam_token(tape, out.cameras, v, cfg, w), hw));
        break;
      case Conditioning::LatentCamera:
        cond_slices.push_back(
            ad::rowbcast(ad::slice_rows(out.cameras.p_star, v, v + 1), hw));
        break;
    }
  }
  Var<T> x_a = fuse_ray_condition(tape, ad::concat_rows(f_slices),
                                  ad::concat_rows(cond_slices), cfg, w);
  out.scene_latent = reconstruct_scene(tape, x_a, cfg, w);

  if (opts.render_targets) {
    out.renders.reserve(split.b.size());
    for (int v : split.b) {
      switch (cfg.conditioning) {
        case Conditioning::Pluecker: {
          Var<T> rays = ray_map_node(tape, out.cameras.rot[size_t(v)],
                                     out.cameras.center[size_t(v)], out.cameras.focal, cfg);
          out.renders.push_back(render_view(tape, out.scene_latent, rays, cfg, w));
          break;
        }
        case Conditioning::Se3Token:
          out.renders.push_back(render_view_token(
              tape, out.scene_latent,
              detail::se3_cam_token(tape, out.cameras, v, cfg, w), cfg, w));
          break;
        case Conditioning::LatentCamera:
          out.renders.push_back(render_view_token(
              tape, out.scene_latent,
              ad::slice_rows(out.cameras.p_star, v, v + 1), cfg, w));
          break;
      }
    }
  }
  return out;
}

// ----- plain extraction -----

template <typename T>
CameraPrediction extract_cameras(const CameraEstimate<T>& est, const ModelConfig& cfg) {
  CameraPrediction pred;
  pred.canonical = est.canonical;
  pred.intrinsics.focal = double(est.focal.scalar());
  pred.intrinsics.width = cfg.image_w;
  pred.intrinsics.height = cfg.image_h;
  const int K = int(est.rot.size());
  pred.poses.resize(size_t(K));
  for (int v = 0; v < K; ++v) {
    if (v == est.canonical) continue;  // stays exactly identity
    geom::CameraPose p;
    const auto& m = est.rot[size_t(v)].val();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) p.rot.m(c, r) = double(m(r, c));  // rows -> columns
    const auto& t = est.center[size_t(v)].val();
    p.t = geom::Vec3(double(t(0, 0)), double(t(0, 1)), double(t(0, 2)));
    pred.poses[size_t(v)] = p;
  }
  pred.camera_tokens = est.p_star.val().template cast<float>();
  return pred;
}

}  // namespace rayzer::model
