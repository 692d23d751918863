#pragma once

// Templated loss implementation, included by training.hpp.

namespace rayzer::train {

namespace detail {

// Pixel-row index maps over an HxW grid flattened row-major.
inline std::vector<int> shift_left_idx(int H, int W) {
  std::vector<int> idx(size_t(H) * W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) idx[size_t(r) * W + c] = r * W + std::max(c - 1, 0);
  return idx;
}

inline std::vector<int> shift_up_idx(int H, int W) {
  std::vector<int> idx(size_t(H) * W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) idx[size_t(r) * W + c] = std::max(r - 1, 0) * W + c;
  return idx;
}

inline std::vector<int> shift_right_idx(int H, int W) {
  std::vector<int> idx(size_t(H) * W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) idx[size_t(r) * W + c] = r * W + std::min(c + 1, W - 1);
  return idx;
}

inline std::vector<int> shift_down_idx(int H, int W) {
  std::vector<int> idx(size_t(H) * W);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) idx[size_t(r) * W + c] = std::min(r + 1, H - 1) * W + c;
  return idx;
}

inline std::vector<int> subsample_idx(int H, int W) {
  std::vector<int> idx;
  idx.reserve(size_t(H / 2) * size_t(W / 2));
  for (int r = 0; r < H / 2; ++r)
    for (int c = 0; c < W / 2; ++c) idx.push_back(2 * r * W + 2 * c);
  return idx;
}

// [1,2,1]/4 binomial blur along each axis, then stride-2 subsampling.
template <typename T>
ad::Var<T> downsample2(const ad::Var<T>& x, int H, int W) {
  ad::Var<T> bx = ad::cmul(
      ad::add(ad::add(ad::gather_rows(x, shift_left_idx(H, W)), ad::cmul(x, T(2))),
              ad::gather_rows(x, shift_right_idx(H, W))),
      T(0.25));
  ad::Var<T> by = ad::cmul(
      ad::add(ad::add(ad::gather_rows(bx, shift_up_idx(H, W)), ad::cmul(bx, T(2))),
              ad::gather_rows(bx, shift_down_idx(H, W))),
      T(0.25));
  return ad::gather_rows(by, subsample_idx(H, W));
}

// Mean L1 between the horizontal+vertical forward-difference gradients of two
// images at this scale. Border columns/rows difference to themselves (zero).
template <typename T>
ad::Var<T> grad_l1(const ad::Var<T>& a, const ad::Var<T>& b, int H, int W) {
  auto left = shift_left_idx(H, W);
  auto up = shift_up_idx(H, W);
  ad::Var<T> gx = ad::sub(ad::sub(a, ad::gather_rows(a, left)),
                          ad::sub(b, ad::gather_rows(b, left)));
  ad::Var<T> gy = ad::sub(ad::sub(a, ad::gather_rows(a, up)),
                          ad::sub(b, ad::gather_rows(b, up)));
  return ad::cmul(ad::add(ad::mean_all(ad::abs_(gx)), ad::mean_all(ad::abs_(gy))),
                  T(0.5));
}

}  // namespace detail

template <typename T>
LossParts<T> photometric_loss(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& pred,
                              const std::vector<const Image*>& gt, double lambda,
                              int H, int W) {
  if (pred.empty() || pred.size() != gt.size())
    throw std::invalid_argument("photometric_loss: prediction/target count mismatch");

  std::vector<ad::Var<T>> terms;
  double mse_acc = 0, percep_acc = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].rows() != H * W || pred[i].cols() != 3 ||
        gt[i]->height != H || gt[i]->width != W)
      throw std::invalid_argument("photometric_loss: image shape mismatch");
    ad::Var<T> g = tape.constant(image_to_tensor<T>(*gt[i]));
    ad::Var<T> diff = ad::sub(pred[i], g);
    ad::Var<T> mse = ad::mean_all(ad::mul(diff, diff));
    mse_acc += double(mse.scalar());
    if (lambda > 0) {
      ad::Var<T> p = pred[i];
      ad::Var<T> q = g;
      std::vector<ad::Var<T>> scale_terms;
      int h = H, w = W;
      for (int s = 0; s < 3; ++s) {
        scale_terms.push_back(detail::grad_l1(p, q, h, w));
        if (s < 2) {
          if (h < 4 || w < 4) break;  // too small to halve again
          p = detail::downsample2(p, h, w);
          q = detail::downsample2(q, h, w);
          h /= 2;
          w /= 2;
        }
      }
      ad::Var<T> percep = scale_terms[0];
      for (size_t s = 1; s < scale_terms.size(); ++s)
        percep = ad::add(percep, scale_terms[s]);
      percep = ad::cmul(percep, T(1.0 / double(scale_terms.size())));
      percep_acc += double(percep.scalar());
      terms.push_back(ad::add(mse, ad::cmul(percep, T(lambda))));
    } else {
      terms.push_back(mse);
    }
  }

  ad::Var<T> total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  total = ad::cmul(total, T(1.0 / double(terms.size())));

  LossParts<T> out;
  out.total = total;
  out.mse = mse_acc / double(pred.size());
  out.percep = percep_acc / double(pred.size());
  return out;
}

}  // namespace rayzer::train
