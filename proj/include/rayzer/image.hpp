#pragma once

#include <stdexcept>
#include <vector>

#include "rayzer/tensor.hpp"

namespace rayzer {

// Float RGB image, values in [0,1], row-major, channel-interleaved.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> px;  // height*width*3

  Image() = default;
  Image(int h, int w) : height(h), width(w), px(size_t(h) * w * 3, 0.f) {}

  float& at(int r, int c, int ch) { return px[(size_t(r) * width + c) * 3 + ch]; }
  const float& at(int r, int c, int ch) const {
    return px[(size_t(r) * width + c) * 3 + ch];
  }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width;
  }
};

// (H*W)x3 pixel matrix view of an image, matching the autodiff layout.
template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> t(img.height * img.width, 3);
  for (size_t i = 0; i < img.px.size(); ++i) t.a[i] = T(img.px[i]);
  return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int h, int w) {
  if (t.rows != h * w || t.cols != 3)
    throw std::invalid_argument("tensor_to_image: shape mismatch");
  Image img(h, w);
  for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = float(t.a[i]);
  return img;
}

// ViT-style non-overlapping patch extraction: (h*w) rows of 3*s*s values,
// pixel-major then channel within each patch. Exact inverse pair.
template <typename T>
Tensor<T> patchify(const Image& img, int s) {
  if (s <= 0 || img.height % s != 0 || img.width % s != 0)
    throw std::invalid_argument("patchify: patch size must divide image dims");
  const int h = img.height / s, w = img.width / s;
  Tensor<T> out(h * w, 3 * s * s);
  for (int pr = 0; pr < h; ++pr)
    for (int pc = 0; pc < w; ++pc) {
      T* row = &out.a[size_t(pr * w + pc) * out.cols];
      int k = 0;
      for (int py = 0; py < s; ++py)
        for (int px = 0; px < s; ++px)
          for (int ch = 0; ch < 3; ++ch)
            row[k++] = T(img.at(pr * s + py, pc * s + px, ch));
    }
  return out;
}

template <typename T>
Image unpatchify(const Tensor<T>& patches, int H, int W, int s) {
  const int h = H / s, w = W / s;
  if (patches.rows != h * w || patches.cols != 3 * s * s)
    throw std::invalid_argument("unpatchify: shape mismatch");
  Image img(H, W);
  for (int pr = 0; pr < h; ++pr)
    for (int pc = 0; pc < w; ++pc) {
      const T* row = &patches.a[size_t(pr * w + pc) * patches.cols];
      int k = 0;
      for (int py = 0; py < s; ++py)
        for (int px = 0; px < s; ++px)
          for (int ch = 0; ch < 3; ++ch)
            img.at(pr * s + py, pc * s + px, ch) = float(row[k++]);
    }
  return img;
}

}  // namespace rayzer
