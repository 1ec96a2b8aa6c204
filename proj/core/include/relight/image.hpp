#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

namespace relight {

// Row-major H x W x C buffer of doubles. Values are radiometric; callers
// clamp to [0,1] only at 8/16-bit quantization time.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : w_(width), h_(height), c_(channels),
        data_(size_t(width) * height * channels, fill) {}

  int width() const { return w_; }
  int height() const { return h_; }
  int channels() const { return c_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y, int ch = 0) {
    assert(x >= 0 && x < w_ && y >= 0 && y < h_ && ch < c_);
    return data_[(size_t(y) * w_ + x) * c_ + ch];
  }
  double at(int x, int y, int ch = 0) const {
    assert(x >= 0 && x < w_ && y >= 0 && y < h_ && ch < c_);
    return data_[(size_t(y) * w_ + x) * c_ + ch];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool same_shape(const Image& o) const {
    return w_ == o.w_ && h_ == o.h_ && c_ == o.c_;
  }

 private:
  int w_ = 0, h_ = 0, c_ = 0;
  std::vector<double> data_;
};

// Scalar image plus validity mask; background pixels carry mask=false.
struct MaskedImage {
  Image values;              // 1 channel
  std::vector<uint8_t> mask; // 1 per pixel

  MaskedImage() = default;
  MaskedImage(int w, int h) : values(w, h, 1), mask(size_t(w) * h, 0) {}
  int width() const { return values.width(); }
  int height() const { return values.height(); }
  bool valid(int x, int y) const { return mask[size_t(y) * width() + x] != 0; }
  void set(int x, int y, double v) {
    values.at(x, y) = v;
    mask[size_t(y) * width() + x] = 1;
  }
};

// PNM I/O. 3-channel images go to binary PPM (P6), 1-channel to PGM (P5),
// with maxval 255 or 65535. Values are clamped to [0,1] on write.
void write_pnm(const std::string& path, const Image& img, int bit_depth = 16);
Image read_pnm(const std::string& path);

}  // namespace relight
