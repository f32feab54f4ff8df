#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "zoomprop/geometry.hpp"

namespace zoomprop {

// C x H x W grid of backbone-like activations, channel-major and row-major
// within a channel. `stride` is the number of image pixels per cell.
class FeatureImage {
 public:
  FeatureImage(int channels, int height, int width, float stride);
  FeatureImage(int channels, int height, int width, float stride, std::vector<float> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  float stride() const { return stride_; }

  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }
  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  std::span<const float> row(int c, int y) const {
    return std::span<const float>(data_).subspan(index(c, y, 0), static_cast<std::size_t>(width_));
  }

  friend bool operator==(const FeatureImage&, const FeatureImage&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_, height_, width_;
  float stride_;
  std::vector<float> data_;
};

// Half-open cell rectangle [x0,x1) x [y0,y1).
struct CellRect {
  int x0, y0, x1, y1;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  friend bool operator==(const CellRect&, const CellRect&) = default;
};

// floor of the top-left corner, ceil of the bottom-right, clamped to the grid
// and at least one cell per axis. Throws OutOfBounds when the roi misses the
// feature extent entirely.
CellRect image_to_feature_rect(const Box& roi, double stride, int height, int width);

struct PooledVector {
  std::vector<float> values;
};

// Bin i of a G-way split over n cells spans [floor(i*n/G), floor((i+1)*n/G)),
// widened to one cell when empty.
struct BinSpan {
  int begin, end;
};
BinSpan pooling_bin(int i, int n, int grid);

// Fixed-grid max pooling. Output index is c*G*G + i*G + j with i the bin row.
PooledVector roi_pool(const FeatureImage& feat, const Box& roi, int grid);
void roi_pool_into(const FeatureImage& feat, const Box& roi, int grid, std::span<float> out);

// Binary feature file: "FIMG", u32 version, u32 C, u32 H, u32 W, f32 stride,
// then C*H*W f32 values; all little-endian.
void save_features(const FeatureImage& feat, const std::filesystem::path& path);
FeatureImage load_features(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_features(const FeatureImage& feat);
FeatureImage decode_features(std::span<const std::uint8_t> bytes);

}  // namespace zoomprop
