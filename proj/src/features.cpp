#include "zoomprop/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "io_util.hpp"
#include "zoomprop/kernels.hpp"

namespace zoomprop {

namespace {
constexpr std::string_view kFeatureMagic = "FIMG";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::size_t kFeatureHeaderBytes = 24;

void check_dims(int c, int h, int w, float stride) {
  if (c <= 0 || h <= 0 || w <= 0) throw DimensionMismatch("feature image dimensions must be positive");
  if (!(stride > 0.0f) || !std::isfinite(stride)) throw DimensionMismatch("feature stride must be positive");
}
}  // namespace

FeatureImage::FeatureImage(int channels, int height, int width, float stride)
    : channels_(channels), height_(height), width_(width), stride_(stride) {
  check_dims(channels, height, width, stride);
  data_.assign(static_cast<std::size_t>(channels) * height * width, 0.0f);
}

FeatureImage::FeatureImage(int channels, int height, int width, float stride, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), stride_(stride), data_(std::move(data)) {
  check_dims(channels, height, width, stride);
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw DimensionMismatch("feature data length does not equal C*H*W");
  }
}

CellRect image_to_feature_rect(const Box& roi, double stride, int height, int width) {
  const double extent_x = width * stride;
  const double extent_y = height * stride;
  if (roi.x1() >= extent_x || roi.y1() >= extent_y || roi.x2() <= 0 || roi.y2() <= 0) {
    std::ostringstream os;
    os << "roi (" << roi.x1() << "," << roi.y1() << "," << roi.x2() << "," << roi.y2()
       << ") lies outside the " << extent_x << "x" << extent_y << " feature extent";
    throw OutOfBounds(os.str());
  }
  auto lo = [](double v, double s, int limit) {
    return std::clamp(static_cast<int>(std::floor(v / s)), 0, limit);
  };
  auto hi = [](double v, double s, int limit) {
    return std::clamp(static_cast<int>(std::ceil(v / s)), 0, limit);
  };
  CellRect r{lo(roi.x1(), stride, width), lo(roi.y1(), stride, height), hi(roi.x2(), stride, width),
             hi(roi.y2(), stride, height)};
  if (r.x1 <= r.x0) {
    if (r.x0 >= width) r.x0 = width - 1;
    r.x1 = r.x0 + 1;
  }
  if (r.y1 <= r.y0) {
    if (r.y0 >= height) r.y0 = height - 1;
    r.y1 = r.y0 + 1;
  }
  return r;
}

BinSpan pooling_bin(int i, int n, int grid) {
  int begin = static_cast<int>(static_cast<long long>(i) * n / grid);
  int end = static_cast<int>(static_cast<long long>(i + 1) * n / grid);
  if (end <= begin) {
    begin = std::min(begin, n - 1);
    end = begin + 1;
  }
  return {begin, end};
}

void roi_pool_into(const FeatureImage& feat, const Box& roi, int grid, std::span<float> out) {
  if (grid < 1) throw DimensionMismatch("pooling grid must be at least 1");
  const std::size_t expected = static_cast<std::size_t>(feat.channels()) * grid * grid;
  if (out.size() != expected) throw DimensionMismatch("pooled output has wrong length");

  const CellRect rect = image_to_feature_rect(roi, feat.stride(), feat.height(), feat.width());
  std::vector<BinSpan> xbins(grid), ybins(grid);
  for (int i = 0; i < grid; ++i) {
    xbins[i] = pooling_bin(i, rect.width(), grid);
    ybins[i] = pooling_bin(i, rect.height(), grid);
  }

  const auto& k = kernels::active();
  std::size_t o = 0;
  for (int c = 0; c < feat.channels(); ++c) {
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        const int x0 = rect.x0 + xbins[j].begin;
        const auto len = static_cast<std::size_t>(xbins[j].end - xbins[j].begin);
        float m = -std::numeric_limits<float>::infinity();
        for (int y = rect.y0 + ybins[i].begin; y < rect.y0 + ybins[i].end; ++y) {
          const float v = k.max_reduce(feat.row(c, y).data() + x0, len);
          m = v > m ? v : m;
        }
        out[o++] = m;
      }
    }
  }
}

PooledVector roi_pool(const FeatureImage& feat, const Box& roi, int grid) {
  if (grid < 1) throw DimensionMismatch("pooling grid must be at least 1");
  PooledVector pv;
  pv.values.resize(static_cast<std::size_t>(feat.channels()) * grid * grid);
  roi_pool_into(feat, roi, grid, pv.values);
  return pv;
}

std::vector<std::uint8_t> encode_features(const FeatureImage& feat) {
  io::ByteWriter w;
  w.reserve(kFeatureHeaderBytes + 4 * feat.data().size());
  w.bytes(kFeatureMagic);
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(feat.channels()));
  w.u32(static_cast<std::uint32_t>(feat.height()));
  w.u32(static_cast<std::uint32_t>(feat.width()));
  w.f32(feat.stride());
  for (float v : feat.data()) w.f32(v);
  return w.take();
}

FeatureImage decode_features(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes, "feature file");
  if (r.bytes(4) != kFeatureMagic) throw FormatError("feature file: bad magic");
  if (const auto v = r.u32(); v != kFeatureVersion) {
    throw FormatError("feature file: unsupported version " + std::to_string(v));
  }
  const std::uint32_t c = r.u32(), h = r.u32(), w = r.u32();
  const float stride = r.f32();
  constexpr auto kMax = static_cast<std::uint64_t>(std::numeric_limits<int>::max());
  if (c == 0 || h == 0 || w == 0 || c > kMax || h > kMax || w > kMax) {
    throw FormatError("feature file: invalid dimensions");
  }
  const auto count = static_cast<std::uint64_t>(c) * h;
  if (count > kMax || count * w > r.remaining() / 4) {
    throw FormatError("feature file: dimensions exceed payload (truncated or corrupt)");
  }
  const std::uint64_t n = count * w;
  if (r.remaining() != n * 4) throw FormatError("feature file: trailing bytes after payload");
  if (!(stride > 0.0f) || !std::isfinite(stride)) throw FormatError("feature file: invalid stride");
  std::vector<float> data(n);
  for (auto& v : data) v = r.f32();
  return FeatureImage(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w), stride, std::move(data));
}

void save_features(const FeatureImage& feat, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_features(feat));
}

FeatureImage load_features(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  try {
    return decode_features(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace zoomprop
