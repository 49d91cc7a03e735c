#pragma once

/// Multiscale scene-complexity estimation: five image statistics on the
/// 192x192 canvas combined into a single weighted score S_c.
///
///   S_c = w1*H_I + w2*E_d + w3*ln(1 + var_L)/8 + w4*mean_sobel/16 + w5*r_J
///
/// All convolutions use replicate border padding.

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "saec/codec.hpp"
#include "saec/error.hpp"
#include "saec/format.hpp"
#include "saec/image.hpp"
#include "saec/parallel.hpp"

namespace saec::complexity {

/// Nonnegative weights for the five features; at least one must be positive.
class ComplexityWeights {
 public:
  static constexpr std::array<double, 5> kDefault = {0.30, 0.25, 0.20, 0.15, 0.10};

  ComplexityWeights() : w_(kDefault) {}

  explicit ComplexityWeights(std::array<double, 5> w) : w_(w) {
    bool any_positive = false;
    for (double v : w_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorCode::InvalidArgument, "complexity weights must be finite and >= 0");
      }
      any_positive = any_positive || v > 0.0;
    }
    if (!any_positive) throw Error(ErrorCode::InvalidArgument, "at least one weight must be > 0");
  }

  /// Parses "w1,w2,w3,w4,w5".
  static ComplexityWeights parse(const std::string& text) {
    std::array<double, 5> w{};
    std::stringstream ss(text);
    std::string item;
    std::size_t i = 0;
    while (std::getline(ss, item, ',')) {
      if (i >= 5) throw Error(ErrorCode::InvalidArgument, "expected exactly 5 weights: " + text);
      try {
        std::size_t used = 0;
        w[i] = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, "bad weight '" + item + "'");
      }
      ++i;
    }
    if (i != 5) throw Error(ErrorCode::InvalidArgument, "expected exactly 5 weights: " + text);
    return ComplexityWeights(w);
  }

  double operator[](std::size_t i) const noexcept { return w_[i]; }
  const std::array<double, 5>& values() const noexcept { return w_; }

  friend bool operator==(const ComplexityWeights&, const ComplexityWeights&) = default;

 private:
  std::array<double, 5> w_;
};

struct ComplexityFeatures {
  double h_i = 0.0;         // normalized intensity entropy, [0,1]
  double e_d = 0.0;         // Canny edge-pixel fraction, [0,1]
  double lap_var = 0.0;     // population variance of the 4-neighbour Laplacian
  double sobel_mean = 0.0;  // mean Sobel gradient magnitude, intensity units
  double r_j = 0.0;         // mean |I - I'| / 255 after one lossy cycle
};

struct ComplexityScore {
  double s_c = 0.0;
  ComplexityFeatures features;
  ComplexityWeights weights;
};

/// The weighted combination; natural log in the Laplacian term.
inline double combine(const ComplexityFeatures& f, const ComplexityWeights& w) {
  return w[0] * f.h_i + w[1] * f.e_d + w[2] * std::log1p(f.lap_var) / 8.0 +
         w[3] * f.sobel_mean / 16.0 + w[4] * f.r_j;
}

namespace detail {

/// Dense double-valued plane with replicate-border reads.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<double> v;

  Plane(int w, int h) : width(w), height(h), v(static_cast<std::size_t>(w) * h, 0.0) {}

  explicit Plane(const GrayImage& img) : Plane(img.width(), img.height()) {
    const auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) v[i] = px[i];
  }

  double& operator()(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
  double clamped(int x, int y) const {
    return (*this)(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }
};

struct Gradients {
  Plane gx;
  Plane gy;
};

inline Gradients sobel(const Plane& p) {
  Gradients g{Plane(p.width, p.height), Plane(p.width, p.height)};
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      const double tl = p.clamped(x - 1, y - 1), tc = p.clamped(x, y - 1), tr = p.clamped(x + 1, y - 1);
      const double ml = p.clamped(x - 1, y), mr = p.clamped(x + 1, y);
      const double bl = p.clamped(x - 1, y + 1), bc = p.clamped(x, y + 1), br = p.clamped(x + 1, y + 1);
      g.gx(x, y) = (tr + 2.0 * mr + br) - (tl + 2.0 * ml + bl);
      g.gy(x, y) = (bl + 2.0 * bc + br) - (tl + 2.0 * tc + tr);
    }
  }
  return g;
}

/// Separable 5-tap Gaussian, sigma = 1.4, normalized to unit sum.
inline Plane gaussian5(const Plane& p, double sigma = 1.4) {
  std::array<double, 5> k{};
  double sum = 0.0;
  for (int i = -2; i <= 2; ++i) {
    k[i + 2] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + 2];
  }
  for (double& v : k) v /= sum;

  Plane tmp(p.width, p.height);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * p.clamped(x + i, y);
      tmp(x, y) = s;
    }
  Plane out(p.width, p.height);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp.clamped(x, y + i);
      out(x, y) = s;
    }
  return out;
}

inline void require_canvas(const GrayImage& img, const char* what) {
  if (img.width() != kCanvasSide || img.height() != kCanvasSide) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + " expects a " + std::to_string(kCanvasSide) + "x" +
                    std::to_string(kCanvasSide) + " canvas, got " + std::to_string(img.width()) +
                    "x" + std::to_string(img.height()));
  }
}

}  // namespace detail

/// Canny hyperparameters. Thresholds apply to the gradient magnitude of the
/// blurred image, clamped to the 8-bit range before comparison.
struct CannyParams {
  double sigma = 1.4;
  double low = 50.0;
  double high = 150.0;
};

/// Binary Canny edge map (1 = edge), row-major.
inline std::vector<std::uint8_t> canny_edges(const GrayImage& img, const CannyParams& params = {}) {
  const int w = img.width();
  const int h = img.height();
  const detail::Plane blurred = detail::gaussian5(detail::Plane(img), params.sigma);
  const detail::Gradients g = detail::sobel(blurred);

  detail::Plane mag(w, h);
  for (std::size_t i = 0; i < mag.v.size(); ++i) mag.v[i] = std::hypot(g.gx.v[i], g.gy.v[i]);
  auto mag_or_zero = [&](int x, int y) {
    return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : mag(x, y);
  };

  // Non-maximum suppression across the gradient direction, quantized to four
  // sectors. Ties keep the pixel on the negative side only, so a symmetric
  // ridge yields a single-pixel line.
  enum : std::uint8_t { kNone = 0, kWeak = 1, kStrong = 2 };
  std::vector<std::uint8_t> cls(static_cast<std::size_t>(w) * h, kNone);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = mag(x, y);
      if (m <= 0.0) continue;
      double angle = std::atan2(g.gy(x, y), g.gx(x, y)) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      int dx = 1;
      int dy = 0;
      if (angle >= 22.5 && angle < 67.5) {
        dx = 1, dy = 1;
      } else if (angle >= 67.5 && angle < 112.5) {
        dx = 0, dy = 1;
      } else if (angle >= 112.5 && angle < 157.5) {
        dx = -1, dy = 1;
      }
      if (!(m > mag_or_zero(x - dx, y - dy) && m >= mag_or_zero(x + dx, y + dy))) continue;
      const double clamped = std::min(m, 255.0);
      if (clamped >= params.high) {
        cls[static_cast<std::size_t>(y) * w + x] = kStrong;
      } else if (clamped >= params.low) {
        cls[static_cast<std::size_t>(y) * w + x] = kWeak;
      }
    }
  }

  // Hysteresis: weak pixels survive when 8-connected to a strong one.
  std::vector<std::uint8_t> edges(cls.size(), 0);
  std::deque<std::pair<int, int>> frontier;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (cls[static_cast<std::size_t>(y) * w + x] == kStrong) {
        edges[static_cast<std::size_t>(y) * w + x] = 1;
        frontier.emplace_back(x, y);
      }
  while (!frontier.empty()) {
    const auto [x, y] = frontier.front();
    frontier.pop_front();
    for (int ny = y - 1; ny <= y + 1; ++ny)
      for (int nx = x - 1; nx <= x + 1; ++nx) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t idx = static_cast<std::size_t>(ny) * w + nx;
        if (cls[idx] == kWeak && !edges[idx]) {
          edges[idx] = 1;
          frontier.emplace_back(nx, ny);
        }
      }
  }
  return edges;
}

/// Normalized 256-bin histogram entropy, -(1/ln 256) sum p ln(p + 1e-12), clamped to [0,1].
inline double intensity_entropy(const GrayImage& img) {
  if (img.empty()) throw Error(ErrorCode::InvalidDimension, "entropy of an empty image");
  std::array<std::size_t, 256> hist{};
  for (std::uint8_t v : img.pixels()) ++hist[v];
  const double n = static_cast<double>(img.size());
  constexpr double kEps = 1e-12;
  double h = 0.0;
  for (std::size_t count : hist) {
    const double p = static_cast<double>(count) / n;
    h -= p * std::log(p + kEps);
  }
  return std::clamp(h / std::log(256.0), 0.0, 1.0);
}

/// Fraction of Canny edge pixels on the canonical canvas.
inline double edge_density(const GrayImage& img) {
  detail::require_canvas(img, "edge_density");
  const auto edges = canny_edges(img);
  std::size_t count = 0;
  for (std::uint8_t e : edges) count += e;
  return static_cast<double>(count) / (static_cast<double>(kCanvasSide) * kCanvasSide);
}

/// Population variance of the [[0,1,0],[1,-4,1],[0,1,0]] response.
inline double laplacian_variance(const GrayImage& img) {
  detail::require_canvas(img, "laplacian variance");
  const int w = img.width();
  const int h = img.height();
  std::vector<double> resp(img.size());
  double mean = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r = static_cast<double>(img.clamped(x - 1, y)) + img.clamped(x + 1, y) +
                       img.clamped(x, y - 1) + img.clamped(x, y + 1) - 4.0 * img.at(x, y);
      resp[static_cast<std::size_t>(y) * w + x] = r;
      mean += r;
    }
  mean /= static_cast<double>(resp.size());
  double var = 0.0;
  for (double r : resp) var += (r - mean) * (r - mean);
  return var / static_cast<double>(resp.size());
}

/// Mean of sqrt(Gx^2 + Gy^2) over the canonical canvas.
inline double sobel_mean_magnitude(const GrayImage& img) {
  detail::require_canvas(img, "sobel_mean_magnitude");
  const detail::Gradients g = detail::sobel(detail::Plane(img));
  double sum = 0.0;
  for (std::size_t i = 0; i < g.gx.v.size(); ++i) sum += std::hypot(g.gx.v[i], g.gy.v[i]);
  return sum / static_cast<double>(g.gx.v.size());
}

/// mean(|I - I'|) / 255 where I' is one lossy cycle at quality q.
inline double jpeg_residual(const GrayImage& img, codec::QualityFactor q = codec::QualityFactor(50)) {
  const GrayImage recon = codec::lossy_cycle(img, q);
  const auto a = img.pixels();
  const auto b = recon.pixels();
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) total += static_cast<std::uint64_t>(std::abs(a[i] - b[i]));
  return static_cast<double>(total) / static_cast<double>(a.size()) / 255.0;
}

/// All five features on an image already at canvas size.
inline ComplexityFeatures compute_features(const GrayImage& canvas, codec::QualityFactor q) {
  return {intensity_entropy(canvas), edge_density(canvas), laplacian_variance(canvas),
          sobel_mean_magnitude(canvas), jpeg_residual(canvas, q)};
}

/// Resizes to the canvas, computes the features and combines them.
inline ComplexityScore complexity_score(const GrayImage& img, const ComplexityWeights& weights = {},
                                        codec::QualityFactor q = codec::QualityFactor(50)) {
  const GrayImage canvas = resize_to_canvas(img, kCanvasSide);
  ComplexityScore score{0.0, compute_features(canvas, q), weights};
  score.s_c = combine(score.features, weights);
  return score;
}

/// Scores a batch concurrently. Results are indexed like the input.
inline std::vector<ComplexityScore> score_batch(std::span<const GrayImage> images,
                                                const ComplexityWeights& weights,
                                                codec::QualityFactor q, unsigned threads = 0) {
  std::vector<ComplexityScore> out(images.size());
  parallel_for(images.size(), threads,
               [&](std::size_t i) { out[i] = complexity_score(images[i], weights, q); });
  return out;
}

inline constexpr const char* kCsvHeader = "path,h_i,e_d,lap_var,sobel_mean,r_j,s_c";

inline std::string csv_row(const std::string& path, const ComplexityScore& s) {
  const auto& f = s.features;
  return path + "," + fixed6(f.h_i) + "," + fixed6(f.e_d) + "," + fixed6(f.lap_var) + "," +
         fixed6(f.sobel_mean) + "," + fixed6(f.r_j) + "," + fixed6(s.s_c);
}

}  // namespace saec::complexity
