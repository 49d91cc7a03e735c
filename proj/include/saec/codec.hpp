#pragma once

/// Deterministic JPEG-style lossy cycle for grayscale images: level shift,
/// 8x8 orthonormal DCT, quantization by the scaled Annex K luminance table,
/// reconstruction. No entropy coding; only the reconstruction is produced.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "saec/error.hpp"
#include "saec/image.hpp"

namespace saec::codec {

using Block = std::array<double, 64>;  // row-major 8x8

/// JPEG quality factor in [1, 100].
class QualityFactor {
 public:
  constexpr explicit QualityFactor(int q = 50) : q_(q) {
    if (q < 1 || q > 100) throw Error(ErrorCode::InvalidArgument, "quality must lie in [1, 100]");
  }
  constexpr int value() const noexcept { return q_; }

 private:
  int q_;
};

inline constexpr std::array<int, 64> kLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};

/// Luminance table scaled the IJG way: integer scale percentage, entries
/// rounded and floored at 1.
constexpr std::array<int, 64> quant_table(QualityFactor quality) {
  const int q = quality.value();
  const int scale = q < 50 ? 5000 / q : 200 - 2 * q;
  std::array<int, 64> table{};
  for (std::size_t i = 0; i < 64; ++i) {
    table[i] = std::max(1, (kLuminanceTable[i] * scale + 50) / 100);
  }
  return table;
}

namespace detail {

/// cosines[u*8 + i] = cos((2i+1) u pi / 16). Row 0 is exactly 1.
inline const std::array<double, 64>& dct_cosines() {
  static const std::array<double, 64> table = [] {
    std::array<double, 64> t{};
    for (int u = 0; u < 8; ++u)
      for (int i = 0; i < 8; ++i) t[u * 8 + i] = u == 0 ? 1.0 : std::cos((2 * i + 1) * u * std::numbers::pi / 16.0);
    return t;
  }();
  return table;
}

/// Orthonormal scale c(u) c(v); the DC term is exactly 1/8 so integer
/// blocks produce exact DC coefficients.
inline double dct_scale(int u, int v) {
  if (u == 0 && v == 0) return 0.125;
  if (u == 0 || v == 0) return std::numbers::sqrt2 / 8.0;
  return 0.25;
}

/// Round half away from zero. Several coefficients are rational for integer
/// blocks and can sit exactly on a half step; ratios within 1e-9 of a half are
/// snapped to it first so summation order cannot flip the result.
inline double round_ratio(double r) {
  const double half = std::floor(r) + 0.5;
  if (std::abs(r - half) < 1e-9) return r < 0.0 ? std::floor(r) : std::ceil(r);
  return std::round(r);
}

}  // namespace detail

/// Orthonormal 2-D DCT-II.
inline Block dct8_forward(const Block& block) {
  const auto& c = detail::dct_cosines();
  Block tmp{};
  Block out{};
  for (int u = 0; u < 8; ++u)
    for (int j = 0; j < 8; ++j) {
      double s = 0.0;
      for (int i = 0; i < 8; ++i) s += c[u * 8 + i] * block[i * 8 + j];
      tmp[u * 8 + j] = s;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int j = 0; j < 8; ++j) s += tmp[u * 8 + j] * c[v * 8 + j];
      out[u * 8 + v] = s * detail::dct_scale(u, v);
    }
  return out;
}

/// Orthonormal 2-D DCT-III, the inverse of dct8_forward.
inline Block dct8_inverse(const Block& coeffs) {
  const auto& c = detail::dct_cosines();
  Block scaled{};
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) scaled[u * 8 + v] = coeffs[u * 8 + v] * detail::dct_scale(u, v);
  Block tmp{};
  Block out{};
  for (int i = 0; i < 8; ++i)
    for (int v = 0; v < 8; ++v) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += c[u * 8 + i] * scaled[u * 8 + v];
      tmp[i * 8 + v] = s;
    }
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += tmp[i * 8 + v] * c[v * 8 + j];
      out[i * 8 + j] = s;
    }
  return out;
}

/// One compression/decompression cycle with an explicit quantization table.
/// The image is edge-padded to a multiple of 8 and cropped back afterwards.
inline GrayImage lossy_cycle(const GrayImage& img, const std::array<int, 64>& table) {
  if (img.empty()) throw Error(ErrorCode::InvalidDimension, "cannot compress an empty image");
  const int w = img.width();
  const int h = img.height();
  const int bw = (w + 7) / 8;
  const int bh = (h + 7) / 8;
  std::vector<std::uint8_t> out(img.size());

  for (int by = 0; by < bh; ++by) {
    for (int bx = 0; bx < bw; ++bx) {
      Block block{};
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
          block[i * 8 + j] = static_cast<double>(img.clamped(bx * 8 + j, by * 8 + i)) - 128.0;

      Block coeffs = dct8_forward(block);
      for (std::size_t k = 0; k < 64; ++k) {
        coeffs[k] = detail::round_ratio(coeffs[k] / table[k]) * table[k];
      }
      const Block recon = dct8_inverse(coeffs);

      for (int i = 0; i < 8; ++i) {
        const int y = by * 8 + i;
        if (y >= h) break;
        for (int j = 0; j < 8; ++j) {
          const int x = bx * 8 + j;
          if (x >= w) break;
          const double v = std::clamp(recon[i * 8 + j] + 128.0, 0.0, 255.0);
          out[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(std::round(v));
        }
      }
    }
  }
  return GrayImage(w, h, std::move(out));
}

inline GrayImage lossy_cycle(const GrayImage& img, QualityFactor quality) {
  return lossy_cycle(img, quant_table(quality));
}

}  // namespace saec::codec
