#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "saec/image.hpp"

namespace fixture {

/// Ramp blended with uniform noise; `amount` in [0,1] sets the noise share,
/// which is what drives the complexity score up.
inline saec::GrayImage textured(int side, double amount, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double ramp = 255.0 * (x + y) / (2.0 * (side - 1));
      const double v = (1.0 - amount) * ramp + amount * u(rng);
      px[static_cast<std::size_t>(y) * side + x] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  return saec::GrayImage(side, side, std::move(px));
}

/// Writes `per_class` images into root/good and root/defect. Noise shares are
/// spread evenly so both classes cover the full complexity range.
inline void write_dataset(const std::filesystem::path& root, int per_class, std::uint64_t seed, int side = 48) {
  for (const char* cls : {"good", "defect"}) {
    std::filesystem::create_directories(root / cls);
    for (int i = 0; i < per_class; ++i) {
      const double amount = per_class > 1 ? static_cast<double>(i) / (per_class - 1) : 0.5;
      const std::uint64_t s = seed * 1000003ull + static_cast<std::uint64_t>(i) * 2 + (cls[0] == 'd');
      char name[32];
      std::snprintf(name, sizeof name, "img_%05d.pgm", i);
      saec::save_pgm(textured(side, amount, s), root / cls / name);
    }
  }
}

}  // namespace fixture
