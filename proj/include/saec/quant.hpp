#pragma once

/// Blockwise NF4 quantization with per-group mean/std normalization, LoRA
/// low-rank deltas over the dequantized base, masked token NLL, and the
/// two-logit binary decision head.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saec/error.hpp"

namespace saec::quant {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 16 strictly increasing levels containing an exact 0.
class Codebook {
 public:
  static constexpr std::size_t kLevels = 16;

  /// The canonical NF4 levels (float32 values widened to double).
  static Codebook nf4() {
    return Codebook({-1.0, -0.6961928009986877, -0.5250730514526367, -0.39491748809814453,
                     -0.28444138169288635, -0.18477343022823334, -0.09105003625154495, 0.0,
                     0.07958029955625534, 0.16093020141124725, 0.24611230194568634,
                     0.33791524171829224, 0.44070982933044434, 0.5626170039176941,
                     0.7229568362236023, 1.0});
  }

  explicit Codebook(std::array<double, kLevels> levels) : levels_(levels) {
    bool has_zero = false;
    for (std::size_t i = 0; i < kLevels; ++i) {
      if (!std::isfinite(levels_[i])) throw Error(ErrorCode::InvalidArgument, "non-finite codebook level");
      if (i > 0 && !(levels_[i] > levels_[i - 1])) {
        throw Error(ErrorCode::InvalidArgument, "codebook levels must be strictly increasing");
      }
      if (levels_[i] == 0.0) {
        has_zero = true;
        zero_index_ = static_cast<std::uint8_t>(i);
      }
    }
    if (!has_zero) throw Error(ErrorCode::InvalidArgument, "codebook must contain 0");
  }

  double operator[](std::size_t k) const noexcept { return levels_[k]; }
  const std::array<double, kLevels>& levels() const noexcept { return levels_; }
  std::uint8_t zero_index() const noexcept { return zero_index_; }

  /// Index of the nearest level; ties resolve to the smaller index.
  std::uint8_t nearest(double x) const noexcept {
    // Levels are sorted, so locate the bracketing pair and compare both.
    const auto it = std::lower_bound(levels_.begin(), levels_.end(), x);
    if (it == levels_.begin()) return 0;
    if (it == levels_.end()) return kLevels - 1;
    const auto hi = static_cast<std::uint8_t>(it - levels_.begin());
    const auto lo = static_cast<std::uint8_t>(hi - 1);
    return (x - levels_[lo] <= levels_[hi] - x) ? lo : hi;
  }

  double largest_gap() const noexcept {
    double gap = 0.0;
    for (std::size_t i = 1; i < kLevels; ++i) gap = std::max(gap, levels_[i] - levels_[i - 1]);
    return gap;
  }

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  std::array<double, kLevels> levels_{};
  std::uint8_t zero_index_ = 0;
};

struct QuantGroup {
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation; 0 marks a constant group
  std::vector<std::uint8_t> codes;

  friend bool operator==(const QuantGroup&, const QuantGroup&) = default;
};

struct QuantizedTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t group_size = 0;
  std::vector<QuantGroup> groups;  // row-major flattening; the last group may be short
  Codebook codebook = Codebook::nf4();

  std::size_t element_count() const noexcept { return rows * cols; }

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

inline constexpr std::size_t kDefaultGroupSize = 64;

/// Q(W): per group, normalize by (mu_g, sigma_g) and pick the nearest level.
inline QuantizedTensor quantize(const Matrix& w, std::size_t group_size = kDefaultGroupSize,
                                const Codebook& codebook = Codebook::nf4()) {
  if (w.size() == 0) throw Error(ErrorCode::EmptyInput, "cannot quantize an empty matrix");
  if (group_size == 0) throw Error(ErrorCode::InvalidArgument, "group_size must be >= 1");
  const std::span<const double> flat(w.data(), static_cast<std::size_t>(w.size()));

  QuantizedTensor qt{static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()),
                     group_size, {}, codebook};
  qt.groups.reserve((flat.size() + group_size - 1) / group_size);
  for (std::size_t start = 0; start < flat.size(); start += group_size) {
    const auto values = flat.subspan(start, std::min(group_size, flat.size() - start));
    QuantGroup g;
    g.codes.resize(values.size(), codebook.zero_index());
    const bool constant =
        std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
    if (constant) {
      g.mu = values[0];
      g.sigma = 0.0;
    } else {
      double sum = 0.0;
      for (double v : values) sum += v;
      g.mu = sum / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - g.mu) * (v - g.mu);
      g.sigma = std::sqrt(ss / static_cast<double>(values.size()));
      if (g.sigma > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i) {
          g.codes[i] = codebook.nearest((values[i] - g.mu) / g.sigma);
        }
      }
    }
    qt.groups.push_back(std::move(g));
  }
  return qt;
}

/// DQ(Q(W)): sigma_g * c_k + mu_g, reshaped to the original matrix.
inline Matrix dequantize(const QuantizedTensor& qt) {
  Matrix out(static_cast<Eigen::Index>(qt.rows), static_cast<Eigen::Index>(qt.cols));
  double* dst = out.data();
  std::size_t i = 0;
  for (const auto& g : qt.groups) {
    for (std::uint8_t code : g.codes) {
      dst[i++] = g.sigma == 0.0 ? g.mu : g.sigma * qt.codebook[code] + g.mu;
    }
  }
  if (i != qt.element_count()) throw Error(ErrorCode::ShapeMismatch, "code count does not match shape");
  return out;
}

/// Low-rank adapter: delta = (alpha / r) * A * B with A d_out x r and B r x d_in.
class LoraAdapter {
 public:
  LoraAdapter(Matrix a, Matrix b, double alpha) : a_(std::move(a)), b_(std::move(b)), alpha_(alpha) {
    if (a_.cols() == 0 || a_.cols() != b_.rows()) {
      throw Error(ErrorCode::ShapeMismatch, "A columns must equal B rows and be >= 1");
    }
    if (rank() > std::min(d_out(), d_in())) {
      throw Error(ErrorCode::InvalidArgument, "adapter rank exceeds min(d_out, d_in)");
    }
    if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) {
      throw Error(ErrorCode::InvalidArgument, "alpha must be positive");
    }
  }

  std::size_t rank() const noexcept { return static_cast<std::size_t>(a_.cols()); }
  std::size_t d_out() const noexcept { return static_cast<std::size_t>(a_.rows()); }
  std::size_t d_in() const noexcept { return static_cast<std::size_t>(b_.cols()); }
  double alpha() const noexcept { return alpha_; }
  const Matrix& a() const noexcept { return a_; }
  const Matrix& b() const noexcept { return b_; }

  std::size_t parameter_count() const noexcept {
    return static_cast<std::size_t>(a_.size() + b_.size());
  }

  Matrix delta() const { return (alpha_ / static_cast<double>(rank())) * (a_ * b_); }

 private:
  Matrix a_;
  Matrix b_;
  double alpha_;
};

/// W* = DQ(Q(W)) + delta.
inline Matrix effective_weight(const QuantizedTensor& qt, const LoraAdapter& adapter) {
  if (adapter.d_out() != qt.rows || adapter.d_in() != qt.cols) {
    throw Error(ErrorCode::ShapeMismatch, "adapter is " + std::to_string(adapter.d_out()) + "x" +
                                              std::to_string(adapter.d_in()) + ", tensor is " +
                                              std::to_string(qt.rows) + "x" + std::to_string(qt.cols));
  }
  return dequantize(qt) + adapter.delta();
}

/// -sum m_t * log p_t over answer tokens. Evaluation only.
inline double masked_nll(std::span<const double> log_probs, std::span<const std::uint8_t> mask) {
  if (log_probs.size() != mask.size()) {
    throw Error(ErrorCode::LengthMismatch, "log_probs and mask lengths differ");
  }
  double loss = 0.0;
  for (std::size_t t = 0; t < log_probs.size(); ++t) {
    if (mask[t] > 1) throw Error(ErrorCode::InvalidArgument, "mask entries must be 0 or 1");
    if (!(log_probs[t] <= 0.0)) throw Error(ErrorCode::InvalidArgument, "log-probabilities must be <= 0");
    if (mask[t]) loss -= log_probs[t];
  }
  return loss;
}

enum class Label : std::uint8_t { Good = 0, Defect = 1 };

constexpr const char* to_string(Label l) noexcept { return l == Label::Defect ? "defect" : "good"; }

struct LogitPair {
  double good = 0.0;    // l0
  double defect = 0.0;  // l1
};

struct DecisionHead {
  double tau = 0.5;
  double temperature = 1.0;

  void validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidArgument, "tau must lie in [0,1]");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
    }
  }
};

struct Prediction {
  Label label = Label::Good;
  double p_defect = 0.0;
};

/// softmax(l / T)[1], computed with max subtraction.
inline double defect_probability(LogitPair logits, double temperature) {
  if (!std::isfinite(logits.good) || !std::isfinite(logits.defect)) {
    throw Error(ErrorCode::NonFiniteLogit, "logits must be finite");
  }
  const double a = logits.good / temperature;
  const double b = logits.defect / temperature;
  const double m = std::max(a, b);
  const double ea = std::exp(a - m);
  const double eb = std::exp(b - m);
  return eb / (ea + eb);
}

/// Defect iff p1 >= tau.
inline Prediction decide(LogitPair logits, const DecisionHead& head) {
  head.validate();
  const double p1 = defect_probability(logits, head.temperature);
  return {p1 >= head.tau ? Label::Defect : Label::Good, p1};
}

// Serialized layout (little-endian):
//   "SAECQ1" | u32 rows | u32 cols | u32 group_size | u8 level_count | f64 levels[16]
//   then per group: f64 mu | f64 sigma | ceil(group_size/2) bytes of codes,
//   two codes per byte, low nibble first, short groups padded with code 0.

inline constexpr char kMagic[6] = {'S', 'A', 'E', 'C', 'Q', '1'};

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  if (in.size() - pos < sizeof(T)) throw Error(ErrorCode::CorruptImage, "truncated quantized tensor");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(in[pos + i]) << (8 * i));
  pos += sizeof(T);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize(const QuantizedTensor& qt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  detail::put_le(out, static_cast<std::uint32_t>(qt.rows));
  detail::put_le(out, static_cast<std::uint32_t>(qt.cols));
  detail::put_le(out, static_cast<std::uint32_t>(qt.group_size));
  detail::put_le(out, static_cast<std::uint8_t>(Codebook::kLevels));
  for (double level : qt.codebook.levels()) detail::put_le(out, level);
  const std::size_t packed = (qt.group_size + 1) / 2;
  for (const auto& g : qt.groups) {
    detail::put_le(out, g.mu);
    detail::put_le(out, g.sigma);
    for (std::size_t b = 0; b < packed; ++b) {
      const std::uint8_t lo = 2 * b < g.codes.size() ? g.codes[2 * b] : 0;
      const std::uint8_t hi = 2 * b + 1 < g.codes.size() ? g.codes[2 * b + 1] : 0;
      out.push_back(static_cast<std::uint8_t>((lo & 0x0F) | ((hi & 0x0F) << 4)));
    }
  }
  return out;
}

inline QuantizedTensor deserialize(std::span<const std::uint8_t> in) {
  if (in.size() < sizeof kMagic || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, "missing SAECQ1 magic");
  }
  std::size_t pos = sizeof kMagic;
  const auto rows = detail::get_le<std::uint32_t>(in, pos);
  const auto cols = detail::get_le<std::uint32_t>(in, pos);
  const auto group_size = detail::get_le<std::uint32_t>(in, pos);
  const auto level_count = detail::get_le<std::uint8_t>(in, pos);
  if (level_count != Codebook::kLevels || group_size == 0 || rows == 0 || cols == 0) {
    throw Error(ErrorCode::CorruptImage, "bad quantized tensor header");
  }
  std::array<double, Codebook::kLevels> levels{};
  for (double& l : levels) l = detail::get_le<double>(in, pos);

  const std::size_t total = static_cast<std::size_t>(rows) * cols;
  QuantizedTensor qt{rows, cols, group_size, {}, Codebook(levels)};
  const std::size_t packed = (group_size + 1) / 2;
  for (std::size_t start = 0; start < total; start += group_size) {
    QuantGroup g;
    g.mu = detail::get_le<double>(in, pos);
    g.sigma = detail::get_le<double>(in, pos);
    if (!(g.sigma >= 0.0)) throw Error(ErrorCode::CorruptImage, "negative group sigma");
    const std::size_t n = std::min<std::size_t>(group_size, total - start);
    if (in.size() - pos < packed) throw Error(ErrorCode::CorruptImage, "truncated code block");
    g.codes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint8_t byte = in[pos + i / 2];
      g.codes[i] = (i % 2 == 0) ? (byte & 0x0F) : (byte >> 4);
    }
    pos += packed;
    qt.groups.push_back(std::move(g));
  }
  if (pos != in.size()) throw Error(ErrorCode::CorruptImage, "trailing bytes after quantized tensor");
  return qt;
}

inline void save(const QuantizedTensor& qt, const std::filesystem::path& path) {
  const auto bytes = serialize(qt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

inline QuantizedTensor load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize(bytes);
}

}  // namespace saec::quant
