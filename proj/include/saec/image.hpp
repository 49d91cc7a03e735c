#pragma once

/// 8-bit grayscale rasters: decoding (PGM/PNG/BMP/JPEG), PGM output and
/// bilinear resampling onto the square analysis canvas.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <csetjmp>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "saec/error.hpp"

namespace saec {

/// Side length of the canonical analysis canvas.
inline constexpr int kCanvasSide = 192;

/// Row-major 8-bit single-channel raster. Immutable once constructed.
class GrayImage {
 public:
  GrayImage() = default;

  GrayImage(int width, int height, std::vector<std::uint8_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width <= 0 || height <= 0) {
      throw Error(ErrorCode::InvalidDimension,
                  "image dimensions must be positive, got " + std::to_string(width) + "x" +
                      std::to_string(height));
    }
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(ErrorCode::InvalidDimension, "pixel buffer length does not match width*height");
    }
  }

  /// Constant-valued image.
  static GrayImage filled(int width, int height, std::uint8_t value) {
    return GrayImage(width, height,
                     std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, value));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::span<const std::uint8_t> pixels() const noexcept { return data_; }

  std::uint8_t at(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  /// Pixel access with coordinates clamped into the frame (replicate border).
  std::uint8_t clamped(int x, int y) const noexcept {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// BT.601 luma with round-half-up, in exact integer arithmetic.
constexpr std::uint8_t luma_bt601(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::FileNotFound, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1L << 24)) throw Error(ErrorCode::CorruptImage, name + ": PGM header value too large");
      ++pos;
      any = true;
    }
    if (!any) throw Error(ErrorCode::CorruptImage, name + ": malformed PGM header");
    return v;
  };
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw Error(ErrorCode::CorruptImage, name + ": unsupported PGM geometry or maxval");
  }
  // Exactly one whitespace byte separates the header from the raster.
  ++pos;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (pos > bytes.size() || bytes.size() - pos < n) {
    throw Error(ErrorCode::CorruptImage, name + ": truncated PGM raster");
  }
  std::vector<std::uint8_t> data(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                 bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  if (maxval != 255) {
    for (auto& v : data) {
      if (v > maxval) throw Error(ErrorCode::CorruptImage, name + ": sample exceeds maxval");
      v = static_cast<std::uint8_t>((v * 255u + static_cast<unsigned>(maxval) / 2) /
                                    static_cast<unsigned>(maxval));
    }
  }
  return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

inline GrayImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::CorruptImage, name + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  // Read with an alpha channel and drop it, so no compositing takes place.
  image.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
  const int channels = color ? 4 : 2;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::CorruptImage, name + ": " + image.message);
  }
  const int w = static_cast<int>(image.width);
  const int h = static_cast<int>(image.height);
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const std::uint8_t* px = &buffer[i * channels];
    gray[i] = color ? luma_bt601(px[0], px[1], px[2]) : px[0];
  }
  return GrayImage(w, h, std::move(gray));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, mgr->message);
  std::longjmp(mgr->jump, 1);
}

inline GrayImage decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  err.message[0] = '\0';

  std::vector<std::uint8_t> raster;
  int w = 0;
  int h = 0;
  int channels = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::CorruptImage, name + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  channels = cinfo.output_components;
  raster.resize(static_cast<std::size_t>(w) * h * channels);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = &raster[static_cast<std::size_t>(cinfo.output_scanline) * w * channels];
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);

  std::vector<std::uint8_t> gray(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const std::uint8_t* px = &raster[i * channels];
    gray[i] = channels == 1 ? px[0] : luma_bt601(px[0], px[1], px[2]);
  }
  return GrayImage(w, h, std::move(gray));
}

inline std::uint32_t read_le32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

inline std::uint16_t read_le16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

/// Uncompressed BMP: 8-bit palettized, 24-bit BGR, 32-bit BGRX.
inline GrayImage decode_bmp(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (bytes.size() < 54) throw Error(ErrorCode::CorruptImage, name + ": truncated BMP header");
  const std::uint32_t offset = read_le32(bytes, 10);
  const std::uint32_t header_size = read_le32(bytes, 14);
  const auto w = static_cast<std::int32_t>(read_le32(bytes, 18));
  const auto raw_h = static_cast<std::int32_t>(read_le32(bytes, 22));
  const std::uint16_t bpp = read_le16(bytes, 28);
  const std::uint32_t compression = read_le32(bytes, 30);
  if (header_size < 40 || w <= 0 || raw_h == 0 || w > (1 << 16) || std::abs(raw_h) > (1 << 16)) {
    throw Error(ErrorCode::CorruptImage, name + ": bad BMP geometry");
  }
  if (compression != 0 && !(compression == 3 && bpp == 32)) {
    throw Error(ErrorCode::UnsupportedFormat, name + ": compressed BMP");
  }
  if (bpp != 8 && bpp != 24 && bpp != 32) {
    throw Error(ErrorCode::UnsupportedFormat, name + ": BMP bit depth " + std::to_string(bpp));
  }
  const bool bottom_up = raw_h > 0;
  const int h = std::abs(raw_h);
  const std::size_t stride = ((static_cast<std::size_t>(w) * bpp + 31) / 32) * 4;
  if (offset > bytes.size() || bytes.size() - offset < stride * h) {
    throw Error(ErrorCode::CorruptImage, name + ": truncated BMP raster");
  }
  std::array<std::uint8_t, 256> palette{};
  if (bpp == 8) {
    std::uint32_t colors = read_le32(bytes, 46);
    if (colors == 0) colors = 256;
    const std::size_t table = 14 + header_size;
    if (colors > 256 || table + colors * 4 > offset) {
      throw Error(ErrorCode::CorruptImage, name + ": bad BMP palette");
    }
    for (std::uint32_t i = 0; i < colors; ++i) {
      const std::size_t e = table + i * 4;
      palette[i] = luma_bt601(bytes[e + 2], bytes[e + 1], bytes[e]);
    }
  }
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const int src_row = bottom_up ? h - 1 - y : y;
    const std::size_t row = offset + static_cast<std::size_t>(src_row) * stride;
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = 0;
      if (bpp == 8) {
        v = palette[bytes[row + x]];
      } else {
        const std::size_t p = row + static_cast<std::size_t>(x) * (bpp / 8);
        v = luma_bt601(bytes[p + 2], bytes[p + 1], bytes[p]);
      }
      gray[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  return GrayImage(w, h, std::move(gray));
}

}  // namespace detail

/// Decodes PGM (P5), PNG, BMP or JPEG by content sniffing. Color inputs are
/// reduced with BT.601 luma weights.
inline GrayImage load_grayscale(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const std::string name = path.string();
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return detail::decode_pgm(bytes, name);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) return detail::decode_png(bytes, name);
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return detail::decode_jpeg(bytes, name);
  }
  if (bytes.size() >= 2 && bytes[0] == 'B' && bytes[1] == 'M') return detail::decode_bmp(bytes, name);
  throw Error(ErrorCode::UnsupportedFormat, name);
}

/// Writes a binary P5 PGM with maxval 255.
inline void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  const auto px = img.pixels();
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

inline bool has_image_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".bmp" || ext == ".jpg" || ext == ".jpeg";
}

/// Bilinear resample to side x side using half-pixel centers and edge clamping.
/// Returns the input unchanged when it already has the requested size.
inline GrayImage resize_to_canvas(const GrayImage& img, int side = kCanvasSide) {
  if (side < 2) throw Error(ErrorCode::InvalidDimension, "canvas side must be >= 2");
  if (img.empty()) throw Error(ErrorCode::InvalidDimension, "cannot resize an empty image");
  if (img.width() == side && img.height() == side) return img;

  struct Tap {
    int lo;
    int hi;
    double frac;
  };
  auto taps = [side](int src_len) {
    std::vector<Tap> out(side);
    const double scale = static_cast<double>(src_len) / side;
    for (int i = 0; i < side; ++i) {
      const double s = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(src_len - 1));
      const int lo = static_cast<int>(std::floor(s));
      out[i] = {lo, std::min(lo + 1, src_len - 1), s - lo};
    }
    return out;
  };
  const auto xs = taps(img.width());
  const auto ys = taps(img.height());

  std::vector<std::uint8_t> out(static_cast<std::size_t>(side) * side);
  for (int y = 0; y < side; ++y) {
    const Tap ty = ys[y];
    for (int x = 0; x < side; ++x) {
      const Tap tx = xs[x];
      const double top = img.at(tx.lo, ty.lo) + tx.frac * (img.at(tx.hi, ty.lo) - img.at(tx.lo, ty.lo));
      const double bot = img.at(tx.lo, ty.hi) + tx.frac * (img.at(tx.hi, ty.hi) - img.at(tx.lo, ty.hi));
      const double v = top + ty.frac * (bot - top);
      out[static_cast<std::size_t>(y) * side + x] =
          static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  }
  return GrayImage(side, side, std::move(out));
}

}  // namespace saec
