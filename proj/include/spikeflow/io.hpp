#pragma once

// File formats: binary 8-bit PGM/PPM images and the little-endian "FLO1"
// flow container. Also the byte-level read/write helpers shared by the other
// binary formats (event files, checkpoints).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "spikeflow/errors.hpp"
#include "spikeflow/tensor.hpp"

namespace spikeflow {

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

// Cursor over a fully loaded file; throws FormatError on truncation.
struct ByteReader {
  const std::string& data;
  std::size_t pos = 0;
  std::string context;

  void need(std::size_t n) const {
    if (pos + n > data.size()) {
      throw FormatError(context + ": truncated file (need " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos) + ")");
    }
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data[pos++]);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data[pos++])) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data[pos++])) << (8 * i);
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path);
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw IoError("write failure on " + path);
}

}  // namespace detail

// Writes a [1,1,H,W] tensor with values in [0,1] as binary 8-bit PGM.
inline void write_pgm(const std::string& path, const Tensor& image) {
  detail::check_rank("write_pgm", "image", image, 4);
  if (image.dim(0) != 1 || image.dim(1) != 1) {
    throw DimensionError("write_pgm: expected [1,1,H,W], got " + shape_str(image.shape()));
  }
  const std::size_t H = image.dim(2), W = image.dim(3);
  std::string out = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  out.reserve(out.size() + H * W);
  for (double v : image.values()) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<int>(std::lround(c * 255.0))));
  }
  detail::write_file(path, out);
}

// Loads a binary 8-bit PGM as [1,1,H,W] normalized to [0,1].
inline Tensor read_pgm(const std::string& path) {
  const std::string data = detail::read_file(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto next_int = [&]() -> long {
    skip_space();
    std::size_t start = pos;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) ++pos;
    if (pos == start) throw FormatError(path + ": malformed PGM header");
    return std::stol(data.substr(start, pos - start));
  };
  if (data.size() < 2 || data[0] != 'P' || data[1] != '5') {
    throw FormatError(path + ": not a binary PGM (missing P5 magic)");
  }
  pos = 2;
  const long W = next_int();
  const long H = next_int();
  const long maxval = next_int();
  if (W <= 0 || H <= 0) throw FormatError(path + ": non-positive PGM dimensions");
  if (maxval != 255) throw FormatError(path + ": unsupported PGM maxval " + std::to_string(maxval));
  ++pos;  // single whitespace byte after maxval
  if (pos + static_cast<std::size_t>(W * H) > data.size()) {
    throw FormatError(path + ": truncated PGM pixel data");
  }
  Tensor image(Shape{1, 1, static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
  auto vals = image.mutable_values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    vals[i] = static_cast<std::uint8_t>(data[pos + i]) / 255.0;
  }
  return image;
}

// Writes an RGB [1,3,H,W] tensor with values in [0,1] as binary PPM.
inline void write_ppm(const std::string& path, const Tensor& image) {
  detail::check_rank("write_ppm", "image", image, 4);
  if (image.dim(0) != 1 || image.dim(1) != 3) {
    throw DimensionError("write_ppm: expected [1,3,H,W], got " + shape_str(image.shape()));
  }
  const std::size_t H = image.dim(2), W = image.dim(3);
  std::string out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  out.reserve(out.size() + 3 * H * W);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image(0, c, y, x), 0.0, 1.0);
        out.push_back(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
      }
    }
  }
  detail::write_file(path, out);
}

// Flow container: magic "FLO1", width u32, height u32, then H*W (u,v) pairs
// of 32-bit floats, row-major, little-endian.
inline void write_flow(const std::string& path, const Tensor& flow) {
  detail::check_rank("write_flow", "flow", flow, 4);
  if (flow.dim(0) != 1 || flow.dim(1) != 2) {
    throw DimensionError("write_flow: expected [1,2,H,W], got " + shape_str(flow.shape()));
  }
  const std::size_t H = flow.dim(2), W = flow.dim(3);
  std::string out = "FLO1";
  detail::put_u32(out, static_cast<std::uint32_t>(W));
  detail::put_u32(out, static_cast<std::uint32_t>(H));
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      detail::put_f32(out, static_cast<float>(flow(0, 0, y, x)));
      detail::put_f32(out, static_cast<float>(flow(0, 1, y, x)));
    }
  }
  detail::write_file(path, out);
}

inline Tensor read_flow(const std::string& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader r{data, 0, path};
  if (r.bytes(4) != "FLO1") throw FormatError(path + ": bad flow magic (want FLO1)");
  const std::uint32_t W = r.u32();
  const std::uint32_t H = r.u32();
  if (W == 0 || H == 0) throw FormatError(path + ": zero-sized flow field");
  Tensor flow(Shape{1, 2, H, W});
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      flow.at(0, 0, y, x) = r.f32();
      flow.at(0, 1, y, x) = r.f32();
    }
  }
  if (r.pos != data.size()) {
    throw FormatError(path + ": trailing bytes after flow data");
  }
  return flow;
}

}  // namespace spikeflow
