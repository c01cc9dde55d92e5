#pragma once

// Event-camera data: the AER event representation, the binary event-file
// format, the former/latter-group spike-frame encoding, and a synthetic
// event simulator for producing ground-truth test data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spikeflow/io.hpp"
#include "spikeflow/ops.hpp"
#include "spikeflow/tensor.hpp"

namespace spikeflow {

// One sensor event: pixel location, microsecond timestamp, polarity +1/-1.
struct Event {
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::uint64_t t = 0;
  int p = 1;
};

struct EventStream {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<Event> events;  // nondecreasing in t
};

// Binary event frames [N, 4, H, W] over a time window. Channel order:
// former-ON, former-OFF, latter-ON, latter-OFF; frame i of each group covers
// sub-interval i of that group's half of the window.
struct SpikeInputSequence {
  Tensor frames;
  std::uint64_t t_start = 0;
  std::uint64_t t_end = 0;

  std::size_t n_frames() const { return frames.dim(0); }
};

// Grayscale frames bracketing a window, intensities in [0,1], [1,1,H,W].
struct GrayImagePair {
  Tensor first;
  Tensor second;
};

// Event file layout, little-endian:
//   magic "AER1", width u16, height u16, count u64,
//   then `count` records of x u16, y u16, t u64, p i8 (+1/-1), pad u8 (0).
inline void write_event_file(const std::string& path, const EventStream& stream) {
  if (stream.width == 0 || stream.height == 0) {
    throw ContractError("write_event_file: zero sensor dimensions");
  }
  std::string out = "AER1";
  detail::put_u16(out, static_cast<std::uint16_t>(stream.width));
  detail::put_u16(out, static_cast<std::uint16_t>(stream.height));
  detail::put_u64(out, stream.events.size());
  std::uint64_t prev_t = 0;
  for (std::size_t i = 0; i < stream.events.size(); ++i) {
    const Event& e = stream.events[i];
    if (e.x >= stream.width || e.y >= stream.height) {
      throw ContractError("write_event_file: event " + std::to_string(i) +
                          " at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                          ") outside sensor " + std::to_string(stream.width) + "x" +
                          std::to_string(stream.height));
    }
    if (i > 0 && e.t < prev_t) {
      throw ContractError("write_event_file: timestamps decrease at record " +
                          std::to_string(i));
    }
    prev_t = e.t;
    detail::put_u16(out, e.x);
    detail::put_u16(out, e.y);
    detail::put_u64(out, e.t);
    out.push_back(static_cast<char>(e.p >= 0 ? 1 : -1));
    out.push_back(0);
  }
  detail::write_file(path, out);
}

inline EventStream parse_event_file(const std::string& path) {
  const std::string data = detail::read_file(path);
  detail::ByteReader r{data, 0, path};
  if (r.bytes(4) != "AER1") throw FormatError(path + ": bad event-file magic (want AER1)");
  EventStream stream;
  stream.width = r.u16();
  stream.height = r.u16();
  if (stream.width == 0 || stream.height == 0) {
    throw FormatError(path + ": zero sensor dimensions in header");
  }
  const std::uint64_t count = r.u64();
  stream.events.reserve(count);
  std::uint64_t prev_t = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    Event e;
    e.x = r.u16();
    e.y = r.u16();
    e.t = r.u64();
    const auto p = static_cast<std::int8_t>(r.u8());
    r.u8();  // pad
    if (p != 1 && p != -1) {
      throw DataError(path + ": record " + std::to_string(i) + " has polarity " +
                      std::to_string(static_cast<int>(p)) + ", expected +1 or -1");
    }
    if (e.x >= stream.width || e.y >= stream.height) {
      throw DataError(path + ": record " + std::to_string(i) + " at (" +
                      std::to_string(e.x) + "," + std::to_string(e.y) +
                      ") outside sensor dimensions");
    }
    if (i > 0 && e.t < prev_t) {
      throw DataError(path + ": record " + std::to_string(i) +
                      " breaks timestamp ordering");
    }
    prev_t = e.t;
    e.p = p;
    stream.events.push_back(e);
  }
  if (r.pos != data.size()) {
    throw FormatError(path + ": trailing bytes after " + std::to_string(count) +
                      " records");
  }
  return stream;
}

// Discretizes events in [t_start, t_end] into binary presence frames. The
// window splits into a former and a latter half, each into n_frames equal
// sub-intervals. An event exactly on a boundary belongs to the later
// sub-interval, except the window end, which closes the last one. Events
// outside the window are ignored. Presence encoding: a pixel/polarity cell is
// 1 however many events landed in its sub-interval.
inline SpikeInputSequence encode_spike_input(const EventStream& stream,
                                             std::uint64_t t_start, std::uint64_t t_end,
                                             std::size_t n_frames) {
  if (t_start >= t_end) {
    throw ContractError("encode_spike_input: empty window [" + std::to_string(t_start) +
                        ", " + std::to_string(t_end) + "]");
  }
  if (n_frames == 0) throw ContractError("encode_spike_input: n_frames must be >= 1");
  const std::size_t H = stream.height, W = stream.width;
  if (H == 0 || W == 0) throw ContractError("encode_spike_input: zero sensor dimensions");

  SpikeInputSequence seq;
  seq.t_start = t_start;
  seq.t_end = t_end;
  seq.frames = Tensor(Shape{n_frames, 4, H, W});
  auto vals = seq.frames.mutable_values();
  const std::uint64_t total = t_end - t_start;
  const std::uint64_t buckets = 2 * static_cast<std::uint64_t>(n_frames);
  for (const Event& e : stream.events) {
    if (e.t < t_start || e.t > t_end) continue;
    const std::uint64_t offset = e.t - t_start;
    // Integer-exact bucket index: boundaries land in the later sub-interval.
    auto g = static_cast<std::uint64_t>(static_cast<unsigned __int128>(offset) * buckets / total);
    if (g == buckets) g = buckets - 1;  // t == t_end
    const std::size_t frame = static_cast<std::size_t>(g) % n_frames;
    const std::size_t group = static_cast<std::size_t>(g) / n_frames;
    const std::size_t channel = group * 2 + (e.p > 0 ? 0 : 1);
    vals[((frame * 4 + channel) * H + e.y) * W + e.x] = 1.0;
  }
  return seq;
}

struct SynthResult {
  EventStream events;
  GrayImagePair images;
  Tensor flow;  // [1,2,H,W] ground truth, pixels per window
};

// Simulates an event camera watching `texture` translate by (u, v) pixels
// over the window. The translation advances in `timesteps` equal sub-steps;
// at each sub-step a pixel emits one event per full threshold crossing of
// its accumulated log-intensity change (leftover change below theta carries
// forward). Intensities are floored at 1e-4 before the log. Returns the
// events, the first/last grayscale frames, and the dense ground-truth flow.
inline SynthResult synthesize_events(const Tensor& texture, double u, double v,
                                     std::uint64_t window_us, double theta,
                                     std::size_t timesteps) {
  detail::check_rank("synthesize_events", "texture", texture, 4);
  if (texture.dim(0) != 1 || texture.dim(1) != 1) {
    throw DimensionError("synthesize_events: expected [1,1,H,W] texture, got " +
                         shape_str(texture.shape()));
  }
  const std::size_t H = texture.dim(2), W = texture.dim(3);
  if (H == 0 || W == 0) throw ContractError("synthesize_events: zero-size texture");
  if (theta <= 0.0) throw ContractError("synthesize_events: threshold must be > 0");
  if (timesteps == 0) throw ContractError("synthesize_events: timesteps must be >= 1");
  if (window_us == 0) throw ContractError("synthesize_events: empty window");

  auto translated = [&](double frac) {
    Tensor cx(Shape{1, H, W});
    Tensor cy(Shape{1, H, W});
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        cx.at(0, y, x) = static_cast<double>(x) - u * frac;
        cy.at(0, y, x) = static_cast<double>(y) - v * frac;
      }
    }
    return bilinear_sample(texture, cx, cy);
  };
  auto log_floored = [&](const Tensor& img) {
    std::vector<double> out(img.numel());
    auto vals = img.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(vals[i], 1e-4));
    return out;
  };

  SynthResult result;
  result.events.width = W;
  result.events.height = H;
  result.images.first = translated(0.0);
  result.images.second = translated(1.0);
  result.flow = Tensor(Shape{1, 2, H, W});
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      result.flow.at(0, 0, y, x) = u;
      result.flow.at(0, 1, y, x) = v;
    }
  }

  std::vector<double> reference = log_floored(result.images.first);
  for (std::size_t k = 1; k <= timesteps; ++k) {
    const std::vector<double> current =
        log_floored(translated(static_cast<double>(k) / static_cast<double>(timesteps)));
    const std::uint64_t t = window_us * k / timesteps;
    for (std::size_t i = 0; i < current.size(); ++i) {
      const double diff = current[i] - reference[i];
      if (std::fabs(diff) < theta) continue;
      const int sign = diff > 0.0 ? 1 : -1;
      const auto crossings = static_cast<std::uint64_t>(std::floor(std::fabs(diff) / theta));
      reference[i] += sign * static_cast<double>(crossings) * theta;
      Event e;
      e.x = static_cast<std::uint16_t>(i % W);
      e.y = static_cast<std::uint16_t>(i / W);
      e.t = t;
      e.p = sign;
      for (std::uint64_t c = 0; c < crossings; ++c) result.events.events.push_back(e);
    }
  }
  return result;
}

// Procedural [1,1,H,W] texture in [0.1, 0.9] for the synthetic harness.
// Specs: "ramp" / "ramp:x" / "ramp:y" (linear gradient), "checker" /
// "checker:<cell>" (two-tone squares), "noise" / "noise:<passes>" (seeded
// uniform noise smoothed by that many 3x3 box-blur passes).
inline Tensor make_texture(const std::string& spec, std::size_t height, std::size_t width,
                           std::uint64_t seed = 1) {
  if (height == 0 || width == 0) throw ContractError("make_texture: zero-size texture");
  std::string kind = spec;
  std::string arg;
  if (auto colon = spec.find(':'); colon != std::string::npos) {
    kind = spec.substr(0, colon);
    arg = spec.substr(colon + 1);
  }
  Tensor texture(Shape{1, 1, height, width});
  auto vals = texture.mutable_values();

  if (kind == "ramp") {
    const bool along_y = arg == "y";
    if (!arg.empty() && arg != "x" && arg != "y")
      throw ContractError("make_texture: ramp axis must be x or y, got '" + arg + "'");
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t i = along_y ? y : x;
        const std::size_t n = along_y ? height : width;
        const double t = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
        vals[y * width + x] = 0.1 + 0.8 * t;
      }
    }
    return texture;
  }
  if (kind == "checker") {
    std::size_t cell = 8;
    if (!arg.empty()) {
      try {
        cell = std::stoul(arg);
      } catch (const std::exception&) {
        cell = 0;
      }
      if (cell == 0)
        throw ContractError("make_texture: checker cell must be a positive integer, got '" +
                            arg + "'");
    }
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        vals[y * width + x] = ((x / cell + y / cell) % 2) ? 0.8 : 0.2;
    return texture;
  }
  if (kind == "noise") {
    std::size_t passes = 2;
    if (!arg.empty()) {
      try {
        passes = std::stoul(arg);
      } catch (const std::exception&) {
        throw ContractError("make_texture: noise passes must be an integer, got '" + arg +
                            "'");
      }
    }
    std::mt19937_64 rng(seed);
    std::vector<double> buf(height * width);
    for (double& v : buf) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    std::vector<double> tmp(buf.size());
    for (std::size_t pass = 0; pass < passes; ++pass) {
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          double sum = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              std::size_t yy = std::min(height - 1,
                                        static_cast<std::size_t>(std::max<long long>(
                                            0, static_cast<long long>(y) + dy)));
              std::size_t xx = std::min(width - 1,
                                        static_cast<std::size_t>(std::max<long long>(
                                            0, static_cast<long long>(x) + dx)));
              sum += buf[yy * width + xx];
            }
          }
          tmp[y * width + x] = sum / 9.0;
        }
      }
      buf.swap(tmp);
    }
    double lo = buf[0], hi = buf[0];
    for (double v : buf) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (std::size_t i = 0; i < buf.size(); ++i)
      vals[i] = hi > lo ? 0.1 + 0.8 * (buf[i] - lo) / (hi - lo) : 0.5;
    return texture;
  }
  throw ContractError("make_texture: unknown texture '" + spec +
                      "' (want ramp, checker or noise)");
}

}  // namespace spikeflow
