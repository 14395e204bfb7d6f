#pragma once

// Frame / sequence data model, luma conversion, bilinear patch extraction,
// and binary PGM/PPM I/O. Frame indices t are 1-based throughout the public
// API, matching the on-disk frame numbering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/geometry.hpp"

namespace actloc {

struct Frame {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 = luma, 3 = RGB
  std::vector<std::uint8_t> data;  // row-major, interleaved channels

  Frame() = default;
  Frame(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(std::size_t(w) * h * c, fill) {
    ACTLOC_CHECK(w >= 1 && h >= 1, "frame dimensions must be >= 1");
    ACTLOC_CHECK(c == 1 || c == 3, "frame must have 1 or 3 channels");
  }

  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(std::size_t(y) * width + x) * channels + c];
  }
  // Edge-replicated access: coordinates outside the frame clamp to the border.
  std::uint8_t at_clamped(int x, int y, int c = 0) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y, c);
  }

  bool valid() const {
    return width >= 1 && height >= 1 && (channels == 1 || channels == 3) &&
           data.size() == std::size_t(width) * height * channels;
  }
};

struct VideoSequence {
  std::string id;
  std::vector<Frame> frames;  // uniform dimensions, length T >= 1

  int length() const { return int(frames.size()); }
  int width() const { return frames.empty() ? 0 : frames[0].width; }
  int height() const { return frames.empty() ? 0 : frames[0].height; }
  const Frame& frame(int t) const {  // t in [1, T]
    ACTLOC_CHECK(t >= 1 && t <= length(), "frame index out of range");
    return frames[std::size_t(t) - 1];
  }
};

// Y = round(0.299 R + 0.587 G + 0.114 B); 1-channel input passes through.
inline Frame to_luma(const Frame& f) {
  if (f.channels == 1) return f;
  Frame out(f.width, f.height, 1);
  const std::uint8_t* src = f.data.data();
  std::uint8_t* dst = out.data.data();
  std::size_t n = std::size_t(f.width) * f.height;
  for (std::size_t i = 0; i < n; ++i) {
    double y = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    dst[i] = std::uint8_t(std::lround(y));
  }
  return out;
}

// Bilinear sample with edge replication, per channel. Continuous coordinates
// follow the half-pixel-center convention so an identity crop at native size
// reproduces the input bitwise.
inline double sample_bilinear(const Frame& f, double x, double y, int c) {
  int x0 = int(std::floor(x));
  int y0 = int(std::floor(y));
  double fx = x - x0;
  double fy = y - y0;
  double v00 = f.at_clamped(x0, y0, c);
  double v10 = f.at_clamped(x0 + 1, y0, c);
  double v01 = f.at_clamped(x0, y0 + 1, c);
  double v11 = f.at_clamped(x0 + 1, y0 + 1, c);
  return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 +
         (1 - fx) * fy * v01 + fx * fy * v11;
}

inline Frame crop_resize(const Frame& f, const BoundingBox& box,
                         int out_w, int out_h) {
  ACTLOC_CHECK(out_w >= 1 && out_h >= 1, "output size must be >= 1");
  if (!intersects_frame(box, f.width, f.height))
    throw DataError("crop_resize: box lies fully outside the frame");
  Frame out(out_w, out_h, f.channels);
  double sx = box.w / out_w;
  double sy = box.h / out_h;
  for (int j = 0; j < out_h; ++j) {
    double src_y = box.y + (j + 0.5) * sy - 0.5;
    for (int i = 0; i < out_w; ++i) {
      double src_x = box.x + (i + 0.5) * sx - 0.5;
      for (int c = 0; c < f.channels; ++c) {
        double v = sample_bilinear(f, src_x, src_y, c);
        out.at(i, j, c) = std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5) / PPM (P6), 8-bit maxval 255.

inline std::string encode_pnm(const Frame& f) {
  ACTLOC_CHECK(f.valid(), "frame data length must match dimensions");
  std::string out = (f.channels == 1 ? "P5\n" : "P6\n");
  out += std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(f.data.data()), f.data.size());
  return out;
}

inline Frame decode_pnm(const std::string& bytes, const std::string& origin) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> Frame {
    throw DataError("bad PNM file " + origin + ": " + why);
  };
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      char c = bytes[pos];
      if (c == '#') {  // comment to end of line
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() &&
           !std::isspace(static_cast<unsigned char>(bytes[pos])))
      ++pos;
    return bytes.substr(start, pos - start);
  };

  std::string magic = next_token();
  int channels;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else return fail("expected P5 or P6 magic");
  int w, h, maxval;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    return fail("unparseable header");
  }
  if (w < 1 || h < 1) return fail("non-positive dimensions");
  if (maxval != 255) return fail("only maxval 255 supported");
  ++pos;  // single whitespace after maxval
  std::size_t need = std::size_t(w) * h * channels;
  if (bytes.size() - pos < need) return fail("truncated pixel data");
  Frame f(w, h, channels);
  std::copy_n(bytes.data() + pos, need,
              reinterpret_cast<char*>(f.data.data()));
  return f;
}

inline void write_frame(const std::filesystem::path& path, const Frame& f) {
  write_file_atomic(path, encode_pnm(f));
}

inline Frame read_frame(const std::filesystem::path& path) {
  return decode_pnm(read_file(path), path.string());
}

inline std::string frame_file_name(int t, int channels) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.%s", t,
                channels == 1 ? "pgm" : "ppm");
  return buf;
}

// Loads frame_%06d.pgm|ppm (indices from 1, contiguous) from a directory.
inline VideoSequence load_sequence(const std::filesystem::path& dir,
                                   const std::string& id = "") {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw DataError("missing directory: " + dir.string());
  std::map<int, fs::path> indexed;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    int t = 0;
    char ext[8] = {0};
    if (std::sscanf(name.c_str(), "frame_%d.%3s", &t, ext) == 2 &&
        (std::string(ext) == "pgm" || std::string(ext) == "ppm")) {
      indexed[t] = entry.path();
    }
  }
  if (indexed.empty())
    throw DataError("no frame files in directory: " + dir.string());
  VideoSequence seq;
  seq.id = id.empty() ? dir.filename().string() : id;
  int expect = 1;
  for (const auto& [t, path] : indexed) {
    if (t != expect)
      throw DataError("non-contiguous frame numbering at " + path.string() +
                      " (expected index " + std::to_string(expect) + ")");
    Frame f = read_frame(path);
    if (!seq.frames.empty() &&
        (f.width != seq.width() || f.height != seq.height()))
      throw DataError("frame dimension mismatch at " + path.string());
    seq.frames.push_back(std::move(f));
    ++expect;
  }
  return seq;
}

inline void write_sequence(const std::filesystem::path& dir,
                           const VideoSequence& seq) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (int t = 1; t <= seq.length(); ++t) {
    const Frame& f = seq.frame(t);
    write_frame(dir / frame_file_name(t, f.channels), f);
  }
}

}  // namespace actloc
