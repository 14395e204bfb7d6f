#pragma once

// Dense optical flow between consecutive luma frames: coarse-to-fine
// Horn-Schunck with a central-difference data term and Jacobi relaxation.
// Also the 3-channel flow-image encoding and the median-flow shift used by
// the tracker.
//
// Flow convention: content at position p in frame `a` appears at p + (u, v)
// in frame `b`.

#include <cmath>
#include <cstring>
#include <vector>

#include "actloc/common.hpp"
#include "actloc/frame.hpp"
#include "actloc/geometry.hpp"

namespace actloc {

struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;  // row-major, width*height
  std::vector<float> v;

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h),
                            u(std::size_t(w) * h, 0.0f),
                            v(std::size_t(w) * h, 0.0f) {}
  float u_at(int x, int y) const { return u[std::size_t(y) * width + x]; }
  float v_at(int x, int y) const { return v[std::size_t(y) * width + x]; }
};

struct FlowParams {
  double alpha = 15.0;   // smoothness weight
  int iterations = 100;  // Jacobi sweeps per pyramid level
  int levels = 3;
  double scale = 0.5;    // pyramid downsampling factor

  void validate() const {
    ACTLOC_CHECK(alpha > 0.0, "flow alpha must be > 0");
    ACTLOC_CHECK(iterations >= 1, "flow iterations must be >= 1");
    ACTLOC_CHECK(levels >= 1, "flow levels must be >= 1");
    ACTLOC_CHECK(scale > 0.0 && scale < 1.0, "flow scale factor must be in (0,1)");
  }
};

namespace detail {

struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  FloatImage() = default;
  FloatImage(int w, int h) : width(w), height(h), data(std::size_t(w) * h, 0.0f) {}
  float at(int x, int y) const { return data[std::size_t(y) * width + x]; }
  float& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  float at_clamped(int x, int y) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y);
  }
  float sample(float x, float y) const {  // bilinear, edge-replicated
    int x0 = int(std::floor(x)), y0 = int(std::floor(y));
    float fx = x - x0, fy = y - y0;
    float v00 = at_clamped(x0, y0), v10 = at_clamped(x0 + 1, y0);
    float v01 = at_clamped(x0, y0 + 1), v11 = at_clamped(x0 + 1, y0 + 1);
    return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 +
           (1 - fx) * fy * v01 + fx * fy * v11;
  }
};

inline FloatImage to_float(const Frame& f) {
  FloatImage out(f.width, f.height);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = float(f.data[i]);
  return out;
}

inline FloatImage resize(const FloatImage& src, int w, int h) {
  FloatImage out(w, h);
  float sx = float(src.width) / w, sy = float(src.height) / h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = src.sample((x + 0.5f) * sx - 0.5f, (y + 0.5f) * sy - 0.5f);
  return out;
}

// Area-averaged downscale. Plain bilinear subsampling aliases fine texture,
// and an aliased pyramid level is no longer a shifted copy of its pair, which
// biases the coarse flow estimate.
inline FloatImage resize_area(const FloatImage& src, int w, int h) {
  if (w >= src.width || h >= src.height) return resize(src, w, h);
  FloatImage out(w, h);
  const double sx = double(src.width) / w, sy = double(src.height) / h;
  for (int y = 0; y < h; ++y) {
    const double y0 = y * sy, y1 = (y + 1) * sy;
    for (int x = 0; x < w; ++x) {
      const double x0 = x * sx, x1 = (x + 1) * sx;
      double sum = 0.0, area = 0.0;
      for (int yy = int(std::floor(y0)); yy < int(std::ceil(y1)); ++yy) {
        const double wy = std::min(y1, double(yy + 1)) - std::max(y0, double(yy));
        for (int xx = int(std::floor(x0)); xx < int(std::ceil(x1)); ++xx) {
          const double wx = std::min(x1, double(xx + 1)) - std::max(x0, double(xx));
          sum += wx * wy * src.at_clamped(xx, yy);
          area += wx * wy;
        }
      }
      out.at(x, y) = float(sum / area);
    }
  }
  return out;
}

// One Horn-Schunck solve at a single pyramid level, refining (u, v) in place.
// Re-linearizes (re-warps b) a few times across the sweep budget so that
// residual displacements beyond the Taylor range still converge.
inline void hs_refine_level(const FloatImage& a, const FloatImage& b,
                            FloatImage& u, FloatImage& v,
                            const FlowParams& p) {
  const int w = a.width, h = a.height;
  const float alpha2 = float(p.alpha * p.alpha);
  const int relin = std::max(1, p.iterations / 4);

  FloatImage bw(w, h), ix(w, h), iy(w, h), it(w, h);
  FloatImage du(w, h), dv(w, h), du2(w, h), dv2(w, h);

  int done = 0;
  while (done < p.iterations) {
    // Warp b with the current flow and linearize around it.
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        bw.at(x, y) = b.sample(x + u.at(x, y), y + v.at(x, y));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        ix.at(x, y) = 0.25f * (a.at_clamped(x + 1, y) - a.at_clamped(x - 1, y) +
                               bw.at_clamped(x + 1, y) - bw.at_clamped(x - 1, y));
        iy.at(x, y) = 0.25f * (a.at_clamped(x, y + 1) - a.at_clamped(x, y - 1) +
                               bw.at_clamped(x, y + 1) - bw.at_clamped(x, y - 1));
        it.at(x, y) = bw.at(x, y) - a.at(x, y);
      }
    }
    std::fill(du.data.begin(), du.data.end(), 0.0f);
    std::fill(dv.data.begin(), dv.data.end(), 0.0f);

    int sweeps = std::min(relin, p.iterations - done);
    for (int s = 0; s < sweeps; ++s) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          float ubar = 0.25f * (du.at_clamped(x - 1, y) + du.at_clamped(x + 1, y) +
                                du.at_clamped(x, y - 1) + du.at_clamped(x, y + 1));
          float vbar = 0.25f * (dv.at_clamped(x - 1, y) + dv.at_clamped(x + 1, y) +
                                dv.at_clamped(x, y - 1) + dv.at_clamped(x, y + 1));
          float gx = ix.at(x, y), gy = iy.at(x, y);
          float num = gx * ubar + gy * vbar + it.at(x, y);
          float den = alpha2 + gx * gx + gy * gy;
          du2.at(x, y) = ubar - gx * num / den;
          dv2.at(x, y) = vbar - gy * num / den;
        }
      }
      std::swap(du, du2);
      std::swap(dv, dv2);
    }
    done += sweeps;
    for (std::size_t i = 0; i < u.data.size(); ++i) {
      u.data[i] += du.data[i];
      v.data[i] += dv.data[i];
    }
  }
}

}  // namespace detail

inline FlowField estimate_flow(const Frame& a, const Frame& b,
                               const FlowParams& p = FlowParams{}) {
  p.validate();
  if (a.width != b.width || a.height != b.height)
    throw DataError("estimate_flow: frame dimension mismatch");
  ACTLOC_CHECK(a.channels == 1 && b.channels == 1,
               "estimate_flow expects 1-channel luma frames");

  detail::FloatImage fa = detail::to_float(a);
  detail::FloatImage fb = detail::to_float(b);

  // Pyramid sizes, finest first; stop shrinking below 8 px.
  std::vector<std::pair<int, int>> sizes{{a.width, a.height}};
  for (int l = 1; l < p.levels; ++l) {
    int w = std::max(8, int(std::lround(sizes.back().first * p.scale)));
    int h = std::max(8, int(std::lround(sizes.back().second * p.scale)));
    if (w == sizes.back().first && h == sizes.back().second) break;
    sizes.emplace_back(w, h);
  }

  detail::FloatImage u, v;
  for (int l = int(sizes.size()) - 1; l >= 0; --l) {
    auto [w, h] = sizes[std::size_t(l)];
    detail::FloatImage la =
        (w == a.width && h == a.height) ? fa : detail::resize_area(fa, w, h);
    detail::FloatImage lb =
        (w == a.width && h == a.height) ? fb : detail::resize_area(fb, w, h);
    if (u.width == 0) {
      u = detail::FloatImage(w, h);
      v = detail::FloatImage(w, h);
    } else {
      float ru = float(w) / u.width, rv = float(h) / u.height;
      detail::FloatImage u2 = detail::resize(u, w, h);
      detail::FloatImage v2 = detail::resize(v, w, h);
      for (auto& x : u2.data) x *= ru;
      for (auto& x : v2.data) x *= rv;
      u = std::move(u2);
      v = std::move(v2);
    }
    detail::hs_refine_level(la, lb, u, v, p);
  }

  FlowField f(a.width, a.height);
  f.u.assign(u.data.begin(), u.data.end());
  f.v.assign(v.data.begin(), v.data.end());
  return f;
}

// Flow-image encoding: components scaled by 16 and centered at 128, the
// magnitude scaled by 16 with no offset. Channels: x, y, magnitude.
inline Frame flow_to_image(const FlowField& f) {
  Frame out(f.width, f.height, 3);
  std::size_t n = std::size_t(f.width) * f.height;
  for (std::size_t i = 0; i < n; ++i) {
    double u = f.u[i], v = f.v[i];
    long c0 = std::lround(16.0 * u + 128.0);
    long c1 = std::lround(16.0 * v + 128.0);
    long c2 = std::lround(16.0 * std::sqrt(u * u + v * v));
    out.data[3 * i + 0] = std::uint8_t(std::clamp(c0, 0L, 255L));
    out.data[3 * i + 1] = std::uint8_t(std::clamp(c1, 0L, 255L));
    out.data[3 * i + 2] = std::uint8_t(std::clamp(c2, 0L, 255L));
  }
  return out;
}

// Decode a flow-image channel pair back to (u, v); inverse of the encoding
// up to quantization.
inline void flow_from_image_pixel(const Frame& img, int x, int y,
                                  double* u, double* v, double* mag) {
  *u = (double(img.at(x, y, 0)) - 128.0) / 16.0;
  *v = (double(img.at(x, y, 1)) - 128.0) / 16.0;
  *mag = double(img.at(x, y, 2)) / 16.0;
}

// Median displacement over the pixels of box ∩ frame. Medians of even counts
// take the lower middle element, so results are always observed samples.
inline std::pair<double, double> median_shift(const FlowField& f,
                                              const BoundingBox& box) {
  PixelRect r = pixel_rect(box, f.width, f.height);
  if (r.empty())
    throw DataError("median_shift: box lies fully outside the flow field");
  std::vector<float> us, vs;
  us.reserve(std::size_t(r.width()) * r.height());
  vs.reserve(us.capacity());
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      us.push_back(f.u_at(x, y));
      vs.push_back(f.v_at(x, y));
    }
  }
  std::size_t mid = (us.size() - 1) / 2;
  std::nth_element(us.begin(), us.begin() + mid, us.end());
  std::nth_element(vs.begin(), vs.begin() + mid, vs.end());
  return {double(us[mid]), double(vs[mid])};
}

// ---------------------------------------------------------------------------
// On-disk flow cache: `STFL`, int32 LE width, int32 LE height, then the
// u raster followed by the v raster as little-endian 32-bit floats.

inline std::string encode_flow(const FlowField& f) {
  std::string out = "STFL";
  auto put_i32 = [&](std::int32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    out.append(b, 4);
  };
  put_i32(f.width);
  put_i32(f.height);
  auto put_floats = [&](const std::vector<float>& vals) {
    for (float x : vals) {
      std::uint32_t bits;
      std::memcpy(&bits, &x, 4);
      char b[4] = {char(bits & 0xff), char((bits >> 8) & 0xff),
                   char((bits >> 16) & 0xff), char((bits >> 24) & 0xff)};
      out.append(b, 4);
    }
  };
  put_floats(f.u);
  put_floats(f.v);
  return out;
}

inline FlowField decode_flow(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "STFL") != 0)
    throw DataError("bad flow cache file " + origin + ": missing STFL header");
  auto get_i32 = [&](std::size_t off) {
    return std::int32_t(std::uint8_t(bytes[off])) |
           (std::int32_t(std::uint8_t(bytes[off + 1])) << 8) |
           (std::int32_t(std::uint8_t(bytes[off + 2])) << 16) |
           (std::int32_t(std::uint8_t(bytes[off + 3])) << 24);
  };
  int w = get_i32(4), h = get_i32(8);
  if (w < 1 || h < 1)
    throw DataError("bad flow cache file " + origin + ": invalid dimensions");
  std::size_t n = std::size_t(w) * h;
  if (bytes.size() != 12 + 8 * n)
    throw DataError("bad flow cache file " + origin + ": truncated payload");
  FlowField f(w, h);
  auto get_float = [&](std::size_t off) {
    std::uint32_t bits = std::uint32_t(std::uint8_t(bytes[off])) |
                         (std::uint32_t(std::uint8_t(bytes[off + 1])) << 8) |
                         (std::uint32_t(std::uint8_t(bytes[off + 2])) << 16) |
                         (std::uint32_t(std::uint8_t(bytes[off + 3])) << 24);
    float x;
    std::memcpy(&x, &bits, 4);
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) f.u[i] = get_float(12 + 4 * i);
  for (std::size_t i = 0; i < n; ++i) f.v[i] = get_float(12 + 4 * (n + i));
  return f;
}

inline void write_flow(const std::filesystem::path& path, const FlowField& f) {
  write_file_atomic(path, encode_flow(f));
}

inline FlowField read_flow(const std::filesystem::path& path) {
  return decode_flow(read_file(path), path.string());
}

// Cache file name for the pair (t, t+1), matching the frame numbering.
inline std::string flow_cache_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "flow_%06d.stfl", t);
  return buf;
}

}  // namespace actloc
