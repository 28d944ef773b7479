#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "liftdepth/tensor.hpp"

// File formats:
//   PFM  - grayscale portable float map, header "Pf\n<W> <H>\n-1.0\n",
//          32-bit little-endian floats, rows bottom-to-top.
//   PPM  - binary P6, 8-bit, values rounded half-away-from-zero.
//   LFTD - tensor dump: magic "LFTD", u32 rank, u32 extents (LE), f32
//          payload in row-major order.

namespace liftdepth {

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
  out.push_back(char((v >> 16) & 0xff));
  out.push_back(char((v >> 24) & 0xff));
}

inline void put_f32_le(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32_le(out, bits);
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

inline float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = get_u32_le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path, 0);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path + " for writing", 0);
  out.write(data.data(), std::streamsize(data.size()));
  if (!out) throw FormatError("short write to " + path, 0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PFM
// ---------------------------------------------------------------------------

inline std::string encode_pfm(const Tensor& depth) {
  detail::check_rank(depth, 2, "encode_pfm");
  for (int i = 0; i < depth.size(); ++i)
    if (!std::isfinite(depth[i])) throw ValueError("encode_pfm: non-finite value");
  int h = depth.dim(0), w = depth.dim(1);
  std::string out = "Pf\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n";
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x)
      detail::put_f32_le(out, float(depth[y * w + x]));
  return out;
}

inline void write_pfm(const Tensor& depth, const std::string& path) {
  detail::write_file(path, encode_pfm(depth));
}

inline Tensor decode_pfm(const std::string& data) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw FormatError("unexpected end of PFM header", std::int64_t(pos));
    return data.substr(start, pos - start);
  };
  std::string magic = token();
  if (magic == "PF") throw FormatError("color PFM not supported", 0);
  if (magic != "Pf") throw FormatError("not a PFM file", 0);
  int w = 0, h = 0;
  double scl = 0.0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    scl = std::stod(token());
  } catch (const std::exception&) {
    throw FormatError("malformed PFM header", std::int64_t(pos));
  }
  if (w <= 0 || h <= 0) throw FormatError("bad PFM dimensions", std::int64_t(pos));
  if (scl >= 0.0)
    throw FormatError("big-endian PFM payloads are not supported", std::int64_t(pos));
  if (pos >= data.size() || data[pos] != '\n')
    throw FormatError("PFM header must end with a newline", std::int64_t(pos));
  ++pos;
  std::size_t need = std::size_t(w) * std::size_t(h) * 4;
  if (data.size() - pos < need)
    throw FormatError("truncated PFM payload, expected " + std::to_string(need) + " bytes",
                      std::int64_t(data.size()));
  Tensor out = Tensor::zeros({h, w});
  const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data()) + pos;
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) {
      out[y * w + x] = double(detail::get_f32_le(p));
      p += 4;
    }
  return out;
}

inline Tensor read_pfm(const std::string& path) {
  return decode_pfm(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// PPM
// ---------------------------------------------------------------------------

struct PpmWriteReport {
  int clamped = 0;  // values outside [0,1] that were clamped
};

inline unsigned char quantize_unit(double v, int& clamped) {
  if (v < 0.0) {
    v = 0.0;
    ++clamped;
  } else if (v > 1.0) {
    v = 1.0;
    ++clamped;
  }
  return static_cast<unsigned char>(std::lround(v * 255.0));  // half away from zero
}

inline std::string encode_ppm(const Tensor& image, PpmWriteReport* report = nullptr) {
  detail::check_rank(image, 3, "encode_ppm");
  if (image.dim(0) != 3) throw ShapeError("encode_ppm: expected 3 channels");
  int h = image.dim(1), w = image.dim(2), plane = h * w;
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  int clamped = 0;
  for (int i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      out.push_back(char(quantize_unit(image[c * plane + i], clamped)));
  if (report) report->clamped = clamped;
  return out;
}

inline PpmWriteReport write_ppm(const Tensor& image, const std::string& path) {
  PpmWriteReport report;
  detail::write_file(path, encode_ppm(image, &report));
  return report;
}

// Grayscale image emitted as P6 with equal channels; input values are bytes.
inline void write_gray_ppm(const Tensor& bytes, const std::string& path) {
  detail::check_rank(bytes, 2, "write_gray_ppm");
  int h = bytes.dim(0), w = bytes.dim(1);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (int i = 0; i < h * w; ++i) {
    char b = char(static_cast<unsigned char>(bytes[i]));
    out.push_back(b);
    out.push_back(b);
    out.push_back(b);
  }
  detail::write_file(path, out);
}

inline Tensor decode_ppm(const std::string& data) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (start == pos) throw FormatError("unexpected end of PPM header", std::int64_t(pos));
    return data.substr(start, pos - start);
  };
  if (token() != "P6") throw FormatError("not a binary PPM file", 0);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw FormatError("malformed PPM header", std::int64_t(pos));
  }
  if (w <= 0 || h <= 0) throw FormatError("bad PPM dimensions", std::int64_t(pos));
  if (maxval != 255) throw FormatError("only 8-bit PPM supported", std::int64_t(pos));
  ++pos;  // single whitespace after maxval
  std::size_t need = std::size_t(w) * h * 3;
  if (data.size() - pos < need)
    throw FormatError("truncated PPM payload", std::int64_t(data.size()));
  Tensor out = Tensor::zeros({3, h, w});
  int plane = h * w;
  const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data()) + pos;
  for (int i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) out[c * plane + i] = double(*p++) / 255.0;
  return out;
}

inline Tensor read_ppm(const std::string& path) {
  return decode_ppm(detail::read_file(path));
}

// ---------------------------------------------------------------------------
// LFTD tensor dumps
// ---------------------------------------------------------------------------

inline std::string encode_lftd(const Tensor& t) {
  std::string out = "LFTD";
  detail::put_u32_le(out, std::uint32_t(t.rank()));
  for (int i = 0; i < t.rank(); ++i) detail::put_u32_le(out, std::uint32_t(t.dim(i)));
  for (int i = 0; i < t.size(); ++i) detail::put_f32_le(out, float(t[i]));
  return out;
}

inline void write_lftd(const Tensor& t, const std::string& path) {
  detail::write_file(path, encode_lftd(t));
}

inline Tensor decode_lftd(const std::string& data, std::size_t offset = 0,
                          std::size_t* end = nullptr) {
  const unsigned char* base = reinterpret_cast<const unsigned char*>(data.data());
  if (data.size() - offset < 8 || std::memcmp(base + offset, "LFTD", 4) != 0)
    throw FormatError("missing LFTD magic", std::int64_t(offset));
  std::uint32_t rank = detail::get_u32_le(base + offset + 4);
  if (rank == 0 || rank > 8) throw FormatError("bad LFTD rank", std::int64_t(offset + 4));
  std::size_t pos = offset + 8;
  if (data.size() - pos < rank * 4)
    throw FormatError("truncated LFTD extents", std::int64_t(data.size()));
  Shape shape;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t e = detail::get_u32_le(base + pos);
    pos += 4;
    if (e == 0) throw FormatError("zero LFTD extent", std::int64_t(pos - 4));
    shape.push_back(int(e));
    count *= e;
  }
  if (data.size() - pos < count * 4)
    throw FormatError("truncated LFTD payload", std::int64_t(data.size()));
  Tensor out = Tensor::zeros(shape);
  for (std::size_t i = 0; i < count; ++i) {
    out[int(i)] = double(detail::get_f32_le(base + pos));
    pos += 4;
  }
  if (end) *end = pos;
  return out;
}

inline Tensor read_lftd(const std::string& path) {
  return decode_lftd(detail::read_file(path));
}

}  // namespace liftdepth
