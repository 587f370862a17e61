#pragma once

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "sss_prnu/bytes.hpp"
#include "sss_prnu/error.hpp"
#include "sss_prnu/prnu.hpp"

namespace sss_prnu {

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace detail {

// Netpbm header token, skipping whitespace and '#' comments.
inline std::string pnm_token(std::span<const std::uint8_t> data, std::size_t& pos) {
  for (;;) {
    while (pos < data.size() && std::isspace(data[pos])) ++pos;
    if (pos < data.size() && data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  std::string tok;
  while (pos < data.size() && !std::isspace(data[pos]) && data[pos] != '#') tok.push_back(static_cast<char>(data[pos++]));
  if (tok.empty()) throw Malformed("truncated netpbm header");
  return tok;
}

inline std::size_t pnm_number(std::span<const std::uint8_t> data, std::size_t& pos) {
  const std::string tok = pnm_token(data, pos);
  for (char c : tok) {
    if (!std::isdigit(static_cast<unsigned char>(c))) throw Malformed("bad netpbm header field '" + tok + "'");
  }
  if (tok.size() > 9) throw Malformed("netpbm header field too large");
  return std::stoul(tok);
}

}  // namespace detail

// Binary PGM (P5) or PPM (P6, converted to luma), maxval <= 255.
inline Image decode_pnm(std::span<const std::uint8_t> data) {
  std::size_t pos = 0;
  const std::string magic = detail::pnm_token(data, pos);
  if (magic != "P5" && magic != "P6") throw Malformed("expected binary PGM (P5) or PPM (P6), got '" + magic + "'");
  const std::size_t w = detail::pnm_number(data, pos);
  const std::size_t h = detail::pnm_number(data, pos);
  const std::size_t maxval = detail::pnm_number(data, pos);
  if (w == 0 || h == 0) throw Malformed("image has zero size");
  if (maxval == 0 || maxval > 255) throw Malformed("only 8-bit netpbm is supported");
  ++pos;  // single whitespace after maxval
  const std::size_t channels = magic == "P6" ? 3 : 1;
  if (data.size() < pos || data.size() - pos < w * h * channels) throw Malformed("truncated pixel data");
  const double rescale = 255.0 / static_cast<double>(maxval);
  Image img(w, h);
  auto px = img.values();
  for (std::size_t i = 0; i < w * h; ++i) {
    if (channels == 1) {
      px[i] = data[pos + i] * rescale;
    } else {
      const auto* p = &data[pos + 3 * i];
      px[i] = luma(p[0] * rescale, p[1] * rescale, p[2] * rescale);
    }
  }
  return img;
}

// P5, values rounded and clamped to [0, 255].
inline Bytes encode_pgm(const Image& img) {
  Bytes out;
  ByteWriter w(out);
  w.raw("P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n");
  for (double v : img.values()) w.u8(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
  return out;
}

inline Image read_image(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }
inline void write_pgm(const std::filesystem::path& path, const Image& img) { write_file(path, encode_pgm(img)); }

// "NMAT" | width (4) | height (4) | binary64 values row-major, big-endian.
inline Bytes encode_nmat(const NoiseMatrix& m) {
  Bytes out;
  ByteWriter w(out);
  w.raw(std::string_view("NMAT"));
  w.u32(static_cast<std::uint32_t>(m.width()));
  w.u32(static_cast<std::uint32_t>(m.height()));
  for (double v : m.values()) w.f64(v);
  return out;
}

inline NoiseMatrix decode_nmat(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  if (r.str(4) != "NMAT") throw Malformed("missing NMAT magic");
  const std::size_t w = r.u32();
  const std::size_t h = r.u32();
  if (w == 0 || h == 0) throw Malformed("matrix has zero size");
  if (r.remaining() != w * h * 8) throw Malformed("NMAT payload size does not match dimensions");
  std::vector<double> values(w * h);
  for (double& v : values) {
    v = r.f64();
    if (!std::isfinite(v)) throw Malformed("NMAT contains non-finite values");
  }
  return NoiseMatrix(w, h, std::move(values));
}

inline NoiseMatrix read_nmat(const std::filesystem::path& path) { return decode_nmat(read_file(path)); }
inline void write_nmat(const std::filesystem::path& path, const NoiseMatrix& m) { write_file(path, encode_nmat(m)); }

}  // namespace sss_prnu
