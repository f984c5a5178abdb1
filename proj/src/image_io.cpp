#include "rps/image_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace rps::io {

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

void spill(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

// Parses one whitespace/comment separated header integer.
long header_int(const std::vector<unsigned char>& buf, std::size_t& pos, const std::string& name) {
  for (;;) {
    while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  long value = 0;
  std::size_t digits = 0;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    value = value * 10 + (buf[pos] - '0');
    ++pos;
    ++digits;
  }
  if (digits == 0) throw IoError(name + ": malformed PGM header");
  return value;
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') {
    throw IoError(path.string() + ": not a binary PGM (P5) file");
  }
  std::size_t pos = 2;
  const long cols = header_int(buf, pos, path.string());
  const long rows = header_int(buf, pos, path.string());
  const long maxval = header_int(buf, pos, path.string());
  if (cols < 1 || rows < 1 || maxval < 1 || maxval > 65535) {
    throw IoError(path.string() + ": invalid PGM dimensions or maxval");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t bytes_per = maxval < 256 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(rows * cols) * bytes_per;
  if (buf.size() < pos + need) throw IoError(path.string() + ": truncated PGM data");
  Vector data(rows * cols);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (Index i = 0; i < data.size(); ++i) {
    const unsigned char* p = buf.data() + pos + static_cast<std::size_t>(i) * bytes_per;
    const unsigned v = bytes_per == 1 ? p[0] : (static_cast<unsigned>(p[0]) << 8) | p[1];
    data[i] = v * scale;
  }
  return Image(rows, cols, std::move(data));
}

void write_pgm(const Image& img, const std::filesystem::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ConfigError("PGM bit depth must be 8 or 16");
  const unsigned maxval = bit_depth == 8 ? 255u : 65535u;
  const std::string header = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) +
                             "\n" + std::to_string(maxval) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  const Image clamped = clamp_unit(img);
  for (Index i = 0; i < clamped.size(); ++i) {
    const auto q = static_cast<unsigned>(std::lround(clamped.data()[i] * maxval));
    if (bit_depth == 16) out.push_back(static_cast<unsigned char>(q >> 8));
    out.push_back(static_cast<unsigned char>(q & 0xFF));
  }
  spill(path, out);
}

Image read_raw(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  if (buf.size() < 8) throw IoError(path.string() + ": truncated raw header");
  const std::uint32_t rows = get_u32le(buf.data());
  const std::uint32_t cols = get_u32le(buf.data() + 4);
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (buf.size() != 8 + 8 * n) throw IoError(path.string() + ": raw payload size mismatch");
  Vector data(static_cast<Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[8 + 8 * i + b]) << (8 * b);
    data[static_cast<Index>(i)] = std::bit_cast<double>(bits);
  }
  return Image(rows, cols, std::move(data));
}

void write_raw(const Image& img, const std::filesystem::path& path) {
  std::vector<unsigned char> out;
  out.reserve(8 + 8 * static_cast<std::size_t>(img.size()));
  put_u32le(out, static_cast<std::uint32_t>(img.rows()));
  put_u32le(out, static_cast<std::uint32_t>(img.cols()));
  for (Index i = 0; i < img.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(img.data()[i]);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
  }
  spill(path, out);
}

Image read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".raw" || ext == ".f64") return read_raw(path);
  return read_pgm(path);
}

}  // namespace rps::io
