#include "pcmar/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <vector>

namespace pcmar {
namespace {

static_assert(std::numeric_limits<float>::is_iec559, "f32 must be IEEE-754");

void put_u32(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void tensor_write(const Tensor& t, const std::filesystem::path& path) {
  std::vector<char> buf;
  buf.reserve(12 + 4 * t.ndim() + 4 * t.size());
  buf.insert(buf.end(), {'T', 'N', 'S', 'R'});
  put_u32(buf, kTensorFormatVersion);
  put_u32(buf, static_cast<std::uint32_t>(t.ndim()));
  for (auto d : t.shape()) put_u32(buf, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(buf, std::bit_cast<std::uint32_t>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor tensor_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto where = " in " + path.string();
  if (buf.size() < 4) throw TruncatedError("file shorter than magic" + where);
  if (std::memcmp(buf.data(), "TNSR", 4) != 0) throw BadMagicError("bad magic" + where);
  if (buf.size() < 12) throw TruncatedError("truncated header" + where);
  const auto version = get_u32(buf.data() + 4);
  if (version != kTensorFormatVersion) {
    throw VersionMismatchError("unsupported version " + std::to_string(version) + where);
  }
  const auto ndim = get_u32(buf.data() + 8);
  if (ndim == 0) throw FormatError("zero-dimensional tensor" + where);
  if (buf.size() < 12 + 4ull * ndim) throw TruncatedError("truncated dims" + where);
  Shape shape(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i) {
    shape[i] = get_u32(buf.data() + 12 + 4 * i);
    if (shape[i] == 0) throw FormatError("zero dimension" + where);
  }
  const std::size_t offset = 12 + 4ull * ndim;
  const std::size_t n = shape_numel(shape);
  if (buf.size() < offset + 4 * n) throw TruncatedError("truncated payload" + where);
  if (buf.size() > offset + 4 * n) throw FormatError("trailing bytes after payload" + where);
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_u32(buf.data() + offset + 4 * i));
  return Tensor(std::move(shape), std::move(data));
}

std::uint8_t pgm_level(float v, float lo, float hi) {
  double x = (static_cast<double>(v) - lo) / (static_cast<double>(hi) - lo);
  x = std::clamp(x, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(255.0 * x + 0.5));
}

void pgm_export(const Tensor& t, const std::filesystem::path& path, float lo, float hi) {
  if (t.ndim() != 2) throw ShapeError("pgm_export expects a 2D tensor, got " + shape_str(t.shape()));
  if (!(hi > lo)) throw ValueError("pgm_export: hi must exceed lo");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << t.dim(1) << ' ' << t.dim(0) << "\n255\n";
  std::vector<char> row(t.dim(1));
  for (std::size_t r = 0; r < t.dim(0); ++r) {
    for (std::size_t c = 0; c < t.dim(1); ++c) row[c] = static_cast<char>(pgm_level(t.at(r, c), lo, hi));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace pcmar
