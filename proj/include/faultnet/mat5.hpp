#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <zlib.h>

#include "faultnet/errors.hpp"

namespace faultnet {

// Reader for the Level-5 MAT binary container, covering the subset the CWRU
// files need: real, non-sparse double matrices, stored either as plain
// miMATRIX elements or deflate-wrapped inside miCOMPRESSED. Both byte orders
// are handled. Everything else raises UnsupportedElement with the variable
// name when one is known.

struct Mat5Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

using Mat5File = std::map<std::string, Mat5Matrix>;

namespace mat5_detail {

constexpr std::uint32_t kMiInt8 = 1;
constexpr std::uint32_t kMiInt32 = 5;
constexpr std::uint32_t kMiUint32 = 6;
constexpr std::uint32_t kMiDouble = 9;
constexpr std::uint32_t kMiMatrix = 14;
constexpr std::uint32_t kMiCompressed = 15;

constexpr std::uint32_t kMxDoubleClass = 6;

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size, bool swap)
      : data_(data), size_(size), swap_(swap) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

  const unsigned char* bytes(std::size_t n) {
    if (remaining() < n) throw TruncatedFile("unexpected end of MAT data");
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32() {
    const unsigned char* p = bytes(4);
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    if (swap_) v = byteswap32_(v);
    return v;
  }

  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

  double f64() {
    const unsigned char* p = bytes(8);
    std::uint64_t v;
    std::memcpy(&v, p, 8);
    if (swap_) v = byteswap64_(v);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }

  void skip(std::size_t n) { bytes(n); }

  // Elements are padded to 8-byte boundaries.
  void align8() {
    const std::size_t rem = pos_ % 8;
    if (rem != 0) {
      const std::size_t pad = 8 - rem;
      if (remaining() < pad) {
        pos_ = size_;  // trailing padding may be absent at end of stream
      } else {
        pos_ += pad;
      }
    }
  }

  bool swaps() const { return swap_; }

 private:
  static std::uint32_t byteswap32_(std::uint32_t v) {
    return ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) |
           ((v & 0x00FF0000u) >> 8) | ((v & 0xFF000000u) >> 24);
  }
  static std::uint64_t byteswap64_(std::uint64_t v) {
    v = ((v & 0x00000000FFFFFFFFull) << 32) | ((v & 0xFFFFFFFF00000000ull) >> 32);
    v = ((v & 0x0000FFFF0000FFFFull) << 16) | ((v & 0xFFFF0000FFFF0000ull) >> 16);
    v = ((v & 0x00FF00FF00FF00FFull) << 8) | ((v & 0xFF00FF00FF00FF00ull) >> 8);
    return v;
  }

  const unsigned char* data_;
  std::size_t size_;
  bool swap_;
  std::size_t pos_ = 0;
};

struct ElementTag {
  std::uint32_t type = 0;
  std::uint32_t size = 0;
  bool small = false;  // data packed into the tag's trailing 4 bytes
};

inline ElementTag read_tag(ByteReader& r) {
  ElementTag tag;
  const std::uint32_t first = r.u32();
  if ((first >> 16) != 0) {
    tag.small = true;
    tag.type = first & 0xFFFFu;
    tag.size = first >> 16;
  } else {
    tag.type = first;
    tag.size = r.u32();
  }
  return tag;
}

inline std::vector<unsigned char> zlib_inflate(const unsigned char* data,
                                               std::size_t size) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw IoError("zlib inflateInit failed");
  std::vector<unsigned char> out;
  out.resize(size * 4 + 1024);
  zs.next_in = const_cast<Bytef*>(data);
  zs.avail_in = static_cast<uInt>(size);
  std::size_t written = 0;
  int ret = Z_OK;
  do {
    if (written == out.size()) out.resize(out.size() * 2);
    zs.next_out = out.data() + written;
    zs.avail_out = static_cast<uInt>(out.size() - written);
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw TruncatedFile("corrupt deflate stream in miCOMPRESSED element");
    }
    written = out.size() - zs.avail_out;
  } while (ret != Z_STREAM_END);
  inflateEnd(&zs);
  out.resize(written);
  return out;
}

// Parses one miMATRIX element body and inserts the matrix into `out`.
inline void parse_matrix_element(ByteReader& r, std::size_t body_size,
                                 Mat5File& out) {
  const std::size_t end = r.pos() + body_size;

  // Array flags subelement: two uint32 words.
  ElementTag flags_tag = read_tag(r);
  if (flags_tag.type != kMiUint32 || flags_tag.size != 8) {
    throw UnsupportedElement("miMATRIX missing array-flags subelement");
  }
  const std::uint32_t flags_word = r.u32();
  r.u32();  // nzmax, sparse only
  const std::uint32_t array_class = flags_word & 0xFFu;
  const bool is_complex = (flags_word & 0x0800u) != 0;

  // Dimensions subelement.
  ElementTag dims_tag = read_tag(r);
  if (dims_tag.type != kMiInt32) {
    throw UnsupportedElement("miMATRIX missing dimensions subelement");
  }
  const std::size_t ndims = dims_tag.size / 4;
  std::vector<std::int32_t> dims(ndims);
  for (std::size_t i = 0; i < ndims; ++i) dims[i] = r.i32();
  if (!dims_tag.small) r.align8();

  // Array name subelement.
  ElementTag name_tag = read_tag(r);
  if (name_tag.type != kMiInt8) {
    throw UnsupportedElement("miMATRIX missing name subelement");
  }
  std::string name(reinterpret_cast<const char*>(r.bytes(name_tag.size)),
                   name_tag.size);
  if (name_tag.small) {
    if (name_tag.size < 4) r.skip(4 - name_tag.size);
  } else {
    r.align8();
  }

  if (array_class != kMxDoubleClass) {
    throw UnsupportedElement("variable '" + name + "': array class " +
                             std::to_string(array_class) +
                             " not supported (double only)");
  }
  if (is_complex) {
    throw UnsupportedElement("variable '" + name +
                             "': complex data not supported");
  }
  if (ndims != 2 || dims[0] < 0 || dims[1] < 0) {
    throw UnsupportedElement("variable '" + name + "': expected a 2-D matrix");
  }
  const std::size_t rows = static_cast<std::size_t>(dims[0]);
  const std::size_t cols = static_cast<std::size_t>(dims[1]);

  // Real part.
  ElementTag pr_tag = read_tag(r);
  if (pr_tag.type != kMiDouble) {
    throw UnsupportedElement("variable '" + name + "': data stored as type " +
                             std::to_string(pr_tag.type) +
                             " (miDOUBLE required)");
  }
  if (pr_tag.size != rows * cols * 8) {
    throw TruncatedFile("variable '" + name + "': data size mismatch");
  }

  Mat5Matrix m;
  m.rows = rows;
  m.cols = cols;
  m.values.resize(rows * cols);
  // File order is column-major; store row-major.
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t rr = 0; rr < rows; ++rr) {
      m.values[rr * cols + c] = r.f64();
    }
  }

  if (r.pos() > end) throw TruncatedFile("variable '" + name + "': overran element");
  out[name] = std::move(m);
}

inline void parse_element(ByteReader& r, Mat5File& out);

inline void parse_compressed_element(ByteReader& r, std::size_t size,
                                     Mat5File& out) {
  const unsigned char* data = r.bytes(size);
  std::vector<unsigned char> inflated = zlib_inflate(data, size);
  ByteReader inner(inflated.data(), inflated.size(), r.swaps());
  parse_element(inner, out);
}

inline void parse_element(ByteReader& r, Mat5File& out) {
  ElementTag tag = read_tag(r);
  switch (tag.type) {
    case kMiMatrix:
      parse_matrix_element(r, tag.size, out);
      r.align8();
      break;
    case kMiCompressed:
      // Compressed elements are exempt from 8-byte padding.
      parse_compressed_element(r, tag.size, out);
      break;
    default:
      throw UnsupportedElement("top-level element of type " +
                               std::to_string(tag.type) + " not supported");
  }
}

}  // namespace mat5_detail

inline Mat5File parse_mat5(const unsigned char* data, std::size_t size) {
  using namespace mat5_detail;
  if (size < 128) throw TruncatedFile("MAT file shorter than its 128-byte header");

  if (std::memcmp(data, "MATLAB 5.0", 10) != 0) {
    throw BadMagic("not a Level-5 MAT-file (missing 'MATLAB 5.0' header text)");
  }
  const unsigned char e0 = data[126];
  const unsigned char e1 = data[127];
  bool file_little;
  if (e0 == 'I' && e1 == 'M') {
    file_little = true;
  } else if (e0 == 'M' && e1 == 'I') {
    file_little = false;
  } else {
    throw BadMagic("invalid endianness indicator in MAT header");
  }
  constexpr bool host_little = std::endian::native == std::endian::little;
  const bool swap = file_little != host_little;

  ByteReader r(data + 128, size - 128, swap);
  Mat5File out;
  while (r.remaining() >= 8) {
    parse_element(r, out);
  }
  return out;
}

inline Mat5File parse_mat5(const std::vector<unsigned char>& bytes) {
  return parse_mat5(bytes.data(), bytes.size());
}

inline Mat5File parse_mat5_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open MAT file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return parse_mat5(bytes);
}

}  // namespace faultnet
