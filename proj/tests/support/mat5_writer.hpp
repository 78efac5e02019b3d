#pragma once

// Test-only byte-exact MAT v5 writer. Produces minimal files holding real
// double matrices, in either byte order, optionally deflate-compressed, for
// round-trip checks against the parser.

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include <zlib.h>

#include "faultnet/errors.hpp"
#include "faultnet/mat5.hpp"

namespace faultnet_test {

struct Mat5WriteOptions {
  bool big_endian = false;
  bool compress = false;
};

namespace detail {

class ByteWriter {
 public:
  explicit ByteWriter(bool swap) : swap_(swap) {}

  void u8(std::uint8_t v) { out_.push_back(v); }

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }

  void u16(std::uint16_t v) {
    if (swap_) v = static_cast<std::uint16_t>((v << 8) | (v >> 8));
    raw(&v, 2);
  }

  void u32(std::uint32_t v) {
    if (swap_) {
      v = ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) |
          ((v & 0x00FF0000u) >> 8) | ((v & 0xFF000000u) >> 24);
    }
    raw(&v, 4);
  }

  void f64(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    if (swap_) {
      v = ((v & 0x00000000FFFFFFFFull) << 32) | ((v & 0xFFFFFFFF00000000ull) >> 32);
      v = ((v & 0x0000FFFF0000FFFFull) << 16) | ((v & 0xFFFF0000FFFF0000ull) >> 16);
      v = ((v & 0x00FF00FF00FF00FFull) << 8) | ((v & 0xFF00FF00FF00FF00ull) >> 8);
    }
    raw(&v, 8);
  }

  void pad_to8() {
    while (out_.size() % 8 != 0) out_.push_back(0);
  }

  std::vector<unsigned char>& bytes() { return out_; }

 private:
  std::vector<unsigned char> out_;
  bool swap_;
};

inline std::vector<unsigned char> zlib_deflate(
    const std::vector<unsigned char>& in) {
  uLongf bound = compressBound(static_cast<uLong>(in.size()));
  std::vector<unsigned char> out(bound);
  if (compress2(out.data(), &bound, in.data(),
                static_cast<uLong>(in.size()), Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw faultnet::IoError("zlib deflate failed");
  }
  out.resize(bound);
  return out;
}

// One miMATRIX element (tag + body), without the file header.
inline std::vector<unsigned char> matrix_element(const std::string& name,
                                                 const faultnet::Mat5Matrix& m,
                                                 bool swap) {
  ByteWriter body(swap);

  // Array flags: miUINT32 x2, class mxDOUBLE.
  body.u32(6);  // miUINT32
  body.u32(8);
  body.u32(6);  // flags word: class 6, no flags set
  body.u32(0);  // nzmax

  // Dimensions: miINT32 x2.
  body.u32(5);  // miINT32
  body.u32(8);
  body.u32(static_cast<std::uint32_t>(m.rows));
  body.u32(static_cast<std::uint32_t>(m.cols));

  // Name: small element when it fits in 4 bytes, regular otherwise.
  if (name.size() <= 4) {
    // Small-element tag: one uint32 carrying type | size << 16.
    body.u32(1u | (static_cast<std::uint32_t>(name.size()) << 16));
    body.raw(name.data(), name.size());
    for (std::size_t i = name.size(); i < 4; ++i) body.u8(0);
  } else {
    body.u32(1);  // miINT8
    body.u32(static_cast<std::uint32_t>(name.size()));
    body.raw(name.data(), name.size());
    body.pad_to8();
  }

  // Real part, column-major doubles.
  body.u32(9);  // miDOUBLE
  body.u32(static_cast<std::uint32_t>(m.rows * m.cols * 8));
  for (std::size_t c = 0; c < m.cols; ++c) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      body.f64(m.values[r * m.cols + c]);
    }
  }
  body.pad_to8();

  ByteWriter elem(swap);
  elem.u32(14);  // miMATRIX
  elem.u32(static_cast<std::uint32_t>(body.bytes().size()));
  elem.raw(body.bytes().data(), body.bytes().size());
  return elem.bytes();
}

}  // namespace detail

inline std::vector<unsigned char> write_mat5(
    const std::map<std::string, faultnet::Mat5Matrix>& vars,
    const Mat5WriteOptions& opt = {}) {
  constexpr bool host_little = std::endian::native == std::endian::little;
  const bool file_little = !opt.big_endian;
  const bool swap = file_little != host_little;

  detail::ByteWriter w(swap);
  std::string text = "MATLAB 5.0 MAT-file, faultnet test writer";
  text.resize(116, ' ');
  w.raw(text.data(), 116);
  for (int i = 0; i < 8; ++i) w.u8(0);  // subsystem offset, unused
  w.u16(0x0100);                        // version
  // Endian indicator: the int16 0x4D49 ("MI") in file byte order.
  if (file_little) {
    w.u8('I');
    w.u8('M');
  } else {
    w.u8('M');
    w.u8('I');
  }

  for (const auto& [name, m] : vars) {
    std::vector<unsigned char> elem = detail::matrix_element(name, m, swap);
    if (opt.compress) {
      std::vector<unsigned char> packed = detail::zlib_deflate(elem);
      detail::ByteWriter tag(swap);
      tag.u32(15);  // miCOMPRESSED
      tag.u32(static_cast<std::uint32_t>(packed.size()));
      w.raw(tag.bytes().data(), tag.bytes().size());
      w.raw(packed.data(), packed.size());
      // Compressed elements are written unpadded, as MATLAB does.
    } else {
      w.raw(elem.data(), elem.size());
    }
  }
  return w.bytes();
}

}  // namespace faultnet_test
