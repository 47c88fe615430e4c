#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "fm/encoder.hpp"
#include "fm/error.hpp"

namespace fm {

// FMES v1, little-endian:
//   "FMES" u32 version | u32 D, T, K, N
//   K x (u16 len, utf8)  class table
//   T x (u16 len, utf8)  template table
//   T*K*D f32 text block (template-major, then class, then dimension)
//   N u32 labels
//   N*D f32 image block

inline constexpr std::array<char, 4> kStoreMagic = {'F', 'M', 'E', 'S'};
inline constexpr std::uint32_t kStoreVersion = 1;

namespace detail {

class LeWriter {
 public:
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  [[nodiscard]] const std::vector<unsigned char>& buffer() const noexcept { return buf_; }

 private:
  template <typename U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> buf_;
};

class LeReader {
 public:
  explicit LeReader(const std::vector<unsigned char>& buf) : buf_(buf) {}

  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw Error(ErrorCode::CorruptStore, "unexpected end of file");
  }
  [[nodiscard]] std::size_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

inline void write_string_table(LeWriter& w, const std::vector<std::string>& table) {
  for (const auto& s : table) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error(ErrorCode::InvalidConfig, "string longer than 65535 bytes");
    }
    w.u16(static_cast<std::uint16_t>(s.size()));
    w.bytes(s.data(), s.size());
  }
}

inline std::vector<std::string> read_string_table(LeReader& r, std::uint32_t count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    out.push_back(r.str(len));
  }
  return out;
}

}  // namespace detail

inline std::vector<unsigned char> encode_store(const EmbeddingStore& store) {
  store.validate();
  detail::LeWriter w;
  w.bytes(kStoreMagic.data(), kStoreMagic.size());
  w.u32(kStoreVersion);
  w.u32(store.dim);
  w.u32(static_cast<std::uint32_t>(store.num_templates()));
  w.u32(static_cast<std::uint32_t>(store.num_classes()));
  w.u32(static_cast<std::uint32_t>(store.num_images()));
  detail::write_string_table(w, store.class_names);
  detail::write_string_table(w, store.templates);
  for (float x : store.text) w.f32(x);
  for (std::uint32_t l : store.labels) w.u32(l);
  for (float x : store.images) w.f32(x);
  return w.buffer();
}

inline EmbeddingStore decode_store(const std::vector<unsigned char>& bytes) {
  detail::LeReader r(bytes);
  if (bytes.size() < kStoreMagic.size() || std::memcmp(bytes.data(), kStoreMagic.data(), kStoreMagic.size()) != 0) {
    throw Error(ErrorCode::BadMagic, "not an FMES file");
  }
  (void)r.str(kStoreMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kStoreVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "FMES version " + std::to_string(version));
  }
  EmbeddingStore s;
  s.dim = r.u32();
  const std::uint32_t t = r.u32();
  const std::uint32_t k = r.u32();
  const std::uint32_t n = r.u32();
  s.class_names = detail::read_string_table(r, k);
  s.templates = detail::read_string_table(r, t);

  const std::uint64_t text_len = std::uint64_t{t} * k * s.dim;
  const std::uint64_t image_len = std::uint64_t{n} * s.dim;
  const std::uint64_t expected = 4 * (text_len + n + image_len);
  if (expected != r.remaining()) {
    throw Error(ErrorCode::CorruptStore, "payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                                             std::to_string(expected));
  }
  s.text.resize(text_len);
  for (float& x : s.text) x = r.f32();
  s.labels.resize(n);
  for (std::uint32_t& l : s.labels) l = r.u32();
  s.images.resize(image_len);
  for (float& x : s.images) x = r.f32();
  s.validate();
  return s;
}

inline void write_file_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void store_write(const EmbeddingStore& store, const std::string& path) {
  write_file_bytes(path, encode_store(store));
}

inline EmbeddingStore store_read(const std::string& path) { return decode_store(read_file_bytes(path)); }

}  // namespace fm
