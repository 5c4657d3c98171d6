#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <vector>

#include "tflc/beamforming/types.hpp"

namespace tflc::beamforming {

// Container layout (little-endian):
//   char[8] magic "TFLCBEAM", u32 version, u32 payload (0 = RTF, 1 = beamformer set),
//   u32 M, u32 F, u32 count, u32 reference
//   per item: i32 kind, f64 null_doa (NaN when absent), u8 flags[F],
//             then F x M complex values as (re, im) f64 pairs, bin-major.

namespace detail {

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    bytes_.insert(bytes_.end(), b, b + sizeof(T));
  }
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), c, c + n);
  }
  const std::vector<unsigned char>& bytes() const { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& b) : b_(b) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > b_.size()) throw ParseError("beam container: truncated");
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void raw(void* p, std::size_t n) {
    if (pos_ + n > b_.size()) throw ParseError("beam container: truncated");
    std::memcpy(p, b_.data() + pos_, n);
    pos_ += n;
  }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

inline void write_matrix(ByteWriter& w, const Eigen::MatrixXcd& m) {
  for (Eigen::Index f = 0; f < m.cols(); ++f)
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
      w.put<double>(m(k, f).real());
      w.put<double>(m(k, f).imag());
    }
}

inline Eigen::MatrixXcd read_matrix(ByteReader& r, std::uint32_t M, std::uint32_t F) {
  Eigen::MatrixXcd m(M, F);
  for (std::uint32_t f = 0; f < F; ++f)
    for (std::uint32_t k = 0; k < M; ++k) {
      const double re = r.get<double>();
      const double im = r.get<double>();
      m(k, f) = cplx(re, im);
    }
  return m;
}

inline void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

constexpr char kMagic[8] = {'T', 'F', 'L', 'C', 'B', 'E', 'A', 'M'};

inline void header(ByteWriter& w, std::uint32_t payload, std::uint32_t M, std::uint32_t F, std::uint32_t count,
                   std::uint32_t reference) {
  w.raw(kMagic, 8);
  w.put<std::uint32_t>(1);
  w.put<std::uint32_t>(payload);
  w.put<std::uint32_t>(M);
  w.put<std::uint32_t>(F);
  w.put<std::uint32_t>(count);
  w.put<std::uint32_t>(reference);
}

struct Header {
  std::uint32_t payload, M, F, count, reference;
};

inline Header read_header(ByteReader& r, std::uint32_t expected_payload) {
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw ParseError("beam container: bad magic");
  if (r.get<std::uint32_t>() != 1) throw ParseError("beam container: unsupported version");
  Header h{r.get<std::uint32_t>(), r.get<std::uint32_t>(), r.get<std::uint32_t>(), r.get<std::uint32_t>(),
           r.get<std::uint32_t>()};
  if (h.payload != expected_payload) throw ParseError("beam container: unexpected payload type");
  return h;
}

}  // namespace detail

inline std::vector<unsigned char> encode_rtf(const Rtf& rtf) {
  detail::ByteWriter w;
  detail::header(w, 0, static_cast<std::uint32_t>(rtf.channels()), static_cast<std::uint32_t>(rtf.bins()), 1,
                 static_cast<std::uint32_t>(rtf.reference));
  w.put<std::int32_t>(-1);
  w.put<double>(std::numeric_limits<double>::quiet_NaN());
  for (std::size_t f = 0; f < rtf.bins(); ++f)
    w.put<std::uint8_t>(f < rtf.fallback.size() && rtf.fallback[f] ? 1 : 0);
  detail::write_matrix(w, rtf.a);
  return w.bytes();
}

inline Rtf decode_rtf(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r(bytes);
  const auto h = detail::read_header(r, 0);
  Rtf rtf;
  rtf.reference = h.reference;
  r.get<std::int32_t>();
  r.get<double>();
  rtf.fallback.resize(h.F);
  for (std::uint32_t f = 0; f < h.F; ++f) rtf.fallback[f] = r.get<std::uint8_t>() != 0;
  rtf.a = detail::read_matrix(r, h.M, h.F);
  return rtf;
}

inline std::vector<unsigned char> encode_beamformers(const BeamformerSet& set) {
  require(!set.empty(), "encode_beamformers: empty set");
  detail::ByteWriter w;
  detail::header(w, 1, static_cast<std::uint32_t>(set.front().channels()),
                 static_cast<std::uint32_t>(set.front().bins()), static_cast<std::uint32_t>(set.size()), 0);
  for (const auto& bf : set) {
    require_dims(bf.channels() == set.front().channels() && bf.bins() == set.front().bins(),
                 "encode_beamformers: beamformers differ in shape");
    w.put<std::int32_t>(static_cast<std::int32_t>(bf.kind));
    w.put<double>(bf.null_doa.value_or(std::numeric_limits<double>::quiet_NaN()));
    for (std::size_t f = 0; f < bf.bins(); ++f) w.put<std::uint8_t>(f < bf.flagged.size() && bf.flagged[f] ? 1 : 0);
    detail::write_matrix(w, bf.w);
  }
  return w.bytes();
}

inline BeamformerSet decode_beamformers(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r(bytes);
  const auto h = detail::read_header(r, 1);
  BeamformerSet set;
  for (std::uint32_t i = 0; i < h.count; ++i) {
    Beamformer bf;
    const auto kind = r.get<std::int32_t>();
    if (kind < 0 || kind > 3) throw ParseError("beam container: bad beamformer kind");
    bf.kind = static_cast<BeamformerKind>(kind);
    const double doa = r.get<double>();
    if (!std::isnan(doa)) bf.null_doa = doa;
    bf.flagged.resize(h.F);
    for (std::uint32_t f = 0; f < h.F; ++f) bf.flagged[f] = r.get<std::uint8_t>() != 0;
    bf.w = detail::read_matrix(r, h.M, h.F);
    set.push_back(std::move(bf));
  }
  return set;
}

inline void save_rtf(const std::filesystem::path& p, const Rtf& rtf) { detail::write_file(p, encode_rtf(rtf)); }
inline Rtf load_rtf(const std::filesystem::path& p) { return decode_rtf(detail::read_file(p)); }
inline void save_beamformers(const std::filesystem::path& p, const BeamformerSet& s) {
  detail::write_file(p, encode_beamformers(s));
}
inline BeamformerSet load_beamformers(const std::filesystem::path& p) {
  return decode_beamformers(detail::read_file(p));
}

}  // namespace tflc::beamforming
