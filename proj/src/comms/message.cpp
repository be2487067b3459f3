// Copyright 2026 The mmcoop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mmcoop/comms/message.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <sstream>

#include <boost/crc.hpp>

namespace mmcoop::comms {

namespace {

constexpr std::uint8_t kMagic[4] = {'M', 'M', 'C', 'P'};
constexpr std::size_t kChecksumBytes = 4;

class Writer {
 public:
  explicit Writer(std::size_t reserve) { buf_.reserve(reserve); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1, "u8")); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2, "u16")); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4, "u32")); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4, "f32"))); }
  double f64() { return std::bit_cast<double>(get(8, "f64")); }
  std::size_t remaining() const { return size_ - pos_; }
  void need(std::uint64_t n, const char* what) const {
    if (n > remaining()) {
      throw TruncatedError(std::string("message truncated: need ") + std::to_string(n) + " bytes for " +
                           what + ", have " + std::to_string(remaining()));
    }
  }

 private:
  std::uint64_t get(int n, const char* what) {
    need(static_cast<std::uint64_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

bool finite_box(const WireBox& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.z) && std::isfinite(b.l) &&
         std::isfinite(b.w) && std::isfinite(b.h) && std::isfinite(b.yaw) && std::isfinite(b.score);
}

}  // namespace

void CoopMessage::validate() const {
  if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || !std::isfinite(pose.heading)) {
    throw ValidationError("message: non-finite pose");
  }
  std::set<std::pair<int, int>> seen;
  for (const FeatureCell& f : features) {
    if (f.values.size() != channels) throw ValidationError("message: feature cell has wrong channel count");
    if (!seen.emplace(f.row, f.col).second) throw ValidationError("message: duplicate feature cell");
    for (float v : f.values) {
      if (!std::isfinite(v)) throw ValidationError("message: non-finite feature value");
    }
  }
  for (const WireBox& b : boxes) {
    if (!finite_box(b)) throw ValidationError("message: non-finite box value");
  }
}

std::size_t wire_size(const CoopMessage& m) {
  return kHeaderBytes + m.features.size() * (4 + 4 * static_cast<std::size_t>(m.channels)) + 4 +
         m.boxes.size() * 32 + kChecksumBytes;
}

std::vector<std::uint8_t> serialize(const CoopMessage& m) {
  m.validate();
  Writer w(wire_size(m));
  for (std::uint8_t b : kMagic) w.u8(b);
  w.u8(kWireVersion);
  w.u16(m.sender);
  w.u32(m.timestep);
  w.f64(m.pose.x);
  w.f64(m.pose.y);
  w.f64(m.pose.heading);
  w.u32(static_cast<std::uint32_t>(m.features.size()));
  for (const FeatureCell& f : m.features) {
    w.u16(f.row);
    w.u16(f.col);
    for (float v : f.values) w.f32(v);
  }
  w.u32(static_cast<std::uint32_t>(m.boxes.size()));
  for (const WireBox& b : m.boxes) {
    for (float v : {b.x, b.y, b.z, b.l, b.w, b.h, b.yaw, b.score}) w.f32(v);
  }
  std::vector<std::uint8_t>& out = w.bytes();
  const std::uint32_t crc = crc32(out.data(), out.size());
  w.u32(crc);
  return std::move(out);
}

CoopMessage deserialize(const std::vector<std::uint8_t>& bytes, std::uint32_t channels) {
  Reader r(bytes.data(), bytes.size());
  r.need(4, "magic");
  for (std::uint8_t b : kMagic) {
    if (r.u8() != b) throw BadMagicError("message: bad magic");
  }
  const std::uint8_t version = r.u8();
  if (version != kWireVersion) {
    throw VersionError("message: unsupported version " + std::to_string(version) + " (expected " +
                       std::to_string(kWireVersion) + ")");
  }
  CoopMessage m;
  m.channels = channels;
  m.sender = r.u16();
  m.timestep = r.u32();
  m.pose.x = r.f64();
  m.pose.y = r.f64();
  m.pose.heading = r.f64();
  const std::uint32_t n_cells = r.u32();
  const std::uint64_t cell_bytes = 4 + 4 * static_cast<std::uint64_t>(channels);
  r.need(n_cells * cell_bytes, "feature cells");
  m.features.resize(n_cells);
  for (FeatureCell& f : m.features) {
    f.row = r.u16();
    f.col = r.u16();
    f.values.resize(channels);
    for (float& v : f.values) v = r.f32();
  }
  const std::uint32_t n_boxes = r.u32();
  r.need(static_cast<std::uint64_t>(n_boxes) * 32, "boxes");
  m.boxes.resize(n_boxes);
  for (WireBox& b : m.boxes) {
    for (float* v : {&b.x, &b.y, &b.z, &b.l, &b.w, &b.h, &b.yaw, &b.score}) *v = r.f32();
  }
  const std::size_t body = bytes.size() - r.remaining();
  const std::uint32_t crc = r.u32();
  if (r.remaining() != 0) throw CorruptError("message: " + std::to_string(r.remaining()) + " trailing bytes");
  if (crc != crc32(bytes.data(), body)) throw ChecksumError("message: checksum mismatch");
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw CorruptError(e.what());
  }
  return m;
}

double bandwidth_volume(double keep_ratio, int height, int width, int channels, std::size_t boxes) {
  if (!(keep_ratio >= 0) || height < 0 || width < 0 || channels < 0) {
    throw ValidationError("bandwidth_volume: negative input");
  }
  const double payload = keep_ratio * height * width * channels + static_cast<double>(boxes) * 7.0;
  if (payload == 0) return 0.0;
  return std::log2(payload * 32.0 / 8.0);
}

double measured_volume(const CoopMessage& m, int height, int width) {
  const double ratio = static_cast<double>(m.features.size()) / (static_cast<double>(height) * width);
  return bandwidth_volume(ratio, height, width, static_cast<int>(m.channels), m.boxes.size());
}

double measured_volume_wire(const CoopMessage& m) {
  const double payload = static_cast<double>(m.features.size()) * m.channels + m.boxes.size() * 8.0;
  return payload == 0 ? 0.0 : std::log2(payload * 4.0);
}

std::string describe(const CoopMessage& m) {
  std::ostringstream os;
  os.precision(17);
  os << "sender " << m.sender << "\n"
     << "timestep " << m.timestep << "\n"
     << "pose " << m.pose.x << " " << m.pose.y << " " << m.pose.heading << "\n"
     << "channels " << m.channels << "\n"
     << "feature_cells " << m.features.size() << "\n";
  for (const FeatureCell& f : m.features) {
    os << "  cell " << f.row << " " << f.col << ":";
    for (float v : f.values) os << " " << v;
    os << "\n";
  }
  os << "boxes " << m.boxes.size() << "\n";
  for (const WireBox& b : m.boxes) {
    os << "  box " << b.x << " " << b.y << " " << b.z << " " << b.l << " " << b.w << " " << b.h << " " << b.yaw
       << " score " << b.score << "\n";
  }
  os << "wire_bytes " << wire_size(m) << "\n";
  return os.str();
}

}  // namespace mmcoop::comms
