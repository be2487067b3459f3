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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmcoop/error.hpp"
#include "mmcoop/geometry/box.hpp"

namespace mmcoop::comms {

using geometry::Pose2D;
using WireBox = geometry::Box7<float>;

struct FeatureCell {
  std::uint16_t row = 0;
  std::uint16_t col = 0;
  std::vector<float> values;

  friend bool operator==(const FeatureCell&, const FeatureCell&) = default;
};

/// One broadcast unit: claimed sender pose, sparse feature cells and coarse
/// boxes. Feature cells carry `channels` float32 values each.
struct CoopMessage {
  std::uint16_t sender = 0;
  std::uint32_t timestep = 0;
  Pose2D pose;
  std::uint32_t channels = 0;
  std::vector<FeatureCell> features;
  std::vector<WireBox> boxes;

  // Throws ValidationError on duplicate cells, wrong value counts or
  // non-finite values.
  void validate() const;
  friend bool operator==(const CoopMessage&, const CoopMessage&) = default;
};

/// Base of all decoding failures; never accompanied by a partial message.
class WireError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class BadMagicError : public WireError {
 public:
  using WireError::WireError;
};
class VersionError : public WireError {
 public:
  using WireError::WireError;
};
class TruncatedError : public WireError {
 public:
  using WireError::WireError;
};
class ChecksumError : public WireError {
 public:
  using WireError::WireError;
};
/// Structurally readable but invalid content (trailing bytes, duplicate
/// cells, non-finite values).
class CorruptError : public WireError {
 public:
  using WireError::WireError;
};

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 1 + 2 + 4 + 3 * 8 + 4;

std::size_t wire_size(const CoopMessage& m);
std::vector<std::uint8_t> serialize(const CoopMessage& m);
/// `channels` is the per-cell value count agreed out of band (the grid's C).
CoopMessage deserialize(const std::vector<std::uint8_t>& bytes, std::uint32_t channels);

/// log2 of payload bytes: (keep_ratio*H*W*C + boxes*7) * 4. An empty
/// payload has volume 0.
double bandwidth_volume(double keep_ratio, int height, int width, int channels, std::size_t boxes);
double measured_volume(const CoopMessage& m, int height, int width);
// Same as measured_volume but counting all 8 wire floats per box.
double measured_volume_wire(const CoopMessage& m);

std::string describe(const CoopMessage& m);

}  // namespace mmcoop::comms
