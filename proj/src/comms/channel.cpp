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

#include "mmcoop/comms/channel.hpp"

#include <algorithm>
#include <cmath>

#include "mmcoop/geometry/transform.hpp"

namespace mmcoop::comms {

void ChannelConfig::validate() const {
  if (delay_steps < 0) throw ValidationError("channel: delay must be >= 0");
  if (sigma_xy < 0 || sigma_heading < 0) throw ValidationError("channel: sigma must be >= 0");
  if (!(range > 0)) throw ValidationError("channel: range must be > 0");
}

std::optional<CoopMessage> channel_apply(const CoopMessage& m, const ChannelConfig& cfg,
                                         const Pose2D& sender_at_receive,
                                         const Pose2D& receiver_at_receive, Rng& rng) {
  cfg.validate();
  const double dist = (sender_at_receive.position() - receiver_at_receive.position()).norm();
  // Noise is drawn before the range test so the stream does not depend on it.
  const Pose2D noise = geometry::sample_pose_noise(rng, cfg.sigma_xy, cfg.sigma_heading);
  if (dist > cfg.range) return std::nullopt;
  CoopMessage out = m;
  out.pose = geometry::perturb(m.pose, noise);
  return out;
}

DelayLine::DelayLine(int delay_steps) : delay_(delay_steps) {
  if (delay_steps < 0) throw ValidationError("delay line: negative delay");
}

void DelayLine::send(int send_step, CoopMessage m) { queue_.emplace(send_step + delay_, std::move(m)); }

std::vector<CoopMessage> DelayLine::deliver(int step) {
  std::vector<CoopMessage> out;
  auto [lo, hi] = queue_.equal_range(step);
  for (auto it = lo; it != hi; ++it) out.push_back(std::move(it->second));
  queue_.erase(lo, hi);
  std::stable_sort(out.begin(), out.end(),
                   [](const CoopMessage& a, const CoopMessage& b) { return a.sender < b.sender; });
  return out;
}

std::size_t DelayLine::pending() const { return queue_.size(); }

}  // namespace mmcoop::comms
