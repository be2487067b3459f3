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

#include <map>
#include <numbers>
#include <optional>
#include <vector>

#include "mmcoop/comms/message.hpp"
#include "mmcoop/rng.hpp"

namespace mmcoop::comms {

struct ChannelConfig {
  int delay_steps = 1;
  double sigma_xy = 0.2;                                   // m
  double sigma_heading = 0.2 * std::numbers::pi / 180.0;  // rad
  double range = 70.0;                                     // m

  void validate() const;
};

/// Range check at receive time (strict), then header-pose perturbation.
/// Returns nullopt when the message is dropped. The content itself is left
/// untouched: staleness comes from the sender having encoded it `delay`
/// steps earlier.
std::optional<CoopMessage> channel_apply(const CoopMessage& m, const ChannelConfig& cfg,
                                         const Pose2D& sender_at_receive,
                                         const Pose2D& receiver_at_receive, Rng& rng);

/// Holds sent messages until their delivery step.
class DelayLine {
 public:
  explicit DelayLine(int delay_steps);

  void send(int send_step, CoopMessage m);
  // Messages due at `step`, ordered by sender id.
  std::vector<CoopMessage> deliver(int step);
  std::size_t pending() const;

 private:
  int delay_;
  std::multimap<int, CoopMessage> queue_;
};

}  // namespace mmcoop::comms
