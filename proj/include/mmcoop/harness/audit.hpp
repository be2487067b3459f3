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
#include <string>
#include <vector>

namespace mmcoop::harness {

struct AuditEntry {
  std::string op;
  double max_error = 0.0;  // worst relative error over all instances
  int instances = 0;
  std::uint64_t worst_seed = 0;
};

/// Central-difference gradient audit of every differentiable op on random
/// small instances, one instance per op and seed. Instances whose evaluation
/// window would straddle a kink (bilinear cell boundaries, ReLU at zero,
/// smooth-L1 at |r| = 1) are redrawn.
std::vector<AuditEntry> gradcheck_audit(int seeds, std::uint64_t base_seed = 0, double eps = 1e-3);

}  // namespace mmcoop::harness
