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

#include <doctest.h>

#include <cmath>

#include "mmcoop/error.hpp"
#include "mmcoop/geometry/iou.hpp"
#include "mmcoop/geometry/transform.hpp"
#include "mmcoop/scene/observation.hpp"
#include "support.hpp"

using namespace mmcoop;
using namespace mmcoop::scene;

namespace {

// Dense point sampling along the segment; independent of the edge-crossing test.
bool blocked_by_sampling(const Eigen::Vector2d& p, const Eigen::Vector2d& q, const BBox7& b) {
  for (int i = 0; i <= 4000; ++i) {
    const Eigen::Vector2d x = p + (q - p) * (i / 4000.0);
    const double dx = x.x() - b.x, dy = x.y() - b.y;
    const double lx = std::cos(b.yaw) * dx + std::sin(b.yaw) * dy;
    const double ly = -std::sin(b.yaw) * dx + std::cos(b.yaw) * dy;
    if (std::abs(lx) <= b.l / 2 && std::abs(ly) <= b.w / 2) return true;
  }
  return false;
}

Scenario single_agent(std::vector<BBox7> boxes, double range = 40.0) {
  Scenario s;
  s.agents.push_back(AgentTrack{0, Pose2D{0, 0, 0}, Eigen::Vector2d::Zero(), range});
  for (const BBox7& b : boxes) s.objects.push_back(ObjectTrack{b, Eigen::Vector2d::Zero()});
  return s;
}

BBox7 car(double x, double y, double yaw = 0.0) { return BBox7{x, y, -1.0, 4.5, 2.0, 1.6, yaw, 1.0}; }

}  // namespace

TEST_CASE("scenario generation basics") {
  ScenarioConfig cfg;
  cfg.object_count = 0;
  CHECK(generate_scenario(cfg, 3).objects.empty());

  cfg = ScenarioConfig{};
  const Scenario a = generate_scenario(cfg, 11);
  const Scenario b = generate_scenario(cfg, 11);
  CHECK(a == b);
  CHECK(a.objects.size() == static_cast<std::size_t>(cfg.object_count));
  CHECK(a.agents.size() == static_cast<std::size_t>(cfg.agent_count));
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      CHECK(geometry::rotated_iou_bev(a.objects[i].initial, a.objects[j].initial) == 0.0);
    }
  }
  CHECK_FALSE(generate_scenario(cfg, 12) == a);

  ScenarioConfig crowded;
  crowded.object_count = 500;
  crowded.area_half_x = crowded.area_half_y = 5.0;
  crowded.max_retries = 2;
  CHECK_THROWS_AS(generate_scenario(crowded, 1), ValidationError);
  CHECK_THROWS_AS(ScenarioConfig::from_preset("nope"), ValidationError);
}

TEST_CASE("occlusion-heavy preset hides something from the ego") {
  const ScenarioConfig cfg = ScenarioConfig::from_preset("occlusion-heavy");
  int with_occlusion = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scenario s = generate_scenario(cfg, seed);
    const std::vector<BBox7> world = s.objects_at(0);
    bool found = false;
    for (std::size_t i = 0; i < world.size() && !found; ++i) {
      if (world[i].center().norm() > s.ego().sensing_range) continue;
      for (std::size_t j = 0; j < world.size() && !found; ++j) {
        if (j != i && blocked_by_sampling({0, 0}, world[i].center(), world[j])) found = true;
      }
    }
    with_occlusion += found;
  }
  CHECK(with_occlusion >= 95);
}

TEST_CASE("render_observation visibility rules") {
  SUBCASE("range") {
    const Scenario s = single_agent({car(45, 0), car(10, 10)});
    const Observation o = render_observation(s, 0, 0, 0.0, 1);
    REQUIRE(o.objects.size() == 1);
    CHECK(o.objects[0].object_index == 1);
  }
  SUBCASE("lone object exact in agent frame") {
    Scenario s = single_agent({car(12, -3, 0.3)});
    s.agents[0].initial = Pose2D{2, 1, 0.7};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const Observation o = render_observation(s, 0, 0, 0.0, seed);
      REQUIRE(o.objects.size() == 1);
      const BBox7 expect = geometry::transform_box(car(12, -3, 0.3), Pose2D{}, Pose2D{2, 1, 0.7});
      CHECK(o.objects[0].box == expect);
      CHECK(o.objects[0].visibility == 1.0);
    }
  }
  SUBCASE("object directly behind another") {
    const Scenario s = single_agent({car(10, 0), car(20, 0)});
    CHECK(blocked_by_sampling({0, 0}, {20, 0}, car(10, 0)));
    const Observation o = render_observation(s, 0, 0, 0.0, 1);
    REQUIRE(o.objects.size() == 1);
    CHECK(o.objects[0].object_index == 0);
  }
  SUBCASE("segment test agrees with sampling oracle") {
    Rng rng(5);
    using testing::uniform;
    for (int i = 0; i < 2000; ++i) {
      const BBox7 b = car(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -3, 3));
      const Eigen::Vector2d p(uniform(rng, -10, 10), uniform(rng, -10, 10));
      const Eigen::Vector2d q(uniform(rng, -10, 10), uniform(rng, -10, 10));
      const bool fast = segment_hits_box(p, q, b);
      // Skip grazing cases the sampler cannot resolve.
      BBox7 shrunk = b, grown = b;
      shrunk.l -= 0.02, shrunk.w -= 0.02, grown.l += 0.02, grown.w += 0.02;
      if (blocked_by_sampling(p, q, shrunk)) CHECK(fast);
      if (!blocked_by_sampling(p, q, grown)) CHECK_FALSE(fast);
    }
  }
  SUBCASE("errors") {
    const Scenario s = single_agent({});
    CHECK_THROWS_AS(render_observation(s, 7, 0, 0.0, 1), ValidationError);
    CHECK_THROWS_AS(render_observation(s, 0, s.duration, 0.0, 1), ValidationError);
  }
}

TEST_CASE("visibility is monotone under object removal") {
  ScenarioConfig cfg = ScenarioConfig::from_preset("occlusion-heavy");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scenario s = generate_scenario(cfg, seed);
    const Observation full = render_observation(s, 0, 0, 0.0, seed);
    std::vector<bool> visible(s.objects.size(), false);
    for (const auto& ob : full.objects) visible[ob.object_index] = true;
    for (std::size_t drop = 0; drop < s.objects.size(); drop += 3) {
      Scenario fewer = s;
      fewer.objects.erase(fewer.objects.begin() + static_cast<long>(drop));
      const Observation o = render_observation(fewer, 0, 0, 0.0, seed);
      std::vector<bool> still(s.objects.size(), false);
      for (const auto& ob : o.objects) still[ob.object_index < drop ? ob.object_index : ob.object_index + 1] = true;
      for (std::size_t i = 0; i < s.objects.size(); ++i) {
        if (i != drop && visible[i]) CHECK(still[i]);
      }
    }
  }
}

TEST_CASE("observation noise scales with distance") {
  const Scenario s = generate_scenario(ScenarioConfig{}, 4);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Observation exact = render_observation(s, 0, 1, 0.0, seed);
    const Observation noisy = render_observation(s, 0, 1, 0.5, seed);
    REQUIRE(exact.objects.size() == noisy.objects.size());
    for (std::size_t i = 0; i < exact.objects.size(); ++i) {
      const BBox7 gt = geometry::transform_box(s.object_at(exact.objects[i].object_index, 1), Pose2D{},
                                               s.agent_pose(0, 1));
      CHECK(exact.objects[i].box == gt);
      CHECK(noisy.objects[i].box.yaw == gt.yaw);
    }
  }
}

TEST_CASE("proxy encoder") {
  GridSpec g{6, 5, 1.0, 10};
  Rng rng(9);
  const Eigen::Index dims[] = {kDescriptorSize, 12, g.channels};
  const numerics::MlpParams enc = numerics::MlpParams::xavier(dims, numerics::Activation::Tanh,
                                                              numerics::Activation::Identity, rng);
  SUBCASE("empty observation") {
    Observation o;
    o.sensing_range = 10;
    const EncodedObservation e = proxy_encode(o, g, enc);
    const numerics::Vector zero_img = numerics::mlp_apply(enc, numerics::Vector::Zero(kDescriptorSize).eval());
    for (int i = 0; i < g.num_cells(); ++i) CHECK((e.features.cells.row(i).transpose() - zero_img).norm() == 0.0);
    CHECK(e.occupancy.sum() == 0);
    const numerics::Tensor t = e.features.to_tensor();
    CHECK(t.shape() == std::vector<std::size_t>{10, 6, 5});
  }
  SUBCASE("one object") {
    Observation o;
    o.sensing_range = 10;
    o.objects.push_back({0, BBox7{0.7, -1.2, 0, 4, 2, 1, 0.5, 1}, 0.6});
    const EncodedObservation e = proxy_encode(o, g, enc);
    // x 0.7 -> col floor(0.7 + 2.5) = 3 (center 1.0); y -1.2 -> row floor(-1.2 + 3) = 1 (center -1.5)
    CHECK(e.occupancy.sum() == 1);
    CHECK(e.occupancy(1, 3) == 1);
    const auto d = e.descriptors.row(g.flat(1, 3));
    CHECK(d(0) == 1.0);
    CHECK(d(1) == 1.0);
    CHECK(d(2) == doctest::Approx(0.7 - 1.0).epsilon(1e-12));
    CHECK(d(3) == doctest::Approx(-1.2 - (-1.5)).epsilon(1e-12));
    CHECK(d(4) == doctest::Approx(std::cos(0.5)));
    CHECK(d(5) == doctest::Approx(std::sin(0.5)));
    CHECK(d(6) == 0.6);
    CHECK(d(7) == doctest::Approx(std::hypot(1.0, -1.5) / 10.0));
  }
  SUBCASE("per-cell oracle") {
    Observation o;
    o.sensing_range = 8;
    for (int k = 0; k < 7; ++k) {
      o.objects.push_back({static_cast<std::size_t>(k),
                           BBox7{testing::uniform(rng, -2.5, 2.5), testing::uniform(rng, -3, 3), 0, 4, 2, 1,
                                 testing::uniform(rng, -3, 3), 1},
                           testing::uniform(rng, 0, 1)});
    }
    const EncodedObservation e = proxy_encode(o, g, enc);
    const EncodedObservation again = proxy_encode(o, g, enc);
    CHECK(e.features.cells == again.features.cells);
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        const numerics::Vector d = e.descriptors.row(g.flat(r, c)).transpose();
        const numerics::Vector f = numerics::mlp_apply(enc, d);
        for (int ch = 0; ch < g.channels; ++ch) CHECK(e.features.at(ch, r, c) == doctest::Approx(f(ch)).epsilon(1e-14));
      }
    }
  }
  SUBCASE("dimension mismatch") {
    Observation o;
    CHECK_THROWS_AS(proxy_encode(o, g, numerics::MlpParams::identity(8, 9)), ValidationError);
    CHECK_THROWS_AS(proxy_encode(o, g, numerics::MlpParams::identity(7, 10)), ValidationError);
  }
  SUBCASE("default encoder copies the descriptor") {
    Observation o;
    o.sensing_range = 10;
    o.objects.push_back({0, BBox7{0.2, 0.2, 0, 4, 2, 1, 0, 1}, 1.0});
    const EncodedObservation e = proxy_encode(o, g, default_encoder(g));
    CHECK(e.features.cells.leftCols(kDescriptorSize) == e.descriptors);
    CHECK(e.features.cells.rightCols(g.channels - kDescriptorSize).isZero(0));
  }
}

TEST_CASE("scenario text round trip is exact") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scenario s = generate_scenario(ScenarioConfig::from_preset("occlusion-heavy"), seed);
    const std::string text = scenario_to_json(s);
    const Scenario back = scenario_from_json(text);
    CHECK(back == s);
    CHECK(scenario_to_json(back) == text);
  }
  CHECK_THROWS_AS(scenario_from_json("{not json"), ValidationError);
  CHECK_THROWS_AS(scenario_from_json(R"({"version": 99})"), ValidationError);
  CHECK_THROWS_AS(scenario_from_json(R"({"version": 1, "duration": 3})"), ValidationError);
}

TEST_CASE("grid cell lookup") {
  const GridSpec g;
  CHECK(g.cell_of(0.0, 0.0) == CellIndex{32, 32});
  CHECK(g.cell_of(-32.0, -32.0) == CellIndex{0, 0});
  CHECK_FALSE(g.cell_of(32.0, 0.0).has_value());
  CHECK(g.cell_of(31.999, 31.999) == CellIndex{63, 63});
  const Eigen::Vector2d c = g.cell_center(0, 0);
  CHECK(c.x() == -31.5);
  CHECK(c.y() == -31.5);
}
