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

#include "mmcoop/detection/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <set>

#include "mmcoop/comms/message.hpp"
#include "mmcoop/error.hpp"
#include "mmcoop/geometry/iou.hpp"
#include "mmcoop/geometry/transform.hpp"

namespace mmcoop::detection {

using numerics::MlpParams;
using numerics::ParamBinder;
using numerics::Tape;
using scene::GridSpec;

namespace {

enum StreamTag : std::uint64_t { kObservation = 1, kGumbel = 2, kChannel = 3 };

template <typename Self, typename F>
void visit_params(Self& p, F&& f, bool with_encoder) {
  auto mlp = [&](const std::string& name, auto& m) {
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      f(name + "." + std::to_string(i) + ".weight", m.layers[i].weight);
      f(name + "." + std::to_string(i) + ".bias", m.layers[i].bias);
    }
  };
  if (with_encoder) mlp("encoder", p.encoder);
  mlp("confidence.feature", p.confidence.feature);
  mlp("confidence.box", p.confidence.box);
  for (std::size_t k = 0; k < p.mof.query.size(); ++k) mlp("mof.query" + std::to_string(k), p.mof.query[k]);
  mlp("mof.projection", p.mof.projection);
  mlp("late.box_encoder", p.late.box_encoder);
  mlp("late.dba.offsets", p.late.dba.offsets);
  mlp("late.dba.weights", p.late.dba.weights);
  f("late.dba.w_alpha", p.late.dba.w_alpha);
  f("late.bfc.wq", p.late.bfc.wq);
  f("late.bfc.wk", p.late.bfc.wk);
  f("late.bfc.wv", p.late.bfc.wv);
  f("late.bfc.wo", p.late.bfc.wo);
  mlp("late.bfc.ffn", p.late.bfc.ffn);
  mlp("late.bfc.score", p.late.bfc.score);
  mlp("late.bfc.offset", p.late.bfc.offset);
  mlp("heads.reg", p.heads.reg);
  mlp("heads.cls", p.heads.cls);
}

std::vector<DecodedBox> nms_decoded(std::vector<DecodedBox> dec, double iou) {
  std::vector<BBox7> boxes;
  boxes.reserve(dec.size());
  for (const DecodedBox& d : dec) boxes.push_back(d.box);
  std::vector<DecodedBox> out;
  for (std::size_t i : geometry::nms(boxes, iou)) out.push_back(dec[i]);
  return out;
}

// Detections from an agent's own map, without any received content.
std::vector<DecodedBox> local_detections(const ModelParams& params, const PipelineConfig& cfg, const GridSpec& g,
                                         const Matrix& cells) {
  Tape tape;
  ParamBinder bind(tape, false);
  const Var f = fusion::mof(bind, params.mof, tape.constant(cells), g, {}, cfg.mof);
  const HeadOutputs h = decode_heads(bind, params.heads, f);
  return nms_decoded(decode_boxes(h.reg.value(), h.cls.value(), cfg.anchor, g, cfg.score_floor), cfg.nms_iou);
}

scene::EncodedObservation encode(const scene::Scenario& s, const ModelParams& params, const PipelineConfig& cfg,
                                 int agent, int step, std::uint64_t seed) {
  const scene::Observation o = scene::render_observation(
      s, agent, step, cfg.obs_noise,
      derive_seed(seed, {kObservation, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(agent)}));
  return scene::proxy_encode(o, s.grid, params.encoder);
}

std::vector<BBox7> boxes_of(const std::vector<DecodedBox>& dec) {
  std::vector<BBox7> out;
  out.reserve(dec.size());
  for (const DecodedBox& d : dec) out.push_back(d.box);
  return out;
}

}  // namespace

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::NoFusion: return "none";
    case FusionMode::LateOnly: return "late";
    case FusionMode::IntermediateOnly: return "intermediate";
    case FusionMode::MmCooper: return "mmcooper";
  }
  return "unknown";
}

FusionMode parse_mode(const std::string& name) {
  for (FusionMode m : {FusionMode::NoFusion, FusionMode::LateOnly, FusionMode::IntermediateOnly,
                       FusionMode::MmCooper}) {
    if (to_string(m) == name) return m;
  }
  throw ValidationError("unknown fusion mode '" + name + "' (none, late, intermediate, mmcooper)");
}

ModelParams ModelParams::initial(const GridSpec& grid, std::uint64_t seed) {
  grid.validate();
  Rng rng = make_rng(seed, {0x1a7e});
  ModelParams p;
  p.encoder = scene::default_encoder(grid);
  p.confidence = cfg::ConfidenceHeads::occupancy_prior(grid.channels);
  p.mof = fusion::MofParams::structured(grid.channels);
  p.late = fusion::LateParams::initial(grid.channels, rng);
  p.heads = DetectionHeads::initial(grid.channels);
  return p;
}

void ModelParams::validate(const GridSpec& grid) const {
  encoder.validate();
  if (encoder.input_dim() != scene::kDescriptorSize || encoder.output_dim() != grid.channels) {
    throw ValidationError("model: encoder must map descriptors to the grid's channel count");
  }
  mof.validate(grid.channels);
  late.validate(grid.channels);
  heads.validate(grid.channels);
  for (const MlpParams* h : {&confidence.feature, &confidence.box}) {
    h->validate();
    if (h->input_dim() != grid.channels || h->output_dim() != 1) {
      throw ValidationError("model: confidence heads must map C -> 1");
    }
  }
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::trainable() {
  std::vector<std::pair<std::string, Matrix*>> out;
  visit_params(*this, [&](const std::string& n, Matrix& m) { out.emplace_back(n, &m); }, false);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  visit_params(*this, [&](const std::string& n, const Matrix& m) { out.emplace_back(n, &m); }, true);
  return out;
}

void PipelineConfig::validate() const {
  cfg.validate();
  channel.validate();
  bfc.validate();
  mof.validate();
  anchor.validate();
  if (!(score_floor >= 0 && score_floor <= 1)) throw ValidationError("pipeline: score floor must be in [0, 1]");
  if (!(nms_iou > 0 && nms_iou <= 1)) throw ValidationError("pipeline: NMS IoU must be in (0, 1]");
  if (!(obs_noise >= 0) || !std::isfinite(obs_noise)) throw ValidationError("pipeline: bad observation noise");
  if (!(match_iou > 0 && match_iou <= 1)) throw ValidationError("pipeline: match IoU must be in (0, 1]");
}

OutgoingMessage compose_message(ParamBinder& bind, const scene::Scenario& s, const ModelParams& params,
                                const PipelineConfig& cfg, int sender, int step, std::uint64_t seed) {
  const GridSpec& g = s.grid;
  const auto C = static_cast<std::uint32_t>(g.channels);
  const scene::EncodedObservation enc = encode(s, params, cfg, sender, step, seed);
  OutgoingMessage out;
  comms::CoopMessage& m = out.message;
  m.sender = static_cast<std::uint16_t>(sender);
  m.timestep = static_cast<std::uint32_t>(step);
  m.pose = s.agent_pose(sender, step);
  m.channels = C;

  auto add_cell = [&](int row, int col, const numerics::RowVector& v) {
    comms::FeatureCell fc;
    fc.row = static_cast<std::uint16_t>(row);
    fc.col = static_cast<std::uint16_t>(col);
    fc.values.resize(C);
    for (std::uint32_t k = 0; k < C; ++k) fc.values[k] = static_cast<float>(v(k));
    m.features.push_back(std::move(fc));
    out.feature_cells.push_back(g.flat(row, col));
  };
  auto add_box = [&](const BBox7& b, int row, int col) {
    m.boxes.push_back(b.cast<float>());
    out.box_cells.push_back(g.flat(row, col));
  };

  switch (cfg.mode) {
    case FusionMode::NoFusion:
      break;
    case FusionMode::IntermediateOnly:
      for (int r = 0; r < g.height; ++r) {
        for (int c = 0; c < g.width; ++c) add_cell(r, c, enc.features.cells.row(g.flat(r, c)));
      }
      break;
    case FusionMode::LateOnly:
      for (const DecodedBox& d : local_detections(params, cfg, g, enc.features.cells)) add_box(d.box, d.row, d.col);
      break;
    case FusionMode::MmCooper: {
      Rng rng = make_rng(seed, {kGumbel, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(sender)});
      out.filter = cfg::generate_filter(bind, params.confidence, enc.features, cfg.cfg, rng);
      std::vector<cfg::AnchoredBox> anchored;
      for (const DecodedBox& d : local_detections(params, cfg, g, enc.features.cells)) {
        anchored.push_back({d.box, d.row, d.col});
      }
      const cfg::FilteredContent content = cfg::compose_and_apply(enc.features, anchored, out.filter);
      for (const cfg::SelectedCell& sc : content.features) add_cell(sc.row, sc.col, sc.values);
      for (const cfg::AnchoredBox& ab : content.boxes) add_box(ab.box, ab.row, ab.col);
      break;
    }
  }
  return out;
}

FrameResult forward_frame(ParamBinder& bind, const scene::Scenario& s, const ModelParams& params,
                          const PipelineConfig& cfg, int t, std::uint64_t seed, LossTerms* loss) {
  cfg.validate();
  const GridSpec& g = s.grid;
  params.validate(g);
  if (t < 0 || t >= s.duration) throw ValidationError("forward_frame: timestep out of range");
  Tape& tape = bind.tape();
  const int ego_id = s.ego().id;
  const geometry::Pose2D ego_pose = s.agent_pose(ego_id, t);
  const auto C = static_cast<std::uint32_t>(g.channels);

  FrameResult res;
  res.timestep = t;
  for (const BBox7& b : s.objects_at(t)) {
    const BBox7 local = geometry::transform_box(b, geometry::Pose2D{}, ego_pose);
    if (g.cell_of(local.x, local.y)) res.truth.push_back(local);
  }

  const scene::EncodedObservation ego = encode(s, params, cfg, ego_id, t, seed);
  std::vector<fusion::SparseCollabFeatures> collabs;
  std::vector<BBox7> received;
  std::vector<Var> received_gates;
  const bool gated = cfg.mode == FusionMode::MmCooper;

  for (const scene::AgentTrack& agent : s.agents) {
    if (agent.id == ego_id || cfg.mode == FusionMode::NoFusion) continue;
    SenderStats st;
    st.sender = agent.id;
    const int ts = t - cfg.channel.delay_steps;
    st.sent_step = ts;
    if (ts < 0) {
      res.senders.push_back(st);
      continue;
    }
    const OutgoingMessage out = compose_message(bind, s, params, cfg, agent.id, ts, seed);
    const comms::CoopMessage& m = out.message;

    const std::vector<std::uint8_t> wire = comms::serialize(m);
    st.bytes = wire.size();
    st.volume = comms::measured_volume(m, g.height, g.width);
    st.feature_cells = m.features.size();
    st.boxes = m.boxes.size();
    res.bytes_sent += wire.size();

    Rng channel_rng = make_rng(seed, {kChannel, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(agent.id)});
    const std::optional<comms::CoopMessage> rx = comms::channel_apply(
        comms::deserialize(wire, C), cfg.channel, s.agent_pose(agent.id, t), ego_pose, channel_rng);
    st.delivered = rx.has_value();
    res.senders.push_back(st);
    if (!rx) continue;

    fusion::SparseCollabFeatures sf;
    sf.collaborator = agent.id;
    std::vector<Eigen::Index> kept_src;
    std::vector<numerics::RowVector> kept_values;
    std::set<int> taken;
    for (std::size_t k = 0; k < rx->features.size(); ++k) {
      const comms::FeatureCell& fc = rx->features[k];
      const Eigen::Vector2d world = geometry::to_world(rx->pose, g.cell_center(fc.row, fc.col));
      const Eigen::Vector2d local = geometry::to_local(ego_pose, world);
      const double pos_col = (local.x() - g.origin_x()) / g.cell_size;
      const double pos_row = (local.y() - g.origin_y()) / g.cell_size;
      const int row = static_cast<int>(std::floor(pos_row));
      const int col = static_cast<int>(std::floor(pos_col));
      if (!g.contains(row, col) || !taken.insert(g.flat(row, col)).second) continue;
      sf.cells.push_back({row, col, pos_row, pos_col});
      numerics::RowVector v(C);
      for (std::uint32_t j = 0; j < C; ++j) v(j) = fc.values[j];
      kept_values.push_back(std::move(v));
      kept_src.push_back(out.feature_cells[k]);
    }
    if (!sf.cells.empty()) {
      Matrix values(static_cast<Eigen::Index>(kept_values.size()), C);
      for (std::size_t k = 0; k < kept_values.size(); ++k) values.row(static_cast<Eigen::Index>(k)) = kept_values[k];
      sf.values = tape.constant(std::move(values));
      if (gated) sf.values = numerics::scale_rows(sf.values, numerics::gather_rows(out.filter.gate_f, kept_src));
      collabs.push_back(std::move(sf));
    }
    for (const comms::WireBox& wb : rx->boxes) {
      received.push_back(geometry::transform_box(wb.cast<double>(), rx->pose, ego_pose));
    }
    if (gated && !rx->boxes.empty()) received_gates.push_back(numerics::gather_rows(out.filter.gate_b, out.box_cells));
  }

  const Var fused = fusion::mof(bind, params.mof, tape.constant(ego.features.cells), g, collabs, cfg.mof);
  const HeadOutputs heads = decode_heads(bind, params.heads, fused);
  const std::vector<BBox7> fused_boxes = boxes_of(
      nms_decoded(decode_boxes(heads.reg.value(), heads.cls.value(), cfg.anchor, g, cfg.score_floor), cfg.nms_iou));

  fusion::BfcLosses bfc{tape.constant(Matrix::Zero(1, 1)), tape.constant(Matrix::Zero(1, 1))};
  std::vector<BBox7> calibrated = received;
  if (gated && cfg.bfc_enabled && !received.empty()) {
    const Var gates = numerics::concat_rows(received_gates);
    const fusion::LateResult late =
        fusion::calibrate_boxes(bind, params.late, received, &gates, fused, g, cfg.bfc);
    calibrated = late.calibrated;
    if (loss) bfc = fusion::bfc_losses(tape, late.output, fusion::match_boxes(received, late.map, res.truth, cfg.match_iou));
  }

  if (cfg.mode == FusionMode::NoFusion) {
    res.detections = fused_boxes;
  } else {
    const std::vector<BBox7> own =
        collabs.empty() ? fused_boxes : boxes_of(local_detections(params, cfg, g, ego.features.cells));
    res.detections = fusion::merge_and_nms(own, calibrated, fused_boxes, cfg.nms_iou);
  }
  if (loss) *loss = total_loss(tape, heads, build_targets(res.truth, cfg.anchor, g), bfc);
  return res;
}

FrameResult run_frame(const scene::Scenario& s, const ModelParams& params, const PipelineConfig& cfg, int t,
                      std::uint64_t seed) {
  Tape tape;
  ParamBinder bind(tape, false);
  return forward_frame(bind, s, params, cfg, t, seed);
}

std::vector<double> train_toy(ModelParams& params, std::span<const TrainSample> samples, const PipelineConfig& cfg,
                              const TrainOptions& opt) {
  if (opt.steps < 1) throw ValidationError("train: steps must be >= 1");
  if (!(opt.lr >= 0) || !std::isfinite(opt.lr)) throw ValidationError("train: learning rate must be >= 0");
  if (samples.empty()) throw ValidationError("train: no training samples");
  std::vector<double> curve;
  auto named = params.trainable();
  for (int step = 0; step <= opt.steps; ++step) {
    Tape tape;
    ParamBinder bind(tape, true);
    Var total = tape.constant(Matrix::Zero(1, 1));
    for (const TrainSample& smp : samples) {
      LossTerms l;
      forward_frame(bind, smp.scenario, params, cfg, smp.timestep, smp.seed, &l);
      total = numerics::add(total, l.total);
    }
    total = numerics::scale(total, 1.0 / static_cast<double>(samples.size()));
    const double value = total.scalar();
    if (!std::isfinite(value)) {
      throw NumericError("train: non-finite loss at step " + std::to_string(step) + " (previous " +
                         (curve.empty() ? std::string("none") : std::to_string(curve.back())) + ")");
    }
    curve.push_back(value);
    if (step == opt.steps) break;
    tape.backward(total);
    for (auto& [name, m] : named) {
      if (!bind.is_bound(*m)) continue;
      const Matrix grad = bind.grad_of(*m);
      if (!grad.allFinite()) throw NumericError("train: non-finite gradient for " + name);
      *m -= opt.lr * grad;
    }
  }
  return curve;
}

// ---- parameter blob ----------------------------------------------------------

namespace {

constexpr char kBlobMagic[4] = {'M', 'C', 'P', 'B'};
constexpr std::uint32_t kBlobVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

struct BlobReader {
  const std::vector<std::uint8_t>& data;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (data.size() - pos < n) throw ValidationError("parameter blob: truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos++]) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos++]) << (8 * i);
    return std::bit_cast<double>(v);
  }
};

}  // namespace

std::vector<std::uint8_t> save_params(const ModelParams& p) {
  std::vector<std::uint8_t> out(std::begin(kBlobMagic), std::end(kBlobMagic));
  put_u32(out, kBlobVersion);
  const auto named = p.named();
  put_u32(out, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, m] : named) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(m->rows()));
    put_u32(out, static_cast<std::uint32_t>(m->cols()));
  }
  for (const auto& entry : named) {
    const Matrix& m = *entry.second;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
    }
  }
  return out;
}

void load_params(ModelParams& p, const std::vector<std::uint8_t>& blob) {
  BlobReader in{blob};
  in.need(4);
  if (std::memcmp(blob.data(), kBlobMagic, 4) != 0) throw ValidationError("parameter blob: bad magic");
  in.pos = 4;
  if (const std::uint32_t v = in.u32(); v != kBlobVersion) {
    throw ValidationError("parameter blob: unsupported version " + std::to_string(v));
  }
  std::vector<std::pair<std::string, Matrix*>> targets;
  visit_params(p, [&](const std::string& n, Matrix& m) { targets.emplace_back(n, &m); }, true);
  if (in.u32() != targets.size()) throw ValidationError("parameter blob: manifest does not match the model");
  std::vector<Matrix> staged;
  for (const auto& [name, m] : targets) {
    const std::uint32_t len = in.u32();
    in.need(len);
    const std::string got(blob.begin() + static_cast<std::ptrdiff_t>(in.pos),
                          blob.begin() + static_cast<std::ptrdiff_t>(in.pos + len));
    in.pos += len;
    const std::uint32_t rows = in.u32(), cols = in.u32();
    if (got != name || rows != m->rows() || cols != m->cols()) {
      throw ValidationError("parameter blob: entry '" + got + "' does not match '" + name + "'");
    }
    staged.emplace_back(rows, cols);
  }
  for (Matrix& m : staged) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in.f64();
    }
  }
  if (in.pos != blob.size()) throw ValidationError("parameter blob: trailing bytes");
  for (std::size_t i = 0; i < targets.size(); ++i) *targets[i].second = std::move(staged[i]);
}

}  // namespace mmcoop::detection
