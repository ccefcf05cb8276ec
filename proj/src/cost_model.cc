/* Copyright 2026 The spmdsynth Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "spmdsynth/cost_model.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "absl/strings/str_cat.h"

namespace spmdsynth {
namespace {

using json = nlohmann::json;

constexpr CollectiveKind kAllCollectives[] = {
    CollectiveKind::kAllReduce, CollectiveKind::kAllGather,
    CollectiveKind::kReduceScatter, CollectiveKind::kAllToAll,
    CollectiveKind::kGroupedBroadcast};

absl::Status CheckKeys(const json& j, std::initializer_list<const char*> keys,
                       absl::string_view what) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* k) {
          return key == k;
        }) == keys.end()) {
      return absl::InvalidArgumentError(
          absl::StrCat(what, ": unknown field '", key, "'"));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<double> PositiveNumber(const json& j, const char* key,
                                      absl::string_view what,
                                      bool allow_zero = false) {
  if (!j.contains(key) || !j[key].is_number()) {
    return absl::InvalidArgumentError(
        absl::StrCat(what, ": missing numeric field '", key, "'"));
  }
  double v = j[key].get<double>();
  if (!std::isfinite(v) || v < 0 || (!allow_zero && v == 0)) {
    return absl::InvalidArgumentError(absl::StrCat(
        what, ": '", key, "' must be ", allow_zero ? "non-negative" : "positive"));
  }
  return v;
}

}  // namespace

absl::string_view CollectiveKey(CollectiveKind kind) {
  switch (kind) {
    case CollectiveKind::kAllReduce:
      return "all_reduce";
    case CollectiveKind::kAllGather:
      return "all_gather";
    case CollectiveKind::kReduceScatter:
      return "reduce_scatter";
    case CollectiveKind::kAllToAll:
      return "all_to_all";
    case CollectiveKind::kGroupedBroadcast:
      return "grouped_broadcast";
  }
  return "?";
}

absl::StatusOr<ClusterSpec> ParseClusterSpec(absl::string_view text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    return absl::InvalidArgumentError("cluster spec: not a JSON object");
  }
  if (auto s = CheckKeys(j, {"devices", "collectives", "bytes_per_element"},
                         "cluster spec");
      !s.ok()) {
    return s;
  }
  ClusterSpec spec;
  if (!j.contains("devices") || !j["devices"].is_array() ||
      j["devices"].empty()) {
    return absl::InvalidArgumentError(
        "cluster spec: 'devices' must be a non-empty array");
  }
  for (const json& d : j["devices"]) {
    if (!d.is_object()) {
      return absl::InvalidArgumentError("cluster spec: device must be object");
    }
    if (auto s = CheckKeys(d, {"flops"}, "device"); !s.ok()) return s;
    absl::StatusOr<double> flops = PositiveNumber(d, "flops", "device");
    if (!flops.ok()) return flops.status();
    spec.flops.push_back(*flops);
  }
  if (!j.contains("collectives") || !j["collectives"].is_object()) {
    return absl::InvalidArgumentError(
        "cluster spec: missing 'collectives' object");
  }
  const json& cj = j["collectives"];
  if (auto s = CheckKeys(cj,
                         {"all_reduce", "all_gather", "reduce_scatter",
                          "all_to_all", "grouped_broadcast"},
                         "collectives");
      !s.ok()) {
    return s;
  }
  for (CollectiveKind kind : kAllCollectives) {
    std::string key(CollectiveKey(kind));
    if (!cj.contains(key) || !cj[key].is_object()) {
      return absl::InvalidArgumentError(
          absl::StrCat("collectives: missing '", key, "'"));
    }
    const json& lj = cj[key];
    if (auto s = CheckKeys(lj, {"latency_s", "bw_Bps"}, key); !s.ok()) {
      return s;
    }
    absl::StatusOr<double> lat = PositiveNumber(lj, "latency_s", key, true);
    if (!lat.ok()) return lat.status();
    absl::StatusOr<double> bw = PositiveNumber(lj, "bw_Bps", key);
    if (!bw.ok()) return bw.status();
    spec.link(kind) = {*lat, *bw};
  }
  if (j.contains("bytes_per_element")) {
    const json& b = j["bytes_per_element"];
    if (!b.is_number_integer() || b.get<int64_t>() <= 0) {
      return absl::InvalidArgumentError(
          "cluster spec: 'bytes_per_element' must be a positive integer");
    }
    spec.bytes_per_element = b.get<int64_t>();
  }
  return spec;
}

json ClusterSpecToJson(const ClusterSpec& spec) {
  json j;
  json devices = json::array();
  for (double f : spec.flops) devices.push_back({{"flops", f}});
  j["devices"] = std::move(devices);
  json cj = json::object();
  for (CollectiveKind kind : kAllCollectives) {
    cj[std::string(CollectiveKey(kind))] = {
        {"latency_s", spec.link(kind).latency_s},
        {"bw_Bps", spec.link(kind).bw_Bps}};
  }
  j["collectives"] = std::move(cj);
  j["bytes_per_element"] = spec.bytes_per_element;
  return j;
}

ShardingRatios ShardingRatios::Uniform(int segments, int devices) {
  return ShardingRatios{std::vector<std::vector<double>>(
      segments, std::vector<double>(devices, 1.0 / devices))};
}

ShardingRatios ShardingRatios::ProportionalTo(int segments,
                                              std::span<const double> flops) {
  double total = std::accumulate(flops.begin(), flops.end(), 0.0);
  std::vector<double> row;
  for (double f : flops) row.push_back(f / total);
  return ShardingRatios{std::vector<std::vector<double>>(segments, row)};
}

absl::Status ShardingRatios::Validate(int segments, int devices) const {
  if (num_segments() != segments) {
    return absl::InvalidArgumentError(absl::StrCat(
        "ratios: expected ", segments, " rows, got ", num_segments()));
  }
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != devices) {
      return absl::InvalidArgumentError(absl::StrCat(
          "ratios: expected ", devices, " columns, got ", r.size()));
    }
    double sum = 0;
    for (double v : r) {
      if (!(v >= 0)) return absl::InvalidArgumentError("ratios: negative entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      return absl::InvalidArgumentError(
          absl::StrCat("ratios: row sums to ", sum));
    }
  }
  return absl::OkStatus();
}

std::vector<Stage> DecomposeStages(const DistributedProgram& program) {
  std::vector<Stage> stages;
  for (size_t i = 0; i < program.instrs.size(); ++i) {
    if (program.instrs[i].is_communication() || stages.empty()) {
      stages.push_back({i, i, program.instrs[i].is_communication()});
    }
    stages.back().end = i + 1;
  }
  if (stages.empty()) stages.push_back({0, 0, false});
  return stages;
}

double MaxOf(std::span<const double> row) {
  double m = 0.0;
  for (double v : row) m = std::max(m, v);
  return m;
}

double CostAccumulator::OpenCompMax() const { return MaxOf(open_comp); }

CostModel::CostModel(const Graph& graph, const ClusterSpec& spec,
                     SegmentAssignment assignment)
    : graph_(&graph), spec_(&spec), assignment_(std::move(assignment)) {
  for (int i = 0; i < graph.size(); ++i) flops_.push_back(FlopsOf(graph, i));
}

int CostModel::SegmentOf(const DistTensorRef& ref) const {
  return ref.segment >= 0 ? ref.segment : assignment_.segment_of[ref.tensor];
}

int64_t CostModel::TensorBytes(int tensor) const {
  return NumElements(graph_->node(tensor).shape) * spec_->bytes_per_element;
}

bool CostModel::IsSharded(const Instruction& instr) const {
  if (instr.output.form.is_all_gather()) return true;
  for (const DistTensorRef& op : instr.operands) {
    if (op.form.is_all_gather()) return true;
  }
  return false;
}

double CostModel::CommTime(const Instruction& instr,
                           const ShardingRatios& b) const {
  const int m = num_devices();
  if (m == 1) return 0.0;
  const double bytes = static_cast<double>(TensorBytes(instr.tensor));
  auto padded = [&](CollectiveKind kind, double max_ratio) {
    const LinkModel& link = spec_->link(kind);
    return link.latency_s + bytes * max_ratio / link.bw_Bps;
  };
  const std::vector<double>& row = b.row(SegmentOf(instr.output));
  switch (instr.kind) {
    case InstrKind::kAllReduce: {
      const LinkModel& link = spec_->link(CollectiveKind::kAllReduce);
      return link.latency_s + bytes / link.bw_Bps;
    }
    case InstrKind::kAllGather:
      return padded(CollectiveKind::kAllGather, MaxOf(row));
    case InstrKind::kReduceScatter:
      return padded(CollectiveKind::kReduceScatter, MaxOf(row));
    case InstrKind::kAllToAll:
      return padded(CollectiveKind::kAllToAll, MaxOf(row));
    case InstrKind::kGroupedBroadcast: {
      // One broadcast per device, each sized by that device's shard.
      const LinkModel& link = spec_->link(CollectiveKind::kGroupedBroadcast);
      const std::vector<double>& src = b.row(SegmentOf(instr.operands[0]));
      double t = 0.0;
      for (double r : src) t += link.latency_s + bytes * r / link.bw_Bps;
      return t;
    }
    case InstrKind::kRebalance: {
      double src = MaxOf(b.row(SegmentOf(instr.operands[0])));
      return padded(CollectiveKind::kAllToAll, std::max(src, MaxOf(row)));
    }
    default:
      return 0.0;
  }
}

double CostModel::InstructionCompTime(const Instruction& instr, int device,
                                      const ShardingRatios& b) const {
  if (instr.is_communication() || instr.kind == InstrKind::kSplitReplica) {
    return 0.0;
  }
  const double flops = static_cast<double>(flops_[instr.tensor]);
  if (flops == 0.0) return 0.0;
  const double rate = spec_->flops[device];
  if (IsSharded(instr)) {
    return flops * b.row(SegmentOf(instr.output))[device] / rate;
  }
  return flops / rate;
}

double CostModel::StageCompTime(const DistributedProgram& program,
                                const Stage& stage, int device,
                                const ShardingRatios& b) const {
  double t = 0.0;
  for (size_t i = stage.begin; i < stage.end; ++i) {
    t += InstructionCompTime(program.instrs[i], device, b);
  }
  return t;
}

CostBreakdown CostModel::IterationTime(const DistributedProgram& program,
                                       const ShardingRatios& b) const {
  CostBreakdown out;
  for (const Stage& stage : DecomposeStages(program)) {
    StageCost sc;
    if (stage.opens_with_communication) {
      sc.comm_s = CommTime(program.instrs[stage.begin], b);
    }
    for (int j = 0; j < num_devices(); ++j) {
      sc.comp_s.push_back(StageCompTime(program, stage, j, b));
    }
    out.total_s += sc.comm_s + MaxOf(sc.comp_s);
    out.stages.push_back(std::move(sc));
  }
  return out;
}

CostAccumulator CostModel::EmptyAccumulator() const {
  CostAccumulator acc;
  acc.open_comp.assign(num_devices(), 0.0);
  return acc;
}

void CostModel::Append(const Instruction& instr, const ShardingRatios& b,
                       CostAccumulator* acc) const {
  if (instr.is_communication()) {
    acc->closed += acc->open_comm + acc->OpenCompMax();
    acc->open_comm = CommTime(instr, b);
    std::fill(acc->open_comp.begin(), acc->open_comp.end(), 0.0);
    return;
  }
  for (int j = 0; j < num_devices(); ++j) {
    acc->open_comp[j] += InstructionCompTime(instr, j, b);
  }
}

std::vector<StageCoefficients> CostModel::Coefficients(
    const DistributedProgram& program) const {
  const int m = num_devices();
  const int g = assignment_.count;
  std::vector<StageCoefficients> out;
  for (const Stage& stage : DecomposeStages(program)) {
    StageCoefficients sc;
    sc.comp_slope.assign(g, std::vector<double>(m, 0.0));
    sc.comp_intercept.assign(m, 0.0);
    if (stage.opens_with_communication && m > 1) {
      const Instruction& c = program.instrs[stage.begin];
      const double bytes = static_cast<double>(TensorBytes(c.tensor));
      auto set_padded = [&](CollectiveKind kind) {
        const LinkModel& link = spec_->link(kind);
        sc.comm_intercept = link.latency_s;
        sc.comm_slope = bytes / link.bw_Bps;
      };
      switch (c.kind) {
        case InstrKind::kAllReduce: {
          const LinkModel& link = spec_->link(CollectiveKind::kAllReduce);
          sc.comm_intercept = link.latency_s + bytes / link.bw_Bps;
          break;
        }
        case InstrKind::kGroupedBroadcast: {
          const LinkModel& link =
              spec_->link(CollectiveKind::kGroupedBroadcast);
          sc.comm_intercept = m * link.latency_s + bytes / link.bw_Bps;
          break;
        }
        case InstrKind::kAllGather:
          set_padded(CollectiveKind::kAllGather);
          break;
        case InstrKind::kReduceScatter:
          set_padded(CollectiveKind::kReduceScatter);
          break;
        case InstrKind::kAllToAll:
          set_padded(CollectiveKind::kAllToAll);
          break;
        case InstrKind::kRebalance:
          set_padded(CollectiveKind::kAllToAll);
          sc.comm_segments.push_back(SegmentOf(c.operands[0]));
          break;
        default:
          break;
      }
      if (sc.comm_slope != 0.0) {
        sc.comm_segments.push_back(SegmentOf(c.output));
        std::sort(sc.comm_segments.begin(), sc.comm_segments.end());
        sc.comm_segments.erase(
            std::unique(sc.comm_segments.begin(), sc.comm_segments.end()),
            sc.comm_segments.end());
      }
    }
    for (size_t i = stage.begin; i < stage.end; ++i) {
      const Instruction& instr = program.instrs[i];
      if (instr.is_communication() || instr.kind == InstrKind::kSplitReplica) {
        continue;
      }
      const double flops = static_cast<double>(flops_[instr.tensor]);
      if (flops == 0.0) continue;
      for (int j = 0; j < m; ++j) {
        if (IsSharded(instr)) {
          sc.comp_slope[SegmentOf(instr.output)][j] += flops / spec_->flops[j];
        } else {
          sc.comp_intercept[j] += flops / spec_->flops[j];
        }
      }
    }
    out.push_back(std::move(sc));
  }
  return out;
}

absl::StatusOr<LinearFit> FitLinear(
    std::span<const std::pair<double, double>> samples) {
  const size_t n = samples.size();
  if (n < 2) {
    return absl::InvalidArgumentError("fit needs at least two samples");
  }
  double mx = 0, my = 0;
  for (const auto& [x, y] : samples) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : samples) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0) {
    return absl::InvalidArgumentError("fit needs at least two distinct sizes");
  }
  const double slope = sxy / sxx;
  if (!(slope > 0)) {
    return absl::InvalidArgumentError(
        "fitted time does not grow with size; bandwidth undefined");
  }
  LinearFit fit;
  fit.link.latency_s = my - slope * mx;
  fit.link.bw_Bps = 1.0 / slope;
  double ss = 0;
  for (const auto& [x, y] : samples) {
    double r = y - (fit.link.latency_s + slope * x);
    ss += r * r;
  }
  fit.rms_residual_s = std::sqrt(ss / n);
  return fit;
}

absl::StatusOr<std::vector<std::pair<double, double>>> ParseProfileSamples(
    absl::string_view text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_array()) {
    return absl::InvalidArgumentError("samples: expected a JSON array");
  }
  std::vector<std::pair<double, double>> out;
  for (const json& s : j) {
    if (!s.is_array() || s.size() != 2 || !s[0].is_number() ||
        !s[1].is_number()) {
      return absl::InvalidArgumentError(
          "samples: each entry must be [bytes, seconds]");
    }
    out.emplace_back(s[0].get<double>(), s[1].get<double>());
  }
  return out;
}

}  // namespace spmdsynth
