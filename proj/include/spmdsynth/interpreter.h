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

#ifndef SPMDSYNTH_INTERPRETER_H_
#define SPMDSYNTH_INTERPRETER_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "json.hpp"
#include "spmdsynth/cost_model.h"
#include "spmdsynth/graph.h"
#include "spmdsynth/program.h"
#include "spmdsynth/theory.h"

namespace spmdsynth {

// Dense row-major float64 tensor.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  static Tensor Zeros(Shape shape);
  int64_t size() const { return static_cast<int64_t>(data.size()); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

Tensor Slice(const Tensor& t, int axis, int64_t begin, int64_t end);
Tensor Concat(const std::vector<Tensor>& parts, int axis);
absl::StatusOr<Tensor> MatMul(const Tensor& a, const Tensor& b);
absl::StatusOr<Tensor> Elementwise(BinaryFn fn, const Tensor& a,
                                   const Tensor& b);
Tensor Apply(UnaryFn fn, const Tensor& t);
Tensor ReduceSum(const Tensor& t, const std::vector<int>& dims);

// Bindings for Placeholder and Parameter tensors, by node index.
using Inputs = std::map<int, Tensor>;

// Seeded random inputs: uniform in [-1, 1], or small integers when
// `integer_valued` so that sums are exact.
Inputs RandomInputs(const Graph& graph, uint64_t seed,
                    bool integer_valued = false);
absl::StatusOr<Inputs> ParseInputs(const Graph& graph,
                                   const nlohmann::json& j);

// Values of every tensor of the single-device graph.
absl::StatusOr<std::vector<Tensor>> RunSingleAll(const Graph& graph,
                                                 const Inputs& inputs);
absl::StatusOr<Tensor> RunSingle(const Graph& graph, const Inputs& inputs);

// Distributed tensor: one instance per device.
using DistTensor = std::vector<Tensor>;

// Lock-step simulation of m devices.
class Interpreter {
 public:
  Interpreter(const Graph& graph, const ShardingRatios& ratios,
              const SegmentAssignment& assignment, const Inputs& inputs);

  int num_devices() const { return devices_; }
  // Shard sizes of `ref` along its AllGather axis.
  std::vector<int64_t> ShardSizes(const DistTensorRef& ref) const;

  void Bind(const DistTensorRef& ref, DistTensor value);
  const DistTensor* Find(const DistTensorRef& ref) const;
  absl::Status Execute(const Instruction& instr);
  absl::Status Run(const DistributedProgram& program);

  // Splits `reference` into the instances of `ref`. AllReduce parts are
  // drawn from `seed` so that they sum to the reference exactly when it is
  // integer valued.
  DistTensor Distribute(const Tensor& reference, const DistTensorRef& ref,
                        uint64_t seed) const;
  // Whether `value` relates to `reference` as `ref.form` says, to relative
  // tolerance `tol` (0 means exact).
  absl::Status CheckForm(const Tensor& reference, const DistTensorRef& ref,
                         const DistTensor& value, double tol) const;

 private:
  const Graph& graph_;
  const ShardingRatios& ratios_;
  const SegmentAssignment& assignment_;
  const Inputs& inputs_;
  int devices_;
  std::map<DistTensorRef, DistTensor> env_;
};

// Runs a complete program and returns every device's loss: the loss in
// AllReduce form, summed across devices.
absl::StatusOr<std::vector<Tensor>> RunDistributed(
    const Graph& graph, const DistributedProgram& program,
    const ShardingRatios& ratios, const SegmentAssignment& assignment,
    const Inputs& inputs);

struct EquivalenceReport {
  int trials = 0;
  double max_relative_error = 0.0;
  bool passed = true;
  std::string failure;  // first execution error, if any
};

inline constexpr double kEquivalenceTolerance = 1e-9;

EquivalenceReport CheckEquivalence(const Graph& graph,
                                   const DistributedProgram& program,
                                   const ShardingRatios& ratios,
                                   const SegmentAssignment& assignment,
                                   int trials, uint64_t seed);

// Instantiates `triple` on random integer data satisfying its
// precondition, runs its instructions and checks every postcondition form.
absl::Status CheckTripleSoundness(const Graph& graph, const HoareTriple& triple,
                                  const ShardingRatios& ratios,
                                  const SegmentAssignment& assignment,
                                  uint64_t seed);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_INTERPRETER_H_
