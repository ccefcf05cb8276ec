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

#ifndef SPMDSYNTH_SIMPLEX_H_
#define SPMDSYNTH_SIMPLEX_H_

#include <limits>
#include <string>
#include <vector>

namespace spmdsynth {

enum class Relation { kLessEqual, kEqual, kGreaterEqual };

struct LinearConstraint {
  std::vector<double> coeffs;  // dense, one per variable
  Relation relation = Relation::kLessEqual;
  double rhs = 0.0;
};

// minimize objective . x + objective_constant
// subject to constraints, 0 <= x <= upper.
struct LinearProgram {
  int num_vars = 0;
  std::vector<std::string> names;  // optional, for dumps
  std::vector<double> objective;
  double objective_constant = 0.0;
  std::vector<double> upper;  // empty or per variable; infinity if unbounded
  std::vector<LinearConstraint> constraints;

  int AddVariable(std::string name, double cost = 0.0,
                  double upper_bound = std::numeric_limits<double>::infinity());
  // Sparse helper: (variable, coefficient) pairs.
  void AddConstraint(const std::vector<std::pair<int, double>>& terms,
                     Relation relation, double rhs);
};

enum class LpStatus { kOptimal, kInfeasible, kUnbounded };

struct LpSolution {
  LpStatus status = LpStatus::kInfeasible;
  std::vector<double> x;
  double objective = 0.0;  // includes objective_constant
  int pivots = 0;
};

inline constexpr double kLpTolerance = 1e-9;

// Dense two-phase primal simplex with Bland's rule.
LpSolution SolveLp(const LinearProgram& lp);

// CPLEX-style text dump.
std::string LpToText(const LinearProgram& lp);

}  // namespace spmdsynth

#endif  // SPMDSYNTH_SIMPLEX_H_
