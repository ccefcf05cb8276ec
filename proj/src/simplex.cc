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

#include "spmdsynth/simplex.h"

#include <cmath>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace spmdsynth {

int LinearProgram::AddVariable(std::string name, double cost,
                               double upper_bound) {
  names.push_back(std::move(name));
  objective.push_back(cost);
  upper.resize(num_vars, std::numeric_limits<double>::infinity());
  upper.push_back(upper_bound);
  for (LinearConstraint& c : constraints) c.coeffs.push_back(0.0);
  return num_vars++;
}

void LinearProgram::AddConstraint(
    const std::vector<std::pair<int, double>>& terms, Relation relation,
    double rhs) {
  LinearConstraint c;
  c.coeffs.assign(num_vars, 0.0);
  for (const auto& [var, coeff] : terms) c.coeffs[var] += coeff;
  c.relation = relation;
  c.rhs = rhs;
  constraints.push_back(std::move(c));
}

namespace {

class Tableau {
 public:
  Tableau(int rows, int cols)
      : rows_(rows), cols_(cols), data_(rows * (cols + 1), 0.0),
        basis_(rows, -1) {}

  double& at(int r, int c) { return data_[r * (cols_ + 1) + c]; }
  double& rhs(int r) { return at(r, cols_); }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::vector<int>& basis() { return basis_; }

  void Pivot(int pr, int pc) {
    const double p = at(pr, pc);
    for (int c = 0; c <= cols_; ++c) at(pr, c) /= p;
    for (int r = 0; r < rows_; ++r) {
      if (r == pr) continue;
      const double f = at(r, pc);
      if (f == 0.0) continue;
      for (int c = 0; c <= cols_; ++c) at(r, c) -= f * at(pr, c);
      at(r, pc) = 0.0;
    }
    basis_[pr] = pc;
  }

  void DropRow(int r) {
    data_.erase(data_.begin() + r * (cols_ + 1),
                data_.begin() + (r + 1) * (cols_ + 1));
    basis_.erase(basis_.begin() + r);
    --rows_;
  }

 private:
  int rows_;
  int cols_;
  std::vector<double> data_;
  std::vector<int> basis_;
};

enum class PhaseResult { kOptimal, kUnbounded };

// Minimizes cost . x over the columns with allowed[c] using Bland's rule.
PhaseResult RunPhase(Tableau& t, const std::vector<double>& cost,
                     const std::vector<bool>& allowed, int* pivots) {
  while (true) {
    int enter = -1;
    for (int c = 0; c < t.cols() && enter < 0; ++c) {
      if (!allowed[c]) continue;
      double reduced = cost[c];
      for (int r = 0; r < t.rows(); ++r) {
        reduced -= cost[t.basis()[r]] * t.at(r, c);
      }
      if (reduced < -kLpTolerance) enter = c;
    }
    if (enter < 0) return PhaseResult::kOptimal;
    int leave = -1;
    double best_ratio = 0.0;
    for (int r = 0; r < t.rows(); ++r) {
      const double a = t.at(r, enter);
      if (a <= kLpTolerance) continue;
      const double ratio = t.rhs(r) / a;
      if (leave < 0 || ratio < best_ratio - kLpTolerance ||
          (ratio <= best_ratio + kLpTolerance &&
           t.basis()[r] < t.basis()[leave])) {
        leave = r;
        best_ratio = ratio;
      }
    }
    if (leave < 0) return PhaseResult::kUnbounded;
    t.Pivot(leave, enter);
    ++*pivots;
  }
}

}  // namespace

LpSolution SolveLp(const LinearProgram& lp) {
  const int n = lp.num_vars;
  std::vector<LinearConstraint> rows = lp.constraints;
  for (int v = 0; v < n && v < static_cast<int>(lp.upper.size()); ++v) {
    if (std::isfinite(lp.upper[v])) {
      LinearConstraint c;
      c.coeffs.assign(n, 0.0);
      c.coeffs[v] = 1.0;
      c.relation = Relation::kLessEqual;
      c.rhs = lp.upper[v];
      rows.push_back(std::move(c));
    }
  }
  for (LinearConstraint& c : rows) {
    if (c.rhs < 0) {
      for (double& a : c.coeffs) a = -a;
      c.rhs = -c.rhs;
      if (c.relation == Relation::kLessEqual) {
        c.relation = Relation::kGreaterEqual;
      } else if (c.relation == Relation::kGreaterEqual) {
        c.relation = Relation::kLessEqual;
      }
    }
  }
  // Columns: originals, one slack or surplus per inequality, artificials.
  int slacks = 0, artificials = 0;
  for (const LinearConstraint& c : rows) {
    if (c.relation != Relation::kEqual) ++slacks;
    if (c.relation != Relation::kLessEqual) ++artificials;
  }
  const int m = static_cast<int>(rows.size());
  const int first_artificial = n + slacks;
  const int cols = first_artificial + artificials;
  Tableau t(m, cols);
  int next_slack = n, next_artificial = first_artificial;
  for (int r = 0; r < m; ++r) {
    const LinearConstraint& c = rows[r];
    for (int v = 0; v < n; ++v) t.at(r, v) = c.coeffs[v];
    t.rhs(r) = c.rhs;
    switch (c.relation) {
      case Relation::kLessEqual:
        t.at(r, next_slack) = 1.0;
        t.basis()[r] = next_slack++;
        break;
      case Relation::kGreaterEqual:
        t.at(r, next_slack++) = -1.0;
        t.at(r, next_artificial) = 1.0;
        t.basis()[r] = next_artificial++;
        break;
      case Relation::kEqual:
        t.at(r, next_artificial) = 1.0;
        t.basis()[r] = next_artificial++;
        break;
    }
  }

  LpSolution sol;
  std::vector<bool> allowed(cols, true);
  if (artificials > 0) {
    std::vector<double> cost(cols, 0.0);
    for (int c = first_artificial; c < cols; ++c) cost[c] = 1.0;
    RunPhase(t, cost, allowed, &sol.pivots);
    double infeasibility = 0.0;
    for (int r = 0; r < t.rows(); ++r) {
      if (t.basis()[r] >= first_artificial) infeasibility += t.rhs(r);
    }
    if (infeasibility > kLpTolerance) {
      sol.status = LpStatus::kInfeasible;
      return sol;
    }
    // Move zero-level artificials out of the basis; rows where that is
    // impossible are redundant.
    for (int r = 0; r < t.rows();) {
      if (t.basis()[r] < first_artificial) {
        ++r;
        continue;
      }
      int pc = -1;
      for (int c = 0; c < first_artificial && pc < 0; ++c) {
        if (std::abs(t.at(r, c)) > kLpTolerance) pc = c;
      }
      if (pc >= 0) {
        t.Pivot(r, pc);
        ++sol.pivots;
        ++r;
      } else {
        t.DropRow(r);
      }
    }
    for (int c = first_artificial; c < cols; ++c) allowed[c] = false;
  }
  std::vector<double> cost(cols, 0.0);
  for (int v = 0; v < n; ++v) cost[v] = lp.objective[v];
  if (RunPhase(t, cost, allowed, &sol.pivots) == PhaseResult::kUnbounded) {
    sol.status = LpStatus::kUnbounded;
    return sol;
  }
  sol.status = LpStatus::kOptimal;
  sol.x.assign(n, 0.0);
  for (int r = 0; r < t.rows(); ++r) {
    if (t.basis()[r] < n) sol.x[t.basis()[r]] = t.rhs(r);
  }
  sol.objective = lp.objective_constant;
  for (int v = 0; v < n; ++v) sol.objective += lp.objective[v] * sol.x[v];
  return sol;
}

std::string LpToText(const LinearProgram& lp) {
  auto name = [&](int v) {
    return v < static_cast<int>(lp.names.size()) && !lp.names[v].empty()
               ? lp.names[v]
               : absl::StrCat("x", v);
  };
  auto terms = [&](const std::vector<double>& coeffs) {
    std::string out;
    for (int v = 0; v < lp.num_vars; ++v) {
      if (coeffs[v] == 0.0) continue;
      absl::StrAppend(&out, coeffs[v] < 0 ? " - " : " + ",
                      absl::StrFormat("%.12g", std::abs(coeffs[v])), " ",
                      name(v));
    }
    return out.empty() ? std::string(" 0 ") : out;
  };
  std::string out = "Minimize\n obj:";
  absl::StrAppend(&out, terms(lp.objective));
  if (lp.objective_constant != 0.0) {
    absl::StrAppend(&out, absl::StrFormat(" + %.12g", lp.objective_constant));
  }
  absl::StrAppend(&out, "\nSubject To\n");
  for (size_t i = 0; i < lp.constraints.size(); ++i) {
    const LinearConstraint& c = lp.constraints[i];
    const char* rel = c.relation == Relation::kLessEqual   ? "<="
                      : c.relation == Relation::kEqual     ? "="
                                                           : ">=";
    absl::StrAppend(&out, " c", i, ":", terms(c.coeffs), " ", rel, " ",
                    absl::StrFormat("%.12g", c.rhs), "\n");
  }
  absl::StrAppend(&out, "Bounds\n");
  for (int v = 0; v < lp.num_vars; ++v) {
    if (v < static_cast<int>(lp.upper.size()) && std::isfinite(lp.upper[v])) {
      absl::StrAppend(&out, " 0 <= ", name(v), " <= ",
                      absl::StrFormat("%.12g", lp.upper[v]), "\n");
    } else {
      absl::StrAppend(&out, " ", name(v), " >= 0\n");
    }
  }
  absl::StrAppend(&out, "End\n");
  return out;
}

}  // namespace spmdsynth
