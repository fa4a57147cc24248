// SPDX-License-Identifier: Apache-2.0
//
// Limited-memory BFGS with a discrete multi-scale line search. One iteration:
// evaluate cost and gradient at x + s * d for every step scale s, keep the
// best candidate, then refresh the (s, y) history and the next direction.
#pragma once

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace precis {

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Returns the cost at x and writes the gradient into `grad`.
using CostGradFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;
using CostFn = std::function<double(const Eigen::VectorXd& x)>;

struct LbfgsParams {
  int history = 10;
  std::vector<double> scales = {0.01, 0.03, 0.1, 0.3, 1.0};
  double curvature_eps = 1e-10;
  int max_iterations = 100;
  double grad_tolerance = 1e-5;
  double cost_tolerance = 1e-8;
  // With an empty history the direction is -grad; the candidate steps are
  // then measured in units of |grad| so the first step has bounded length.
  bool normalize_first_step = true;
  // Line search keeps x when no candidate improves the cost.
  bool require_improvement = true;

  /// Throws std::invalid_argument when scales are empty, non-positive or unsorted.
  void validate() const;
};

class LbfgsState {
 public:
  explicit LbfgsState(int capacity = 10, double curvature_eps = 1e-10)
      : capacity_(capacity), curvature_eps_(curvature_eps) {}

  struct Pair {
    Eigen::VectorXd s;
    Eigen::VectorXd y;
    double rho = 0.0;  // 1 / s^T y
  };

  /// Stores (s, y) if s^T y > curvature_eps, evicting the oldest pair when
  /// full. Returns whether the pair was accepted.
  bool push(const Eigen::VectorXd& s, const Eigen::VectorXd& y);
  void reset() { pairs_.clear(); }

  const std::deque<Pair>& pairs() const { return pairs_; }
  int capacity() const { return capacity_; }
  bool empty() const { return pairs_.empty(); }

  // Current iterate and its evaluation.
  Eigen::VectorXd x;
  Eigen::VectorXd grad;
  double cost = 0.0;
  bool evaluated = false;
  int iteration = 0;

 private:
  int capacity_;
  double curvature_eps_;
  std::deque<Pair> pairs_;
};

/// Two-loop recursion. Empty history yields -grad.
Eigen::VectorXd two_loop_direction(const LbfgsState& state, const Eigen::VectorXd& grad);

struct LineSearchResult {
  Eigen::VectorXd x;
  double scale = 0.0;  // 0 when x was kept
  double cost = 0.0;
  int index = -1;      // chosen entry of `scales`, -1 when x was kept
};

/// Evaluates x + s * direction for each s and returns the cheapest candidate;
/// ties go to the smallest scale. With `require_improvement`, returns x itself
/// (scale 0) unless some candidate is strictly cheaper than `cost_at_x`.
LineSearchResult line_search_select(const Eigen::VectorXd& x, double cost_at_x,
                                    const Eigen::VectorXd& direction,
                                    const std::vector<double>& scales, const CostFn& cost_fn,
                                    bool require_improvement = true);

enum class IterateStatus { kStepped, kNoImprovement };

struct IterateResult {
  IterateStatus status = IterateStatus::kStepped;
  double previous_cost = 0.0;
  double scale = 0.0;
};

/// One optimizer iteration on `state` (evaluating the starting point first if
/// needed). Throws NumericalFailure on NaN cost or gradient.
IterateResult lbfgs_iterate(LbfgsState& state, const CostGradFn& fn, const LbfgsParams& params);

enum class StopReason { kGradTolerance, kCostTolerance, kStalled, kMaxIterations };

struct MinimizeResult {
  Eigen::VectorXd x;
  double cost = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  StopReason reason = StopReason::kMaxIterations;
  std::vector<double> cost_history;  // cost before the first and after every iteration
};

MinimizeResult minimize(const Eigen::VectorXd& x0, const CostGradFn& fn, const LbfgsParams& params);

}  // namespace precis
