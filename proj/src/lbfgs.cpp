// SPDX-License-Identifier: Apache-2.0
#include "precis/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace precis {

void LbfgsParams::validate() const {
  if (scales.empty()) throw std::invalid_argument("at least one step scale is required");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (!(scales[i] > 0.0)) throw std::invalid_argument("step scales must be positive");
    if (i > 0 && !(scales[i] > scales[i - 1])) {
      throw std::invalid_argument("step scales must be strictly increasing");
    }
  }
  if (history < 1) throw std::invalid_argument("history must be >= 1");
}

bool LbfgsState::push(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
  const double sy = s.dot(y);
  if (!(sy > curvature_eps_)) return false;
  if (static_cast<int>(pairs_.size()) == capacity_) pairs_.pop_front();
  pairs_.push_back({s, y, 1.0 / sy});
  return true;
}

Eigen::VectorXd two_loop_direction(const LbfgsState& state, const Eigen::VectorXd& grad) {
  const auto& pairs = state.pairs();
  if (pairs.empty()) return -grad;

  Eigen::VectorXd q = grad;
  std::vector<double> alpha(pairs.size());
  for (int i = static_cast<int>(pairs.size()) - 1; i >= 0; --i) {
    alpha[i] = pairs[i].rho * pairs[i].s.dot(q);
    q -= alpha[i] * pairs[i].y;
  }
  const auto& last = pairs.back();
  const double gamma = last.s.dot(last.y) / last.y.squaredNorm();
  Eigen::VectorXd r = gamma * q;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double beta = pairs[i].rho * pairs[i].y.dot(r);
    r += (alpha[i] - beta) * pairs[i].s;
  }
  return -r;
}

LineSearchResult line_search_select(const Eigen::VectorXd& x, double cost_at_x,
                                    const Eigen::VectorXd& direction,
                                    const std::vector<double>& scales, const CostFn& cost_fn,
                                    bool require_improvement) {
  LineSearchResult best{x, 0.0, cost_at_x, -1};
  if (direction.isZero(0.0)) return best;

  double best_cost = std::numeric_limits<double>::infinity();
  int best_index = -1;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const double c = cost_fn(x + scales[i] * direction);
    if (c < best_cost) {
      best_cost = c;
      best_index = static_cast<int>(i);
    }
  }
  if (best_index < 0) return best;
  if (require_improvement && !(best_cost < cost_at_x)) return best;
  best.index = best_index;
  best.scale = scales[best_index];
  best.x = x + best.scale * direction;
  best.cost = best_cost;
  return best;
}

namespace {

void check_finite(double cost, const Eigen::VectorXd& grad) {
  if (std::isnan(cost) || !grad.allFinite()) {
    throw NumericalFailure("cost or gradient is not finite");
  }
}

}  // namespace

IterateResult lbfgs_iterate(LbfgsState& state, const CostGradFn& fn, const LbfgsParams& params) {
  if (!state.evaluated) {
    state.grad.resize(state.x.size());
    state.cost = fn(state.x, state.grad);
    check_finite(state.cost, state.grad);
    state.evaluated = true;
  }
  IterateResult result;
  result.previous_cost = state.cost;

  Eigen::VectorXd direction = two_loop_direction(state, state.grad);
  if (state.empty() && params.normalize_first_step) {
    const double norm = direction.norm();
    if (norm > 0.0) direction /= norm;
  }

  // Every candidate gets a full cost + gradient evaluation; the winner's
  // gradient feeds the history update without another pass.
  std::vector<Eigen::VectorXd> grads(params.scales.size(), Eigen::VectorXd(state.x.size()));
  std::size_t next = 0;
  const CostFn probe = [&](const Eigen::VectorXd& candidate) {
    Eigen::VectorXd& g = grads[next++];
    const double c = fn(candidate, g);
    if (std::isnan(c)) throw NumericalFailure("cost is NaN");
    return c;
  };
  const LineSearchResult ls = line_search_select(state.x, state.cost, direction, params.scales,
                                                 probe, params.require_improvement);
  ++state.iteration;
  if (ls.index < 0) {
    // No descent along this direction; fall back to steepest descent next time.
    state.reset();
    result.status = IterateStatus::kNoImprovement;
    return result;
  }
  const Eigen::VectorXd& new_grad = grads[ls.index];
  check_finite(ls.cost, new_grad);
  state.push(ls.x - state.x, new_grad - state.grad);
  state.x = ls.x;
  state.grad = new_grad;
  state.cost = ls.cost;
  result.scale = ls.scale;
  return result;
}

MinimizeResult minimize(const Eigen::VectorXd& x0, const CostGradFn& fn, const LbfgsParams& params) {
  params.validate();
  LbfgsState state(params.history, params.curvature_eps);
  state.x = x0;
  state.grad.resize(x0.size());
  state.cost = fn(state.x, state.grad);
  check_finite(state.cost, state.grad);
  state.evaluated = true;

  MinimizeResult out;
  out.cost_history.push_back(state.cost);
  out.reason = StopReason::kMaxIterations;
  if (state.grad.norm() < params.grad_tolerance) {
    out.reason = StopReason::kGradTolerance;
  } else {
    for (int it = 0; it < params.max_iterations; ++it) {
      const bool had_history = !state.empty();
      const IterateResult r = lbfgs_iterate(state, fn, params);
      out.iterations = it + 1;
      out.cost_history.push_back(state.cost);
      if (r.status == IterateStatus::kNoImprovement) {
        if (!had_history) {
          out.reason = StopReason::kStalled;
          break;
        }
        continue;
      }
      if (state.grad.norm() < params.grad_tolerance) {
        out.reason = StopReason::kGradTolerance;
        break;
      }
      if (r.previous_cost - state.cost < params.cost_tolerance) {
        out.reason = StopReason::kCostTolerance;
        break;
      }
    }
  }
  out.x = state.x;
  out.cost = state.cost;
  out.grad_norm = state.grad.norm();
  return out;
}

}  // namespace precis
