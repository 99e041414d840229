#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "layoutlab/rng.hpp"
#include "layoutlab/tape.hpp"

namespace layoutlab {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_coord;
};

// Central-difference gradient verification. loss_fn must be a pure forward
// evaluation of the current parameter values; grad_fn must zero gradients,
// run forward+backward once, and return the loss. Coordinates are sampled
// from every parameter so each group is covered. Run in 64-bit mode;
// finite differences are unreliable in 32-bit.
template <typename T>
GradCheckReport grad_check(const std::function<T()>& loss_fn,
                           const std::function<T()>& grad_fn,
                           std::span<Parameter<T>* const> params,
                           RngStream& rng, std::size_t min_coords = 200,
                           T eps = static_cast<T>(1e-5)) {
  if (params.empty()) throw std::runtime_error("grad_check without parameters");

  grad_fn();
  for (const Parameter<T>* p : params) {
    if (!p->grad.all_finite()) {
      throw std::runtime_error("non-finite analytic gradient in " + p->name);
    }
  }

  std::size_t total = 0;
  for (const Parameter<T>* p : params) total += p->value.size();
  min_coords = std::min(min_coords, total);

  // Every parameter gets at least one coordinate; the rest are spread in
  // proportion to size, then topped up to min_coords.
  std::vector<std::size_t> quota(params.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    quota[i] = std::max<std::size_t>(
        1, min_coords * params[i]->value.size() / total);
    quota[i] = std::min(quota[i], params[i]->value.size());
    assigned += quota[i];
  }
  for (std::size_t i = 0; assigned < min_coords; i = (i + 1) % params.size()) {
    if (quota[i] < params[i]->value.size()) {
      ++quota[i];
      ++assigned;
    }
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    for (std::size_t k = 0; k < quota[i]; ++k) {
      const std::size_t coord = rng.next_below(p.value.size());
      const T saved = p.value[coord];
      const T analytic = p.grad[coord];

      p.value[coord] = saved + eps;
      const T plus = loss_fn();
      p.value[coord] = saved - eps;
      const T minus = loss_fn();
      p.value[coord] = saved;

      const double numeric =
          (static_cast<double>(plus) - static_cast<double>(minus)) /
          (2.0 * static_cast<double>(eps));
      if (!std::isfinite(numeric)) {
        throw std::runtime_error("non-finite finite-difference value in " +
                                 p.name);
      }
      const double denom = std::max(
          {std::abs(static_cast<double>(analytic)), std::abs(numeric), 1e-8});
      const double rel = std::abs(static_cast<double>(analytic) - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_coord = p.name + "[" + std::to_string(coord) + "]";
      }
    }
  }
  return report;
}

}  // namespace layoutlab
