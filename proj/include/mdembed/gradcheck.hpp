#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mdembed/error.hpp"
#include "mdembed/tensor.hpp"

namespace mdembed {

struct FdBlockReport {
  std::string name;
  double max_rel_err = 0.0;
  bool skipped = false;  // block is frozen (requires_grad false)
};

struct FdReport {
  std::vector<FdBlockReport> blocks;
  double tolerance = 0.0;
  double max_rel_err = 0.0;  // over non-skipped blocks
  bool passed = false;
};

// Compares the tape gradient of a deterministic scalar loss against central
// finite differences, block by block. The loss closure must rebuild its graph
// from the supplied parameter tensors on every call.
//
// Relative error uses an absolute floor so that near-zero gradients do not
// blow the ratio up: err = |a - n| / max(|a|, |n|, floor).
inline constexpr double kFdDefaultStep = 1e-5;
inline constexpr double kFdZeroFloor = 1e-2;

inline FdReport finite_difference_check(
    const std::function<Tensor<double>(Tape<double>&)>& loss_fn,
    std::vector<std::pair<std::string, Tensor<double>>> params,
    double tolerance, double step = kFdDefaultStep) {
  auto eval = [&]() {
    Tape<double> tape;
    return loss_fn(tape).item();
  };

  double l1 = eval();
  double l2 = eval();
  if (l1 != l2)
    throw value_error(
        "finite_difference_check: loss is not deterministic (" +
        std::to_string(l1) + " vs " + std::to_string(l2) + ")");

  // Analytic pass.
  for (auto& [name, p] : params)
    if (p.has_grad()) p.zero_grad();
  Tape<double> tape;
  Tensor<double> loss = loss_fn(tape);
  backward(tape, loss);

  FdReport report;
  report.tolerance = tolerance;
  for (auto& [name, p] : params) {
    FdBlockReport block;
    block.name = name;
    if (!p.requires_grad()) {
      block.skipped = true;
      report.blocks.push_back(block);
      continue;
    }
    std::vector<double> analytic = p.grad();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      double saved = p.value()[i];
      p.value()[i] = saved + step;
      double lp = eval();
      p.value()[i] = saved - step;
      double lm = eval();
      p.value()[i] = saved;
      double numeric = (lp - lm) / (2.0 * step);
      double denom = std::max({std::abs(analytic[i]), std::abs(numeric),
                               kFdZeroFloor});
      block.max_rel_err =
          std::max(block.max_rel_err, std::abs(analytic[i] - numeric) / denom);
    }
    report.max_rel_err = std::max(report.max_rel_err, block.max_rel_err);
    report.blocks.push_back(block);
  }
  report.passed = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace mdembed
