#pragma once

#include <string>
#include <vector>

#include "pointkan/model.hpp"

namespace pointkan {

// Analytic FLOP counts under one fixed convention (a multiply-add is 2
// FLOPs; biases and comparisons are not counted unless stated):
//   linear layer            2 * d_in * d_out
//   B-spline KAN edge       2*(grid+k) + 4*k*(grid+k)   (spline mix + basis)
//   rational channel        2*(m+n) + 6
//   depthwise conv          2 * w per output element
//   s-pool                  5 per element
//   max pool                1 per element
//   group norm              8 per input element
//   resp block              4*C^2 + 6*C per row
long long linear_flops(std::size_t d_in, std::size_t d_out);
long long kan_layer_flops(std::size_t d_in, std::size_t d_out, std::size_t grid,
                          std::size_t order);
long long rational_layer_flops(std::size_t d_in, std::size_t d_out, std::size_t m,
                               std::size_t n);
long long dwconv_flops(std::size_t groups, std::size_t k, std::size_t channels,
                       std::size_t width);

/// Per-row cost of the pointwise stack a stage uses, given its config.
long long stack_flops_per_point(const ModelConfig& cfg, const StageConfig& sc);

struct FlopsLine {
  std::string name;
  long long flops = 0;
};

struct FlopsReport {
  std::vector<FlopsLine> modules;
  long long total = 0;
};

/// Stated-convention FLOP estimate of one forward pass, per module.
FlopsReport estimate_flops(const ModelConfig& cfg);

/// The convention text printed alongside any FLOP table.
std::string flops_convention();

}  // namespace pointkan
