#include "pointkan/flops.hpp"

namespace pointkan {

namespace {
long long ll(std::size_t v) { return static_cast<long long>(v); }
}  // namespace

long long linear_flops(std::size_t d_in, std::size_t d_out) { return 2 * ll(d_in) * ll(d_out); }

long long kan_layer_flops(std::size_t d_in, std::size_t d_out, std::size_t grid,
                          std::size_t order) {
  const long long per_edge = 2 * ll(grid + order) + 4 * ll(order) * ll(grid + order);
  return ll(d_in) * ll(d_out) * per_edge;
}

long long rational_layer_flops(std::size_t d_in, std::size_t d_out, std::size_t m,
                               std::size_t n) {
  const long long per_channel = 2 * ll(m + n) + 6;
  return ll(d_in) * per_channel + linear_flops(d_in, d_out);
}

long long dwconv_flops(std::size_t groups, std::size_t k, std::size_t channels,
                       std::size_t width) {
  return 2 * ll(width) * ll(groups) * ll(k) * ll(channels);
}

long long stack_flops_per_point(const ModelConfig& cfg, const StageConfig& sc) {
  const std::size_t c = 2 * sc.width;
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  if (sc.kan_depth == 1) {
    dims.emplace_back(c, c);
  } else {
    dims.emplace_back(c, sc.kan_hidden);
    for (std::size_t i = 0; i + 2 < sc.kan_depth; ++i) dims.emplace_back(sc.kan_hidden, sc.kan_hidden);
    dims.emplace_back(sc.kan_hidden, c);
  }
  long long total = 0;
  for (auto [din, dout] : dims) {
    switch (sc.backend) {
      case Backend::bspline:
        total += kan_layer_flops(din, dout, cfg.grid_size, cfg.spline_order);
        break;
      case Backend::rational:
        total += rational_layer_flops(din, dout, cfg.rational_degree_num,
                                      cfg.rational_degree_den);
        break;
      case Backend::mlp:
        total += linear_flops(din, dout);
        break;
    }
  }
  return total;
}

FlopsReport estimate_flops(const ModelConfig& cfg) {
  cfg.validate();
  FlopsReport report;
  auto add = [&](const std::string& name, long long flops) {
    report.modules.push_back({name, flops});
    report.total += flops;
  };

  add("embed", ll(cfg.points) * linear_flops(3, cfg.embed_dim));

  const auto stages = cfg.stage_configs();
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageConfig& sc = stages[s];
    const std::string tag = "stage" + std::to_string(s + 1);
    const std::size_t g = sc.centers, k = sc.neighbors, c = 2 * sc.width;
    add(tag + ".group_norm", 8 * ll(g) * ll(k) * ll(sc.width));
    if (cfg.lfp) {
      add(tag + ".lfp_stack", ll(g) * ll(k) * stack_flops_per_point(cfg, sc));
      if (cfg.dwconv) add(tag + ".lfp_dwconv", dwconv_flops(g, k, c, sc.dwconv_kernel));
    }
    add(tag + ".max_pool", ll(g) * ll(k) * ll(c));
    if (cfg.s_pool) add(tag + ".s_pool", 5 * ll(g) * ll(k) * ll(c));
    if (cfg.gfp)
      add(tag + ".gfp_resp",
          ll(cfg.resp_blocks) * ll(g) * (4 * ll(c) * ll(c) + 6 * ll(c)));
  }

  const std::size_t final_c = 2 * stages.back().width;
  const std::size_t hidden = std::max<std::size_t>(8, final_c / 2);
  add("head", linear_flops(2 * final_c, hidden) + linear_flops(hidden, cfg.classes));
  return report;
}

std::string flops_convention() {
  return "FLOP convention: multiply-add = 2 FLOPs; linear = 2*d_in*d_out; "
         "B-spline KAN edge = 2*(grid+k) + 4*k*(grid+k); rational channel = 2*(m+n)+6 "
         "plus a 2*d_in*d_out mixing; dwconv = 2*width per element; s-pool = 5 per "
         "element; max pool = 1 per element; group norm = 8 per input element; resp "
         "block = 4*C^2 + 6*C per row. Biases and index bookkeeping are not counted.";
}

}  // namespace pointkan
