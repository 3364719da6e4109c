#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pointkan/common.hpp"
#include "pointkan/nn.hpp"

namespace pointkan {

double silu(double x);
double silu_derivative(double x);

/// Uniform spline grid over [lower, upper] with `grid_size` interior
/// intervals, extended by `order` knots beyond each bound. A grid of size G
/// and order k carries G + k basis functions.
struct SplineGrid {
  double lower = -1.0;
  double upper = 1.0;
  std::size_t grid_size = 5;
  std::size_t order = 3;
  std::vector<double> knots;  // grid_size + 2*order + 1, strictly increasing

  static SplineGrid uniform(double lower, double upper, std::size_t grid_size,
                            std::size_t order);
  std::size_t basis_count() const { return grid_size + order; }
};

/// All B-spline basis values at x via the Cox-de Boor recursion. Inputs
/// outside [lower, upper] are evaluated on the extended knot vector without
/// clamping; within the domain the values are nonnegative and sum to 1.
std::vector<double> bspline_basis(const SplineGrid& grid, double x);

/// Same, plus first derivatives via the B-spline derivative recursion.
/// `work` must have room for knots.size() - 1 doubles; `deriv` may be null.
void bspline_basis_eval(const SplineGrid& grid, double x, double* work, double* values,
                        double* deriv);

struct KanCache {
  Matrix x;
  Matrix basis;        // rows x (d_in * basis_count)
  Matrix basis_deriv;  // rows x (d_in * basis_count)
  Matrix silu_val;     // rows x d_in
  Matrix silu_deriv;   // rows x d_in
  bool filled = false;
};

/// B-spline KAN layer: every input/output edge carries
///   phi(x) = scale_base * silu(x) + scale_spline * sum_i c_i B_i(x)
/// and outputs are summed over input channels plus a bias.
struct KanLayer {
  std::size_t d_in = 0, d_out = 0;
  SplineGrid grid;
  Param spline_coeffs;  // d_in x d_out x basis_count
  Param scale_base;     // d_in x d_out
  Param scale_spline;   // d_in x d_out
  Param bias;           // d_out

  KanLayer() = default;
  KanLayer(std::size_t in, std::size_t out, SplineGrid g, std::uint64_t seed);

  Matrix forward(const Matrix& x, KanCache& cache) const;
  Matrix backward(const Matrix& dy, const KanCache& cache);

  std::vector<double> forward(std::span<const double> x, KanCache& cache) const;
  std::vector<double> backward(std::span<const double> upstream, const KanCache& cache);

  void collect(ParamList& out, const std::string& prefix);
  void zero_grads() {
    spline_coeffs.zero_grad();
    scale_base.zero_grad();
    scale_spline.zero_grad();
    bias.zero_grad();
  }
  std::size_t stored_param_count() const {
    return spline_coeffs.size() + scale_base.size() + scale_spline.size() + bias.size();
  }

  double& coeff(std::size_t p, std::size_t q, std::size_t i) {
    return spline_coeffs.value[(p * d_out + q) * grid.basis_count() + i];
  }
};

/// Horner evaluation of a_0 + a_1 x + ... + a_m x^m using m multiplies and
/// m additions. Throws on an empty coefficient sequence.
double horner_eval(std::span<const double> coeffs, double x);

struct RationalCache {
  Matrix x;
  Matrix activated;  // rows x d_in, F(x) per channel
  Matrix poly_p;     // rows x d_in, P(x)
  Matrix poly_g;     // rows x d_in, G(x) = b_1 x + ... + b_n x^n
  Matrix poly_q;     // rows x d_in, Q(x) = sqrt(1 + G^2)
  bool filled = false;
};

/// Grouped-rational layer: channels in group r share
///   F_r(x) = P_r(x) / Q(x),  Q(x) = sqrt(1 + (b_1 x + ... + b_n x^n)^2)
/// with per-group numerators and a shared denominator; the activated vector
/// is mixed by a linear map (the per-edge scaling realized as one matrix).
struct RationalGroupLayer {
  std::size_t d_in = 0, d_out = 0;
  std::size_t groups = 1;
  std::size_t degree_num = 5;  // m
  std::size_t degree_den = 4;  // n
  Param numerator;    // groups x (m + 1)
  Param denominator;  // n, shared across groups
  Param weight;       // d_in x d_out
  Param bias;         // d_out

  RationalGroupLayer() = default;
  RationalGroupLayer(std::size_t in, std::size_t out, std::size_t groups, std::size_t m,
                     std::size_t n, std::uint64_t seed);

  Matrix forward(const Matrix& x, RationalCache& cache) const;
  Matrix backward(const Matrix& dy, const RationalCache& cache);

  std::vector<double> forward(std::span<const double> x, RationalCache& cache) const;
  std::vector<double> backward(std::span<const double> upstream, const RationalCache& cache);

  void collect(ParamList& out, const std::string& prefix);
  void zero_grads() {
    numerator.zero_grad();
    denominator.zero_grad();
    weight.zero_grad();
    bias.zero_grad();
  }
  std::size_t stored_param_count() const {
    return numerator.size() + denominator.size() + weight.size() + bias.size();
  }
  std::size_t group_of(std::size_t channel) const { return channel / (d_in / groups); }
};

enum class LayerKind { mlp, vanilla_kan, efficient_kan };

struct ParamCountReport {
  long long formula_count = 0;  // closed form
  long long stored_count = 0;   // trainable scalars actually held by the layer
};

struct CountSpec {
  std::size_t d_in = 0, d_out = 0;
  std::size_t grid = 5, order = 3;       // vanilla_kan
  std::size_t m = 5, n = 4, groups = 4;  // efficient_kan
};

/// Closed-form parameter counts for a single layer of each family, paired
/// with the count the corresponding layer type actually stores. The
/// efficient layer keeps one a_0 per group on top of the closed form.
ParamCountReport param_count(LayerKind kind, const CountSpec& spec);

}  // namespace pointkan
