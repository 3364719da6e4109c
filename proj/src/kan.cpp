#include "pointkan/kan.hpp"

#include <cmath>
#include <random>

namespace pointkan {

double silu(double x) {
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return x * s;
}

double silu_derivative(double x) {
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return s * (1.0 + x * (1.0 - s));
}

SplineGrid SplineGrid::uniform(double lower, double upper, std::size_t grid_size,
                               std::size_t order) {
  check_arg(grid_size >= 1, "SplineGrid: grid_size must be >= 1");
  check_arg(upper > lower, "SplineGrid: upper must exceed lower");
  SplineGrid g;
  g.lower = lower;
  g.upper = upper;
  g.grid_size = grid_size;
  g.order = order;
  const double h = (upper - lower) / static_cast<double>(grid_size);
  const std::size_t count = grid_size + 2 * order + 1;
  g.knots.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto offset = static_cast<double>(i) - static_cast<double>(order);
    g.knots[i] = lower + offset * h;
  }
  return g;
}

void bspline_basis_eval(const SplineGrid& grid, double x, double* work, double* values,
                        double* deriv) {
  const auto& t = grid.knots;
  const std::size_t intervals = t.size() - 1;
  const std::size_t k = grid.order;
  const std::size_t nb = grid.basis_count();

  for (std::size_t i = 0; i < intervals; ++i)
    work[i] = (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;

  for (std::size_t level = 1; level <= k; ++level) {
    if (deriv && level == k) {
      // work currently holds order k-1 values; the derivative of the order-k
      // basis is a weighted difference of them.
      for (std::size_t i = 0; i < nb; ++i) {
        const double left = work[i] / (t[i + k] - t[i]);
        const double right = work[i + 1] / (t[i + k + 1] - t[i + 1]);
        deriv[i] = static_cast<double>(k) * (left - right);
      }
    }
    for (std::size_t i = 0; i + level < intervals; ++i) {
      const double left = (x - t[i]) / (t[i + level] - t[i]) * work[i];
      const double right = (t[i + level + 1] - x) / (t[i + level + 1] - t[i + 1]) * work[i + 1];
      work[i] = left + right;
    }
  }
  for (std::size_t i = 0; i < nb; ++i) values[i] = work[i];
  if (deriv && k == 0)
    for (std::size_t i = 0; i < nb; ++i) deriv[i] = 0.0;
}

std::vector<double> bspline_basis(const SplineGrid& grid, double x) {
  check_arg(std::isfinite(x), "bspline_basis: non-finite input");
  std::vector<double> work(grid.knots.size() - 1);
  std::vector<double> out(grid.basis_count());
  bspline_basis_eval(grid, x, work.data(), out.data(), nullptr);
  return out;
}

KanLayer::KanLayer(std::size_t in, std::size_t out, SplineGrid g, std::uint64_t seed)
    : d_in(in), d_out(out), grid(std::move(g)) {
  check_arg(in >= 1 && out >= 1, "KanLayer: dimensions must be positive");
  const std::size_t nb = grid.basis_count();
  spline_coeffs.init(in * out * nb);
  scale_base.init(in * out);
  scale_spline.init(in * out, 1.0);
  bias.init(out, 0.0);
  // Small random spline start; the silu path gets fan-in-scaled random
  // signs so stacked layers keep a neutral feature scale (a unit base scale
  // sums d_in near-linear terms coherently and compounds across stages).
  std::mt19937_64 rng(seed);
  const double s = 0.1 / static_cast<double>(nb);
  std::uniform_real_distribution<double> u(-s, s);
  for (double& c : spline_coeffs.value) c = u(rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> ub(-bound, bound);
  for (double& v : scale_base.value) v = ub(rng);
}

Matrix KanLayer::forward(const Matrix& x, KanCache& cache) const {
  check_arg(x.cols == d_in, "KanLayer::forward: expected " + std::to_string(d_in) +
                                " inputs, got " + std::to_string(x.cols));
  const std::size_t rows = x.rows;
  const std::size_t nb = grid.basis_count();
  cache.x = x;
  cache.basis = Matrix(rows, d_in * nb);
  cache.basis_deriv = Matrix(rows, d_in * nb);
  cache.silu_val = Matrix(rows, d_in);
  cache.silu_deriv = Matrix(rows, d_in);

  std::vector<double> work(grid.knots.size() - 1);
  Matrix y(rows, d_out);
  for (std::size_t r = 0; r < rows; ++r) {
    double* brow = cache.basis.data.data() + r * d_in * nb;
    double* drow = cache.basis_deriv.data.data() + r * d_in * nb;
    for (std::size_t p = 0; p < d_in; ++p) {
      const double xv = x(r, p);
      bspline_basis_eval(grid, xv, work.data(), brow + p * nb, drow + p * nb);
      cache.silu_val(r, p) = silu(xv);
      cache.silu_deriv(r, p) = silu_derivative(xv);
    }
    double* yr = y.data.data() + r * d_out;
    for (std::size_t q = 0; q < d_out; ++q) yr[q] = bias.value[q];
    for (std::size_t p = 0; p < d_in; ++p) {
      const double sv = cache.silu_val(r, p);
      const double* bp = brow + p * nb;
      const double* cpq = spline_coeffs.value.data() + p * d_out * nb;
      const double* sb = scale_base.value.data() + p * d_out;
      const double* ss = scale_spline.value.data() + p * d_out;
      for (std::size_t q = 0; q < d_out; ++q) {
        double spline = 0.0;
        const double* cq = cpq + q * nb;
        for (std::size_t i = 0; i < nb; ++i) spline += cq[i] * bp[i];
        yr[q] += sb[q] * sv + ss[q] * spline;
      }
    }
  }
  cache.filled = true;
  return y;
}

Matrix KanLayer::backward(const Matrix& dy, const KanCache& cache) {
  check_usage(cache.filled, "KanLayer::backward: no forward cache");
  check_arg(dy.rows == cache.x.rows && dy.cols == d_out, "KanLayer::backward: shape mismatch");
  const std::size_t rows = dy.rows;
  const std::size_t nb = grid.basis_count();
  Matrix dx(rows, d_in);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* ur = dy.data.data() + r * d_out;
    for (std::size_t q = 0; q < d_out; ++q) bias.grad[q] += ur[q];
    const double* brow = cache.basis.data.data() + r * d_in * nb;
    const double* drow = cache.basis_deriv.data.data() + r * d_in * nb;
    for (std::size_t p = 0; p < d_in; ++p) {
      const double sv = cache.silu_val(r, p);
      const double sd = cache.silu_deriv(r, p);
      const double* bp = brow + p * nb;
      const double* dp = drow + p * nb;
      const double* cpq = spline_coeffs.value.data() + p * d_out * nb;
      double* gpq = spline_coeffs.grad.data() + p * d_out * nb;
      const double* sb = scale_base.value.data() + p * d_out;
      const double* ss = scale_spline.value.data() + p * d_out;
      double* gsb = scale_base.grad.data() + p * d_out;
      double* gss = scale_spline.grad.data() + p * d_out;
      double acc = 0.0;
      for (std::size_t q = 0; q < d_out; ++q) {
        const double u = ur[q];
        if (u == 0.0) continue;
        const double* cq = cpq + q * nb;
        double* gq = gpq + q * nb;
        double spline = 0.0, dspline = 0.0;
        const double uss = u * ss[q];
        for (std::size_t i = 0; i < nb; ++i) {
          spline += cq[i] * bp[i];
          dspline += cq[i] * dp[i];
          gq[i] += uss * bp[i];
        }
        gsb[q] += u * sv;
        gss[q] += u * spline;
        acc += u * (sb[q] * sd + ss[q] * dspline);
      }
      dx(r, p) = acc;
    }
  }
  return dx;
}

std::vector<double> KanLayer::forward(std::span<const double> x, KanCache& cache) const {
  check_arg(x.size() == d_in, "KanLayer::forward: input size mismatch");
  Matrix xm(1, d_in);
  std::copy(x.begin(), x.end(), xm.data.begin());
  Matrix y = forward(xm, cache);
  return y.data;
}

std::vector<double> KanLayer::backward(std::span<const double> upstream, const KanCache& cache) {
  check_arg(upstream.size() == d_out, "KanLayer::backward: upstream size mismatch");
  Matrix um(1, d_out);
  std::copy(upstream.begin(), upstream.end(), um.data.begin());
  Matrix dx = backward(um, cache);
  return dx.data;
}

void KanLayer::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".spline_coeffs", &spline_coeffs, true});
  out.push_back({prefix + ".scale_base", &scale_base, true});
  out.push_back({prefix + ".scale_spline", &scale_spline, true});
  out.push_back({prefix + ".bias", &bias, true});
}

double horner_eval(std::span<const double> coeffs, double x) {
  check_arg(!coeffs.empty(), "horner_eval: empty coefficient sequence");
  double acc = coeffs.back();
  for (std::size_t i = coeffs.size() - 1; i-- > 0;) acc = acc * x + coeffs[i];
  return acc;
}

RationalGroupLayer::RationalGroupLayer(std::size_t in, std::size_t out, std::size_t g,
                                       std::size_t m, std::size_t n, std::uint64_t seed)
    : d_in(in), d_out(out), groups(g), degree_num(m), degree_den(n) {
  check_arg(in >= 1 && out >= 1, "RationalGroupLayer: dimensions must be positive");
  check_arg(g >= 1 && in % g == 0, "RationalGroupLayer: groups must divide d_in");
  numerator.init(g * (m + 1));
  denominator.init(n);
  weight.init(in * out);
  bias.init(out);
  // Identity start: F(x) = x, Q = 1.
  if (m >= 1)
    for (std::size_t r = 0; r < g; ++r) numerator.value[r * (m + 1) + 1] = 1.0;
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& w : weight.value) w = u(rng);
}

Matrix RationalGroupLayer::forward(const Matrix& x, RationalCache& cache) const {
  check_arg(x.cols == d_in, "RationalGroupLayer::forward: expected " + std::to_string(d_in) +
                                " inputs, got " + std::to_string(x.cols));
  const std::size_t rows = x.rows;
  const std::size_t m1 = degree_num + 1;
  cache.x = x;
  cache.activated = Matrix(rows, d_in);
  cache.poly_p = Matrix(rows, d_in);
  cache.poly_g = Matrix(rows, d_in);
  cache.poly_q = Matrix(rows, d_in);

  const std::size_t chans_per_group = d_in / groups;
  Matrix y(rows, d_out);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t p = 0; p < d_in; ++p) {
      const double xv = x(r, p);
      const std::size_t grp = p / chans_per_group;
      const double pv = horner_eval({numerator.value.data() + grp * m1, m1}, xv);
      double gv = 0.0;
      if (degree_den > 0)
        gv = xv * horner_eval({denominator.value.data(), degree_den}, xv);
      const double qv = std::sqrt(1.0 + gv * gv);
      cache.poly_p(r, p) = pv;
      cache.poly_g(r, p) = gv;
      cache.poly_q(r, p) = qv;
      cache.activated(r, p) = pv / qv;
    }
    double* yr = y.data.data() + r * d_out;
    for (std::size_t q = 0; q < d_out; ++q) yr[q] = bias.value[q];
    for (std::size_t p = 0; p < d_in; ++p) {
      const double av = cache.activated(r, p);
      const double* wp = weight.value.data() + p * d_out;
      for (std::size_t q = 0; q < d_out; ++q) yr[q] += av * wp[q];
    }
  }
  cache.filled = true;
  return y;
}

Matrix RationalGroupLayer::backward(const Matrix& dy, const RationalCache& cache) {
  check_usage(cache.filled, "RationalGroupLayer::backward: no forward cache");
  check_arg(dy.rows == cache.x.rows && dy.cols == d_out,
            "RationalGroupLayer::backward: shape mismatch");
  const std::size_t rows = dy.rows;
  const std::size_t m1 = degree_num + 1;
  const std::size_t chans_per_group = d_in / groups;
  Matrix dx(rows, d_in);

  // dP/dx and the inner factor of dQ/dx, as Horner-ready coefficients.
  std::vector<double> dnum(degree_num == 0 ? 1 : degree_num);
  std::vector<double> dden(degree_den == 0 ? 1 : degree_den);

  for (std::size_t r = 0; r < rows; ++r) {
    const double* ur = dy.data.data() + r * d_out;
    for (std::size_t q = 0; q < d_out; ++q) bias.grad[q] += ur[q];
    for (std::size_t p = 0; p < d_in; ++p) {
      const double av = cache.activated(r, p);
      const double* wp = weight.value.data() + p * d_out;
      double* gw = weight.grad.data() + p * d_out;
      double dact = 0.0;
      for (std::size_t q = 0; q < d_out; ++q) {
        dact += ur[q] * wp[q];
        gw[q] += av * ur[q];
      }
      if (dact == 0.0) {
        dx(r, p) = 0.0;
        continue;
      }

      const double xv = cache.x(r, p);
      const double pv = cache.poly_p(r, p);
      const double gv = cache.poly_g(r, p);
      const double qv = cache.poly_q(r, p);
      const std::size_t grp = p / chans_per_group;

      // dF/da_i = x^i / Q
      double* gnum = numerator.grad.data() + grp * m1;
      double power = 1.0;
      for (std::size_t i = 0; i < m1; ++i) {
        gnum[i] += dact * power / qv;
        power *= xv;
      }
      // dF/db_j = -x^j * G / Q^3 * P
      if (degree_den > 0) {
        const double q3 = qv * qv * qv;
        double powj = xv;
        for (std::size_t j = 0; j < degree_den; ++j) {
          denominator.grad[j] += dact * (-powj * gv / q3 * pv);
          powj *= xv;
        }
      }
      // dF/dx = P'/Q - Q' P / Q^2,  Q' = G/Q * (b_1 + 2 b_2 x + ...)
      double dp = 0.0;
      if (degree_num >= 1) {
        const double* num = numerator.value.data() + grp * m1;
        for (std::size_t i = 1; i <= degree_num; ++i)
          dnum[i - 1] = static_cast<double>(i) * num[i];
        dp = horner_eval({dnum.data(), degree_num}, xv);
      }
      double dq = 0.0;
      if (degree_den > 0) {
        for (std::size_t j = 1; j <= degree_den; ++j)
          dden[j - 1] = static_cast<double>(j) * denominator.value[j - 1];
        dq = gv / qv * horner_eval({dden.data(), degree_den}, xv);
      }
      dx(r, p) = dact * (dp / qv - dq * pv / (qv * qv));
    }
  }
  return dx;
}

std::vector<double> RationalGroupLayer::forward(std::span<const double> x,
                                                RationalCache& cache) const {
  check_arg(x.size() == d_in, "RationalGroupLayer::forward: input size mismatch");
  Matrix xm(1, d_in);
  std::copy(x.begin(), x.end(), xm.data.begin());
  return forward(xm, cache).data;
}

std::vector<double> RationalGroupLayer::backward(std::span<const double> upstream,
                                                 const RationalCache& cache) {
  check_arg(upstream.size() == d_out, "RationalGroupLayer::backward: upstream size mismatch");
  Matrix um(1, d_out);
  std::copy(upstream.begin(), upstream.end(), um.data.begin());
  return backward(um, cache).data;
}

void RationalGroupLayer::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + ".numerator", &numerator, true});
  out.push_back({prefix + ".denominator", &denominator, true});
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, true});
}

ParamCountReport param_count(LayerKind kind, const CountSpec& spec) {
  check_arg(spec.d_in >= 1 && spec.d_out >= 1, "param_count: dimensions must be positive");
  const auto din = static_cast<long long>(spec.d_in);
  const auto dout = static_cast<long long>(spec.d_out);
  ParamCountReport report;
  switch (kind) {
    case LayerKind::mlp: {
      report.formula_count = din * dout + dout;
      Linear layer(spec.d_in, spec.d_out, 0);
      report.stored_count = static_cast<long long>(layer.stored_param_count());
      break;
    }
    case LayerKind::vanilla_kan: {
      check_arg(spec.grid >= 1, "param_count: grid must be positive");
      report.formula_count =
          din * dout * static_cast<long long>(spec.grid + spec.order + 2) + dout;
      KanLayer layer(spec.d_in, spec.d_out,
                     SplineGrid::uniform(-1.0, 1.0, spec.grid, spec.order), 0);
      report.stored_count = static_cast<long long>(layer.stored_param_count());
      break;
    }
    case LayerKind::efficient_kan: {
      check_arg(spec.groups >= 1 && spec.d_in % spec.groups == 0,
                "param_count: groups must divide d_in");
      report.formula_count =
          din * dout + dout + static_cast<long long>(spec.n + spec.m * spec.groups);
      RationalGroupLayer layer(spec.d_in, spec.d_out, spec.groups, spec.m, spec.n, 0);
      report.stored_count = static_cast<long long>(layer.stored_param_count());
      break;
    }
  }
  return report;
}

}  // namespace pointkan
