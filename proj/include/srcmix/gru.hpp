#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "srcmix/matrix.hpp"
#include "srcmix/rng.hpp"

namespace srcmix {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// One gated recurrent cell. Gate equations (the fixed convention used
/// everywhere in this project; h_0 = 0):
///
///   z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)          update gate
///   r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)          reset gate
///   c_t = tanh(Wh x_t + Uh (r_t .* h_{t-1}) + bh)    candidate state
///   h_t = (1 - z_t) .* h_{t-1} + z_t .* c_t
///
/// With all-zero parameters and inputs: z = r = 1/2, c = 0, so h_t stays
/// exactly zero for every t.
struct GruCell {
  Matrix wz, uz;  // H x in, H x H
  Matrix wr, ur;
  Matrix wh, uh;
  Vector bz, br, bh;

  std::size_t hidden() const { return bz.size(); }
  std::size_t input() const { return wz.cols(); }
};

inline GruCell make_gru_cell(std::size_t input, std::size_t hidden) {
  GruCell c;
  c.wz = Matrix(hidden, input);
  c.uz = Matrix(hidden, hidden);
  c.wr = Matrix(hidden, input);
  c.ur = Matrix(hidden, hidden);
  c.wh = Matrix(hidden, input);
  c.uh = Matrix(hidden, hidden);
  c.bz.assign(hidden, 0.0);
  c.br.assign(hidden, 0.0);
  c.bh.assign(hidden, 0.0);
  return c;
}

/// Glorot-uniform init for the weight matrices; biases stay zero.
inline void init_gru_cell(GruCell& c, Rng& rng) {
  auto fill = [&](Matrix& m) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (double& v : m.data()) v = rng.next_range(-bound, bound);
  };
  fill(c.wz);
  fill(c.uz);
  fill(c.wr);
  fill(c.ur);
  fill(c.wh);
  fill(c.uh);
}

/// Per-step activations kept for backward.
struct GruTrace {
  Matrix x;      // N x in (inputs as fed, already direction-ordered)
  Matrix h;      // N x H, h[t] is the state after step t
  Matrix z, r, c;
  Matrix rh;     // r_t .* h_{t-1}
};

/// Runs the cell over x row by row (caller orders rows by direction).
inline GruTrace gru_forward(const GruCell& cell, const Matrix& x) {
  const std::size_t n = x.rows(), H = cell.hidden();
  GruTrace tr;
  tr.x = x;
  tr.h = Matrix(n, H);
  tr.z = Matrix(n, H);
  tr.r = Matrix(n, H);
  tr.c = Matrix(n, H);
  tr.rh = Matrix(n, H);
  Vector hprev(H, 0.0), pre(H);

  for (std::size_t t = 0; t < n; ++t) {
    const double* xt = x.row(t);
    // z
    pre = cell.bz;
    add_matvec(pre.data(), 1.0, cell.wz, xt);
    add_matvec(pre.data(), 1.0, cell.uz, hprev.data());
    for (std::size_t i = 0; i < H; ++i) tr.z(t, i) = sigmoid(pre[i]);
    // r
    pre = cell.br;
    add_matvec(pre.data(), 1.0, cell.wr, xt);
    add_matvec(pre.data(), 1.0, cell.ur, hprev.data());
    for (std::size_t i = 0; i < H; ++i) tr.r(t, i) = sigmoid(pre[i]);
    // candidate
    for (std::size_t i = 0; i < H; ++i) tr.rh(t, i) = tr.r(t, i) * hprev[i];
    pre = cell.bh;
    add_matvec(pre.data(), 1.0, cell.wh, xt);
    add_matvec(pre.data(), 1.0, cell.uh, tr.rh.row(t));
    for (std::size_t i = 0; i < H; ++i) tr.c(t, i) = std::tanh(pre[i]);
    // state
    for (std::size_t i = 0; i < H; ++i) {
      const double h = (1.0 - tr.z(t, i)) * hprev[i] + tr.z(t, i) * tr.c(t, i);
      tr.h(t, i) = h;
      hprev[i] = h;
    }
  }
  return tr;
}

/// Backward through time. dh_out is dLoss/dh per step; accumulates parameter
/// gradients into `grad` (same shapes as the cell) and returns dLoss/dx.
inline Matrix gru_backward(const GruCell& cell, const GruTrace& tr, const Matrix& dh_out,
                           GruCell& grad) {
  const std::size_t n = tr.x.rows(), H = cell.hidden(), in = cell.input();
  Matrix dx(n, in);
  Vector dh(H, 0.0), dz(H), dr(H), dc(H), daz(H), dar(H), dac(H), drh(H), dhprev(H);

  for (std::size_t t = n; t-- > 0;) {
    for (std::size_t i = 0; i < H; ++i) dh[i] += dh_out(t, i);
    const double* hprev = t > 0 ? tr.h.row(t - 1) : nullptr;
    for (std::size_t i = 0; i < H; ++i) {
      const double hp = hprev ? hprev[i] : 0.0;
      dz[i] = dh[i] * (tr.c(t, i) - hp);
      dc[i] = dh[i] * tr.z(t, i);
      dhprev[i] = dh[i] * (1.0 - tr.z(t, i));
      dac[i] = dc[i] * (1.0 - tr.c(t, i) * tr.c(t, i));
      daz[i] = dz[i] * tr.z(t, i) * (1.0 - tr.z(t, i));
    }
    // candidate path
    add_outer(grad.wh, 1.0, dac.data(), tr.x.row(t));
    add_outer(grad.uh, 1.0, dac.data(), tr.rh.row(t));
    for (std::size_t i = 0; i < H; ++i) grad.bh[i] += dac[i];
    drh.assign(H, 0.0);
    add_matvec_transposed(drh.data(), 1.0, cell.uh, dac.data());
    for (std::size_t i = 0; i < H; ++i) {
      const double hp = hprev ? hprev[i] : 0.0;
      dr[i] = drh[i] * hp;
      dhprev[i] += drh[i] * tr.r(t, i);
      dar[i] = dr[i] * tr.r(t, i) * (1.0 - tr.r(t, i));
    }
    // gate paths
    add_outer(grad.wz, 1.0, daz.data(), tr.x.row(t));
    add_outer(grad.wr, 1.0, dar.data(), tr.x.row(t));
    for (std::size_t i = 0; i < H; ++i) {
      grad.bz[i] += daz[i];
      grad.br[i] += dar[i];
    }
    if (hprev) {
      add_outer(grad.uz, 1.0, daz.data(), hprev);
      add_outer(grad.ur, 1.0, dar.data(), hprev);
    }
    // input gradient
    double* dxt = dx.row(t);
    add_matvec_transposed(dxt, 1.0, cell.wz, daz.data());
    add_matvec_transposed(dxt, 1.0, cell.wr, dar.data());
    add_matvec_transposed(dxt, 1.0, cell.wh, dac.data());
    // previous state gradient
    add_matvec_transposed(dhprev.data(), 1.0, cell.uz, daz.data());
    add_matvec_transposed(dhprev.data(), 1.0, cell.ur, dar.data());
    dh = dhprev;
  }
  return dx;
}

/// Bidirectional layer: one forward cell, one cell run over the reversed
/// sequence; per-token outputs are [h_fwd ; h_bwd] of width 2H.
struct BiGruLayer {
  GruCell fwd, bwd;

  std::size_t hidden() const { return fwd.hidden(); }
  std::size_t input() const { return fwd.input(); }
  std::size_t output() const { return 2 * fwd.hidden(); }
};

inline BiGruLayer make_bigru_layer(std::size_t input, std::size_t hidden) {
  return BiGruLayer{make_gru_cell(input, hidden), make_gru_cell(input, hidden)};
}

inline void init_bigru_layer(BiGruLayer& l, Rng& rng) {
  init_gru_cell(l.fwd, rng);
  init_gru_cell(l.bwd, rng);
}

struct BiGruTrace {
  GruTrace fwd, bwd;  // bwd trace is in reversed time order
};

inline Matrix reverse_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(m.rows() - 1 - r, c) = m(r, c);
  return out;
}

inline Matrix bigru_forward(const BiGruLayer& layer, const Matrix& x, BiGruTrace* trace) {
  BiGruTrace local;
  BiGruTrace& tr = trace ? *trace : local;
  tr.fwd = gru_forward(layer.fwd, x);
  tr.bwd = gru_forward(layer.bwd, reverse_rows(x));
  const std::size_t n = x.rows(), H = layer.hidden();
  Matrix out(n, 2 * H);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < H; ++i) {
      out(t, i) = tr.fwd.h(t, i);
      out(t, H + i) = tr.bwd.h(n - 1 - t, i);
    }
  return out;
}

inline Matrix bigru_backward(const BiGruLayer& layer, const BiGruTrace& tr,
                             const Matrix& dout, BiGruLayer& grad) {
  const std::size_t n = dout.rows(), H = layer.hidden();
  Matrix dh_fwd(n, H), dh_bwd(n, H);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < H; ++i) {
      dh_fwd(t, i) = dout(t, i);
      dh_bwd(n - 1 - t, i) = dout(t, H + i);
    }
  const Matrix dx_fwd = gru_backward(layer.fwd, tr.fwd, dh_fwd, grad.fwd);
  const Matrix dx_bwd_rev = gru_backward(layer.bwd, tr.bwd, dh_bwd, grad.bwd);
  Matrix dx = dx_fwd;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < layer.input(); ++j) dx(t, j) += dx_bwd_rev(n - 1 - t, j);
  return dx;
}

}  // namespace srcmix
