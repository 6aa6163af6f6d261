#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "srcmix/errors.hpp"
#include "srcmix/matrix.hpp"
#include "srcmix/rng.hpp"
#include "srcmix/source_stack.hpp"

namespace srcmix {

/// The trainable mixing head: per-source projections W_k (d_k x D, no bias),
/// K mixture logits and one scale gamma. Per token n the mixed embedding is
///
///   g_n^k = h_n^k W_k,   s = softmax(logits),   O_n = gamma * sum_k s_k g_n^k
///
/// so the output width D is fixed no matter how many sources feed it, and
/// the mixture itself adds only K+1 trainable scalars.
struct MixParams {
  std::vector<Matrix> projections;  // W_k: d_k x D
  Vector logits;                    // a_k
  double gamma = 1.0;
  std::size_t proj_dim = 0;         // D

  std::size_t source_count() const { return projections.size(); }
};

namespace detail {

/// Sum of a small buffer in ascending value order. The addend order is then
/// a function of the multiset of values only, which makes the mixture
/// bit-identical under joint permutation of sources.
inline double canonical_sum(double* vals, std::size_t n) {
  std::sort(vals, vals + n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += vals[i];
  return acc;
}

}  // namespace detail

/// s_k = exp(a_k - max a) / sum_j exp(a_j - max a). Max-shifted for
/// stability; the denominator is accumulated in ascending order.
inline Vector softmax_weights(const Vector& logits) {
  if (logits.empty()) throw ValidationError("softmax_weights: need K >= 1 logits");
  double mx = logits[0];
  for (double a : logits) mx = std::max(mx, a);
  Vector e(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) e[k] = std::exp(logits[k] - mx);
  Vector sorted = e;
  const double denom = detail::canonical_sum(sorted.data(), sorted.size());
  Vector s(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) s[k] = e[k] / denom;
  return s;
}

/// The paper's own parameter count: K logits plus gamma. Projection weights
/// are reported separately (see projection_param_count).
inline std::size_t mixture_param_count(std::size_t k) {
  if (k < 1) throw ValidationError("mixture_param_count: K must be >= 1");
  return k + 1;
}

inline std::size_t projection_param_count(const std::vector<std::size_t>& source_dims,
                                          std::size_t proj_dim) {
  std::size_t total = 0;
  for (std::size_t d : source_dims) total += d * proj_dim;
  return total;
}

/// Fresh parameters: equal mixture weights (zero logits), gamma = 1, and
/// Glorot-uniform projections drawn from the given seed.
inline MixParams init_mix_params(const std::vector<std::size_t>& source_dims,
                                 std::size_t proj_dim, std::uint64_t seed) {
  MixParams p;
  p.proj_dim = proj_dim;
  p.logits.assign(source_dims.size(), 0.0);
  p.gamma = 1.0;
  Rng rng(seed);
  for (std::size_t d : source_dims) {
    Matrix w(d, proj_dim);
    const double bound = std::sqrt(6.0 / static_cast<double>(d + proj_dim));
    for (double& v : w.data()) v = rng.next_range(-bound, bound);
    p.projections.push_back(std::move(w));
  }
  return p;
}

inline MixParams zeros_like(const MixParams& p) {
  MixParams g;
  g.proj_dim = p.proj_dim;
  g.logits.assign(p.logits.size(), 0.0);
  g.gamma = 0.0;
  for (const auto& w : p.projections) g.projections.emplace_back(w.rows(), w.cols());
  return g;
}

inline void check_stack_dims(const MixParams& params, const SourceStack& stack) {
  if (stack.source_count() != params.source_count())
    throw ValidationError("mixer: stack has " + std::to_string(stack.source_count()) +
                          " sources, parameters have " +
                          std::to_string(params.source_count()));
  for (std::size_t k = 0; k < stack.source_count(); ++k)
    if (stack.entries[k].states.cols() != params.projections[k].rows())
      throw ValidationError("mixer: source " + std::to_string(k) + " ('" +
                            stack.entries[k].name + "') has width " +
                            std::to_string(stack.entries[k].states.cols()) +
                            ", projection expects " +
                            std::to_string(params.projections[k].rows()));
}

/// Projected per-source representations g^k = h^k W_k, kept for backward.
struct MixTrace {
  std::vector<Matrix> projected;  // K of N x D
  Vector weights;                 // softmax(logits)
  Matrix mixture;                 // N x D, pre-gamma
};

/// O = gamma * sum_k s_k (h^k W_k). The per-element sum over sources runs in
/// ascending value order and gamma multiplies last, so permuting sources
/// (together with their parameters) and rescaling gamma by a power of two
/// are bit-exact symmetries.
inline Matrix mix_forward(const MixParams& params, const SourceStack& stack,
                          MixTrace* trace = nullptr) {
  check_stack_dims(params, stack);
  const std::size_t n = stack.token_count();
  const std::size_t K = params.source_count();
  const std::size_t D = params.proj_dim;

  MixTrace local;
  MixTrace& tr = trace ? *trace : local;
  tr.weights = softmax_weights(params.logits);
  tr.projected.clear();
  tr.projected.reserve(K);
  for (std::size_t k = 0; k < K; ++k)
    tr.projected.push_back(matmul(stack.entries[k].states, params.projections[k]));

  tr.mixture = Matrix(n, D);
  std::vector<double> addends(K);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < D; ++j) {
      for (std::size_t k = 0; k < K; ++k) addends[k] = tr.weights[k] * tr.projected[k](i, j);
      tr.mixture(i, j) = detail::canonical_sum(addends.data(), K);
    }

  Matrix out = tr.mixture;
  for (double& v : out.data()) v *= params.gamma;
  return out;
}

/// Gradients of sum(upstream .* O) for every mixer parameter. The logits
/// gradient applies the softmax Jacobian: da_j = s_j (c_j - sum_k s_k c_k)
/// with c_k = gamma * <upstream, g^k>.
inline MixParams mix_backward(const MixParams& params, const SourceStack& stack,
                              const Matrix& upstream, const MixTrace& tr) {
  check_stack_dims(params, stack);
  const std::size_t K = params.source_count();
  if (upstream.rows() != stack.token_count() || upstream.cols() != params.proj_dim)
    throw ValidationError("mixer: upstream gradient shape mismatch");

  MixParams grad = zeros_like(params);

  // gamma: O is linear in it; d gamma = <upstream, mixture>.
  double dgamma = 0.0;
  for (std::size_t i = 0; i < upstream.data().size(); ++i)
    dgamma += upstream.data()[i] * tr.mixture.data()[i];
  grad.gamma = dgamma;

  // projections: dW_k = gamma * s_k * (h^k)^T upstream.
  for (std::size_t k = 0; k < K; ++k)
    add_transposed_product(grad.projections[k], params.gamma * tr.weights[k],
                           stack.entries[k].states, upstream);

  // logits: first per-source channel gradients c_k, then the Jacobian.
  Vector c(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double acc = 0.0;
    const Vector& g = tr.projected[k].data();
    for (std::size_t i = 0; i < g.size(); ++i) acc += upstream.data()[i] * g[i];
    c[k] = params.gamma * acc;
  }
  double mean = 0.0;
  for (std::size_t k = 0; k < K; ++k) mean += tr.weights[k] * c[k];
  for (std::size_t k = 0; k < K; ++k) grad.logits[k] = tr.weights[k] * (c[k] - mean);

  return grad;
}

/// Row-wise [mixed ; base] concatenation; mixed first.
inline Matrix concat_with_base(const Matrix& mixed, const Matrix& base) {
  if (mixed.rows() != base.rows())
    throw ValidationError("concat: row counts differ (" + std::to_string(mixed.rows()) +
                          " vs " + std::to_string(base.rows()) + ")");
  Matrix out(mixed.rows(), mixed.cols() + base.cols());
  for (std::size_t i = 0; i < mixed.rows(); ++i) {
    for (std::size_t j = 0; j < mixed.cols(); ++j) out(i, j) = mixed(i, j);
    for (std::size_t j = 0; j < base.cols(); ++j) out(i, mixed.cols() + j) = base(i, j);
  }
  return out;
}

}  // namespace srcmix
