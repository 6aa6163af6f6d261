#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "srcmix/errors.hpp"
#include "srcmix/gru.hpp"
#include "srcmix/matrix.hpp"
#include "srcmix/rng.hpp"

namespace srcmix {

enum class DecoderKind { kCrf, kSoftmax };

inline std::string decoder_kind_name(DecoderKind k) {
  return k == DecoderKind::kCrf ? "crf" : "softmax";
}

inline DecoderKind decoder_kind_from_name(const std::string& s) {
  if (s == "crf") return DecoderKind::kCrf;
  if (s == "softmax") return DecoderKind::kSoftmax;
  throw ValidationError("unknown decoder kind '" + s + "'");
}

/// Target model parameters: a stack of bidirectional gated recurrent layers,
/// a linear emission map, and either a linear-chain CRF (transition table
/// plus start/stop scores) or a per-token softmax decoder.
struct TaggerParams {
  std::vector<BiGruLayer> layers;
  Matrix emission_w;  // 2H x L
  Vector emission_b;  // L
  Matrix trans;       // L x L, trans(i,j) scores label i -> label j
  Vector start;       // L
  Vector stop;        // L
  DecoderKind decoder = DecoderKind::kCrf;

  std::size_t label_count() const { return emission_b.size(); }
  std::size_t hidden() const { return layers.empty() ? 0 : layers.back().hidden(); }
};

inline TaggerParams make_tagger(std::size_t input_dim, std::size_t hidden,
                                std::size_t n_layers, std::size_t n_labels,
                                DecoderKind decoder, std::uint64_t seed) {
  TaggerParams p;
  p.decoder = decoder;
  Rng rng(seed);
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < n_layers; ++l) {
    BiGruLayer layer = make_bigru_layer(in, hidden);
    init_bigru_layer(layer, rng);
    p.layers.push_back(std::move(layer));
    in = 2 * hidden;
  }
  p.emission_w = Matrix(2 * hidden, n_labels);
  const double bound = std::sqrt(6.0 / static_cast<double>(2 * hidden + n_labels));
  for (double& v : p.emission_w.data()) v = rng.next_range(-bound, bound);
  p.emission_b.assign(n_labels, 0.0);
  p.trans = Matrix(n_labels, n_labels);
  p.start.assign(n_labels, 0.0);
  p.stop.assign(n_labels, 0.0);
  return p;
}

inline TaggerParams zeros_like(const TaggerParams& p) {
  TaggerParams g;
  g.decoder = p.decoder;
  for (const auto& l : p.layers) g.layers.push_back(make_bigru_layer(l.input(), l.hidden()));
  g.emission_w = Matrix(p.emission_w.rows(), p.emission_w.cols());
  g.emission_b.assign(p.emission_b.size(), 0.0);
  g.trans = Matrix(p.trans.rows(), p.trans.cols());
  g.start.assign(p.start.size(), 0.0);
  g.stop.assign(p.stop.size(), 0.0);
  return g;
}

/// Encoder activations kept for backward.
struct TaggerTrace {
  std::vector<BiGruTrace> layer_traces;
  std::vector<Matrix> layer_outputs;  // per layer, N x 2H
  Matrix states;                      // N x 2H (top layer)
};

/// Contextual states from the recurrent stack. Deterministic; layer i feeds
/// layer i+1.
inline Matrix encode(const TaggerParams& params, const Matrix& embedded,
                     TaggerTrace* trace = nullptr) {
  TaggerTrace local;
  TaggerTrace& tr = trace ? *trace : local;
  tr.layer_traces.resize(params.layers.size());
  tr.layer_outputs.clear();
  Matrix x = embedded;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    x = bigru_forward(params.layers[l], x, &tr.layer_traces[l]);
    tr.layer_outputs.push_back(x);
  }
  tr.states = x;
  return x;
}

/// emissions = states * emission_w + emission_b, one score per (token, label).
inline Matrix emissions_from_states(const TaggerParams& params, const Matrix& states) {
  Matrix e = matmul(states, params.emission_w);
  for (std::size_t i = 0; i < e.rows(); ++i)
    for (std::size_t j = 0; j < e.cols(); ++j) e(i, j) += params.emission_b[j];
  return e;
}

/// Backward through emissions and the recurrent stack; returns dLoss/dinput.
inline Matrix encode_backward(const TaggerParams& params, const TaggerTrace& tr,
                              const Matrix& embedded, const Matrix& d_emissions,
                              TaggerParams& grad) {
  // emission map
  add_transposed_product(grad.emission_w, 1.0, tr.states, d_emissions);
  for (std::size_t i = 0; i < d_emissions.rows(); ++i)
    for (std::size_t j = 0; j < d_emissions.cols(); ++j)
      grad.emission_b[j] += d_emissions(i, j);
  Matrix dstates(d_emissions.rows(), params.emission_w.rows());
  for (std::size_t i = 0; i < d_emissions.rows(); ++i)
    add_matvec(dstates.row(i), 1.0, params.emission_w, d_emissions.row(i));

  // recurrent stack, top down
  Matrix dx = dstates;
  for (std::size_t l = params.layers.size(); l-- > 0;)
    dx = bigru_backward(params.layers[l], tr.layer_traces[l], dx, grad.layers[l]);
  (void)embedded;
  return dx;
}

// --- linear-chain CRF ---------------------------------------------------------

namespace detail {

inline double log_sum_exp(const double* v, std::size_t n) {
  double mx = v[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, v[i]);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(v[i] - mx);
  return mx + std::log(acc);
}

/// alpha(n, y) = log sum over prefixes ending in label y at token n.
inline Matrix crf_forward_table(const Matrix& emissions, const Matrix& trans,
                                const Vector& start) {
  const std::size_t n = emissions.rows(), L = emissions.cols();
  Matrix alpha(n, L);
  for (std::size_t y = 0; y < L; ++y) alpha(0, y) = start[y] + emissions(0, y);
  Vector scratch(L);
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t p = 0; p < L; ++p) scratch[p] = alpha(t - 1, p) + trans(p, y);
      alpha(t, y) = emissions(t, y) + log_sum_exp(scratch.data(), L);
    }
  return alpha;
}

/// beta(n, y) = log sum over suffixes given label y at token n (includes stop).
inline Matrix crf_backward_table(const Matrix& emissions, const Matrix& trans,
                                 const Vector& stop) {
  const std::size_t n = emissions.rows(), L = emissions.cols();
  Matrix beta(n, L);
  for (std::size_t y = 0; y < L; ++y) beta(n - 1, y) = stop[y];
  Vector scratch(L);
  for (std::size_t t = n - 1; t-- > 0;)
    for (std::size_t y = 0; y < L; ++y) {
      for (std::size_t q = 0; q < L; ++q)
        scratch[q] = trans(y, q) + emissions(t + 1, q) + beta(t + 1, q);
      beta(t, y) = log_sum_exp(scratch.data(), L);
    }
  return beta;
}

}  // namespace detail

/// log Z: log-sum over all L^N paths of exp(path score), where a path scores
/// start[y_1] + sum_n emissions[n][y_n] + sum_n trans[y_{n-1}][y_n] + stop[y_N].
/// Computed by the forward algorithm in log space.
inline double crf_log_partition(const Matrix& emissions, const Matrix& trans,
                                const Vector& start, const Vector& stop) {
  if (emissions.rows() == 0) throw ValidationError("crf: empty sentence");
  const std::size_t n = emissions.rows(), L = emissions.cols();
  const Matrix alpha = detail::crf_forward_table(emissions, trans, start);
  Vector final_scores(L);
  for (std::size_t y = 0; y < L; ++y) final_scores[y] = alpha(n - 1, y) + stop[y];
  return detail::log_sum_exp(final_scores.data(), L);
}

inline double crf_path_score(const Matrix& emissions, const Matrix& trans,
                             const Vector& start, const Vector& stop,
                             const std::vector<std::size_t>& labels) {
  double score = start[labels[0]] + stop[labels.back()];
  for (std::size_t t = 0; t < labels.size(); ++t) {
    score += emissions(t, labels[t]);
    if (t > 0) score += trans(labels[t - 1], labels[t]);
  }
  return score;
}

/// Negative log-likelihood of the gold path: log Z - gold score. Always >= 0.
inline double crf_nll(const Matrix& emissions, const Matrix& trans, const Vector& start,
                      const Vector& stop, const std::vector<std::size_t>& labels) {
  if (labels.size() != emissions.rows())
    throw ValidationError("crf_nll: label count != token count");
  return crf_log_partition(emissions, trans, start, stop) -
         crf_path_score(emissions, trans, start, stop, labels);
}

/// CRF NLL gradients. d emissions = unary marginals - gold one-hots;
/// d trans accumulates pairwise marginals minus gold transition counts.
inline double crf_nll_backward(const Matrix& emissions, const Matrix& trans,
                               const Vector& start, const Vector& stop,
                               const std::vector<std::size_t>& labels, Matrix& d_emissions,
                               Matrix& d_trans, Vector& d_start, Vector& d_stop) {
  const std::size_t n = emissions.rows(), L = emissions.cols();
  const Matrix alpha = detail::crf_forward_table(emissions, trans, start);
  const Matrix beta = detail::crf_backward_table(emissions, trans, stop);
  Vector final_scores(L);
  for (std::size_t y = 0; y < L; ++y) final_scores[y] = alpha(n - 1, y) + stop[y];
  const double log_z = detail::log_sum_exp(final_scores.data(), L);

  // unary marginals
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t y = 0; y < L; ++y)
      d_emissions(t, y) += std::exp(alpha(t, y) + beta(t, y) - log_z);
  for (std::size_t t = 0; t < n; ++t) d_emissions(t, labels[t]) -= 1.0;

  // start/stop marginals
  for (std::size_t y = 0; y < L; ++y) {
    d_start[y] += std::exp(alpha(0, y) + beta(0, y) - log_z);
    d_stop[y] += std::exp(alpha(n - 1, y) + beta(n - 1, y) - log_z);
  }
  d_start[labels[0]] -= 1.0;
  d_stop[labels.back()] -= 1.0;

  // pairwise marginals
  for (std::size_t t = 0; t + 1 < n; ++t)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j)
        d_trans(i, j) += std::exp(alpha(t, i) + trans(i, j) + emissions(t + 1, j) +
                                  beta(t + 1, j) - log_z);
  for (std::size_t t = 1; t < n; ++t) d_trans(labels[t - 1], labels[t]) -= 1.0;

  return log_z - crf_path_score(emissions, trans, start, stop, labels);
}

/// Highest-scoring label path. Ties break toward the lower label index at
/// every backpointer decision and at the final label, i.e. among all optimal
/// paths the one whose labels are smallest when compared from the last token
/// backwards.
inline std::vector<std::size_t> viterbi(const Matrix& emissions, const Matrix& trans,
                                        const Vector& start, const Vector& stop) {
  if (emissions.rows() == 0) throw ValidationError("viterbi: empty sentence");
  const std::size_t n = emissions.rows(), L = emissions.cols();
  Matrix delta(n, L);
  std::vector<std::vector<std::size_t>> back(n, std::vector<std::size_t>(L, 0));
  for (std::size_t y = 0; y < L; ++y) delta(0, y) = start[y] + emissions(0, y);
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t y = 0; y < L; ++y) {
      std::size_t best_p = 0;
      double best = delta(t - 1, 0) + trans(0, y);
      for (std::size_t p = 1; p < L; ++p) {
        const double cand = delta(t - 1, p) + trans(p, y);
        if (cand > best) {
          best = cand;
          best_p = p;
        }
      }
      delta(t, y) = best + emissions(t, y);
      back[t][y] = best_p;
    }
  std::size_t best_y = 0;
  double best = delta(n - 1, 0) + stop[0];
  for (std::size_t y = 1; y < L; ++y) {
    const double cand = delta(n - 1, y) + stop[y];
    if (cand > best) {
      best = cand;
      best_y = y;
    }
  }
  std::vector<std::size_t> path(n);
  path[n - 1] = best_y;
  for (std::size_t t = n - 1; t > 0; --t) path[t - 1] = back[t][path[t]];
  return path;
}

// --- per-token softmax decoder -------------------------------------------------

/// sum_n -log softmax(emissions[n])[labels[n]].
inline double softmax_nll(const Matrix& emissions, const std::vector<std::size_t>& labels) {
  if (labels.size() != emissions.rows())
    throw ValidationError("softmax_nll: label count != token count");
  const std::size_t L = emissions.cols();
  double loss = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const double lse = detail::log_sum_exp(emissions.row(t), L);
    loss += lse - emissions(t, labels[t]);
  }
  return loss;
}

/// d emissions = per-row softmax - gold one-hot. Returns the loss.
inline double softmax_nll_backward(const Matrix& emissions,
                                   const std::vector<std::size_t>& labels,
                                   Matrix& d_emissions) {
  const std::size_t L = emissions.cols();
  double loss = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    const double lse = detail::log_sum_exp(emissions.row(t), L);
    loss += lse - emissions(t, labels[t]);
    for (std::size_t y = 0; y < L; ++y)
      d_emissions(t, y) += std::exp(emissions(t, y) - lse);
    d_emissions(t, labels[t]) -= 1.0;
  }
  return loss;
}

/// Per-token argmax (lowest index wins ties); decoding for the softmax head.
inline std::vector<std::size_t> argmax_decode(const Matrix& emissions) {
  std::vector<std::size_t> path(emissions.rows());
  for (std::size_t t = 0; t < emissions.rows(); ++t) {
    std::size_t best = 0;
    for (std::size_t y = 1; y < emissions.cols(); ++y)
      if (emissions(t, y) > emissions(t, best)) best = y;
    path[t] = best;
  }
  return path;
}

/// Decode with the parameter set's own decoder.
inline std::vector<std::size_t> decode(const TaggerParams& params, const Matrix& emissions) {
  return params.decoder == DecoderKind::kCrf
             ? viterbi(emissions, params.trans, params.start, params.stop)
             : argmax_decode(emissions);
}

/// NLL under the parameter set's own decoder.
inline double decoder_nll(const TaggerParams& params, const Matrix& emissions,
                          const std::vector<std::size_t>& labels) {
  return params.decoder == DecoderKind::kCrf
             ? crf_nll(emissions, params.trans, params.start, params.stop, labels)
             : softmax_nll(emissions, labels);
}

inline double decoder_nll_backward(const TaggerParams& params, const Matrix& emissions,
                                   const std::vector<std::size_t>& labels,
                                   Matrix& d_emissions, TaggerParams& grad) {
  if (params.decoder == DecoderKind::kCrf)
    return crf_nll_backward(emissions, params.trans, params.start, params.stop, labels,
                            d_emissions, grad.trans, grad.start, grad.stop);
  return softmax_nll_backward(emissions, labels, d_emissions);
}

}  // namespace srcmix
