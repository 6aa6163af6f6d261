#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "srcmix/rng.hpp"
#include "srcmix/tagger.hpp"
#include "srcmix/training.hpp"

using namespace srcmix;

namespace {

struct CrfInstance {
  Matrix emissions;
  Matrix trans;
  Vector start, stop;
};

CrfInstance random_crf(Rng& rng, std::size_t n, std::size_t labels, bool quantized) {
  CrfInstance inst;
  inst.emissions = Matrix(n, labels);
  inst.trans = Matrix(labels, labels);
  inst.start.resize(labels);
  inst.stop.resize(labels);
  auto draw = [&]() {
    if (!quantized) return rng.next_range(-2.0, 2.0);
    // coarse grid scores force score ties, exercising the tie rule
    return 0.5 * static_cast<double>(rng.next_below(5)) - 1.0;
  };
  for (double& v : inst.emissions.data()) v = draw();
  for (double& v : inst.trans.data()) v = draw();
  for (double& v : inst.start) v = draw();
  for (double& v : inst.stop) v = draw();
  return inst;
}

/// Enumerates every label path. Returns all path scores.
void enumerate_paths(const CrfInstance& inst,
                     const std::function<void(const std::vector<std::size_t>&, double)>& fn) {
  const std::size_t n = inst.emissions.rows();
  const std::size_t L = inst.emissions.cols();
  std::vector<std::size_t> path(n, 0);
  for (;;) {
    double score = inst.start[path[0]] + inst.stop[path[n - 1]];
    for (std::size_t t = 0; t < n; ++t) {
      score += inst.emissions(t, path[t]);
      if (t > 0) score += inst.trans(path[t - 1], path[t]);
    }
    fn(path, score);
    std::size_t t = n;
    for (;;) {
      if (t == 0) return;
      --t;
      if (++path[t] < L) break;
      path[t] = 0;
    }
  }
}

double brute_log_partition(const CrfInstance& inst) {
  std::vector<double> scores;
  enumerate_paths(inst, [&](const std::vector<std::size_t>&, double s) {
    scores.push_back(s);
  });
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double acc = 0.0;
  for (double s : scores) acc += std::exp(s - mx);
  return mx + std::log(acc);
}

/// Best path under the implementation's tie rule: among equal scores the
/// path whose labels are smaller comparing from the last token backwards.
std::vector<std::size_t> brute_viterbi(const CrfInstance& inst) {
  std::vector<std::size_t> best;
  double best_score = 0.0;
  enumerate_paths(inst, [&](const std::vector<std::size_t>& path, double score) {
    if (best.empty() || score > best_score) {
      best = path;
      best_score = score;
      return;
    }
    if (score == best_score) {
      for (std::size_t t = path.size(); t-- > 0;) {
        if (path[t] == best[t]) continue;
        if (path[t] < best[t]) best = path;
        break;
      }
    }
  });
  return best;
}

}  // namespace

TEST_CASE("encode produces one contextual state per token", "[tagger]") {
  TaggerParams p = make_tagger(5, 3, 1, 2, DecoderKind::kCrf, 11);
  Matrix x(1, 5);
  x(0, 2) = 0.4;
  const Matrix states = encode(p, x);
  REQUIRE(states.rows() == 1);
  REQUIRE(states.cols() == 6);

  TaggerParams deep = make_tagger(5, 3, 2, 2, DecoderKind::kSoftmax, 12);
  Matrix x4(4, 5);
  REQUIRE(encode(deep, x4).rows() == 4);
  REQUIRE(encode(deep, x4).cols() == 6);
}

TEST_CASE("zero parameters and inputs give exactly zero states", "[tagger]") {
  // with all-zero weights, z = r = 1/2 and the candidate is tanh(0) = 0, so
  // h_t = h_{t-1}/2 stays at the zero initial state
  TaggerParams p = make_tagger(4, 3, 1, 2, DecoderKind::kCrf, 13);
  for (auto& layer : p.layers)
    for (GruCell* cell : {&layer.fwd, &layer.bwd}) {
      cell->wz.fill(0.0);
      cell->uz.fill(0.0);
      cell->wr.fill(0.0);
      cell->ur.fill(0.0);
      cell->wh.fill(0.0);
      cell->uh.fill(0.0);
    }
  p.emission_w.fill(0.0);
  const Matrix states = encode(p, Matrix(3, 4));
  for (double v : states.data()) REQUIRE(v == 0.0);
  const Matrix e = emissions_from_states(p, states);
  for (double v : e.data()) REQUIRE(v == 0.0);
}

TEST_CASE("recurrent gradients match finite differences", "[tagger]") {
  Rng rng(14);
  TaggerParams p = make_tagger(3, 3, 1, 4, DecoderKind::kSoftmax, 15);
  Matrix x(3, 3);
  for (double& v : x.data()) v = rng.next_range(-1.0, 1.0);
  const std::vector<std::size_t> labels{1, 3, 0};

  TaggerParams analytic = zeros_like(p);
  TaggerTrace trace;
  encode(p, x, &trace);
  const Matrix emissions = emissions_from_states(p, trace.states);
  Matrix d_emissions(emissions.rows(), emissions.cols());
  softmax_nll_backward(emissions, labels, d_emissions);
  encode_backward(p, trace, x, d_emissions, analytic);

  auto loss = [&]() {
    const Matrix states = encode(p, x);
    return softmax_nll(emissions_from_states(p, states), labels);
  };
  const GradCheckResult res =
      grad_check(loss, param_views(p), param_views(analytic), 1e-5, 3, 400);
  REQUIRE(res.max_rel_err < 1e-4);
}

TEST_CASE("single-label partition is the single path score", "[tagger][crf]") {
  Rng rng(16);
  const CrfInstance inst = random_crf(rng, 4, 1, false);
  double expected = inst.start[0] + inst.stop[0];
  for (std::size_t t = 0; t < 4; ++t) expected += inst.emissions(t, 0);
  for (std::size_t t = 1; t < 4; ++t) expected += inst.trans(0, 0);
  REQUIRE(crf_log_partition(inst.emissions, inst.trans, inst.start, inst.stop) ==
          Catch::Approx(expected).margin(1e-12));
  REQUIRE(crf_nll(inst.emissions, inst.trans, inst.start, inst.stop, {0, 0, 0, 0}) ==
          Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("all-zero scores give N log L", "[tagger][crf]") {
  const std::size_t n = 4, L = 3;
  const CrfInstance inst{Matrix(n, L), Matrix(L, L), Vector(L, 0.0), Vector(L, 0.0)};
  const double lz = crf_log_partition(inst.emissions, inst.trans, inst.start, inst.stop);
  REQUIRE(lz == Catch::Approx(n * std::log(double(L))).margin(1e-12));
  REQUIRE(crf_nll(inst.emissions, inst.trans, inst.start, inst.stop, {2, 0, 1, 1}) ==
          Catch::Approx(n * std::log(double(L))).margin(1e-12));
}

TEST_CASE("log partition matches exhaustive enumeration", "[tagger][crf]") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.next_below(5);
    const std::size_t L = 1 + rng.next_below(4);
    const CrfInstance inst = random_crf(rng, n, L, false);
    const double fast = crf_log_partition(inst.emissions, inst.trans, inst.start, inst.stop);
    REQUIRE(fast == Catch::Approx(brute_log_partition(inst)).margin(1e-8));
  }
}

TEST_CASE("path probabilities normalize", "[tagger][crf]") {
  Rng rng(18);
  const CrfInstance inst = random_crf(rng, 4, 3, false);
  const double lz = crf_log_partition(inst.emissions, inst.trans, inst.start, inst.stop);
  double total = 0.0;
  enumerate_paths(inst, [&](const std::vector<std::size_t>&, double s) {
    const double prob = std::exp(s - lz);
    REQUIRE(prob > 0.0);
    REQUIRE(prob <= 1.0 + 1e-12);
    total += prob;
  });
  REQUIRE(total == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("crf_nll is nonnegative and its gradients check out", "[tagger][crf]") {
  Rng rng(19);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.next_below(5);
    const std::size_t L = 2 + rng.next_below(3);
    CrfInstance inst = random_crf(rng, n, L, false);
    std::vector<std::size_t> labels(n);
    for (auto& y : labels) y = rng.next_below(L);

    REQUIRE(crf_nll(inst.emissions, inst.trans, inst.start, inst.stop, labels) >= 0.0);

    Matrix d_emissions(n, L), d_trans(L, L);
    Vector d_start(L, 0.0), d_stop(L, 0.0);
    crf_nll_backward(inst.emissions, inst.trans, inst.start, inst.stop, labels, d_emissions,
                     d_trans, d_start, d_stop);

    std::vector<ParamView> params, grads;
    append_view(params, "emissions", inst.emissions);
    append_view(params, "trans", inst.trans);
    append_view(params, "start", inst.start);
    append_view(params, "stop", inst.stop);
    append_view(grads, "emissions", d_emissions);
    append_view(grads, "trans", d_trans);
    append_view(grads, "start", d_start);
    append_view(grads, "stop", d_stop);
    auto loss = [&]() {
      return crf_nll(inst.emissions, inst.trans, inst.start, inst.stop, labels);
    };
    const GradCheckResult res = grad_check(loss, params, grads, 1e-5, 5, 400);
    REQUIRE(res.max_rel_err < 1e-6);
  }
}

TEST_CASE("emission gradient is marginals minus gold one-hots", "[tagger][crf]") {
  Rng rng(20);
  const std::size_t n = 3, L = 3;
  const CrfInstance inst = random_crf(rng, n, L, false);
  const std::vector<std::size_t> labels{0, 2, 1};
  Matrix d_emissions(n, L), d_trans(L, L);
  Vector d_start(L, 0.0), d_stop(L, 0.0);
  crf_nll_backward(inst.emissions, inst.trans, inst.start, inst.stop, labels, d_emissions,
                   d_trans, d_start, d_stop);
  const double lz = crf_log_partition(inst.emissions, inst.trans, inst.start, inst.stop);
  // independent marginals by enumeration
  Matrix marginal(n, L);
  enumerate_paths(inst, [&](const std::vector<std::size_t>& path, double s) {
    for (std::size_t t = 0; t < n; ++t) marginal(t, path[t]) += std::exp(s - lz);
  });
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t y = 0; y < L; ++y) {
      const double expected = marginal(t, y) - (labels[t] == y ? 1.0 : 0.0);
      REQUIRE(d_emissions(t, y) == Catch::Approx(expected).margin(1e-9));
    }
}

TEST_CASE("emission row shifts move log partition exactly and keep the path",
          "[tagger][crf]") {
  Rng rng(21);
  // integer-valued scores so the shift stays exact in floating point
  CrfInstance inst = random_crf(rng, 4, 3, true);
  for (double& v : inst.emissions.data()) v = std::round(v * 2.0);
  for (double& v : inst.trans.data()) v = std::round(v * 2.0);
  for (double& v : inst.start) v = std::round(v * 2.0);
  for (double& v : inst.stop) v = std::round(v * 2.0);

  const double before = crf_log_partition(inst.emissions, inst.trans, inst.start, inst.stop);
  const auto path_before = viterbi(inst.emissions, inst.trans, inst.start, inst.stop);
  const double c = 3.0;
  for (std::size_t y = 0; y < 3; ++y) inst.emissions(1, y) += c;
  const double after = crf_log_partition(inst.emissions, inst.trans, inst.start, inst.stop);
  const auto path_after = viterbi(inst.emissions, inst.trans, inst.start, inst.stop);
  REQUIRE(after - before == Catch::Approx(c).margin(1e-9));
  REQUIRE(path_before == path_after);
}

TEST_CASE("viterbi with zero transitions is the per-token argmax", "[tagger][crf]") {
  Rng rng(22);
  CrfInstance inst = random_crf(rng, 5, 4, false);
  inst.trans.fill(0.0);
  inst.start.assign(4, 0.0);
  inst.stop.assign(4, 0.0);
  const auto path = viterbi(inst.emissions, inst.trans, inst.start, inst.stop);
  REQUIRE(path == argmax_decode(inst.emissions));
}

TEST_CASE("viterbi matches exhaustive argmax including the tie rule", "[tagger][crf]") {
  Rng rng(23);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.next_below(5);
    const std::size_t L = 1 + rng.next_below(4);
    const CrfInstance inst = random_crf(rng, n, L, trial % 2 == 0);
    const auto fast = viterbi(inst.emissions, inst.trans, inst.start, inst.stop);
    const auto brute = brute_viterbi(inst);
    REQUIRE(fast == brute);
  }
}

TEST_CASE("all-equal scores decode to the all-zeros path", "[tagger][crf]") {
  const std::size_t n = 4, L = 3;
  CrfInstance inst{Matrix(n, L, 0.7), Matrix(L, L, 0.7), Vector(L, 0.7), Vector(L, 0.7)};
  const auto path = viterbi(inst.emissions, inst.trans, inst.start, inst.stop);
  REQUIRE(path == std::vector<std::size_t>(n, 0));
}

TEST_CASE("softmax decoder loss values and gradients", "[tagger]") {
  const std::size_t n = 3, L = 4;
  Matrix strong(n, L);
  const std::vector<std::size_t> labels{2, 0, 3};
  for (std::size_t t = 0; t < n; ++t) strong(t, labels[t]) = 1e9;
  REQUIRE(softmax_nll(strong, labels) < 1e-6);

  REQUIRE(softmax_nll(Matrix(n, L), labels) ==
          Catch::Approx(n * std::log(double(L))).margin(1e-12));

  Rng rng(24);
  Matrix emissions(n, L);
  for (double& v : emissions.data()) v = rng.next_range(-2.0, 2.0);
  Matrix d(n, L);
  softmax_nll_backward(emissions, labels, d);
  std::vector<ParamView> params, grads;
  append_view(params, "emissions", emissions);
  append_view(grads, "d", d);
  auto loss = [&]() { return softmax_nll(emissions, labels); };
  REQUIRE(grad_check(loss, params, grads, 1e-5, 2).max_rel_err < 1e-6);
}
