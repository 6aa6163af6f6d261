#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "srcmix/mixer.hpp"
#include "srcmix/rng.hpp"
#include "srcmix/training.hpp"

using namespace srcmix;

namespace {

SourceStack random_stack(Rng& rng, std::size_t n, const std::vector<std::size_t>& dims) {
  SourceStack stack;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    Matrix m(n, dims[k]);
    for (double& v : m.data()) v = rng.next_range(-1.0, 1.0);
    stack.entries.push_back({"s" + std::to_string(k), std::move(m)});
  }
  return stack;
}

MixParams random_mix(Rng& rng, const std::vector<std::size_t>& dims, std::size_t proj_dim) {
  MixParams p = init_mix_params(dims, proj_dim, rng.next_u64());
  for (double& a : p.logits) a = rng.next_range(-1.5, 1.5);
  p.gamma = rng.next_range(0.5, 2.0);
  return p;
}

/// Straight-line evaluation of the mixture definition, independent of the
/// library path: plain nested loops, naive softmax, no reordering.
Matrix brute_mix(const MixParams& p, const SourceStack& stack) {
  const std::size_t K = p.source_count();
  std::vector<double> s(K);
  double denom = 0.0;
  double mx = p.logits[0];
  for (double a : p.logits) mx = std::max(mx, a);
  for (std::size_t k = 0; k < K; ++k) denom += std::exp(p.logits[k] - mx);
  for (std::size_t k = 0; k < K; ++k) s[k] = std::exp(p.logits[k] - mx) / denom;

  const std::size_t n = stack.token_count();
  Matrix out(n, p.proj_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p.proj_dim; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double g = 0.0;
        for (std::size_t d = 0; d < stack.entries[k].states.cols(); ++d)
          g += stack.entries[k].states(i, d) * p.projections[k](d, j);
        acc += s[k] * g;
      }
      out(i, j) = p.gamma * acc;
    }
  return out;
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform", "[mixer]") {
  const Vector s = softmax_weights({0.0, 0.0, 0.0});
  for (double v : s) REQUIRE(v == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("softmax resolves a ln(3) gap to (0.25, 0.75) for any shift", "[mixer]") {
  for (double c : {-5.0, 0.0, 2.7, 41.0}) {
    const Vector s = softmax_weights({c, c + std::log(3.0)});
    REQUIRE(s[0] == Catch::Approx(0.25).margin(1e-12));
    REQUIRE(s[1] == Catch::Approx(0.75).margin(1e-12));
  }
}

TEST_CASE("softmax matches a high-precision direct evaluation", "[mixer]") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Vector logits(5);
    for (double& a : logits) a = rng.next_range(-8.0, 8.0);
    const Vector s = softmax_weights(logits);
    // independent oracle: long double, no max shift
    long double denom = 0.0L;
    for (double a : logits) denom += expl(static_cast<long double>(a));
    for (std::size_t k = 0; k < 5; ++k) {
      const long double expected = expl(static_cast<long double>(logits[k])) / denom;
      REQUIRE(std::abs(s[k] - static_cast<double>(expected)) < 1e-15);
    }
  }
}

TEST_CASE("softmax weights are positive, normalized and shift-invariant", "[mixer]") {
  Rng rng(32);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng.next_below(8);
    Vector logits(k);
    for (double& a : logits) a = rng.next_range(-20.0, 20.0);
    const Vector s = softmax_weights(logits);
    double sum = 0.0;
    for (double v : s) {
      REQUIRE(v > 0.0);
      sum += v;
    }
    REQUIRE(std::abs(sum - 1.0) < 1e-12);

    const double c = rng.next_range(-10.0, 10.0);
    Vector shifted = logits;
    for (double& a : shifted) a += c;
    const Vector s2 = softmax_weights(shifted);
    for (std::size_t i = 0; i < k; ++i) REQUIRE(std::abs(s[i] - s2[i]) < 1e-12);
  }
}

TEST_CASE("mixture adds K+1 trainable parameters", "[mixer]") {
  REQUIRE(mixture_param_count(1) == 2);
  REQUIRE(mixture_param_count(2) == 3);
  REQUIRE(mixture_param_count(3) == 4);
  REQUIRE(mixture_param_count(5) == 6);
  REQUIRE_THROWS_AS(mixture_param_count(0), ValidationError);
  REQUIRE(projection_param_count({8, 6, 10}, 300) == 7200);
}

TEST_CASE("K=1 with identity projection and gamma 1 is the identity", "[mixer]") {
  Rng rng(33);
  SourceStack stack = random_stack(rng, 3, {4});
  MixParams p;
  p.proj_dim = 4;
  p.logits = {1.7};  // any single logit gives s_1 = 1
  p.gamma = 1.0;
  Matrix eye(4, 4);
  for (int i = 0; i < 4; ++i) eye(i, i) = 1.0;
  p.projections.push_back(eye);
  const Matrix out = mix_forward(p, stack);
  REQUIRE(out == stack.entries[0].states);
}

TEST_CASE("two equal-weight unit sources with gamma 2 sum exactly", "[mixer]") {
  const std::size_t n = 3, d = 4;
  SourceStack stack;
  Matrix h1(n, d), h2(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    h1(i, 0) = 1.0;  // rows e_1
    h2(i, 1) = 1.0;  // rows e_2
  }
  stack.entries.push_back({"a", h1});
  stack.entries.push_back({"b", h2});
  MixParams p;
  p.proj_dim = d;
  p.logits = {0.0, 0.0};
  p.gamma = 2.0;
  Matrix eye(d, d);
  for (std::size_t i = 0; i < d; ++i) eye(i, i) = 1.0;
  p.projections = {eye, eye};
  const Matrix out = mix_forward(p, stack);
  for (std::size_t i = 0; i < n; ++i) {
    REQUIRE(out(i, 0) == 1.0);
    REQUIRE(out(i, 1) == 1.0);
    REQUIRE(out(i, 2) == 0.0);
    REQUIRE(out(i, 3) == 0.0);
  }
}

TEST_CASE("mix_forward matches the double-loop oracle", "[mixer]") {
  Rng rng(34);
  const std::vector<std::size_t> dims{3, 5, 2};
  for (int trial = 0; trial < 20; ++trial) {
    const SourceStack stack = random_stack(rng, 4, dims);
    const MixParams p = random_mix(rng, dims, 6);
    const Matrix fast = mix_forward(p, stack);
    const Matrix brute = brute_mix(p, stack);
    REQUIRE(fast.rows() == brute.rows());
    for (std::size_t i = 0; i < fast.data().size(); ++i)
      REQUIRE(std::abs(fast.data()[i] - brute.data()[i]) < 1e-12);
  }
}

TEST_CASE("output width is fixed regardless of source count", "[mixer]") {
  Rng rng(35);
  const std::size_t n = 7;
  for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{5}}) {
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < k; ++i) dims.push_back(3 + 5 * i % 11);
    const SourceStack stack = random_stack(rng, n, dims);
    const MixParams p = random_mix(rng, dims, 300);
    const Matrix out = mix_forward(p, stack);
    REQUIRE(out.rows() == n);
    REQUIRE(out.cols() == 300);
  }
}

TEST_CASE("permuting sources with their parameters is bit-exact", "[mixer]") {
  Rng rng(36);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.next_below(4);
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < k; ++i) dims.push_back(1 + rng.next_below(6));
    const std::size_t n = 1 + rng.next_below(4);
    const SourceStack stack = random_stack(rng, n, dims);
    const MixParams p = random_mix(rng, dims, 1 + rng.next_below(8));

    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    rng.shuffle(perm);

    SourceStack pstack;
    MixParams pp;
    pp.proj_dim = p.proj_dim;
    pp.gamma = p.gamma;
    pp.logits.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      pstack.entries.push_back(stack.entries[perm[i]]);
      pp.projections.push_back(p.projections[perm[i]]);
      pp.logits[i] = p.logits[perm[i]];
    }
    const Matrix a = mix_forward(p, stack);
    const Matrix b = mix_forward(pp, pstack);
    REQUIRE(a == b);
  }
}

TEST_CASE("doubling gamma doubles the output bit-exactly", "[mixer]") {
  Rng rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<std::size_t> dims{4, 3};
    const SourceStack stack = random_stack(rng, 3, dims);
    MixParams p = random_mix(rng, dims, 5);
    const Matrix once = mix_forward(p, stack);
    p.gamma *= 2.0;
    const Matrix twice = mix_forward(p, stack);
    for (std::size_t i = 0; i < once.data().size(); ++i)
      REQUIRE(twice.data()[i] == 2.0 * once.data()[i]);
  }
}

TEST_CASE("suppressing one source by -40 logits barely moves the output", "[mixer]") {
  Rng rng(38);
  const std::size_t n = 4, d = 6;
  const std::vector<std::size_t> dims{d, d, d};
  // unit-norm projected rows: identity projections over unit-norm inputs
  SourceStack stack;
  for (std::size_t k = 0; k < 3; ++k) {
    Matrix h(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        h(i, j) = rng.next_range(-1.0, 1.0);
        norm += h(i, j) * h(i, j);
      }
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < d; ++j) h(i, j) /= norm;
    }
    stack.entries.push_back({"s" + std::to_string(k), std::move(h)});
  }
  MixParams p;
  p.proj_dim = d;
  Matrix eye(d, d);
  for (std::size_t i = 0; i < d; ++i) eye(i, i) = 1.0;
  p.projections = {eye, eye, eye};
  p.logits = {0.3, -0.2, 0.1};
  p.gamma = 10.0;

  const Matrix base = mix_forward(p, stack);
  MixParams suppressed = p;
  suppressed.logits[1] -= 40.0;

  // reweighting the remaining sources is part of the change; compare against
  // the two-source limit instead of the original mixture
  MixParams limit;
  limit.proj_dim = d;
  limit.projections = {eye, eye};
  limit.logits = {p.logits[0], p.logits[2]};
  limit.gamma = p.gamma;
  SourceStack limit_stack;
  limit_stack.entries.push_back(stack.entries[0]);
  limit_stack.entries.push_back(stack.entries[2]);

  const Matrix with_suppressed = mix_forward(suppressed, stack);
  const Matrix without = mix_forward(limit, limit_stack);
  for (std::size_t i = 0; i < with_suppressed.data().size(); ++i)
    REQUIRE(std::abs(with_suppressed.data()[i] - without.data()[i]) < 1e-10);
}

TEST_CASE("mix_backward of a zero upstream is zero", "[mixer]") {
  Rng rng(39);
  const std::vector<std::size_t> dims{3, 4};
  const SourceStack stack = random_stack(rng, 3, dims);
  const MixParams p = random_mix(rng, dims, 5);
  MixTrace trace;
  mix_forward(p, stack, &trace);
  const MixParams g = mix_backward(p, stack, Matrix(3, 5), trace);
  REQUIRE(g.gamma == 0.0);
  for (double v : g.logits) REQUIRE(v == 0.0);
  for (const auto& w : g.projections)
    for (double v : w.data()) REQUIRE(v == 0.0);
}

TEST_CASE("gamma gradient equals <upstream, O/gamma>", "[mixer]") {
  Rng rng(40);
  const std::vector<std::size_t> dims{3, 4};
  const SourceStack stack = random_stack(rng, 3, dims);
  const MixParams p = random_mix(rng, dims, 5);
  Matrix upstream(3, 5);
  for (double& v : upstream.data()) v = rng.next_range(-1.0, 1.0);
  MixTrace trace;
  const Matrix out = mix_forward(p, stack, &trace);
  const MixParams g = mix_backward(p, stack, upstream, trace);
  double expected = 0.0;
  for (std::size_t i = 0; i < out.data().size(); ++i)
    expected += upstream.data()[i] * out.data()[i] / p.gamma;
  REQUIRE(g.gamma == Catch::Approx(expected).margin(1e-10));
}

TEST_CASE("all mixer gradients pass central finite differences", "[mixer]") {
  Rng rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t k = 1 + rng.next_below(3);
    std::vector<std::size_t> dims;
    for (std::size_t i = 0; i < k; ++i) dims.push_back(1 + rng.next_below(6));
    const std::size_t n = 1 + rng.next_below(4);
    const std::size_t proj = 1 + rng.next_below(8);
    const SourceStack stack = random_stack(rng, n, dims);
    MixParams p = random_mix(rng, dims, proj);
    Matrix upstream(n, proj);
    for (double& v : upstream.data()) v = rng.next_range(-1.0, 1.0);

    MixTrace trace;
    mix_forward(p, stack, &trace);
    MixParams analytic = mix_backward(p, stack, upstream, trace);

    auto loss = [&]() {
      const Matrix out = mix_forward(p, stack);
      double acc = 0.0;
      for (std::size_t i = 0; i < out.data().size(); ++i)
        acc += upstream.data()[i] * out.data()[i];
      return acc;
    };
    const GradCheckResult res =
        grad_check(loss, param_views(p), param_views(analytic), 1e-5, 7);
    REQUIRE(res.checked > 0);
    REQUIRE(res.max_rel_err < 1e-6);
  }
}

TEST_CASE("concatenation keeps both halves exactly", "[mixer]") {
  Rng rng(42);
  Matrix mixed(2, 300), base(2, 100);
  for (double& v : mixed.data()) v = rng.next_range(-1.0, 1.0);
  for (double& v : base.data()) v = rng.next_range(-1.0, 1.0);
  const Matrix out = concat_with_base(mixed, base);
  REQUIRE(out.rows() == 2);
  REQUIRE(out.cols() == 400);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 300; ++j) REQUIRE(out(i, j) == mixed(i, j));
    for (std::size_t j = 0; j < 100; ++j) REQUIRE(out(i, 300 + j) == base(i, j));
  }

  const Matrix alone = concat_with_base(mixed, Matrix(2, 0));
  REQUIRE(alone == mixed);

  REQUIRE_THROWS_AS(concat_with_base(mixed, Matrix(3, 2)), ValidationError);
}

TEST_CASE("dimension mismatches name the offending source", "[mixer]") {
  Rng rng(43);
  const SourceStack stack = random_stack(rng, 2, {3, 4});
  MixParams p = random_mix(rng, {3, 5}, 6);  // source 1 expects width 5
  REQUIRE_THROWS_MATCHES(
      mix_forward(p, stack), ValidationError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("source 1")));
}
