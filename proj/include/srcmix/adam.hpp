#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "srcmix/errors.hpp"
#include "srcmix/gru.hpp"
#include "srcmix/matrix.hpp"
#include "srcmix/mixer.hpp"
#include "srcmix/tagger.hpp"

namespace srcmix {

/// A named window onto one parameter tensor's storage. Views into a params
/// struct and into its zeros_like gradient twin line up index for index.
struct ParamView {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
};

inline void append_view(std::vector<ParamView>& out, const std::string& name, Vector& v) {
  out.push_back({name, v.data(), v.size()});
}

inline void append_view(std::vector<ParamView>& out, const std::string& name, Matrix& m) {
  out.push_back({name, m.data().data(), m.data().size()});
}

inline void append_view(std::vector<ParamView>& out, const std::string& name, double& s) {
  out.push_back({name, &s, 1});
}

inline std::vector<ParamView> param_views(MixParams& p, const std::string& prefix = "mixer") {
  std::vector<ParamView> v;
  for (std::size_t k = 0; k < p.projections.size(); ++k)
    append_view(v, prefix + ".proj." + std::to_string(k), p.projections[k]);
  append_view(v, prefix + ".logits", p.logits);
  append_view(v, prefix + ".gamma", p.gamma);
  return v;
}

inline void append_cell_views(std::vector<ParamView>& v, const std::string& prefix,
                              GruCell& c) {
  append_view(v, prefix + ".wz", c.wz);
  append_view(v, prefix + ".uz", c.uz);
  append_view(v, prefix + ".bz", c.bz);
  append_view(v, prefix + ".wr", c.wr);
  append_view(v, prefix + ".ur", c.ur);
  append_view(v, prefix + ".br", c.br);
  append_view(v, prefix + ".wh", c.wh);
  append_view(v, prefix + ".uh", c.uh);
  append_view(v, prefix + ".bh", c.bh);
}

inline std::vector<ParamView> param_views(TaggerParams& p,
                                          const std::string& prefix = "tagger") {
  std::vector<ParamView> v;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    append_cell_views(v, prefix + ".layer." + std::to_string(l) + ".fwd", p.layers[l].fwd);
    append_cell_views(v, prefix + ".layer." + std::to_string(l) + ".bwd", p.layers[l].bwd);
  }
  append_view(v, prefix + ".emission_w", p.emission_w);
  append_view(v, prefix + ".emission_b", p.emission_b);
  if (p.decoder == DecoderKind::kCrf) {
    append_view(v, prefix + ".trans", p.trans);
    append_view(v, prefix + ".start", p.start);
    append_view(v, prefix + ".stop", p.stop);
  }
  return v;
}

/// Adam with bias correction. Defaults follow the usual lr=0.001, beta1=0.9,
/// beta2=0.999, eps=1e-8. One state instance covers a fixed list of
/// parameter groups; step() applies, per coordinate,
///
///   t <- t+1
///   m <- beta1 m + (1-beta1) g        mhat = m / (1 - beta1^t)
///   v <- beta2 v + (1-beta2) g^2      vhat = v / (1 - beta2^t)
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps)
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<Vector> m;  // one slab per registered group
  std::vector<Vector> v;

  void register_groups(const std::vector<ParamView>& groups) {
    m.clear();
    v.clear();
    for (const auto& g : groups) {
      m.emplace_back(g.size, 0.0);
      v.emplace_back(g.size, 0.0);
    }
  }
};

/// One optimizer step over matching (params, grads) view lists. Throws
/// NumericError naming the first parameter group with a non-finite gradient.
inline void adam_step(AdamState& state, const std::vector<ParamView>& params,
                      const std::vector<ParamView>& grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ValidationError("adam_step: group lists do not match the registered state");
  for (std::size_t g = 0; g < grads.size(); ++g)
    for (std::size_t i = 0; i < grads[g].size; ++i)
      if (!std::isfinite(grads[g].data[i]))
        throw NumericError("non-finite gradient in parameter group '" + params[g].name + "'");

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t g = 0; g < params.size(); ++g) {
    double* theta = params[g].data;
    const double* grad = grads[g].data;
    Vector& m = state.m[g];
    Vector& v = state.v[g];
    for (std::size_t i = 0; i < params[g].size; ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

inline void zero_grads(const std::vector<ParamView>& grads) {
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.size; ++i) g.data[i] = 0.0;
}

inline void scale_grads(const std::vector<ParamView>& grads, double factor) {
  for (const auto& g : grads)
    for (std::size_t i = 0; i < g.size; ++i) g.data[i] *= factor;
}

}  // namespace srcmix
