#pragma once

// Trainable parameter tensors, their initialization, and the Adam update rule.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "multirec/config.hpp"
#include "multirec/rng.hpp"

namespace multirec {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Matf = Mat<float>;
using Vecf = Vec<float>;

// All trainable state. Tensors not used by the configured extractor stay
// empty. w_route stores the per-(position, interest) d x d transformation
// matrices stacked vertically: block (p, j) starts at row (p*k + j)*d.
template <typename S>
struct ModelParameters {
  int d = 0;
  int k = 0;
  int n_max = 0;

  Mat<S> item_emb;  // n_items x d
  Mat<S> pos_emb;   // n_max x d   (self-attentive)
  Mat<S> w1;        // d_a x d     (self-attentive)
  Mat<S> w2;        // d_a x K     (self-attentive)
  Mat<S> w_route;   // (n_max*K*d) x d  (dynamic routing)

  std::vector<std::pair<const char*, Mat<S>*>> tensors() {
    std::vector<std::pair<const char*, Mat<S>*>> out;
    if (item_emb.size()) out.emplace_back("item_emb", &item_emb);
    if (pos_emb.size()) out.emplace_back("pos_emb", &pos_emb);
    if (w1.size()) out.emplace_back("w1", &w1);
    if (w2.size()) out.emplace_back("w2", &w2);
    if (w_route.size()) out.emplace_back("w_route", &w_route);
    return out;
  }

  std::vector<std::pair<const char*, const Mat<S>*>> tensors() const {
    std::vector<std::pair<const char*, const Mat<S>*>> out;
    if (item_emb.size()) out.emplace_back("item_emb", &item_emb);
    if (pos_emb.size()) out.emplace_back("pos_emb", &pos_emb);
    if (w1.size()) out.emplace_back("w1", &w1);
    if (w2.size()) out.emplace_back("w2", &w2);
    if (w_route.size()) out.emplace_back("w_route", &w_route);
    return out;
  }

  ModelParameters zeros_like() const {
    ModelParameters z;
    z.d = d;
    z.k = k;
    z.n_max = n_max;
    z.item_emb = Mat<S>::Zero(item_emb.rows(), item_emb.cols());
    if (pos_emb.size()) z.pos_emb = Mat<S>::Zero(pos_emb.rows(), pos_emb.cols());
    if (w1.size()) z.w1 = Mat<S>::Zero(w1.rows(), w1.cols());
    if (w2.size()) z.w2 = Mat<S>::Zero(w2.rows(), w2.cols());
    if (w_route.size()) z.w_route = Mat<S>::Zero(w_route.rows(), w_route.cols());
    return z;
  }

  // d x d transformation matrix for sequence position p and interest j.
  auto route_block(int p, int j) { return w_route.block((p * k + j) * d, 0, d, d); }
  auto route_block(int p, int j) const { return w_route.block((p * k + j) * d, 0, d, d); }

  bool all_finite() const {
    for (const auto& [name, t] : tensors()) {
      (void)name;
      if (!t->allFinite()) return false;
    }
    return true;
  }
};

namespace detail {

// Row-major fill so the draw order is part of the format.
template <typename S>
void fill_gaussian(Mat<S>& m, Rng& rng, double sigma) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<S>(rng.normal() * sigma);
    }
  }
}

template <typename S>
void fill_uniform(Mat<S>& m, Rng& rng, double bound) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = static_cast<S>((rng.uniform() * 2.0 - 1.0) * bound);
    }
  }
}

inline double xavier_bound(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
}

}  // namespace detail

// Embeddings ~ N(0, 1/d); weight matrices Xavier-uniform. Deterministic under seed.
template <typename S>
ModelParameters<S> init_parameters(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParameters<S> p;
  p.d = cfg.d;
  p.k = cfg.k;
  p.n_max = cfg.n_max;

  const double sigma = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  p.item_emb.resize(cfg.n_items, cfg.d);
  detail::fill_gaussian(p.item_emb, rng, sigma);

  if (cfg.extractor == Extractor::kSelfAttentive) {
    const int d_a = cfg.attention_width();
    p.pos_emb.resize(cfg.n_max, cfg.d);
    detail::fill_gaussian(p.pos_emb, rng, sigma);
    p.w1.resize(d_a, cfg.d);
    detail::fill_uniform(p.w1, rng, detail::xavier_bound(cfg.d, d_a));
    p.w2.resize(d_a, cfg.k);
    detail::fill_uniform(p.w2, rng, detail::xavier_bound(d_a, cfg.k));
  } else {
    p.w_route.resize(static_cast<Eigen::Index>(cfg.n_max) * cfg.k * cfg.d, cfg.d);
    detail::fill_uniform(p.w_route, rng, detail::xavier_bound(cfg.d, cfg.d));
  }
  return p;
}

// First/second moment accumulators mirroring the parameter shapes.
template <typename S>
struct AdamState {
  ModelParameters<S> m, v;
  int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zero(const ModelParameters<S>& params) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    return s;
  }
};

// Standard Adam with bias correction. Throws (naming the tensor) on any
// non-finite gradient entry.
template <typename S>
void adam_step(ModelParameters<S>& params, const ModelParameters<S>& grads, AdamState<S>& state,
               double lr) {
  for (const auto& [name, g] : grads.tensors()) {
    if (!g->allFinite()) {
      throw std::runtime_error(std::string("adam_step: non-finite gradient in ") + name);
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));

  auto ps = params.tensors();
  const auto gs = grads.tensors();
  auto ms = state.m.tensors();
  auto vs = state.v.tensors();
  if (ps.size() != gs.size() || ps.size() != ms.size() || ps.size() != vs.size()) {
    throw std::invalid_argument("adam_step: tensor sets do not match");
  }
  for (size_t i = 0; i < ps.size(); ++i) {
    Mat<S>& theta = *ps[i].second;
    const Mat<S>& g = *gs[i].second;
    Mat<S>& m = *ms[i].second;
    Mat<S>& v = *vs[i].second;
    if (theta.rows() != g.rows() || theta.cols() != g.cols()) {
      throw std::invalid_argument(std::string("adam_step: shape mismatch in ") + ps[i].first);
    }
    m.array() = S(state.beta1) * m.array() + S(1.0 - state.beta1) * g.array();
    v.array() = S(state.beta2) * v.array() + S(1.0 - state.beta2) * g.array().square();
    theta.array() -= S(lr) * (m.array() / S(bc1)) /
                     ((v.array() / S(bc2)).sqrt() + S(state.eps));
  }
}

}  // namespace multirec
