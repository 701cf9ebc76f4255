#pragma once

// Multi-interest extraction: maps a (possibly padded) item sequence to a d x K
// interest matrix, either by capsule dynamic routing or by structured
// self-attention. Forward passes can record caches; the *_backward functions
// backpropagate through the full unrolled computation.

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

#include "multirec/data.hpp"
#include "multirec/parameters.hpp"

namespace multirec {

// Padded integer sequences. Padding slots hold item id 0 and mask 0; they are
// never read by the extractors.
struct SequenceBatch {
  Eigen::MatrixXi ids;                                            // B x n_max
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;    // B x n_max, 1 = real item

  int rows() const { return static_cast<int>(ids.rows()); }
  int slots() const { return static_cast<int>(ids.cols()); }

  std::vector<int> unmasked_slots(int row) const {
    std::vector<int> out;
    for (int s = 0; s < slots(); ++s) {
      if (mask(row, s)) out.push_back(s);
    }
    return out;
  }

  // Histories longer than n_max keep their most recent n_max items.
  static SequenceBatch from_histories(const std::vector<std::vector<ItemId>>& histories, int n_max) {
    const int b = static_cast<int>(histories.size());
    SequenceBatch batch;
    batch.ids = Eigen::MatrixXi::Zero(b, n_max);
    batch.mask = Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(b, n_max);
    for (int r = 0; r < b; ++r) {
      const auto& h = histories[r];
      if (h.empty()) throw std::invalid_argument("SequenceBatch: empty history");
      const int len = std::min<int>(static_cast<int>(h.size()), n_max);
      const int start = static_cast<int>(h.size()) - len;
      for (int s = 0; s < len; ++s) {
        batch.ids(r, s) = h[start + s];
        batch.mask(r, s) = 1;
      }
    }
    return batch;
  }
};

// squash(s) = (|s|^2 / (1 + |s|^2)) * s/|s|. Zero input maps to zero.
template <typename S>
Vec<S> squash(const Vec<S>& s) {
  const S n2 = s.squaredNorm();
  const S nrm = std::sqrt(n2);
  if (nrm < S(1e-12)) return Vec<S>::Zero(s.size());
  return (nrm / (S(1) + n2)) * s;
}

// d(squash)/ds applied to an upstream gradient.
template <typename S>
Vec<S> squash_backward(const Vec<S>& s, const Vec<S>& upstream) {
  const S n2 = s.squaredNorm();
  const S nrm = std::sqrt(n2);
  if (nrm < S(1e-12)) return Vec<S>::Zero(s.size());
  const S f = nrm / (S(1) + n2);
  const S fp = (S(1) - n2) / (S(2) * nrm * (S(1) + n2) * (S(1) + n2));
  return f * upstream + (S(2) * fp * s.dot(upstream)) * s;
}

// Numerically stable softmax of one logit row.
template <typename S>
Vec<S> routing_softmax(const Vec<S>& logits) {
  const S m = logits.maxCoeff();
  Vec<S> e = (logits.array() - m).exp();
  return e / e.sum();
}

// Given y = softmax(x) and dL/dy, returns dL/dx.
template <typename S>
Vec<S> softmax_backward(const Vec<S>& y, const Vec<S>& dy) {
  const S dot = y.dot(dy);
  return (y.array() * (dy.array() - dot)).matrix();
}

// --- dynamic routing --------------------------------------------------------

template <typename S>
struct DrCache {
  std::vector<int> slots;          // unmasked slot indices, ascending
  std::vector<Mat<S>> ehat;        // per unmasked position: d x K prediction vectors
  std::vector<Mat<S>> couplings;   // per iteration: n x K
  std::vector<Mat<S>> s_pre;       // per iteration: d x K, pre-squash
  std::vector<Mat<S>> v_out;       // per iteration: d x K
};

// One routing pass for one batch row (Algorithm: b=0; r times {softmax over
// interests per position; weighted sum of predictions; squash; agreement
// update}). Masked positions are excluded from every sum.
template <typename S>
Mat<S> extract_dr_one(const ModelParameters<S>& params, const SequenceBatch& batch, int row,
                      int k, int r, DrCache<S>* cache = nullptr) {
  if (r < 1) throw std::invalid_argument("extract_dr: need at least one routing iteration");
  const std::vector<int> slots = batch.unmasked_slots(row);
  const int n = static_cast<int>(slots.size());
  if (n == 0) throw std::invalid_argument("extract_dr: fully masked sequence");
  const int d = params.d;

  std::vector<Mat<S>> ehat(n);
  for (int i = 0; i < n; ++i) {
    const Vec<S> e = params.item_emb.row(batch.ids(row, slots[i])).transpose();
    ehat[i].resize(d, k);
    for (int j = 0; j < k; ++j) {
      ehat[i].col(j) = params.route_block(slots[i], j) * e;
    }
  }

  Mat<S> b = Mat<S>::Zero(n, k);
  Mat<S> v(d, k);
  for (int iter = 0; iter < r; ++iter) {
    Mat<S> c(n, k);
    for (int i = 0; i < n; ++i) {
      c.row(i) = routing_softmax<S>(b.row(i).transpose()).transpose();
    }
    Mat<S> s = Mat<S>::Zero(d, k);
    for (int j = 0; j < k; ++j) {
      for (int i = 0; i < n; ++i) s.col(j) += c(i, j) * ehat[i].col(j);
    }
    for (int j = 0; j < k; ++j) v.col(j) = squash<S>(s.col(j));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) b(i, j) += v.col(j).dot(ehat[i].col(j));
    }
    if (cache) {
      cache->couplings.push_back(c);
      cache->s_pre.push_back(s);
      cache->v_out.push_back(v);
    }
  }
  if (cache) {
    cache->slots = slots;
    cache->ehat = std::move(ehat);
  }
  return v;
}

// Backpropagates d(loss)/d(V) through all unrolled routing iterations,
// including the coupling softmaxes, accumulating scale * gradient into grads.
template <typename S>
void dr_backward(const ModelParameters<S>& params, const SequenceBatch& batch, int row,
                 const DrCache<S>& cache, const Mat<S>& d_v_out, S scale,
                 ModelParameters<S>& grads) {
  const int n = static_cast<int>(cache.slots.size());
  const int r = static_cast<int>(cache.couplings.size());
  const int d = params.d;
  const int k = params.k;

  std::vector<Mat<S>> d_ehat(n, Mat<S>::Zero(d, k));
  Mat<S> d_b = Mat<S>::Zero(n, k);  // grad w.r.t. logits after iteration t

  for (int t = r - 1; t >= 0; --t) {
    // v_t feeds the output (t == r-1) and, via the agreement update, the
    // logits consumed by iteration t+1.
    Mat<S> d_v = (t == r - 1) ? d_v_out : Mat<S>::Zero(d, k);
    const Mat<S>& v_t = cache.v_out[t];
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) {
        const S g = d_b(i, j);
        if (g != S(0)) {
          d_v.col(j) += g * cache.ehat[i].col(j);
          d_ehat[i].col(j) += g * v_t.col(j);
        }
      }
    }

    Mat<S> d_s(d, k);
    for (int j = 0; j < k; ++j) {
      d_s.col(j) = squash_backward<S>(cache.s_pre[t].col(j), d_v.col(j));
    }

    const Mat<S>& c_t = cache.couplings[t];
    Mat<S> d_c(n, k);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) {
        d_c(i, j) = d_s.col(j).dot(cache.ehat[i].col(j));
        d_ehat[i].col(j) += c_t(i, j) * d_s.col(j);
      }
    }

    Mat<S> d_b_prev(n, k);
    for (int i = 0; i < n; ++i) {
      d_b_prev.row(i) =
          softmax_backward<S>(c_t.row(i).transpose(), d_c.row(i).transpose()).transpose() +
          d_b.row(i);
    }
    d_b = std::move(d_b_prev);
  }
  // initial logits are the constant 0; d_b is discarded

  for (int i = 0; i < n; ++i) {
    const int slot = cache.slots[i];
    const ItemId item = batch.ids(row, slot);
    const Vec<S> e = params.item_emb.row(item).transpose();
    Vec<S> d_e = Vec<S>::Zero(d);
    for (int j = 0; j < k; ++j) {
      grads.route_block(slot, j) += scale * d_ehat[i].col(j) * e.transpose();
      d_e += params.route_block(slot, j).transpose() * d_ehat[i].col(j);
    }
    grads.item_emb.row(item) += scale * d_e.transpose();
  }
}

// --- structured self-attention ----------------------------------------------

template <typename S>
struct SaCache {
  std::vector<int> slots;  // unmasked slot indices
  Mat<S> h;                // d x n, item embedding + positional embedding
  Mat<S> tanh_x;           // d_a x n
  Mat<S> attn;             // n x K, column = softmax over positions
};

// H = item_emb[id] + pos_emb[slot]; A = softmax(W2^T tanh(W1 H)) per interest
// over positions (masked positions carry -inf logits, i.e. are excluded);
// V = H A.
template <typename S>
Mat<S> extract_sa_one(const ModelParameters<S>& params, const SequenceBatch& batch, int row,
                      int k, SaCache<S>* cache = nullptr) {
  const std::vector<int> slots = batch.unmasked_slots(row);
  const int n = static_cast<int>(slots.size());
  if (n == 0) throw std::invalid_argument("extract_sa: fully masked sequence");
  const int d = params.d;

  Mat<S> h(d, n);
  for (int i = 0; i < n; ++i) {
    h.col(i) = params.item_emb.row(batch.ids(row, slots[i])).transpose() +
               params.pos_emb.row(slots[i]).transpose();
  }
  Mat<S> tanh_x = (params.w1 * h).array().tanh();
  Mat<S> z = params.w2.transpose() * tanh_x;  // K x n
  Mat<S> a(n, k);
  for (int j = 0; j < k; ++j) {
    a.col(j) = routing_softmax<S>(z.row(j).transpose());
  }
  Mat<S> v = h * a;
  if (cache) {
    cache->slots = slots;
    cache->h = std::move(h);
    cache->tanh_x = std::move(tanh_x);
    cache->attn = std::move(a);
  }
  return v;
}

template <typename S>
void sa_backward(const ModelParameters<S>& params, const SequenceBatch& batch, int row,
                 const SaCache<S>& cache, const Mat<S>& d_v, S scale, ModelParameters<S>& grads) {
  const int n = static_cast<int>(cache.slots.size());
  const int k = params.k;

  Mat<S> d_h = d_v * cache.attn.transpose();        // d x n
  const Mat<S> d_a = cache.h.transpose() * d_v;     // n x K
  Mat<S> d_z(k, n);
  for (int j = 0; j < k; ++j) {
    d_z.row(j) = softmax_backward<S>(cache.attn.col(j), d_a.col(j)).transpose();
  }
  const Mat<S> d_tanh = params.w2 * d_z;  // d_a x n
  grads.w2 += scale * cache.tanh_x * d_z.transpose();
  const Mat<S> d_x =
      (d_tanh.array() * (S(1) - cache.tanh_x.array().square())).matrix();  // d_a x n
  grads.w1 += scale * d_x * cache.h.transpose();
  d_h += params.w1.transpose() * d_x;

  for (int i = 0; i < n; ++i) {
    const int slot = cache.slots[i];
    grads.item_emb.row(batch.ids(row, slot)) += scale * d_h.col(i).transpose();
    grads.pos_emb.row(slot) += scale * d_h.col(i).transpose();
  }
}

// --- dispatch ----------------------------------------------------------------

template <typename S>
std::vector<Mat<S>> extract_dr(const ModelParameters<S>& params, const SequenceBatch& batch,
                               int k, int r) {
  std::vector<Mat<S>> out;
  out.reserve(batch.rows());
  for (int row = 0; row < batch.rows(); ++row) {
    out.push_back(extract_dr_one<S>(params, batch, row, k, r));
  }
  return out;
}

template <typename S>
std::vector<Mat<S>> extract_sa(const ModelParameters<S>& params, const SequenceBatch& batch, int k) {
  std::vector<Mat<S>> out;
  out.reserve(batch.rows());
  for (int row = 0; row < batch.rows(); ++row) {
    out.push_back(extract_sa_one<S>(params, batch, row, k));
  }
  return out;
}

template <typename S>
Mat<S> extract_one(const ModelParameters<S>& params, const ModelConfig& cfg, const SequenceBatch& batch,
                   int row) {
  switch (cfg.extractor) {
    case Extractor::kDynamicRouting:
      return extract_dr_one<S>(params, batch, row, cfg.k, cfg.routing_iters);
    case Extractor::kSelfAttentive:
      return extract_sa_one<S>(params, batch, row, cfg.k);
  }
  throw std::invalid_argument("extract: unknown extractor");
}

// Batched interest extraction: one d x K matrix per batch row.
template <typename S>
std::vector<Mat<S>> extract(const ModelParameters<S>& params, const ModelConfig& cfg,
                            const SequenceBatch& batch) {
  switch (cfg.extractor) {
    case Extractor::kDynamicRouting:
      return extract_dr<S>(params, batch, cfg.k, cfg.routing_iters);
    case Extractor::kSelfAttentive:
      return extract_sa<S>(params, batch, cfg.k);
  }
  throw std::invalid_argument("extract: unknown extractor");
}

// Interests for a single raw history (most recent n_max items are used).
template <typename S>
Mat<S> extract_interests(const ModelParameters<S>& params, const ModelConfig& cfg,
                         const std::vector<ItemId>& history) {
  const SequenceBatch batch = SequenceBatch::from_histories({history}, cfg.n_max);
  return extract_one<S>(params, cfg, batch, 0);
}

}  // namespace multirec
