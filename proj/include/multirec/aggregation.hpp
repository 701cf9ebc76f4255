#pragma once

// Merges K per-interest candidate lists into the final top-N via a greedy
// procedure that trades inner-product accuracy against pairwise category
// diversity through a controllable factor lambda.

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "multirec/extraction.hpp"
#include "multirec/retrieval.hpp"

namespace multirec {

template <typename S>
struct Candidate {
  ItemId id = 0;
  CatId category = 0;
  S f = S(0);  // max inner product over the user's interests
};

struct AggregationConfig {
  double lambda = 0.0;
  int topn = 50;

  void validate() const {
    if (lambda < 0.0) throw std::invalid_argument("AggregationConfig: lambda must be >= 0");
    if (topn < 1) throw std::invalid_argument("AggregationConfig: topn must be >= 1");
  }
};

// f(u, i) = max_k e_i . v_u^(k).
template <typename S>
S f_score(const Mat<S>& interests, const Vec<S>& item_emb) {
  if (interests.cols() < 1) throw std::invalid_argument("f_score: no interest columns");
  return (interests.transpose() * item_emb).maxCoeff();
}

// Category dissimilarity indicator; symmetric.
inline int category_diff(CatId a, CatId b) { return a != b ? 1 : 0; }

template <typename S>
int category_diff(const Candidate<S>& a, const Candidate<S>& b) {
  return category_diff(a.category, b.category);
}

// Q(u, S) = sum_i f(u,i) + lambda * sum_i sum_j g(i,j). The double sum runs
// over ordered pairs, so each unordered distinct-category pair counts twice.
template <typename S>
double value_q(const std::vector<Candidate<S>>& set, double lambda) {
  double f_sum = 0.0;
  int64_t diverse_pairs = 0;
  for (size_t i = 0; i < set.size(); ++i) {
    f_sum += static_cast<double>(set[i].f);
    for (size_t j = 0; j < set.size(); ++j) {
      if (i != j) diverse_pairs += category_diff(set[i], set[j]);
    }
  }
  return f_sum + lambda * static_cast<double>(diverse_pairs);
}

// Collapses duplicate item ids, keeping the maximum f per item. Output sorted
// by item id.
template <typename S>
std::vector<Candidate<S>> dedup_candidates(const std::vector<Candidate<S>>& pool) {
  std::unordered_map<ItemId, Candidate<S>> best;
  for (const auto& c : pool) {
    auto [it, inserted] = best.emplace(c.id, c);
    if (!inserted && c.f > it->second.f) it->second = c;
  }
  std::vector<Candidate<S>> out;
  out.reserve(best.size());
  for (const auto& [id, c] : best) {
    (void)id;
    out.push_back(c);
  }
  std::sort(out.begin(), out.end(),
            [](const Candidate<S>& a, const Candidate<S>& b) { return a.id < b.id; });
  return out;
}

template <typename S>
struct AggregationResult {
  std::vector<Candidate<S>> selected;  // in selection order
  bool complete = true;                // false when the pool ran out before N
};

// Greedy maximization: N times pick argmax over the remaining pool of
// f(u,i) + lambda * sum_{k in S} g(i,k). Ties break by higher f, then lower
// item id. The pool must be deduplicated by item id.
template <typename S>
AggregationResult<S> greedy_aggregate(const std::vector<Candidate<S>>& pool,
                                      const AggregationConfig& cfg) {
  cfg.validate();
  if (pool.empty()) throw std::invalid_argument("greedy_aggregate: empty candidate pool");
  {
    std::unordered_set<ItemId> ids;
    for (const auto& c : pool) {
      if (!ids.insert(c.id).second) {
        throw std::invalid_argument("greedy_aggregate: duplicate item id in pool");
      }
    }
  }

  const int m = static_cast<int>(pool.size());
  std::vector<char> picked(m, 0);
  std::vector<int> diverse_count(m, 0);  // selected items with a different category
  AggregationResult<S> result;
  result.selected.reserve(std::min(cfg.topn, m));

  for (int step = 0; step < cfg.topn; ++step) {
    int best = -1;
    double best_gain = 0.0;
    for (int i = 0; i < m; ++i) {
      if (picked[i]) continue;
      const double gain = static_cast<double>(pool[i].f) + cfg.lambda * diverse_count[i];
      if (best < 0 || gain > best_gain ||
          (gain == best_gain &&
           (pool[i].f > pool[best].f ||
            (pool[i].f == pool[best].f && pool[i].id < pool[best].id)))) {
        best = i;
        best_gain = gain;
      }
    }
    if (best < 0) break;  // pool exhausted
    picked[best] = 1;
    result.selected.push_back(pool[best]);
    for (int i = 0; i < m; ++i) {
      if (!picked[i] && category_diff(pool[i], pool[best])) ++diverse_count[i];
    }
  }
  result.complete = static_cast<int>(result.selected.size()) == cfg.topn;
  return result;
}

// Full serving path: extract interests from the observed sequence, retrieve
// top-N per interest, merge the union with exact f scores, and aggregate.
// Items without a known category get a unique sentinel category.
template <typename S>
std::vector<Candidate<S>> recommend(const ModelParameters<S>& params, const ModelConfig& cfg,
                                    const ExactIndex<S>& index, const std::vector<ItemId>& observed,
                                    const std::vector<CatId>& item_category,
                                    const AggregationConfig& agg,
                                    const std::unordered_set<ItemId>* exclude = nullptr) {
  agg.validate();
  const Mat<S> interests = extract_interests<S>(params, cfg, observed);
  const RetrievalResult<S> retrieved = retrieve_per_interest<S>(index, interests, agg.topn, exclude);

  std::set<ItemId> union_ids;
  for (const auto& list : retrieved.per_interest) {
    for (const auto& it : list.items) union_ids.insert(it.id);
  }
  std::vector<Candidate<S>> pool;
  pool.reserve(union_ids.size());
  for (const ItemId id : union_ids) {
    Candidate<S> c;
    c.id = id;
    c.f = f_score<S>(interests, Vec<S>(index.embeddings().row(id).transpose()));
    c.category = (id < static_cast<ItemId>(item_category.size()) && item_category[id] >= 0)
                     ? item_category[id]
                     : static_cast<CatId>(-1 - id);
    pool.push_back(c);
  }
  return greedy_aggregate<S>(pool, agg).selected;
}

}  // namespace multirec
