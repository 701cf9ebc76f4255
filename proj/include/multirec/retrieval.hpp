#pragma once

// Exact maximum-inner-product top-N search over a snapshot of the item
// embedding table. Ordering is total: score descending, then item id
// ascending.

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "multirec/data.hpp"
#include "multirec/parameters.hpp"

namespace multirec {

template <typename S>
struct ScoredItem {
  ItemId id = 0;
  S score = S(0);
};

template <typename S>
struct TopnList {
  std::vector<ScoredItem<S>> items;
  bool complete = true;  // false when fewer than N items were eligible
};

// Per-interest candidate lists, one per interest column.
template <typename S>
struct RetrievalResult {
  std::vector<TopnList<S>> per_interest;
};

// Immutable snapshot of an embedding table for querying.
template <typename S>
class ExactIndex {
 public:
  explicit ExactIndex(const Mat<S>& item_emb) : emb_(item_emb) {
    if (emb_.rows() == 0) throw std::invalid_argument("ExactIndex: empty embedding table");
  }

  int size() const { return static_cast<int>(emb_.rows()); }
  int dim() const { return static_cast<int>(emb_.cols()); }
  const Mat<S>& embeddings() const { return emb_; }

  TopnList<S> topn(const Vec<S>& query, int n,
                   const std::unordered_set<ItemId>* exclude = nullptr) const {
    if (n < 1) throw std::invalid_argument("topn: N must be >= 1");
    if (query.size() != emb_.cols()) throw std::invalid_argument("topn: query dimension mismatch");
    const Vec<S> scores = emb_ * query;

    std::vector<ScoredItem<S>> pool;
    pool.reserve(emb_.rows());
    for (int i = 0; i < size(); ++i) {
      if (exclude && exclude->count(i)) continue;
      pool.push_back({i, scores(i)});
    }
    const auto better = [](const ScoredItem<S>& a, const ScoredItem<S>& b) {
      return a.score > b.score || (a.score == b.score && a.id < b.id);
    };
    TopnList<S> out;
    out.complete = static_cast<int>(pool.size()) >= n;
    const size_t take = std::min<size_t>(n, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + take, pool.end(), better);
    pool.resize(take);
    out.items = std::move(pool);
    return out;
  }

 private:
  Mat<S> emb_;
};

template <typename S>
ExactIndex<S> build_index(const Mat<S>& item_emb) {
  return ExactIndex<S>(item_emb);
}

template <typename S>
TopnList<S> topn(const ExactIndex<S>& index, const Vec<S>& query, int n,
                 const std::unordered_set<ItemId>* exclude = nullptr) {
  return index.topn(query, n, exclude);
}

// One list per interest column of V (d x K). Duplicate items across different
// interests' lists are allowed.
template <typename S>
RetrievalResult<S> retrieve_per_interest(const ExactIndex<S>& index, const Mat<S>& interests,
                                         int n, const std::unordered_set<ItemId>* exclude = nullptr) {
  RetrievalResult<S> out;
  out.per_interest.reserve(interests.cols());
  for (Eigen::Index j = 0; j < interests.cols(); ++j) {
    out.per_interest.push_back(index.topn(interests.col(j), n, exclude));
  }
  return out;
}

}  // namespace multirec
