#pragma once

// Behavior-log ingestion, the strong-generalization user split, training-sample
// and evaluation-case generation, and a clustered synthetic log generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "multirec/rng.hpp"

namespace multirec {

using UserId = int32_t;  // dense, 0-based
using ItemId = int32_t;  // dense, 0-based
using CatId = int32_t;   // dense, 0-based

// One raw behavior record as read from disk.
struct Interaction {
  int64_t user = 0;
  int64_t item = 0;
  int64_t category = 0;
  int64_t timestamp = 0;
};

enum class LogFormat { kGenericCsv, kTaobao, kAmazon };

inline LogFormat format_from_string(const std::string& s) {
  if (s == "generic-csv" || s == "generic" || s == "csv") return LogFormat::kGenericCsv;
  if (s == "taobao") return LogFormat::kTaobao;
  if (s == "amazon") return LogFormat::kAmazon;
  throw std::invalid_argument("unknown log format '" + s + "'");
}

// One user's time-ordered click sequence in dense ids.
struct UserSequence {
  UserId user = 0;
  std::vector<ItemId> items;
  std::vector<CatId> categories;  // parallel to items
  int length() const { return static_cast<int>(items.size()); }
};

// Filtered, densely remapped behavior log. users[i].user == i.
struct InteractionLog {
  std::vector<UserSequence> users;
  std::vector<int64_t> user_vocab;      // dense -> raw
  std::vector<int64_t> item_vocab;      // dense -> raw
  std::vector<int64_t> category_vocab;  // dense -> raw
  std::vector<CatId> item_category;     // dense item -> dense category (first occurrence)

  int n_users() const { return static_cast<int>(users.size()); }
  int n_items() const { return static_cast<int>(item_vocab.size()); }
  int n_categories() const { return static_cast<int>(category_vocab.size()); }
};

struct DatasetSplit {
  std::vector<UserId> train, valid, test;  // each sorted ascending, pairwise disjoint
};

struct TrainingSample {
  std::vector<ItemId> history;  // at most n_max items, most recent last
  ItemId target = 0;
};

struct EvalCase {
  UserId user = 0;
  std::vector<ItemId> observed;  // first 80% of the sequence, truncated to its last n_max
  std::set<ItemId> held_out;     // remaining 20%, deduplicated
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline int64_t parse_i64(const std::string& s, const std::string& path, size_t line_no) {
  try {
    size_t used = 0;
    const int64_t v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                             ": malformed integer field '" + s + "'");
  }
}

}  // namespace detail

// Reads raw interactions. taobao rows are filtered to behavior type "pv".
inline std::vector<Interaction> parse_log_file(const std::string& path, LogFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open behavior log '" + path + "'");
  std::vector<Interaction> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_line(line);
    Interaction r;
    switch (format) {
      case LogFormat::kGenericCsv: {
        if (fields.size() != 4) {
          throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                   ": expected 4 fields user,item,category,timestamp");
        }
        r.user = detail::parse_i64(fields[0], path, line_no);
        r.item = detail::parse_i64(fields[1], path, line_no);
        r.category = detail::parse_i64(fields[2], path, line_no);
        r.timestamp = detail::parse_i64(fields[3], path, line_no);
        break;
      }
      case LogFormat::kTaobao: {
        if (fields.size() != 5) {
          throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                   ": expected 5 fields user,item,category,behavior,timestamp");
        }
        if (fields[3] != "pv") continue;  // clicks only
        r.user = detail::parse_i64(fields[0], path, line_no);
        r.item = detail::parse_i64(fields[1], path, line_no);
        r.category = detail::parse_i64(fields[2], path, line_no);
        r.timestamp = detail::parse_i64(fields[4], path, line_no);
        break;
      }
      case LogFormat::kAmazon: {
        if (fields.size() != 3 && fields.size() != 4) {
          throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                   ": expected user,item,timestamp[,category]");
        }
        r.user = detail::parse_i64(fields[0], path, line_no);
        r.item = detail::parse_i64(fields[1], path, line_no);
        r.timestamp = detail::parse_i64(fields[2], path, line_no);
        r.category = fields.size() == 4 ? detail::parse_i64(fields[3], path, line_no) : 0;
        break;
      }
    }
    if (r.user < 0 || r.item < 0 || r.category < 0) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": negative identifier");
    }
    rows.push_back(r);
  }
  return rows;
}

// Groups per user, sorts by time (stable on ties), removes users and items
// with fewer than 5 interactions until the filter reaches a fixed point, and
// remaps all ids to dense 0-based indices (ascending raw id order).
inline InteractionLog finalize_log(const std::vector<Interaction>& rows) {
  std::map<int64_t, std::vector<Interaction>> by_user;
  for (const auto& r : rows) by_user[r.user].push_back(r);
  for (auto& [u, seq] : by_user) {
    (void)u;
    std::stable_sort(seq.begin(), seq.end(),
                     [](const Interaction& a, const Interaction& b) {
                       return a.timestamp < b.timestamp;
                     });
  }

  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<int64_t, int64_t> item_count;
    for (const auto& [u, seq] : by_user) {
      (void)u;
      for (const auto& r : seq) ++item_count[r.item];
    }
    for (auto it = by_user.begin(); it != by_user.end();) {
      auto& seq = it->second;
      const auto new_end = std::remove_if(seq.begin(), seq.end(), [&](const Interaction& r) {
        return item_count.at(r.item) < 5;
      });
      if (new_end != seq.end()) {
        seq.erase(new_end, seq.end());
        changed = true;
      }
      if (static_cast<int>(seq.size()) < 5) {
        it = by_user.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
  }
  if (by_user.empty()) {
    throw std::runtime_error("behavior log is empty after the >=5 interaction filter");
  }

  std::set<int64_t> raw_items, raw_cats;
  for (const auto& [u, seq] : by_user) {
    (void)u;
    for (const auto& r : seq) {
      raw_items.insert(r.item);
      raw_cats.insert(r.category);
    }
  }

  InteractionLog log;
  log.user_vocab.reserve(by_user.size());
  for (const auto& [u, seq] : by_user) {
    (void)seq;
    log.user_vocab.push_back(u);
  }
  log.item_vocab.assign(raw_items.begin(), raw_items.end());
  log.category_vocab.assign(raw_cats.begin(), raw_cats.end());

  std::unordered_map<int64_t, ItemId> item_of;
  std::unordered_map<int64_t, CatId> cat_of;
  for (size_t i = 0; i < log.item_vocab.size(); ++i) item_of[log.item_vocab[i]] = static_cast<ItemId>(i);
  for (size_t i = 0; i < log.category_vocab.size(); ++i) cat_of[log.category_vocab[i]] = static_cast<CatId>(i);

  log.item_category.assign(log.item_vocab.size(), -1);
  log.users.reserve(by_user.size());
  UserId next_uid = 0;
  for (const auto& [u, seq] : by_user) {
    (void)u;
    UserSequence us;
    us.user = next_uid++;
    us.items.reserve(seq.size());
    us.categories.reserve(seq.size());
    for (const auto& r : seq) {
      const ItemId item = item_of.at(r.item);
      const CatId cat = cat_of.at(r.category);
      us.items.push_back(item);
      us.categories.push_back(cat);
      if (log.item_category[item] < 0) log.item_category[item] = cat;
    }
    log.users.push_back(std::move(us));
  }
  return log;
}

inline InteractionLog load_log(const std::string& path, LogFormat format) {
  return finalize_log(parse_log_file(path, format));
}

// Deterministic shuffle by seed, then an 80/10/10 partition (sizes rounded to
// the nearest user). Identical inputs and seed give identical splits.
inline DatasetSplit split_users(const InteractionLog& log, uint64_t seed) {
  const int n = log.n_users();
  if (n == 0) throw std::invalid_argument("split_users: empty log");
  std::vector<UserId> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  Rng rng(seed);
  rng.shuffle(ids);

  auto n_train = static_cast<int64_t>(std::llround(0.8 * n));
  auto n_valid = static_cast<int64_t>(std::llround(0.1 * n));
  if (n_train + n_valid > n) n_valid = n - n_train;

  DatasetSplit split;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.valid.assign(ids.begin() + n_train, ids.begin() + n_train + n_valid);
  split.test.assign(ids.begin() + n_train + n_valid, ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.valid.begin(), split.valid.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

// history = the min(k, n_max) items immediately before position k, target = item at k.
inline TrainingSample make_training_sample(const UserSequence& seq, int k, int n_max) {
  if (k < 1 || k >= seq.length()) throw std::invalid_argument("make_training_sample: bad position");
  TrainingSample s;
  const int start = std::max(0, k - n_max);
  s.history.assign(seq.items.begin() + start, seq.items.begin() + k);
  s.target = seq.items[k];
  return s;
}

// Infinite deterministic stream of training batches. Each batch draws
// batch_size users uniformly (with replacement) from the training partition;
// the target position within a sequence is uniform over [1, len-1].
class TrainingSampler {
 public:
  TrainingSampler(const InteractionLog& log, const DatasetSplit& split, int n_max,
                  int batch_size, uint64_t seed)
      : log_(&log), train_(split.train), n_max_(n_max), batch_size_(batch_size), rng_(seed) {
    if (train_.empty()) throw std::invalid_argument("TrainingSampler: no training users");
    if (n_max < 1 || batch_size < 1) throw std::invalid_argument("TrainingSampler: bad sizes");
    for (const UserId u : train_) {
      if (log.users.at(u).length() < 2) {
        throw std::logic_error("TrainingSampler: user with <2 interactions survived the filter");
      }
    }
  }

  std::vector<TrainingSample> next_batch() {
    std::vector<TrainingSample> batch;
    batch.reserve(batch_size_);
    for (int b = 0; b < batch_size_; ++b) {
      const UserId u = train_[rng_.below(train_.size())];
      const UserSequence& seq = log_->users[u];
      const int k = 1 + static_cast<int>(rng_.below(static_cast<uint64_t>(seq.length() - 1)));
      batch.push_back(make_training_sample(seq, k, n_max_));
    }
    return batch;
  }

 private:
  const InteractionLog* log_;
  std::vector<UserId> train_;
  int n_max_;
  int batch_size_;
  Rng rng_;
};

// Splits each user's sequence at floor(0.8 * len): the first part (truncated
// to its last n_max items) infers interests, the rest is the held-out set.
inline std::vector<EvalCase> make_eval_cases(const InteractionLog& log,
                                             const std::vector<UserId>& users, int n_max) {
  std::vector<EvalCase> cases;
  cases.reserve(users.size());
  for (const UserId u : users) {
    const UserSequence& seq = log.users.at(u);
    const int len = seq.length();
    const int split = len * 4 / 5;  // floor(0.8 * len), exact in integers
    if (split < 1 || split >= len) {
      throw std::logic_error("make_eval_cases: degenerate sequence survived the filter");
    }
    EvalCase c;
    c.user = u;
    const int start = std::max(0, split - n_max);
    c.observed.assign(seq.items.begin() + start, seq.items.begin() + split);
    c.held_out.insert(seq.items.begin() + split, seq.items.end());
    cases.push_back(std::move(c));
  }
  return cases;
}

// --- synthetic data -------------------------------------------------------

struct SyntheticSpec {
  int n_users = 1000;
  int n_items = 500;
  int n_clusters = 5;
  int interests_min = 2;  // clusters per user, inclusive range
  int interests_max = 4;
  int len_min = 20;  // events per user, inclusive range
  int len_max = 50;
  uint64_t seed = 1;

  void validate() const {
    if (n_users < 1 || n_items < 1) throw std::invalid_argument("synthetic: sizes must be >= 1");
    if (n_clusters < 2) throw std::invalid_argument("synthetic: need n_clusters >= 2");
    if (n_items < n_clusters) throw std::invalid_argument("synthetic: need n_items >= n_clusters");
    if (interests_min < 1 || interests_min > interests_max || interests_max > n_clusters) {
      throw std::invalid_argument("synthetic: invalid interests range");
    }
    if (len_min < 1 || len_min > len_max) throw std::invalid_argument("synthetic: invalid length range");
  }
};

// Items are partitioned into contiguous near-even blocks; cluster c owns
// [c*n_items/n_clusters, (c+1)*n_items/n_clusters).
inline int synthetic_cluster_of(int item, int n_items, int n_clusters) {
  for (int c = 0; c < n_clusters; ++c) {
    const int64_t hi = static_cast<int64_t>(c + 1) * n_items / n_clusters;
    if (item < hi) return c;
  }
  return n_clusters - 1;
}

// Raw clustered interactions: each user draws a set of clusters, then every
// event picks a cluster uniformly from that set and an item uniformly inside
// it. The cluster id doubles as the category id; timestamps are event indices.
inline std::vector<Interaction> synthetic_interactions(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::vector<Interaction> rows;
  for (int u = 0; u < spec.n_users; ++u) {
    const auto m = rng.range(spec.interests_min, spec.interests_max);
    const auto clusters = rng.sample_distinct(spec.n_clusters, m);
    const auto len = rng.range(spec.len_min, spec.len_max);
    for (int64_t t = 0; t < len; ++t) {
      const int c = static_cast<int>(clusters[rng.below(clusters.size())]);
      const int64_t lo = static_cast<int64_t>(c) * spec.n_items / spec.n_clusters;
      const int64_t hi = static_cast<int64_t>(c + 1) * spec.n_items / spec.n_clusters;
      const int64_t item = lo + static_cast<int64_t>(rng.below(static_cast<uint64_t>(hi - lo)));
      rows.push_back(Interaction{u, item, c, t});
    }
  }
  return rows;
}

inline InteractionLog generate_synthetic(const SyntheticSpec& spec) {
  return finalize_log(synthetic_interactions(spec));
}

// --- on-disk side files ----------------------------------------------------

// Two-column vocabulary file: raw_id,dense_id.
inline void write_vocab(const std::string& path, const std::vector<int64_t>& dense_to_raw) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file '" + path + "'");
  for (size_t i = 0; i < dense_to_raw.size(); ++i) {
    out << dense_to_raw[i] << ',' << i << '\n';
  }
}

inline std::vector<int64_t> read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file '" + path + "'");
  std::vector<int64_t> dense_to_raw;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_line(line);
    if (fields.size() != 2) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected raw_id,dense_id");
    }
    const int64_t raw = detail::parse_i64(fields[0], path, line_no);
    const int64_t dense = detail::parse_i64(fields[1], path, line_no);
    if (dense != static_cast<int64_t>(dense_to_raw.size())) {
      throw std::runtime_error(path + ": dense ids must be contiguous from 0");
    }
    dense_to_raw.push_back(raw);
  }
  return dense_to_raw;
}

// raw_item_id,raw_category_id per line, in dense item order.
inline void write_item_categories(const std::string& path, const InteractionLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write item category file '" + path + "'");
  for (int i = 0; i < log.n_items(); ++i) {
    out << log.item_vocab[i] << ',' << log.category_vocab.at(log.item_category[i]) << '\n';
  }
}

inline void write_user_list(const std::string& path, const std::vector<UserId>& users,
                            const std::vector<int64_t>& user_vocab) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write user list '" + path + "'");
  for (const UserId u : users) out << user_vocab.at(u) << '\n';
}

inline void write_generic_csv(const std::string& path, const std::vector<Interaction>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write behavior log '" + path + "'");
  for (const auto& r : rows) {
    out << r.user << ',' << r.item << ',' << r.category << ',' << r.timestamp << '\n';
  }
}

}  // namespace multirec
