#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace multirec {

// Which multi-interest extractor the model uses.
enum class Extractor { kDynamicRouting, kSelfAttentive };

inline std::string to_string(Extractor e) {
  return e == Extractor::kDynamicRouting ? "dr" : "sa";
}

inline Extractor extractor_from_string(const std::string& s) {
  if (s == "dr" || s == "DR") return Extractor::kDynamicRouting;
  if (s == "sa" || s == "SA") return Extractor::kSelfAttentive;
  throw std::invalid_argument("unknown extractor '" + s + "' (expected dr or sa)");
}

// Model hyperparameters. Defaults follow the public-dataset configuration:
// d=64, K=4, 3 routing iterations, 10 sampled negatives, Adam lr=0.001.
struct ModelConfig {
  int d = 64;            // embedding dimension
  int k = 4;             // number of interest embeddings
  int routing_iters = 3; // dynamic routing iterations
  int d_a = 0;           // attention hidden width; 0 means "use d"
  int n_max = 20;        // maximum sequence length
  int n_items = 0;       // vocabulary size, set from the dataset
  Extractor extractor = Extractor::kSelfAttentive;
  int n_negatives = 10;  // sampled-softmax negatives per batch
  double lr = 0.001;
  int batch_size = 128;
  uint64_t seed = 42;
  // When true, negative sampling also redraws items present in the sample's
  // own history, not just the target.
  bool exclude_history_negatives = false;

  int attention_width() const { return d_a > 0 ? d_a : d; }

  void validate() const {
    if (d < 1 || k < 1 || routing_iters < 1 || n_max < 1 || n_items < 1 ||
        n_negatives < 1 || batch_size < 1) {
      throw std::invalid_argument("ModelConfig: all dimensions and counts must be >= 1");
    }
    if (d_a < 0) throw std::invalid_argument("ModelConfig: d_a must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("ModelConfig: lr must be > 0");
    if (n_negatives >= n_items) {
      throw std::invalid_argument("ModelConfig: n_negatives must be < n_items");
    }
  }
};

}  // namespace multirec
