#pragma once

// Binary checkpoint: magic "CMRC", a u32 format version, the model config,
// then each tensor as (name length, name bytes, rank, dims, f32 row-major
// data). Little-endian throughout.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "multirec/parameters.hpp"

namespace multirec {

inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
  put_u32(out, static_cast<uint32_t>(v));
  put_u32(out, static_cast<uint32_t>(v >> 32));
}

inline void put_f64(std::ostream& out, double v) {
  uint64_t bits = 0;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline void put_f32(std::ostream& out, float v) {
  uint32_t bits = 0;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: unexpected end of file");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline uint64_t get_u64(std::istream& in) {
  const uint64_t lo = get_u32(in);
  const uint64_t hi = get_u32(in);
  return lo | hi << 32;
}

inline double get_f64(std::istream& in) {
  const uint64_t bits = get_u64(in);
  double v = 0;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline float get_f32(std::istream& in) {
  const uint32_t bits = get_u32(in);
  float v = 0;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void put_tensor(std::ostream& out, const char* name, const Matf& m,
                       const std::vector<uint32_t>& dims) {
  const std::string n(name);
  put_u32(out, static_cast<uint32_t>(n.size()));
  out.write(n.data(), static_cast<std::streamsize>(n.size()));
  put_u32(out, static_cast<uint32_t>(dims.size()));
  uint64_t total = 1;
  for (const uint32_t d : dims) {
    put_u32(out, d);
    total *= d;
  }
  if (total != static_cast<uint64_t>(m.size())) {
    throw std::logic_error("checkpoint: dims do not match tensor size");
  }
  // row-major over the 2-D storage; rank-4 w_route blocks are laid out so
  // this matches [p][j][row][col] order
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f32(out, m(r, c));
  }
}

inline Matf get_tensor(std::istream& in, const std::string& expect_name,
                       const std::vector<uint32_t>& expect_dims, Eigen::Index rows,
                       Eigen::Index cols) {
  const uint32_t name_len = get_u32(in);
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  if (!in || name != expect_name) {
    throw std::runtime_error("checkpoint: expected tensor '" + expect_name + "', found '" + name + "'");
  }
  const uint32_t rank = get_u32(in);
  if (rank != expect_dims.size()) {
    throw std::runtime_error("checkpoint: rank mismatch for tensor '" + name + "'");
  }
  for (const uint32_t want : expect_dims) {
    if (get_u32(in) != want) {
      throw std::runtime_error("checkpoint: shape mismatch for tensor '" + name + "'");
    }
  }
  Matf m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_f32(in);
  }
  if (!in) throw std::runtime_error("checkpoint: truncated tensor data for '" + name + "'");
  return m;
}

}  // namespace detail

struct Checkpoint {
  ModelParameters<float> params;
  ModelConfig config;
  uint64_t trained_steps = 0;
};

inline void save_checkpoint(const ModelParameters<float>& params, const ModelConfig& cfg,
                            uint64_t trained_steps, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write("CMRC", 4);
  detail::put_u32(out, kCheckpointVersion);

  detail::put_u32(out, static_cast<uint32_t>(cfg.d));
  detail::put_u32(out, static_cast<uint32_t>(cfg.k));
  detail::put_u32(out, static_cast<uint32_t>(cfg.routing_iters));
  detail::put_u32(out, static_cast<uint32_t>(cfg.d_a));
  detail::put_u32(out, static_cast<uint32_t>(cfg.n_max));
  detail::put_u32(out, static_cast<uint32_t>(cfg.n_items));
  detail::put_u32(out, cfg.extractor == Extractor::kDynamicRouting ? 0u : 1u);
  detail::put_u32(out, static_cast<uint32_t>(cfg.n_negatives));
  detail::put_f64(out, cfg.lr);
  detail::put_u32(out, static_cast<uint32_t>(cfg.batch_size));
  detail::put_u64(out, cfg.seed);
  detail::put_u32(out, cfg.exclude_history_negatives ? 1u : 0u);
  detail::put_u64(out, trained_steps);

  const auto u = [](int v) { return static_cast<uint32_t>(v); };
  uint32_t count = 1;
  if (cfg.extractor == Extractor::kSelfAttentive) count += 3;
  if (cfg.extractor == Extractor::kDynamicRouting) count += 1;
  detail::put_u32(out, count);

  detail::put_tensor(out, "item_emb", params.item_emb, {u(cfg.n_items), u(cfg.d)});
  if (cfg.extractor == Extractor::kSelfAttentive) {
    detail::put_tensor(out, "pos_emb", params.pos_emb, {u(cfg.n_max), u(cfg.d)});
    detail::put_tensor(out, "w1", params.w1, {u(cfg.attention_width()), u(cfg.d)});
    detail::put_tensor(out, "w2", params.w2, {u(cfg.attention_width()), u(cfg.k)});
  } else {
    detail::put_tensor(out, "w_route", params.w_route, {u(cfg.n_max), u(cfg.k), u(cfg.d), u(cfg.d)});
  }
  if (!out) throw std::runtime_error("write error on checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CMRC", 4) != 0) {
    throw std::runtime_error("checkpoint '" + path + "': bad magic bytes");
  }
  const uint32_t version = detail::get_u32(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint '" + path + "': unsupported format version " +
                             std::to_string(version));
  }

  Checkpoint ckpt;
  ModelConfig& cfg = ckpt.config;
  cfg.d = static_cast<int>(detail::get_u32(in));
  cfg.k = static_cast<int>(detail::get_u32(in));
  cfg.routing_iters = static_cast<int>(detail::get_u32(in));
  cfg.d_a = static_cast<int>(detail::get_u32(in));
  cfg.n_max = static_cast<int>(detail::get_u32(in));
  cfg.n_items = static_cast<int>(detail::get_u32(in));
  cfg.extractor = detail::get_u32(in) == 0 ? Extractor::kDynamicRouting : Extractor::kSelfAttentive;
  cfg.n_negatives = static_cast<int>(detail::get_u32(in));
  cfg.lr = detail::get_f64(in);
  cfg.batch_size = static_cast<int>(detail::get_u32(in));
  cfg.seed = detail::get_u64(in);
  cfg.exclude_history_negatives = detail::get_u32(in) != 0;
  ckpt.trained_steps = detail::get_u64(in);
  cfg.validate();

  const uint32_t count = detail::get_u32(in);
  const uint32_t expect = cfg.extractor == Extractor::kSelfAttentive ? 4u : 2u;
  if (count != expect) {
    throw std::runtime_error("checkpoint '" + path + "': unexpected tensor count");
  }

  ModelParameters<float>& p = ckpt.params;
  p.d = cfg.d;
  p.k = cfg.k;
  p.n_max = cfg.n_max;
  const auto u = [](int v) { return static_cast<uint32_t>(v); };
  p.item_emb = detail::get_tensor(in, "item_emb", {u(cfg.n_items), u(cfg.d)}, cfg.n_items, cfg.d);
  if (cfg.extractor == Extractor::kSelfAttentive) {
    p.pos_emb = detail::get_tensor(in, "pos_emb", {u(cfg.n_max), u(cfg.d)}, cfg.n_max, cfg.d);
    p.w1 = detail::get_tensor(in, "w1", {u(cfg.attention_width()), u(cfg.d)},
                              cfg.attention_width(), cfg.d);
    p.w2 = detail::get_tensor(in, "w2", {u(cfg.attention_width()), u(cfg.k)},
                              cfg.attention_width(), cfg.k);
  } else {
    p.w_route = detail::get_tensor(in, "w_route", {u(cfg.n_max), u(cfg.k), u(cfg.d), u(cfg.d)},
                                   static_cast<Eigen::Index>(cfg.n_max) * cfg.k * cfg.d, cfg.d);
  }
  return ckpt;
}

}  // namespace multirec
