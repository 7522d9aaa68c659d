#include <atomic>
#include <cmath>
#include <cstring>
#include <thread>

#include "slicebench/graph_baselines.hpp"
#include "slicebench/rng.hpp"

namespace slicebench {

void Node2VecConfig::validate() const {
  require(dim > 0 && walks_per_node > 0 && walk_length > 0 && window > 0, Errc::invalid_argument,
          "node2vec sizes must be positive");
  require(return_p > 0.0 && inout_q > 0.0, Errc::invalid_argument, "p and q must be positive");
  require(negatives > 0 && epochs > 0, Errc::invalid_argument,
          "negatives and epochs must be positive");
  require(lr_start >= lr_end && lr_end > 0.0, Errc::invalid_argument,
          "learning rate must decay from lr_start to a positive lr_end");
  require(workers > 0, Errc::invalid_argument, "workers must be positive");
}

// Vose alias construction, O(n).
AliasTable::AliasTable(const std::vector<double>& weights) {
  size_t n = weights.size();
  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  if (n == 0) return;
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), Errc::invalid_argument, "negative alias weight");
    total += w;
  }
  require(total > 0.0, Errc::invalid_argument, "alias table needs positive total weight");

  std::vector<double> scaled(n);
  for (size_t i = 0; i < n; ++i) scaled[i] = weights[i] * static_cast<double>(n) / total;
  std::vector<uint32_t> small, large;
  for (size_t i = 0; i < n; ++i)
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<uint32_t>(i));
  while (!small.empty() && !large.empty()) {
    uint32_t s = small.back();
    small.pop_back();
    uint32_t l = large.back();
    large.pop_back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = scaled[l] + scaled[s] - 1.0;
    (scaled[l] < 1.0 ? small : large).push_back(l);
  }
  for (uint32_t i : large) prob_[i] = 1.0;
  for (uint32_t i : small) prob_[i] = 1.0;
}

size_t AliasTable::sample(double u01_a, double u01_b) const {
  size_t i = static_cast<size_t>(u01_a * static_cast<double>(prob_.size()));
  if (i >= prob_.size()) i = prob_.size() - 1;
  return u01_b < prob_[i] ? i : alias_[i];
}

std::vector<AliasTable> build_transition_tables(const ContextGraph& g) {
  std::vector<AliasTable> tables(g.node_count());
  std::vector<double> weights;
  for (uint32_t v = 0; v < g.node_count(); ++v) {
    const auto& adj = g.neighbors(v);
    if (adj.empty()) continue;
    weights.clear();
    for (const auto& [nbr, w] : adj) weights.push_back(w);
    tables[v] = AliasTable(weights);
  }
  return tables;
}

std::vector<std::vector<uint32_t>> node2vec_walks(const ContextGraph& g,
                                                  const Node2VecConfig& cfg) {
  cfg.validate();
  auto tables = build_transition_tables(g);
  bool unbiased = cfg.return_p == 1.0 && cfg.inout_q == 1.0;
  double w_return = 1.0 / cfg.return_p;
  double w_out = 1.0 / cfg.inout_q;
  double max_bias = std::max({w_return, 1.0, w_out});

  std::vector<std::vector<uint32_t>> walks;
  walks.reserve(g.node_count() * cfg.walks_per_node);
  for (uint32_t start = 0; start < g.node_count(); ++start) {
    for (size_t walk_idx = 0; walk_idx < cfg.walks_per_node; ++walk_idx) {
      Rng rng = Rng::substream(cfg.seed, start, walk_idx);
      std::vector<uint32_t> walk{start};
      walk.reserve(cfg.walk_length);
      while (walk.size() < cfg.walk_length) {
        uint32_t cur = walk.back();
        const auto& adj = g.neighbors(cur);
        if (adj.empty()) break;
        uint32_t next;
        if (walk.size() == 1 || unbiased) {
          next = adj[tables[cur].sample(rng.next_double(), rng.next_double())].first;
        } else {
          // Rejection over the first-order proposal realizes the p/q bias
          // without per-edge tables.
          uint32_t prev = walk[walk.size() - 2];
          for (;;) {
            uint32_t cand = adj[tables[cur].sample(rng.next_double(), rng.next_double())].first;
            double bias = cand == prev ? w_return : (g.has_edge(cand, prev) ? 1.0 : w_out);
            if (rng.next_double() * max_bias < bias) {
              next = cand;
              break;
            }
          }
        }
        walk.push_back(next);
      }
      walks.push_back(std::move(walk));
    }
  }
  return walks;
}

namespace {

struct SgnsModel {
  size_t dim;
  std::vector<float> syn0;  // input vectors, the published embedding
  std::vector<float> syn1;  // output vectors
};

// Fast sigmoid over [-6, 6], the word2vec approximation; outside the range
// the gradient underflows anyway.
struct SigmoidTable {
  static constexpr int kBins = 4096;
  static constexpr float kMax = 6.0f;
  float value[kBins];
  SigmoidTable() {
    for (int i = 0; i < kBins; ++i) {
      double x = (2.0 * (i + 0.5) / kBins - 1.0) * kMax;
      value[i] = static_cast<float>(1.0 / (1.0 + std::exp(-x)));
    }
  }
  float operator()(float f) const {
    if (f >= kMax) return 1.0f;
    if (f <= -kMax) return 0.0f;
    return value[static_cast<int>((f + kMax) * (kBins / (2.0f * kMax)))];
  }
};
const SigmoidTable g_sigmoid;

// Explicit 8-lane vectors: the haswell train_shard clone lowers these to
// AVX2/FMA, the default clone to SSE pairs; per-lane IEEE arithmetic is
// identical either way, so results do not depend on the dispatch.
typedef float vf8 __attribute__((vector_size(32)));

__attribute__((always_inline)) inline vf8 load8(const float* p) {
  vf8 v;
  __builtin_memcpy(&v, p, sizeof(v));
  return v;
}

__attribute__((always_inline)) inline void store8(float* p, vf8 v) {
  __builtin_memcpy(p, &v, sizeof(v));
}

__attribute__((always_inline)) inline float sgns_dot(const float* __restrict__ u,
                                                     const float* __restrict__ v, size_t d) {
  vf8 acc0{}, acc1{}, acc2{}, acc3{};
  size_t i = 0;
  for (; i + 32 <= d; i += 32) {
    acc0 += load8(u + i) * load8(v + i);
    acc1 += load8(u + i + 8) * load8(v + i + 8);
    acc2 += load8(u + i + 16) * load8(v + i + 16);
    acc3 += load8(u + i + 24) * load8(v + i + 24);
  }
  for (; i + 8 <= d; i += 8) acc0 += load8(u + i) * load8(v + i);
  vf8 acc = (acc0 + acc1) + (acc2 + acc3);
  float f = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < d; ++i) f += u[i] * v[i];
  return f;
}

__attribute__((always_inline)) inline void sgns_axpy(float* __restrict__ out,
                                                     const float* __restrict__ in, float g,
                                                     size_t d) {
  vf8 gv = {g, g, g, g, g, g, g, g};
  size_t i = 0;
  for (; i + 8 <= d; i += 8) store8(out + i, load8(out + i) + gv * load8(in + i));
  for (; i < d; ++i) out[i] += g * in[i];
}

template <bool kTrackLoss>
__attribute__((always_inline)) inline double sgns_update(SgnsModel& model, uint32_t input, uint32_t center,
                          const AliasTable& noise, const std::vector<uint32_t>& noise_ids,
                          size_t negatives, float lr, Rng& rng, std::vector<float>& scratch,
                          std::vector<uint32_t>& target_buf) {
  const size_t d = model.dim;
  float* __restrict__ u = model.syn0.data() + static_cast<size_t>(input) * d;
  float* __restrict__ work = scratch.data();

  // Draw every target up front and prefetch its row; the random syn1
  // accesses otherwise serialize on memory latency. The memset runs after
  // the prefetches are in flight.
  target_buf.clear();
  target_buf.push_back(center);
  {
    const float* row = model.syn1.data() + static_cast<size_t>(center) * d;
    for (size_t off = 0; off < d; off += 16) __builtin_prefetch(row + off);
  }
  for (size_t k = 0; k < negatives; ++k) {
    uint32_t target = noise_ids[noise.sample(rng.next_u64())];
    if (target == center) continue;
    target_buf.push_back(target);
    const float* row = model.syn1.data() + static_cast<size_t>(target) * d;
    for (size_t off = 0; off < d; off += 16) __builtin_prefetch(row + off);
  }
  std::memset(work, 0, d * sizeof(float));

  double loss = 0.0;
  for (size_t k = 0; k < target_buf.size(); ++k) {
    float label = k == 0 ? 1.0f : 0.0f;
    float* __restrict__ v = model.syn1.data() + static_cast<size_t>(target_buf[k]) * d;
    float sig = g_sigmoid(sgns_dot(u, v, d));
    if constexpr (kTrackLoss)
      loss += label > 0.5f ? -std::log(std::max(sig, 1e-7f))
                           : -std::log(std::max(1.0f - sig, 1e-7f));
    float g = (label - sig) * lr;
    sgns_axpy(work, v, g, d);
    sgns_axpy(v, u, g, d);
  }
  sgns_axpy(u, work, 1.0f, d);
  return loss;
}

__attribute__((target_clones("avx2,fma", "default"))) void train_shard(
    SgnsModel& model, const std::vector<std::vector<uint32_t>>& walks, size_t shard,
    size_t n_shards, const Node2VecConfig& cfg, const AliasTable& noise,
    const std::vector<uint32_t>& noise_ids, uint64_t total_tokens,
    std::atomic<uint64_t>& processed, std::vector<double>* epoch_losses = nullptr) {
  Rng rng = Rng::substream(cfg.seed ^ 0x5be0cd19137e2179ULL, shard);
  std::vector<float> scratch(model.dim);
  std::vector<uint32_t> target_buf;
  target_buf.reserve(cfg.negatives + 1);
  float lr = static_cast<float>(cfg.lr_start);
  uint64_t local = 0;
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    uint64_t epoch_pairs = 0;
    for (size_t wi = shard; wi < walks.size(); wi += n_shards) {
      const auto& walk = walks[wi];
      for (size_t i = 0; i < walk.size(); ++i) {
        if ((local & 0x3ff) == 0) {
          uint64_t done = processed.fetch_add(1024, std::memory_order_relaxed);
          double frac = std::min(1.0, static_cast<double>(done) / static_cast<double>(total_tokens));
          lr = static_cast<float>(cfg.lr_start - (cfg.lr_start - cfg.lr_end) * frac);
          if (lr < static_cast<float>(cfg.lr_end)) lr = static_cast<float>(cfg.lr_end);
        }
        ++local;
        size_t reduced = rng.next_below(cfg.window);  // dynamic window, word2vec style
        size_t lo = i >= cfg.window - reduced ? i - (cfg.window - reduced) : 0;
        size_t hi = std::min(walk.size() - 1, i + (cfg.window - reduced));
        for (size_t j = lo; j <= hi; ++j) {
          if (j == i) continue;
          if (epoch_losses)
            epoch_loss += sgns_update<true>(model, walk[j], walk[i], noise, noise_ids,
                                            cfg.negatives, lr, rng, scratch, target_buf);
          else
            sgns_update<false>(model, walk[j], walk[i], noise, noise_ids, cfg.negatives, lr, rng,
                               scratch, target_buf);
          ++epoch_pairs;
        }
      }
    }
    if (epoch_losses)
      epoch_losses->push_back(epoch_pairs ? epoch_loss / static_cast<double>(epoch_pairs) : 0.0);
  }
}

}  // namespace

EmbeddingTable train_skipgram(const ContextGraph& g,
                              const std::vector<std::vector<uint32_t>>& walks,
                              const Node2VecConfig& cfg, std::vector<double>* epoch_losses) {
  cfg.validate();
  uint64_t total_tokens = 0;
  for (const auto& w : walks) total_tokens += w.size();
  require(total_tokens > 0, Errc::empty_corpus, "no walk tokens");
  total_tokens *= cfg.epochs;

  size_t n_nodes = g.node_count();
  std::vector<uint64_t> counts(n_nodes, 0);
  for (const auto& w : walks)
    for (uint32_t v : w) {
      require(v < n_nodes, Errc::unknown_node, "walk token out of range");
      ++counts[v];
    }

  // Unigram^0.75 noise over nodes seen in the corpus.
  std::vector<uint32_t> noise_ids;
  std::vector<double> noise_weights;
  for (uint32_t v = 0; v < n_nodes; ++v)
    if (counts[v] > 0) {
      noise_ids.push_back(v);
      noise_weights.push_back(std::pow(static_cast<double>(counts[v]), 0.75));
    }
  AliasTable noise(noise_weights);

  SgnsModel model;
  model.dim = cfg.dim;
  model.syn0.resize(n_nodes * cfg.dim);
  model.syn1.assign(n_nodes * cfg.dim, 0.0f);
  Rng init_rng = Rng::substream(cfg.seed ^ 0x9e3779b97f4a7c15ULL, 0);
  for (auto& x : model.syn0)
    x = static_cast<float>((init_rng.next_double() - 0.5) / static_cast<double>(cfg.dim));

  std::atomic<uint64_t> processed{0};
  if (cfg.workers == 1) {
    train_shard(model, walks, 0, 1, cfg, noise, noise_ids, total_tokens, processed, epoch_losses);
  } else {
    std::vector<std::thread> threads;
    for (size_t t = 0; t < cfg.workers; ++t)
      threads.emplace_back(train_shard, std::ref(model), std::cref(walks), t, cfg.workers,
                           std::cref(cfg), std::cref(noise), std::cref(noise_ids), total_tokens,
                           std::ref(processed), nullptr);
    for (auto& th : threads) th.join();
  }

  EmbeddingTable table;
  table.dim = cfg.dim;
  char prov[160];
  std::snprintf(prov, sizeof(prov),
                "node2vec d=%zu r=%zu l=%zu w=%zu p=%g q=%g k=%zu epochs=%zu seed=%llu",
                cfg.dim, cfg.walks_per_node, cfg.walk_length, cfg.window, cfg.return_p,
                cfg.inout_q, cfg.negatives, cfg.epochs,
                static_cast<unsigned long long>(cfg.seed));
  table.provenance = prov;
  for (uint32_t v = 0; v < n_nodes; ++v) {
    std::vector<float> vec(model.syn0.begin() + static_cast<size_t>(v) * cfg.dim,
                           model.syn0.begin() + static_cast<size_t>(v + 1) * cfg.dim);
    table.vectors.emplace(g.node_name(v), std::move(vec));
  }
  return table;
}

}  // namespace slicebench
