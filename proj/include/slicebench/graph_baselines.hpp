#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slicebench/datamodel.hpp"
#include "slicebench/splits.hpp"

namespace slicebench {

// ---------------------------------------------------------------------------
// Label propagation over a per-context subgraph

struct LabelState {
  std::map<EntityId, int> fixed;     // seed labels (train + valid)
  std::map<EntityId, int> inferred;  // labels adopted during propagation
  std::map<EntityId, double> scores; // per-node, fraction of positive labeled
                                     // neighbors; 0.5 when none
  size_t rounds = 0;
};

// Synchronous rounds: an unlabeled node adopts the strict-majority label of
// its currently labeled neighbors; labels freeze once assigned; ties leave a
// node unlabeled for the round. Stops at fixpoint or max_rounds.
LabelState label_propagation(const ContextGraph& g, const ContextId& context,
                             const std::map<EntityId, int>& seeds, size_t max_rounds);

// Induced subgraph on a context's member set (membership collapses to the
// single context).
ContextGraph context_subgraph(const ContextGraph& g, const ContextId& context);

// ---------------------------------------------------------------------------
// node2vec

struct Node2VecConfig {
  size_t dim = 128;
  size_t walks_per_node = 10;
  size_t walk_length = 80;
  size_t window = 10;
  double return_p = 1.0;  // 1/p weight to revisit the previous node
  double inout_q = 1.0;   // 1/q weight to move outward
  size_t negatives = 5;
  size_t epochs = 1;
  double lr_start = 0.025;
  double lr_end = 0.0001;
  uint64_t seed = 1;
  size_t workers = 1;  // >1 trades reproducibility for speed

  void validate() const;
};

// Second-order biased walks; r walks of l nodes per start node. First-order
// steps come from per-node alias tables; the p/q bias is applied by
// rejection, keeping preprocessing at O(V + E).
std::vector<std::vector<uint32_t>> node2vec_walks(const ContextGraph& g,
                                                  const Node2VecConfig& cfg);

// O(1) sampling from a fixed discrete distribution.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(const std::vector<double>& weights);
  size_t sample(double u01_a, double u01_b) const;
  // Same distribution from one 64-bit draw: the high half picks the column,
  // the low half the threshold.
  size_t sample(uint64_t bits) const {
    double a = static_cast<double>(bits >> 32) * 0x1.0p-32;
    double b = static_cast<double>(bits & 0xffffffffULL) * 0x1.0p-32;
    return sample(a, b);
  }
  size_t size() const { return prob_.size(); }

 private:
  std::vector<double> prob_;
  std::vector<uint32_t> alias_;
};

// First-order transition tables, one per node; O(V + E) total work.
std::vector<AliasTable> build_transition_tables(const ContextGraph& g);

struct EmbeddingTable {
  size_t dim = 0;
  std::string provenance;
  std::map<EntityId, std::vector<float>> vectors;

  const std::vector<float>& at(const EntityId& id) const;  // throws MissingEmbedding
};

// Skip-gram with negative sampling (unigram^0.75 noise) over the walks.
// Single worker is bit-reproducible for a fixed seed. `epoch_losses`, when
// given, receives the mean pair loss per epoch (single-worker runs only).
EmbeddingTable train_skipgram(const ContextGraph& g,
                              const std::vector<std::vector<uint32_t>>& walks,
                              const Node2VecConfig& cfg,
                              std::vector<double>* epoch_losses = nullptr);

// Lossless CSV round-trip: header names, then dim/provenance/count, then
// `entity,v1,...,vd` rows.
void store_embeddings(const EmbeddingTable& table, const std::string& path);
EmbeddingTable load_embeddings(const std::string& path);

// ---------------------------------------------------------------------------
// Logistic head on [embedding || one-hot(context)]

struct HeadConfig {
  double lr = 0.1;
  size_t epochs = 300;
  double l2 = 1e-4;
  size_t patience = 20;  // epochs without valid-AUROC improvement
};

struct LinearHead {
  std::vector<double> weights;  // dim + |contexts|
  double bias = 0.0;
  size_t embedding_dim = 0;
  std::vector<ContextId> contexts;  // one-hot order
  uint64_t trained_seed = 0;

  size_t context_index(const ContextId& ctx) const;  // throws UnknownContext
};

// Full-batch gradient descent on logistic loss over the train fold,
// early-stopped on valid AUROC when the valid fold supports it.
// `epoch_losses`, when given, receives the mean train loss per epoch.
LinearHead train_linear_head(const EmbeddingTable& emb,
                             const std::vector<ContextSample>& samples, const SplitSpec& split,
                             const std::vector<ContextId>& contexts, const HeadConfig& cfg,
                             std::vector<double>* epoch_losses = nullptr);

PredictionSet predict_scores(const LinearHead& head, const EmbeddingTable& emb,
                             const std::vector<std::pair<EntityId, ContextId>>& pairs);

}  // namespace slicebench
