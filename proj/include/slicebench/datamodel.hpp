#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "slicebench/core.hpp"

namespace slicebench {

enum class Format { csv, jsonl };

// ---------------------------------------------------------------------------
// Records

struct ContextSample {
  EntityId entity;
  ContextId context;
  int label = 0;  // {0,1}

  bool operator==(const ContextSample&) const = default;
};

struct PredictionRow {
  EntityId entity;
  ContextId context;
  double score = 0.0;  // [0,1]
};

struct PredictionSet {
  std::vector<PredictionRow> rows;
  std::string dataset_ref;  // manifest id "name:version", may be empty for ad-hoc use
};

enum class Phase { I, II, III };

const char* phase_name(Phase p);
Phase parse_phase(const std::string& s);  // accepts I/II/III and 1/2/3

struct TrialRecord {
  EntityId trial_id;
  std::string start_date;       // ISO-8601 calendar date
  std::string completion_date;  // start_date <= completion_date
  Phase phase = Phase::I;
  int label = 0;
  // design / macro fields the task does not interpret
  std::vector<std::pair<std::string, std::string>> attrs;

  bool operator==(const TrialRecord&) const = default;
};

struct BindingPair {
  EntityId receptor;  // TCR sequence
  EntityId ligand;    // epitope sequence
  int label = 0;

  bool operator==(const BindingPair&) const = default;
  auto operator<=>(const BindingPair&) const = default;
};

bool is_iso_date(const std::string& s);

// ---------------------------------------------------------------------------
// Multi-context graph: undirected reference edges plus per-context node sets.

class ContextGraph {
 public:
  // Returns the node's index, inserting it if new.
  uint32_t add_node(const EntityId& id);
  bool has_node(const EntityId& id) const { return index_.count(id) != 0; }
  uint32_t index_of(const EntityId& id) const;  // throws unknown_node

  // Undirected; rejects self-loops and non-positive weights. A repeated
  // (a, b) pair is ignored, keeping the first weight.
  void add_edge(const EntityId& a, const EntityId& b, double weight = 1.0);
  void add_to_context(const ContextId& ctx, const EntityId& node);  // throws unknown_node

  size_t node_count() const { return nodes_.size(); }
  size_t edge_count() const { return n_edges_; }
  const std::vector<EntityId>& nodes() const { return nodes_; }
  const EntityId& node_name(uint32_t i) const { return nodes_[i]; }
  const std::vector<std::pair<uint32_t, double>>& neighbors(uint32_t i) const {
    return adjacency_[i];
  }
  size_t degree(uint32_t i) const { return adjacency_[i].size(); }
  bool has_edge(uint32_t a, uint32_t b) const;

  const std::map<ContextId, std::vector<uint32_t>>& contexts() const { return contexts_; }
  const std::vector<uint32_t>& context_nodes(const ContextId& ctx) const;  // throws unknown_context

 private:
  std::vector<EntityId> nodes_;
  std::unordered_map<EntityId, uint32_t> index_;
  std::vector<std::vector<std::pair<uint32_t, double>>> adjacency_;  // sorted by neighbor index
  std::map<ContextId, std::vector<uint32_t>> contexts_;              // sorted node indices
  size_t n_edges_ = 0;
};

// ---------------------------------------------------------------------------
// Expression matrix: dense counts, cells x genes, with an optional
// normalized view filled in by normalize_counts.

struct Condition {
  bool perturbed = false;
  EntityId perturbagen;  // set when perturbed

  bool operator==(const Condition&) const = default;
};

class ExpressionMatrix {
 public:
  ExpressionMatrix() = default;
  ExpressionMatrix(std::vector<EntityId> genes, std::vector<std::string> cells,
                   std::vector<double> counts, Condition condition = {}, ContextId context = {});

  size_t n_genes() const { return genes_.size(); }
  size_t n_cells() const { return cells_.size(); }
  const std::vector<EntityId>& genes() const { return genes_; }
  const std::vector<std::string>& cells() const { return cells_; }
  const Condition& condition() const { return condition_; }
  const ContextId& context() const { return context_; }

  double count_at(size_t cell, size_t gene) const { return counts_[cell * genes_.size() + gene]; }
  const std::vector<double>& counts() const { return counts_; }

  bool normalized() const { return !normalized_.empty(); }
  double normalized_at(size_t cell, size_t gene) const;  // throws not_normalized
  const std::vector<double>& normalized_values() const;  // throws not_normalized

  size_t gene_index(const EntityId& gene) const;  // throws missing_gene

  friend ExpressionMatrix normalize_counts(const ExpressionMatrix& m,
                                           std::optional<double> target_total,
                                           std::vector<std::string>* warnings);

 private:
  std::vector<EntityId> genes_;
  std::vector<std::string> cells_;
  std::vector<double> counts_;      // raw, retained
  std::vector<double> normalized_;  // empty until normalize_counts
  std::unordered_map<EntityId, size_t> gene_index_;
  Condition condition_;
  ContextId context_;
};

// Scales each cell to the dataset-median total count (or `target_total` when
// given), then applies ln(1+x). Raw counts are retained. All-zero cells are
// left as zeros and reported through `warnings`.
ExpressionMatrix normalize_counts(const ExpressionMatrix& m,
                                  std::optional<double> target_total = std::nullopt,
                                  std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Parsers / serializers. CSV is canonical; JSONL accepted for record files.

std::vector<ContextSample> parse_samples(std::istream& in, Format format = Format::csv);
std::vector<ContextSample> parse_samples(const std::string& bytes, Format format = Format::csv);
std::string serialize_samples(const std::vector<ContextSample>& samples,
                              Format format = Format::csv);

// `bounded` enforces scores in [0,1] (the probability contract); perturbation
// predictions carry unbounded expression values and pass false.
PredictionSet parse_predictions(std::istream& in, Format format = Format::csv,
                                bool bounded = true);
PredictionSet parse_predictions(const std::string& bytes, Format format = Format::csv,
                                bool bounded = true);
std::string serialize_predictions(const PredictionSet& preds, Format format = Format::csv);

// Edge list TSV `src\tdst[\tweight]` plus membership TSV `node\tcontext`.
ContextGraph parse_graph(std::istream& edges, std::istream& membership);
ContextGraph parse_graph(const std::string& edges, const std::string& membership);
// Returns {edge list, membership} in the same TSV formats.
std::pair<std::string, std::string> serialize_graph(const ContextGraph& g);

std::vector<TrialRecord> parse_trials(std::istream& in, Format format = Format::csv);
std::vector<TrialRecord> parse_trials(const std::string& bytes, Format format = Format::csv);
std::string serialize_trials(const std::vector<TrialRecord>& records, Format format = Format::csv);

std::vector<BindingPair> parse_binding_pairs(std::istream& in, Format format = Format::csv,
                                             bool validate_alphabet = true);
std::vector<BindingPair> parse_binding_pairs(const std::string& bytes,
                                             Format format = Format::csv,
                                             bool validate_alphabet = true);
std::string serialize_binding_pairs(const std::vector<BindingPair>& pairs,
                                    Format format = Format::csv);

// Expression matrix CSV: header `cell,<gene>,<gene>,...`, one row per cell.
ExpressionMatrix parse_expression_matrix(std::istream& in, Condition condition = {},
                                         ContextId context = {});
ExpressionMatrix parse_expression_matrix(const std::string& bytes, Condition condition = {},
                                         ContextId context = {});
std::string serialize_expression_matrix(const ExpressionMatrix& m);

}  // namespace slicebench
