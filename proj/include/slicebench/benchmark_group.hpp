#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "slicebench/metrics.hpp"
#include "slicebench/registry.hpp"
#include "slicebench/splits.hpp"

namespace slicebench {

// ---------------------------------------------------------------------------
// Group configuration

struct MetricSuiteSpec {
  std::string family;  // "scdtn" | "classification" | "perturbation"
  std::vector<size_t> k_list;  // top-K values (scdtn)
  std::vector<size_t> r_list;  // AP@R ranks (scdtn)
  size_t deg_k = 20;           // perturbation
  double threshold = 0.5;      // classification decision threshold
  std::string primary_metric;  // flat metric key, e.g. "topk_auroc.10"

  nlohmann::json to_json() const;
  static MetricSuiteSpec from_json(const nlohmann::json& doc);
};

struct GroupSplitParams {
  SplitKind kind = SplitKind::cold;
  Fractions fractions{0.8, 0.1, 0.1};
  std::string cutoff;          // temporal
  double test_fraction = 0.9;  // stratified

  nlohmann::json to_json() const;
  static GroupSplitParams from_json(const nlohmann::json& doc);
};

struct BenchmarkGroup {
  std::string group_id;
  std::string dataset_name;
  uint64_t dataset_version = 0;
  // perturbation family only
  std::string control_dataset_name;
  uint64_t control_dataset_version = 0;
  ContextId context;  // cell line the perturbation group is scoped to

  GroupSplitParams split;
  MetricSuiteSpec suite;
  bool label_holdout = true;

  nlohmann::json to_json() const;
  static BenchmarkGroup from_json(const nlohmann::json& doc);
};

// groups.json in the data dir; writes share the registry's lock discipline.
class GroupStore {
 public:
  explicit GroupStore(std::filesystem::path data_dir);

  void add(const BenchmarkGroup& group);  // rejects duplicate ids
  BenchmarkGroup get(const std::string& group_id) const;  // throws UnknownGroup
  std::vector<BenchmarkGroup> list() const;
  bool holds_labels_for(const std::string& dataset_name) const;

 private:
  std::filesystem::path path_;
  std::vector<BenchmarkGroup> load() const;
  void store(const std::vector<BenchmarkGroup>& groups) const;
};

// ---------------------------------------------------------------------------
// Prepared evaluation data

struct GroupData {
  BenchmarkGroup group;
  uint64_t seed = 0;

  // label families (scdtn / classification)
  SplitSpec split;  // entity-level folds
  std::vector<ContextSample> train_samples;
  std::vector<ContextSample> valid_samples;
  std::vector<ContextSample> test_samples;  // labels held server-side

  // perturbation family
  ExpressionMatrix control;    // normalized
  ExpressionMatrix perturbed;  // normalized
  std::vector<EntityId> deg;
  std::vector<double> actual_means;    // per-gene mean post-perturbation
  std::vector<double> baseline_means;  // per-gene mean control (no-perturb)
  std::map<EntityId, size_t> gene_index;
};

// Loads the group's dataset(s), derives the seeded split, and computes the
// held targets. Deterministic per (group, seed).
GroupData prepare_group(const Registry& registry, const BenchmarkGroup& group, uint64_t seed);

// Split document served to clients: train/valid rows carry labels, test rows
// do not (for label-holding groups).
nlohmann::json split_document(const GroupData& data);

// Runs the group's metric suite against predictions; used verbatim by both
// the CLI and the HTTP service.
MetricReport evaluate_group(const Registry& registry, const BenchmarkGroup& group,
                            const PredictionSet& preds, uint64_t seed);
MetricReport evaluate_prepared(const GroupData& data, const PredictionSet& preds);

// ---------------------------------------------------------------------------
// Leaderboards: append-only JSONL per group.

struct LeaderboardEntry {
  std::string group_id;
  std::string submission_id;
  std::string submitted_at;  // first seed's timestamp
  size_t n_seeds = 0;
  std::vector<SeedAggregate> aggregates;

  nlohmann::json to_json() const;
};

class LeaderboardStore {
 public:
  explicit LeaderboardStore(std::filesystem::path data_dir);

  void append(const std::string& group_id, const std::string& submission_id, uint64_t seed,
              const MetricReport& report, const std::string& submitted_at);

  // Aggregated per submission, sorted by primary-metric mean descending,
  // ties by submitted_at ascending.
  std::vector<LeaderboardEntry> entries(const std::string& group_id,
                                        const std::string& primary_metric) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace slicebench
