#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "slicebench/datamodel.hpp"

namespace slicebench {

// ---------------------------------------------------------------------------
// Scalar metrics

// Mann-Whitney AUROC with average-rank tie handling:
// P(score+ > score-) + 0.5 * P(score+ == score-). Throws DegenerateSlice
// when a class is missing.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Step-wise average precision over the descending-score order,
// sum_i (recall_i - recall_{i-1}) * precision_i. Throws DegenerateSlice
// when there are no positives. Tied scores contribute a single step.
double average_precision(std::span<const double> scores, std::span<const int> labels);

// AP over the top min(R, n) items. Score ties are broken label-independently:
// indices are shuffled with `tie_seed`, then stable-sorted by score
// descending. Normalizer is the positive count within the prefix; 0 when the
// prefix has no positive.
double ap_at_r(std::span<const double> scores, std::span<const int> labels, size_t r,
               uint64_t tie_seed);

struct ClassificationSuite {
  double acc = 0.0;
  double f1 = 0.0;
  std::optional<double> auroc;  // absent when the slice is single-class
  std::optional<double> auprc;
};

// acc/f1 at `threshold` (predict positive when score >= threshold); rank
// metrics attached when both classes are present.
ClassificationSuite classification_suite(std::span<const double> scores,
                                         std::span<const int> labels, double threshold = 0.5);

// 1 - SS_res / SS_tot; may be negative. Throws ConstantActual.
double r_squared(std::span<const double> pred, std::span<const double> actual);

// Mean of (pred_g - actual_g)^2 over the genes named in `deg`.
double mse_at_deg(std::span<const double> pred, std::span<const double> actual,
                  const std::vector<EntityId>& deg,
                  const std::map<EntityId, size_t>& gene_index);

// Welch (unequal variance) t statistic, group a minus group b, with the
// denominator floored at 1e-12.
double welch_t(std::span<const double> a, std::span<const double> b);

// Top-k gene ids by |Welch t| between perturbed and control normalized
// values; ties by gene id. Requires both matrices normalized, identical gene
// lists, and >= 2 cells each.
std::vector<EntityId> select_deg(const ExpressionMatrix& control,
                                 const ExpressionMatrix& perturbed, size_t k);

// ---------------------------------------------------------------------------
// Context-sliced metrics

struct ContextSliceReport {
  ContextId context;
  size_t n_samples = 0;
  size_t n_positives = 0;
  std::optional<double> auroc;               // defined iff slice has both classes
  std::map<size_t, std::optional<double>> ap_at_r;  // R -> value; absent when no positives
};

// Deterministic per-context tie seed derived from the report seed.
uint64_t context_tie_seed(uint64_t seed, const ContextId& ctx);

struct TopKAuroc {
  double value = 0.0;
  std::vector<ContextSliceReport> slices;  // all slices, sorted by context id
};

// Per-context AUROC, descending sort (ties: larger slice first, then context
// id), sample-weighted mean of the top K. Slices with undefined AUROC are
// excluded before selection. Throws NotEnoughContexts.
TopKAuroc context_auroc_topk(const PredictionSet& preds,
                             const std::vector<ContextSample>& samples, size_t k,
                             uint64_t seed);

// Unweighted mean of the top-K per-context AP@R values, same tie rule.
double context_ap_at_r_topk(const PredictionSet& preds,
                            const std::vector<ContextSample>& samples, size_t r, size_t k,
                            uint64_t seed);

struct ContextFreeSuite {
  double auroc = 0.0;
  std::map<size_t, double> ap_at_r;  // R -> value
};

// Metrics over the pooled, all-contexts set.
ContextFreeSuite context_free_suite(const PredictionSet& preds,
                                    const std::vector<ContextSample>& samples,
                                    const std::vector<size_t>& r_list, uint64_t seed);

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
  std::string suite;  // "context_sliced" | "classification" | "perturbation"
  uint64_t seed = 0;

  // context_sliced
  std::vector<ContextSliceReport> per_context;              // sorted by context id
  std::map<size_t, double> topk_auroc;                      // K -> value
  std::map<size_t, std::map<size_t, double>> topk_ap_at_r;  // R -> K -> value

  // context-free block (context_sliced and classification suites)
  std::optional<double> cf_auroc;
  std::optional<double> cf_auprc;
  std::optional<double> cf_acc;
  std::optional<double> cf_f1;
  std::map<size_t, double> cf_ap_at_r;
  std::optional<double> threshold;

  // perturbation block
  std::map<size_t, double> mse_at_deg;  // deg size -> value
  std::optional<double> r2;
  std::vector<EntityId> deg;

  nlohmann::json to_json() const;
  // Canonical serialized form: sorted keys, shortest round-trip numbers.
  std::string canonical_json() const;

  // Scalar summary metrics, e.g. "topk_auroc.10", "cf.auroc", "r_squared".
  std::map<std::string, double> flat_metrics() const;
};

struct SeedAggregate {
  std::string metric;
  double mean = 0.0;
  double std_dev = 0.0;  // population (n denominator)
  size_t n_seeds = 0;
};

// Per-metric mean and population std over reports; all reports must expose
// identical flat metric keys. Throws KeyMismatch.
std::vector<SeedAggregate> aggregate_seeds(const std::vector<MetricReport>& reports);
std::vector<SeedAggregate> aggregate_metric_maps(
    const std::vector<std::map<std::string, double>>& maps);

nlohmann::json aggregates_to_json(const std::vector<SeedAggregate>& aggs);
// The `metric  mean +/- std` table layout.
std::string aggregates_to_table(const std::vector<SeedAggregate>& aggs);

}  // namespace slicebench
