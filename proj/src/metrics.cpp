#include "slicebench/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include "slicebench/rng.hpp"

namespace slicebench {

using nlohmann::json;

namespace {

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_lengths(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), Errc::invalid_argument,
          "scores and labels length mismatch");
  require(!scores.empty(), Errc::invalid_argument, "empty slice");
}

std::string fmt_real(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Indices ordered by score descending; equal scores keep the order produced
// by a seeded shuffle, so ranking never peeks at labels.
std::vector<size_t> ranked_indices(std::span<const double> scores, uint64_t tie_seed) {
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(tie_seed);
  rng.shuffle(idx);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

uint64_t context_tie_seed(uint64_t seed, const ContextId& ctx) {
  return Rng::substream(seed, fnv1a64(ctx)).next_u64();
}

// ---------------------------------------------------------------------------
// Scalar metrics

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  size_t n_pos = 0, n_neg = 0;
  for (int y : labels) (y == 1 ? n_pos : n_neg)++;
  require(n_pos > 0 && n_neg > 0, Errc::degenerate_slice,
          "AUROC needs at least one positive and one negative");

  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // Exact integer counting: doubled numerator keeps half-ties integral.
  uint64_t numer2 = 0;
  uint64_t neg_below = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    uint64_t pos_here = 0, neg_here = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? pos_here : neg_here)++;
      ++j;
    }
    numer2 += 2 * pos_here * neg_below + pos_here * neg_here;
    neg_below += neg_here;
    i = j;
  }
  return static_cast<double>(numer2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores, labels);
  size_t n_pos = 0;
  for (int y : labels) n_pos += (y == 1);
  require(n_pos > 0, Errc::degenerate_slice, "average precision needs at least one positive");

  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  size_t tp = 0, seen = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    size_t pos_here = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      pos_here += (labels[idx[j]] == 1);
      ++j;
    }
    size_t prev_tp = tp;
    tp += pos_here;
    seen = j;
    double precision = static_cast<double>(tp) / static_cast<double>(seen);
    double recall_step = static_cast<double>(tp - prev_tp) / static_cast<double>(n_pos);
    ap += recall_step * precision;
    i = j;
  }
  return ap;
}

double ap_at_r(std::span<const double> scores, std::span<const int> labels, size_t r,
               uint64_t tie_seed) {
  check_lengths(scores, labels);
  require(r >= 1, Errc::invalid_argument, "R must be >= 1");

  std::vector<size_t> idx = ranked_indices(scores, tie_seed);
  size_t prefix = std::min(r, idx.size());
  double sum = 0.0;
  size_t hits = 0;
  for (size_t i = 0; i < prefix; ++i) {
    if (labels[idx[i]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

ClassificationSuite classification_suite(std::span<const double> scores,
                                         std::span<const int> labels, double threshold) {
  check_lengths(scores, labels);
  require(threshold >= 0.0 && threshold <= 1.0, Errc::invalid_argument,
          "threshold must be in [0,1]");
  size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    bool predicted = scores[i] >= threshold;
    bool actual = labels[i] == 1;
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
  }
  ClassificationSuite out;
  out.acc = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  uint64_t f1_denom = 2 * tp + fp + fn;
  out.f1 = f1_denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(f1_denom);
  bool both_classes = (tp + fn) > 0 && (tn + fp) > 0;
  if (both_classes) {
    out.auroc = auroc(scores, labels);
    out.auprc = average_precision(scores, labels);
  }
  return out;
}

double r_squared(std::span<const double> pred, std::span<const double> actual) {
  require(pred.size() == actual.size(), Errc::invalid_argument, "length mismatch");
  require(actual.size() >= 2, Errc::invalid_argument, "need at least 2 values");
  double mean = 0.0;
  for (double v : actual) mean += v;
  mean /= static_cast<double>(actual.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (size_t i = 0; i < actual.size(); ++i) {
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
    ss_res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
  }
  require(ss_tot > 0.0, Errc::constant_actual, "actual values are constant");
  return 1.0 - ss_res / ss_tot;
}

double mse_at_deg(std::span<const double> pred, std::span<const double> actual,
                  const std::vector<EntityId>& deg,
                  const std::map<EntityId, size_t>& gene_index) {
  require(!deg.empty(), Errc::invalid_argument, "empty DEG list");
  require(pred.size() == actual.size(), Errc::invalid_argument, "length mismatch");
  double sum = 0.0;
  for (const auto& gene : deg) {
    auto it = gene_index.find(gene);
    require(it != gene_index.end() && it->second < pred.size(), Errc::missing_gene, gene);
    double d = pred[it->second] - actual[it->second];
    sum += d * d;
  }
  return sum / static_cast<double>(deg.size());
}

double welch_t(std::span<const double> a, std::span<const double> b) {
  require(a.size() >= 2 && b.size() >= 2, Errc::too_few_cells,
          "Welch t needs >= 2 observations per group");
  auto mean_var = [](std::span<const double> x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size() - 1);
    return std::pair{mean, var};
  };
  auto [ma, va] = mean_var(a);
  auto [mb, vb] = mean_var(b);
  double denom = va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size());
  if (denom < 1e-12) denom = 1e-12;
  return (ma - mb) / std::sqrt(denom);
}

std::vector<EntityId> select_deg(const ExpressionMatrix& control,
                                 const ExpressionMatrix& perturbed, size_t k) {
  require(k >= 1, Errc::invalid_argument, "k must be >= 1");
  require(control.genes() == perturbed.genes(), Errc::invalid_argument,
          "control and perturbed gene lists differ");
  require(control.normalized() && perturbed.normalized(), Errc::not_normalized,
          "both matrices must be normalized");
  require(control.n_cells() >= 2 && perturbed.n_cells() >= 2, Errc::too_few_cells,
          "need >= 2 cells per condition");

  size_t n_genes = control.n_genes();
  std::vector<std::pair<double, EntityId>> ranked;
  ranked.reserve(n_genes);
  std::vector<double> ctrl_col(control.n_cells()), pert_col(perturbed.n_cells());
  for (size_t g = 0; g < n_genes; ++g) {
    for (size_t c = 0; c < control.n_cells(); ++c) ctrl_col[c] = control.normalized_at(c, g);
    for (size_t c = 0; c < perturbed.n_cells(); ++c) pert_col[c] = perturbed.normalized_at(c, g);
    ranked.emplace_back(std::fabs(welch_t(pert_col, ctrl_col)), control.genes()[g]);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<EntityId> out;
  for (size_t i = 0; i < std::min(k, ranked.size()); ++i) out.push_back(ranked[i].second);
  return out;
}

// ---------------------------------------------------------------------------
// Context slices

namespace {

struct Slice {
  std::vector<double> scores;
  std::vector<int> labels;
};

std::map<ContextId, Slice> join_by_context(const PredictionSet& preds,
                                           const std::vector<ContextSample>& samples) {
  std::map<std::pair<EntityId, ContextId>, std::pair<int, bool>> by_key;  // label, matched
  for (const auto& s : samples) by_key[{s.entity, s.context}] = {s.label, false};

  std::map<ContextId, Slice> slices;
  size_t unknown = 0;
  for (const auto& row : preds.rows) {
    auto it = by_key.find({row.entity, row.context});
    if (it == by_key.end()) {
      ++unknown;
      continue;
    }
    it->second.second = true;
    auto& slice = slices[row.context];
    slice.scores.push_back(row.score);
    slice.labels.push_back(it->second.first);
  }
  require(unknown == 0, Errc::unknown_keys, std::to_string(unknown));
  size_t missing = 0;
  for (const auto& [key, v] : by_key) missing += !v.second;
  require(missing == 0, Errc::missing_predictions, std::to_string(missing));
  return slices;
}

ContextSliceReport slice_report(const ContextId& ctx, const Slice& slice,
                                const std::vector<size_t>& r_list, uint64_t seed) {
  ContextSliceReport rep;
  rep.context = ctx;
  rep.n_samples = slice.labels.size();
  for (int y : slice.labels) rep.n_positives += (y == 1);
  bool has_neg = rep.n_positives < rep.n_samples;
  if (rep.n_positives > 0 && has_neg) rep.auroc = auroc(slice.scores, slice.labels);
  uint64_t tie_seed = context_tie_seed(seed, ctx);
  for (size_t r : r_list) {
    if (rep.n_positives > 0)
      rep.ap_at_r[r] = ap_at_r(slice.scores, slice.labels, r, tie_seed);
    else
      rep.ap_at_r[r] = std::nullopt;
  }
  return rep;
}

// Descending by metric; ties favor the larger slice, then the smaller id.
bool topk_order(const std::tuple<double, size_t, ContextId>& a,
                const std::tuple<double, size_t, ContextId>& b) {
  if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
  if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) > std::get<1>(b);
  return std::get<2>(a) < std::get<2>(b);
}

}  // namespace

TopKAuroc context_auroc_topk(const PredictionSet& preds,
                             const std::vector<ContextSample>& samples, size_t k,
                             uint64_t seed) {
  require(k >= 1, Errc::invalid_argument, "K must be >= 1");
  auto slices = join_by_context(preds, samples);

  TopKAuroc out;
  std::vector<std::tuple<double, size_t, ContextId>> eligible;
  for (const auto& [ctx, slice] : slices) {
    ContextSliceReport rep = slice_report(ctx, slice, {}, seed);
    if (rep.auroc) eligible.emplace_back(*rep.auroc, rep.n_samples, ctx);
    out.slices.push_back(std::move(rep));
  }
  require(k <= eligible.size(), Errc::not_enough_contexts,
          "K=" + std::to_string(k) + " available=" + std::to_string(eligible.size()));
  std::sort(eligible.begin(), eligible.end(), topk_order);

  double weighted = 0.0, total = 0.0;
  for (size_t i = 0; i < k; ++i) {
    weighted += std::get<0>(eligible[i]) * static_cast<double>(std::get<1>(eligible[i]));
    total += static_cast<double>(std::get<1>(eligible[i]));
  }
  out.value = weighted / total;
  return out;
}

double context_ap_at_r_topk(const PredictionSet& preds,
                            const std::vector<ContextSample>& samples, size_t r, size_t k,
                            uint64_t seed) {
  require(k >= 1, Errc::invalid_argument, "K must be >= 1");
  auto slices = join_by_context(preds, samples);

  std::vector<std::tuple<double, size_t, ContextId>> eligible;
  for (const auto& [ctx, slice] : slices) {
    ContextSliceReport rep = slice_report(ctx, slice, {r}, seed);
    auto it = rep.ap_at_r.find(r);
    if (it != rep.ap_at_r.end() && it->second) eligible.emplace_back(*it->second, rep.n_samples, ctx);
  }
  require(k <= eligible.size(), Errc::not_enough_contexts,
          "K=" + std::to_string(k) + " available=" + std::to_string(eligible.size()));
  std::sort(eligible.begin(), eligible.end(), topk_order);

  double sum = 0.0;
  for (size_t i = 0; i < k; ++i) sum += std::get<0>(eligible[i]);
  return sum / static_cast<double>(k);
}

ContextFreeSuite context_free_suite(const PredictionSet& preds,
                                    const std::vector<ContextSample>& samples,
                                    const std::vector<size_t>& r_list, uint64_t seed) {
  auto slices = join_by_context(preds, samples);
  Slice pooled;
  for (const auto& [ctx, slice] : slices) {
    pooled.scores.insert(pooled.scores.end(), slice.scores.begin(), slice.scores.end());
    pooled.labels.insert(pooled.labels.end(), slice.labels.begin(), slice.labels.end());
  }
  ContextFreeSuite out;
  out.auroc = auroc(pooled.scores, pooled.labels);
  uint64_t tie_seed = context_tie_seed(seed, "__pooled__");
  for (size_t r : r_list) out.ap_at_r[r] = ap_at_r(pooled.scores, pooled.labels, r, tie_seed);
  return out;
}

// ---------------------------------------------------------------------------
// Reports

json MetricReport::to_json() const {
  json doc;
  doc["suite"] = suite;
  doc["seed"] = seed;
  if (suite == "context_sliced") {
    json contexts = json::array();
    for (const auto& rep : per_context) {
      json c;
      c["context"] = rep.context;
      c["n_samples"] = rep.n_samples;
      c["n_positives"] = rep.n_positives;
      c["auroc"] = rep.auroc ? json(*rep.auroc) : json(nullptr);
      json ap = json::object();
      for (const auto& [r, v] : rep.ap_at_r) ap[std::to_string(r)] = v ? json(*v) : json(nullptr);
      c["ap_at_r"] = ap;
      contexts.push_back(c);
    }
    doc["per_context"] = contexts;
    json tk = json::object();
    for (const auto& [k, v] : topk_auroc) tk[std::to_string(k)] = v;
    doc["topk_auroc"] = tk;
    json tkap = json::object();
    for (const auto& [r, ks] : topk_ap_at_r) {
      json inner = json::object();
      for (const auto& [k, v] : ks) inner[std::to_string(k)] = v;
      tkap[std::to_string(r)] = inner;
    }
    doc["topk_ap_at_r"] = tkap;
  }
  if (cf_auroc || cf_auprc || cf_acc || cf_f1 || !cf_ap_at_r.empty()) {
    json cf;
    if (cf_auroc) cf["auroc"] = *cf_auroc;
    if (cf_auprc) cf["auprc"] = *cf_auprc;
    if (cf_acc) cf["acc"] = *cf_acc;
    if (cf_f1) cf["f1"] = *cf_f1;
    if (!cf_ap_at_r.empty()) {
      json ap = json::object();
      for (const auto& [r, v] : cf_ap_at_r) ap[std::to_string(r)] = v;
      cf["ap_at_r"] = ap;
    }
    doc["context_free"] = cf;
  }
  if (threshold) doc["threshold"] = *threshold;
  if (!mse_at_deg.empty()) {
    json mse = json::object();
    for (const auto& [k, v] : mse_at_deg) mse[std::to_string(k)] = v;
    doc["mse_at_deg"] = mse;
  }
  if (r2) doc["r_squared"] = *r2;
  if (!deg.empty()) doc["deg"] = deg;
  return doc;
}

std::string MetricReport::canonical_json() const { return to_json().dump(); }

std::map<std::string, double> MetricReport::flat_metrics() const {
  std::map<std::string, double> out;
  for (const auto& [k, v] : topk_auroc) out["topk_auroc." + std::to_string(k)] = v;
  for (const auto& [r, ks] : topk_ap_at_r)
    for (const auto& [k, v] : ks)
      out["topk_ap_at_r." + std::to_string(r) + "." + std::to_string(k)] = v;
  if (cf_auroc) out["cf.auroc"] = *cf_auroc;
  if (cf_auprc) out["cf.auprc"] = *cf_auprc;
  if (cf_acc) out["cf.acc"] = *cf_acc;
  if (cf_f1) out["cf.f1"] = *cf_f1;
  for (const auto& [r, v] : cf_ap_at_r) out["cf.ap_at_r." + std::to_string(r)] = v;
  for (const auto& [k, v] : mse_at_deg) out["mse_at_deg." + std::to_string(k)] = v;
  if (r2) out["r_squared"] = *r2;
  return out;
}

std::vector<SeedAggregate> aggregate_seeds(const std::vector<MetricReport>& reports) {
  require(!reports.empty(), Errc::invalid_argument, "no reports");
  std::vector<std::map<std::string, double>> flats;
  for (const auto& rep : reports) flats.push_back(rep.flat_metrics());
  return aggregate_metric_maps(flats);
}

std::vector<SeedAggregate> aggregate_metric_maps(
    const std::vector<std::map<std::string, double>>& flats) {
  require(!flats.empty(), Errc::invalid_argument, "no reports");
  for (size_t i = 1; i < flats.size(); ++i) {
    if (flats[i].size() != flats[0].size()) fail(Errc::key_mismatch, "metric key sets differ");
    for (auto a = flats[0].begin(), b = flats[i].begin(); a != flats[0].end(); ++a, ++b)
      require(a->first == b->first, Errc::key_mismatch, "metric key sets differ");
  }

  std::vector<SeedAggregate> out;
  double n = static_cast<double>(flats.size());
  for (const auto& [key, first_value] : flats[0]) {
    SeedAggregate agg;
    agg.metric = key;
    agg.n_seeds = flats.size();
    double sum = 0.0;
    for (const auto& flat : flats) sum += flat.at(key);
    agg.mean = sum / n;
    double ss = 0.0;
    for (const auto& flat : flats) {
      double d = flat.at(key) - agg.mean;
      ss += d * d;
    }
    agg.std_dev = std::sqrt(ss / n);
    out.push_back(std::move(agg));
  }
  return out;
}

json aggregates_to_json(const std::vector<SeedAggregate>& aggs) {
  json doc = json::object();
  for (const auto& a : aggs)
    doc[a.metric] = {{"mean", a.mean}, {"std", a.std_dev}, {"n_seeds", a.n_seeds}};
  return doc;
}

std::string aggregates_to_table(const std::vector<SeedAggregate>& aggs) {
  size_t width = 6;
  for (const auto& a : aggs) width = std::max(width, a.metric.size());
  std::string out;
  for (const auto& a : aggs) {
    std::string line = a.metric;
    line.resize(width + 2, ' ');
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f \xC2\xB1 %.3f", a.mean, a.std_dev);
    out += line + buf + "\n";
  }
  return out;
}

}  // namespace slicebench
