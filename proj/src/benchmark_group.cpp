#include "slicebench/benchmark_group.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "slicebench/csv.hpp"
#include "slicebench/rng.hpp"

namespace slicebench {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration JSON

json MetricSuiteSpec::to_json() const {
  json doc;
  doc["family"] = family;
  doc["k_list"] = k_list;
  doc["r_list"] = r_list;
  doc["deg_k"] = deg_k;
  doc["threshold"] = threshold;
  doc["primary_metric"] = primary_metric;
  return doc;
}

MetricSuiteSpec MetricSuiteSpec::from_json(const json& doc) {
  MetricSuiteSpec s;
  s.family = doc.at("family").get<std::string>();
  require(s.family == "scdtn" || s.family == "classification" || s.family == "perturbation",
          Errc::invalid_argument, "unknown metric suite family '" + s.family + "'");
  if (doc.contains("k_list")) s.k_list = doc["k_list"].get<std::vector<size_t>>();
  if (doc.contains("r_list")) s.r_list = doc["r_list"].get<std::vector<size_t>>();
  s.deg_k = doc.value("deg_k", size_t{20});
  s.threshold = doc.value("threshold", 0.5);
  s.primary_metric = doc.value("primary_metric", "");
  return s;
}

json GroupSplitParams::to_json() const {
  json doc;
  doc["kind"] = split_kind_name(kind);
  doc["fractions"] = fractions;
  if (!cutoff.empty()) doc["cutoff"] = cutoff;
  doc["test_fraction"] = test_fraction;
  return doc;
}

GroupSplitParams GroupSplitParams::from_json(const json& doc) {
  GroupSplitParams p;
  p.kind = parse_split_kind(doc.at("kind").get<std::string>());
  if (doc.contains("fractions")) {
    auto f = doc["fractions"].get<std::vector<double>>();
    require(f.size() == 3, Errc::invalid_argument, "fractions must have 3 entries");
    p.fractions = {f[0], f[1], f[2]};
  }
  p.cutoff = doc.value("cutoff", "");
  p.test_fraction = doc.value("test_fraction", 0.9);
  return p;
}

json BenchmarkGroup::to_json() const {
  json doc;
  doc["group_id"] = group_id;
  doc["dataset"] = {{"name", dataset_name}, {"version", dataset_version}};
  if (!control_dataset_name.empty())
    doc["control_dataset"] = {{"name", control_dataset_name},
                              {"version", control_dataset_version}};
  if (!context.empty()) doc["context"] = context;
  doc["split"] = split.to_json();
  doc["suite"] = suite.to_json();
  doc["label_holdout"] = label_holdout;
  return doc;
}

BenchmarkGroup BenchmarkGroup::from_json(const json& doc) {
  BenchmarkGroup g;
  g.group_id = doc.at("group_id").get<std::string>();
  g.dataset_name = doc.at("dataset").at("name").get<std::string>();
  g.dataset_version = doc.at("dataset").at("version").get<uint64_t>();
  if (doc.contains("control_dataset")) {
    g.control_dataset_name = doc["control_dataset"].at("name").get<std::string>();
    g.control_dataset_version = doc["control_dataset"].at("version").get<uint64_t>();
  }
  g.context = doc.value("context", "");
  g.split = GroupSplitParams::from_json(doc.at("split"));
  g.suite = MetricSuiteSpec::from_json(doc.at("suite"));
  g.label_holdout = doc.value("label_holdout", true);
  return g;
}

// ---------------------------------------------------------------------------
// GroupStore

GroupStore::GroupStore(std::filesystem::path data_dir) : path_(data_dir / "groups.json") {
  std::filesystem::create_directories(data_dir);
}

std::vector<BenchmarkGroup> GroupStore::load() const {
  if (!std::filesystem::exists(path_)) return {};
  std::ifstream in(path_);
  json doc = json::parse(in);
  std::vector<BenchmarkGroup> out;
  for (const auto& entry : doc) out.push_back(BenchmarkGroup::from_json(entry));
  return out;
}

void GroupStore::store(const std::vector<BenchmarkGroup>& groups) const {
  json doc = json::array();
  for (const auto& g : groups) doc.push_back(g.to_json());
  std::ofstream out(path_, std::ios::trunc);
  out << doc.dump(2) << "\n";
}

void GroupStore::add(const BenchmarkGroup& group) {
  require(!group.group_id.empty(), Errc::invalid_argument, "empty group id");
  auto groups = load();
  for (const auto& g : groups)
    require(g.group_id != group.group_id, Errc::invalid_argument,
            "group '" + group.group_id + "' already exists");
  groups.push_back(group);
  store(groups);
}

BenchmarkGroup GroupStore::get(const std::string& group_id) const {
  for (const auto& g : load())
    if (g.group_id == group_id) return g;
  fail(Errc::unknown_group, group_id);
}

std::vector<BenchmarkGroup> GroupStore::list() const { return load(); }

bool GroupStore::holds_labels_for(const std::string& dataset_name) const {
  for (const auto& g : load())
    if (g.label_holdout && g.dataset_name == dataset_name) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Dataset loading

namespace {

// Generic labeled table: entity[,context],label plus optional date columns.
std::vector<ContextSample> samples_from_table(const Table& t) {
  size_t entity_col = t.col("entity");
  auto context_col = t.find_col("context");
  size_t label_col = t.col("label");
  std::vector<ContextSample> out;
  std::set<std::pair<EntityId, ContextId>> seen;
  for (const auto& row : t.rows) {
    ContextSample s;
    s.entity = row[entity_col];
    s.context = context_col ? row[*context_col] : "";
    long long label;
    require(parse_int(row[label_col], label) && (label == 0 || label == 1), Errc::malformed_row,
            "label must be 0 or 1, got '" + row[label_col] + "'");
    s.label = static_cast<int>(label);
    require(seen.emplace(s.entity, s.context).second, Errc::duplicate_key,
            "(" + s.entity + ", " + s.context + ")");
    out.push_back(std::move(s));
  }
  return out;
}

SplitSpec derive_split(const BenchmarkGroup& group, const Table& table,
                       const std::vector<ContextSample>& samples, uint64_t seed) {
  switch (group.split.kind) {
    case SplitKind::cold:
      return cold_split(samples, group.split.fractions, seed);
    case SplitKind::random_uniform: {
      std::vector<EntityId> ids;
      for (const auto& s : samples) ids.push_back(s.entity);
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      return random_split(ids, group.split.fractions, seed);
    }
    case SplitKind::stratified: {
      std::vector<std::pair<EntityId, int>> items;
      std::set<EntityId> seen;
      for (const auto& s : samples) {
        require(seen.insert(s.entity).second, Errc::invalid_argument,
                "stratified split needs one row per entity; duplicate '" + s.entity + "'");
        items.emplace_back(s.entity, s.label);
      }
      return stratified_split(items, group.split.test_fraction, seed);
    }
    case SplitKind::temporal: {
      require(!group.split.cutoff.empty(), Errc::invalid_argument,
              "temporal split needs a cutoff date");
      size_t entity_col = table.col("entity");
      size_t start_col = table.col("start_date");
      size_t completion_col = table.col("completion_date");
      auto phase_col = table.find_col("phase");
      size_t label_col = table.col("label");
      std::vector<TrialRecord> records;
      for (const auto& row : table.rows) {
        TrialRecord r;
        r.trial_id = row[entity_col];
        r.start_date = row[start_col];
        r.completion_date = row[completion_col];
        r.phase = phase_col ? parse_phase(row[*phase_col]) : Phase::I;
        long long label;
        parse_int(row[label_col], label);
        r.label = static_cast<int>(label);
        records.push_back(std::move(r));
      }
      return temporal_split(records, group.split.cutoff, seed);
    }
  }
  fail(Errc::invalid_argument, "unhandled split kind");
}

std::vector<double> per_gene_means(const ExpressionMatrix& m) {
  std::vector<double> means(m.n_genes(), 0.0);
  for (size_t c = 0; c < m.n_cells(); ++c)
    for (size_t g = 0; g < m.n_genes(); ++g) means[g] += m.normalized_at(c, g);
  for (auto& v : means) v /= static_cast<double>(m.n_cells());
  return means;
}

}  // namespace

GroupData prepare_group(const Registry& registry, const BenchmarkGroup& group, uint64_t seed) {
  GroupData data;
  data.group = group;
  data.seed = seed;

  if (group.suite.family == "perturbation") {
    require(!group.control_dataset_name.empty(), Errc::invalid_argument,
            "perturbation group needs a control dataset");
    auto perturbed_manifest = registry.manifest(group.dataset_name, group.dataset_version);
    auto control_manifest =
        registry.manifest(group.control_dataset_name, group.control_dataset_version);
    ExpressionMatrix perturbed = parse_expression_matrix(
        registry.read_blob(perturbed_manifest), Condition{true, group.dataset_name},
        group.context);
    ExpressionMatrix control = parse_expression_matrix(registry.read_blob(control_manifest),
                                                       Condition{false, ""}, group.context);
    data.perturbed = normalize_counts(perturbed);
    data.control = normalize_counts(control);
    data.deg = select_deg(data.control, data.perturbed, group.suite.deg_k);
    data.actual_means = per_gene_means(data.perturbed);
    data.baseline_means = per_gene_means(data.control);
    for (size_t g = 0; g < data.control.n_genes(); ++g)
      data.gene_index[data.control.genes()[g]] = g;
    return data;
  }

  auto manifest = registry.manifest(group.dataset_name, group.dataset_version);
  Table table = Table::from_csv(registry.read_blob(manifest));
  std::vector<ContextSample> samples = samples_from_table(table);
  data.split = derive_split(group, table, samples, seed);
  for (const auto& s : samples) {
    if (data.split.in_train(s.entity)) data.train_samples.push_back(s);
    else if (data.split.in_valid(s.entity)) data.valid_samples.push_back(s);
    else if (data.split.in_test(s.entity)) data.test_samples.push_back(s);
    // entities in neither fold were dropped by the split (temporal straddlers)
  }
  return data;
}

json split_document(const GroupData& data) {
  json doc;
  if (data.group.suite.family == "perturbation") {
    doc["kind"] = "perturbation";
    doc["seed"] = data.seed;
    doc["prng"] = kPrngName;
    doc["context"] = data.group.context;
    json test = json::array();
    for (const auto& gene : data.control.genes())
      test.push_back({{"entity", gene}, {"context", data.group.context}});
    doc["train"] = json::array();
    doc["valid"] = json::array();
    doc["test"] = test;
    doc["dropped"] = json::array();
    return doc;
  }

  doc["kind"] = split_kind_name(data.split.kind);
  doc["seed"] = data.split.seed;
  doc["prng"] = data.split.prng;
  auto labeled_rows = [](const std::vector<ContextSample>& rows) {
    json arr = json::array();
    for (const auto& s : rows)
      arr.push_back({{"entity", s.entity}, {"context", s.context}, {"label", s.label}});
    return arr;
  };
  doc["train"] = labeled_rows(data.train_samples);
  doc["valid"] = labeled_rows(data.valid_samples);
  json test = json::array();
  for (const auto& s : data.test_samples) {
    json row = {{"entity", s.entity}, {"context", s.context}};
    if (!data.group.label_holdout) row["label"] = s.label;
    test.push_back(row);
  }
  doc["test"] = test;
  doc["dropped"] = data.split.dropped;
  return doc;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

void check_prediction_cover(const PredictionSet& preds,
                            const std::set<std::pair<EntityId, ContextId>>& expected) {
  size_t unknown = 0;
  std::set<std::pair<EntityId, ContextId>> covered;
  for (const auto& row : preds.rows) {
    if (expected.count({row.entity, row.context})) covered.emplace(row.entity, row.context);
    else ++unknown;
  }
  require(unknown == 0, Errc::unknown_keys, std::to_string(unknown));
  require(covered.size() == expected.size(), Errc::missing_predictions,
          std::to_string(expected.size() - covered.size()));
}

MetricReport evaluate_scdtn(const GroupData& data, const PredictionSet& preds) {
  MetricReport report;
  report.suite = "context_sliced";
  report.seed = data.seed;

  const auto& suite = data.group.suite;
  require(!suite.k_list.empty(), Errc::invalid_argument, "scdtn suite needs a K list");

  std::vector<size_t> r_list = suite.r_list;
  TopKAuroc first;
  bool have_slices = false;
  for (size_t k : suite.k_list) {
    TopKAuroc res = context_auroc_topk(preds, data.test_samples, k, data.seed);
    report.topk_auroc[k] = res.value;
    if (!have_slices) {
      first = std::move(res);
      have_slices = true;
    }
  }
  for (size_t r : r_list)
    for (size_t k : suite.k_list)
      report.topk_ap_at_r[r][k] = context_ap_at_r_topk(preds, data.test_samples, r, k, data.seed);

  // per-context detail with AP@R values attached
  std::map<ContextId, ContextSliceReport> detail;
  for (auto& rep : first.slices) detail[rep.context] = rep;
  if (!r_list.empty()) {
    // recompute slice AP via the slice reports embedded in context_ap_at_r_topk's
    // inputs: reuse the metric ops directly per context
    std::map<ContextId, std::pair<std::vector<double>, std::vector<int>>> by_ctx;
    std::map<std::pair<EntityId, ContextId>, int> labels;
    for (const auto& s : data.test_samples) labels[{s.entity, s.context}] = s.label;
    for (const auto& row : preds.rows) {
      auto it = labels.find({row.entity, row.context});
      if (it == labels.end()) continue;
      by_ctx[row.context].first.push_back(row.score);
      by_ctx[row.context].second.push_back(it->second);
    }
    for (auto& [ctx, slice] : by_ctx) {
      auto& rep = detail[ctx];
      uint64_t tie_seed = context_tie_seed(data.seed, ctx);
      for (size_t r : r_list) {
        if (rep.n_positives > 0)
          rep.ap_at_r[r] = ap_at_r(slice.first, slice.second, r, tie_seed);
        else
          rep.ap_at_r[r] = std::nullopt;
      }
    }
  }
  for (auto& [ctx, rep] : detail) report.per_context.push_back(rep);

  ContextFreeSuite cf = context_free_suite(preds, data.test_samples, r_list, data.seed);
  report.cf_auroc = cf.auroc;
  report.cf_ap_at_r = cf.ap_at_r;

  std::vector<double> pooled_scores;
  std::vector<int> pooled_labels;
  std::map<std::pair<EntityId, ContextId>, int> labels;
  for (const auto& s : data.test_samples) labels[{s.entity, s.context}] = s.label;
  for (const auto& row : preds.rows) {
    auto it = labels.find({row.entity, row.context});
    if (it == labels.end()) continue;
    pooled_scores.push_back(row.score);
    pooled_labels.push_back(it->second);
  }
  ClassificationSuite cls = classification_suite(pooled_scores, pooled_labels, suite.threshold);
  report.cf_acc = cls.acc;
  report.cf_f1 = cls.f1;
  report.cf_auprc = cls.auprc;
  report.threshold = suite.threshold;
  return report;
}

MetricReport evaluate_classification(const GroupData& data, const PredictionSet& preds) {
  MetricReport report;
  report.suite = "classification";
  report.seed = data.seed;

  std::map<std::pair<EntityId, ContextId>, int> labels;
  for (const auto& s : data.test_samples) labels[{s.entity, s.context}] = s.label;
  std::vector<double> scores;
  std::vector<int> y;
  for (const auto& row : preds.rows) {
    auto it = labels.find({row.entity, row.context});
    if (it == labels.end()) continue;
    scores.push_back(row.score);
    y.push_back(it->second);
  }
  ClassificationSuite cls = classification_suite(scores, y, data.group.suite.threshold);
  report.cf_acc = cls.acc;
  report.cf_f1 = cls.f1;
  report.cf_auroc = cls.auroc;
  report.cf_auprc = cls.auprc;
  report.threshold = data.group.suite.threshold;
  require(cls.auroc.has_value(), Errc::degenerate_slice,
          "test fold is single-class; rank metrics undefined");
  return report;
}

MetricReport evaluate_perturbation(const GroupData& data, const PredictionSet& preds) {
  MetricReport report;
  report.suite = "perturbation";
  report.seed = data.seed;

  size_t n_genes = data.control.n_genes();
  std::vector<double> pred(n_genes, 0.0);
  std::vector<char> seen(n_genes, 0);
  size_t unknown = 0;
  for (const auto& row : preds.rows) {
    auto it = data.gene_index.find(row.entity);
    if (it == data.gene_index.end() || row.context != data.group.context) {
      ++unknown;
      continue;
    }
    pred[it->second] = row.score;
    seen[it->second] = 1;
  }
  require(unknown == 0, Errc::unknown_keys, std::to_string(unknown));
  size_t missing = 0;
  for (char s : seen) missing += !s;
  require(missing == 0, Errc::missing_predictions, std::to_string(missing));

  report.mse_at_deg[data.group.suite.deg_k] =
      mse_at_deg(pred, data.actual_means, data.deg, data.gene_index);
  report.r2 = r_squared(pred, data.actual_means);
  report.deg = data.deg;
  return report;
}

}  // namespace

MetricReport evaluate_prepared(const GroupData& data, const PredictionSet& preds) {
  const std::string& family = data.group.suite.family;
  if (family == "perturbation") return evaluate_perturbation(data, preds);

  std::set<std::pair<EntityId, ContextId>> expected;
  for (const auto& s : data.test_samples) expected.emplace(s.entity, s.context);
  require(!expected.empty(), Errc::degenerate_slice, "empty test fold");
  check_prediction_cover(preds, expected);

  if (family == "scdtn") return evaluate_scdtn(data, preds);
  return evaluate_classification(data, preds);
}

MetricReport evaluate_group(const Registry& registry, const BenchmarkGroup& group,
                            const PredictionSet& preds, uint64_t seed) {
  GroupData data = prepare_group(registry, group, seed);
  return evaluate_prepared(data, preds);
}

// ---------------------------------------------------------------------------
// Leaderboards

json LeaderboardEntry::to_json() const {
  json doc;
  doc["group_id"] = group_id;
  doc["submission_id"] = submission_id;
  doc["submitted_at"] = submitted_at;
  doc["n_seeds"] = n_seeds;
  doc["aggregates"] = aggregates_to_json(aggregates);
  return doc;
}

LeaderboardStore::LeaderboardStore(std::filesystem::path data_dir)
    : dir_(data_dir / "leaderboards") {
  std::filesystem::create_directories(dir_);
}

void LeaderboardStore::append(const std::string& group_id, const std::string& submission_id,
                              uint64_t seed, const MetricReport& report,
                              const std::string& submitted_at) {
  json line;
  line["group_id"] = group_id;
  line["submission_id"] = submission_id;
  line["seed"] = seed;
  line["submitted_at"] = submitted_at;
  json metrics = json::object();
  for (const auto& [k, v] : report.flat_metrics()) metrics[k] = v;
  line["metrics"] = metrics;
  std::ofstream out(dir_ / (group_id + ".jsonl"), std::ios::app);
  require(out.good(), Errc::io_error, "cannot append leaderboard for " + group_id);
  out << line.dump() << "\n";
}

std::vector<LeaderboardEntry> LeaderboardStore::entries(const std::string& group_id,
                                                        const std::string& primary_metric) const {
  auto path = dir_ / (group_id + ".jsonl");
  std::vector<LeaderboardEntry> out;
  if (!std::filesystem::exists(path)) return out;

  struct Submission {
    std::string submitted_at;
    std::vector<std::map<std::string, double>> metric_maps;
  };
  std::map<std::string, Submission> by_submission;
  std::vector<std::string> order;  // first-appearance order

  std::ifstream in(path);
  std::string raw;
  while (std::getline(in, raw)) {
    if (raw.empty()) continue;
    json line = json::parse(raw);
    std::string sid = line.at("submission_id").get<std::string>();
    auto [it, inserted] = by_submission.try_emplace(sid);
    if (inserted) {
      it->second.submitted_at = line.at("submitted_at").get<std::string>();
      order.push_back(sid);
    }
    std::map<std::string, double> metrics;
    for (auto m = line.at("metrics").begin(); m != line.at("metrics").end(); ++m)
      metrics[m.key()] = m.value().get<double>();
    it->second.metric_maps.push_back(std::move(metrics));
  }

  for (const auto& sid : order) {
    const auto& sub = by_submission.at(sid);
    LeaderboardEntry entry;
    entry.group_id = group_id;
    entry.submission_id = sid;
    entry.submitted_at = sub.submitted_at;
    entry.n_seeds = sub.metric_maps.size();
    entry.aggregates = aggregate_metric_maps(sub.metric_maps);
    out.push_back(std::move(entry));
  }

  auto primary_mean = [&](const LeaderboardEntry& e) {
    for (const auto& a : e.aggregates)
      if (a.metric == primary_metric) return a.mean;
    return -std::numeric_limits<double>::infinity();
  };
  std::stable_sort(out.begin(), out.end(), [&](const LeaderboardEntry& a, const LeaderboardEntry& b) {
    double ma = primary_mean(a), mb = primary_mean(b);
    if (ma != mb) return ma > mb;
    return a.submitted_at < b.submitted_at;
  });
  return out;
}

}  // namespace slicebench
