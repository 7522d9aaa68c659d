#include "slicebench/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "slicebench/csv.hpp"

namespace slicebench {

using nlohmann::json;

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::malformed_row: return "MalformedRow";
    case Errc::duplicate_key: return "DuplicateKey";
    case Errc::unknown_column: return "UnknownColumn";
    case Errc::self_loop: return "SelfLoop";
    case Errc::unknown_node: return "UnknownNode";
    case Errc::non_positive_weight: return "NonPositiveWeight";
    case Errc::empty_matrix: return "EmptyMatrix";
    case Errc::not_normalized: return "NotNormalized";
    case Errc::too_few_cells: return "TooFewCells";
    case Errc::degenerate_slice: return "DegenerateSlice";
    case Errc::not_enough_contexts: return "NotEnoughContexts";
    case Errc::key_mismatch: return "KeyMismatch";
    case Errc::missing_gene: return "MissingGene";
    case Errc::constant_actual: return "ConstantActual";
    case Errc::too_few_entities: return "TooFewEntities";
    case Errc::empty_fold: return "EmptyFold";
    case Errc::degenerate_class: return "DegenerateClass";
    case Errc::exhausted_candidates: return "ExhaustedCandidates";
    case Errc::missing_external_pool: return "MissingExternalPool";
    case Errc::missing_experimental_negatives: return "MissingExperimentalNegatives";
    case Errc::unknown_context: return "UnknownContext";
    case Errc::seed_node_missing: return "SeedNodeMissing";
    case Errc::missing_embedding: return "MissingEmbedding";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::dim_mismatch: return "DimMismatch";
    case Errc::corrupt_file: return "CorruptFile";
    case Errc::schema_mismatch: return "SchemaMismatch";
    case Errc::hash_collision: return "HashCollision";
    case Errc::unknown_parent: return "UnknownParent";
    case Errc::unknown_dataset: return "UnknownDataset";
    case Errc::unknown_transform: return "UnknownTransform";
    case Errc::column_missing: return "ColumnMissing";
    case Errc::fetch_failure: return "FetchFailure";
    case Errc::fixture_missing: return "FixtureMissing";
    case Errc::bad_filter: return "BadFilter";
    case Errc::bad_cursor: return "BadCursor";
    case Errc::unknown_group: return "UnknownGroup";
    case Errc::missing_predictions: return "MissingPredictions";
    case Errc::unknown_keys: return "UnknownKeys";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::io_error: return "IoError";
  }
  return "Error";
}

namespace {

std::string fmt_real(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

int parse_binary_label(const std::string& s, size_t line) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  fail(Errc::malformed_row, "line " + std::to_string(line) + ": label must be 0 or 1, got '" + s + "'");
}

// Header lookup for files whose column set is closed.
std::vector<size_t> bind_header(const std::vector<std::string>& header,
                                const std::vector<std::string>& required) {
  std::vector<size_t> idx(required.size());
  for (size_t i = 0; i < required.size(); ++i) {
    auto it = std::find(header.begin(), header.end(), required[i]);
    require(it != header.end(), Errc::unknown_column, "missing column '" + required[i] + "'");
    idx[i] = static_cast<size_t>(it - header.begin());
  }
  for (const auto& col : header) {
    if (std::find(required.begin(), required.end(), col) == required.end())
      fail(Errc::unknown_column, "'" + col + "'");
  }
  return idx;
}

json parse_jsonl_line(const std::string& line, size_t lineno) {
  json obj = json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object())
    fail(Errc::malformed_row, "line " + std::to_string(lineno) + ": not a JSON object");
  return obj;
}

template <typename Fn>
void for_each_jsonl(std::istream& in, Fn&& fn) {
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(parse_jsonl_line(line, lineno), lineno);
  }
}

std::string jsonl_string(const json& obj, const char* key, size_t lineno) {
  if (!obj.contains(key) || !obj[key].is_string())
    fail(Errc::malformed_row, "line " + std::to_string(lineno) + ": missing string field '" + key + "'");
  return obj[key].get<std::string>();
}

void check_jsonl_keys(const json& obj, const std::vector<std::string>& allowed, size_t lineno) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      fail(Errc::unknown_column, "line " + std::to_string(lineno) + ": '" + it.key() + "'");
  }
}

}  // namespace

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::I: return "I";
    case Phase::II: return "II";
    case Phase::III: return "III";
  }
  return "I";
}

Phase parse_phase(const std::string& s) {
  if (s == "I" || s == "1") return Phase::I;
  if (s == "II" || s == "2") return Phase::II;
  if (s == "III" || s == "3") return Phase::III;
  fail(Errc::malformed_row, "unknown phase '" + s + "'");
}

bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (s[i] < '0' || s[i] > '9') return false;
  int month = (s[5] - '0') * 10 + (s[6] - '0');
  int day = (s[8] - '0') * 10 + (s[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

// ---------------------------------------------------------------------------
// ContextGraph

uint32_t ContextGraph::add_node(const EntityId& id) {
  require(!id.empty(), Errc::malformed_row, "empty node id");
  auto it = index_.find(id);
  if (it != index_.end()) return it->second;
  uint32_t idx = static_cast<uint32_t>(nodes_.size());
  nodes_.push_back(id);
  adjacency_.emplace_back();
  index_.emplace(id, idx);
  return idx;
}

uint32_t ContextGraph::index_of(const EntityId& id) const {
  auto it = index_.find(id);
  require(it != index_.end(), Errc::unknown_node, id);
  return it->second;
}

bool ContextGraph::has_edge(uint32_t a, uint32_t b) const {
  const auto& adj = adjacency_[a];
  auto it = std::lower_bound(adj.begin(), adj.end(), b,
                             [](const auto& e, uint32_t v) { return e.first < v; });
  return it != adj.end() && it->first == b;
}

void ContextGraph::add_edge(const EntityId& a, const EntityId& b, double weight) {
  require(a != b, Errc::self_loop, a);
  require(weight > 0.0 && std::isfinite(weight), Errc::non_positive_weight,
          a + " - " + b + " weight " + fmt_real(weight));
  uint32_t ia = add_node(a);
  uint32_t ib = add_node(b);
  if (has_edge(ia, ib)) return;
  auto insert_sorted = [](std::vector<std::pair<uint32_t, double>>& adj, uint32_t v, double w) {
    auto it = std::lower_bound(adj.begin(), adj.end(), v,
                               [](const auto& e, uint32_t x) { return e.first < x; });
    adj.insert(it, {v, w});
  };
  insert_sorted(adjacency_[ia], ib, weight);
  insert_sorted(adjacency_[ib], ia, weight);
  ++n_edges_;
}

void ContextGraph::add_to_context(const ContextId& ctx, const EntityId& node) {
  require(!ctx.empty(), Errc::malformed_row, "empty context id");
  uint32_t idx = index_of(node);
  auto& members = contexts_[ctx];
  auto it = std::lower_bound(members.begin(), members.end(), idx);
  if (it == members.end() || *it != idx) members.insert(it, idx);
}

const std::vector<uint32_t>& ContextGraph::context_nodes(const ContextId& ctx) const {
  auto it = contexts_.find(ctx);
  require(it != contexts_.end(), Errc::unknown_context, ctx);
  return it->second;
}

// ---------------------------------------------------------------------------
// ExpressionMatrix

ExpressionMatrix::ExpressionMatrix(std::vector<EntityId> genes, std::vector<std::string> cells,
                                   std::vector<double> counts, Condition condition,
                                   ContextId context)
    : genes_(std::move(genes)),
      cells_(std::move(cells)),
      counts_(std::move(counts)),
      condition_(std::move(condition)),
      context_(std::move(context)) {
  require(counts_.size() == genes_.size() * cells_.size(), Errc::malformed_row,
          "counts size does not match cells x genes");
  for (size_t g = 0; g < genes_.size(); ++g) {
    auto [it, inserted] = gene_index_.emplace(genes_[g], g);
    require(inserted, Errc::duplicate_key, "gene " + genes_[g]);
  }
  for (double v : counts_)
    require(v >= 0.0 && std::isfinite(v), Errc::malformed_row, "negative or non-finite count");
}

double ExpressionMatrix::normalized_at(size_t cell, size_t gene) const {
  require(normalized(), Errc::not_normalized, "call normalize_counts first");
  return normalized_[cell * genes_.size() + gene];
}

const std::vector<double>& ExpressionMatrix::normalized_values() const {
  require(normalized(), Errc::not_normalized, "call normalize_counts first");
  return normalized_;
}

size_t ExpressionMatrix::gene_index(const EntityId& gene) const {
  auto it = gene_index_.find(gene);
  require(it != gene_index_.end(), Errc::missing_gene, gene);
  return it->second;
}

ExpressionMatrix normalize_counts(const ExpressionMatrix& m, std::optional<double> target_total,
                                  std::vector<std::string>* warnings) {
  require(m.n_cells() > 0 && m.n_genes() > 0, Errc::empty_matrix, "no cells or genes");
  std::vector<double> totals(m.n_cells(), 0.0);
  for (size_t c = 0; c < m.n_cells(); ++c)
    for (size_t g = 0; g < m.n_genes(); ++g) totals[c] += m.count_at(c, g);

  double target;
  if (target_total) {
    target = *target_total;
  } else {
    std::vector<double> sorted = totals;
    std::sort(sorted.begin(), sorted.end());
    size_t n = sorted.size();
    target = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }

  ExpressionMatrix out = m;
  out.normalized_.assign(m.counts().size(), 0.0);
  for (size_t c = 0; c < m.n_cells(); ++c) {
    if (totals[c] == 0.0) {
      if (warnings)
        warnings->push_back("AllZeroCell(" + m.cells()[c] + ")");
      continue;
    }
    double scale = target / totals[c];
    for (size_t g = 0; g < m.n_genes(); ++g)
      out.normalized_[c * m.n_genes() + g] = std::log1p(m.count_at(c, g) * scale);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Samples

std::vector<ContextSample> parse_samples(std::istream& in, Format format) {
  std::vector<ContextSample> out;
  std::set<std::pair<EntityId, ContextId>> seen;
  auto push = [&](ContextSample s, size_t line) {
    require(!s.entity.empty() && !s.context.empty(), Errc::malformed_row,
            "line " + std::to_string(line) + ": empty entity or context");
    if (!seen.emplace(s.entity, s.context).second)
      fail(Errc::duplicate_key, "(" + s.entity + ", " + s.context + ")");
    out.push_back(std::move(s));
  };

  if (format == Format::csv) {
    CsvReader reader(in);
    std::vector<std::string> fields;
    require(reader.next(fields), Errc::malformed_row, "empty input, header expected");
    auto idx = bind_header(fields, {"entity", "context", "label"});
    while (reader.next(fields)) {
      require(fields.size() == 3, Errc::malformed_row,
              "line " + std::to_string(reader.line()) + ": expected 3 fields");
      push({fields[idx[0]], fields[idx[1]], parse_binary_label(fields[idx[2]], reader.line())},
           reader.line());
    }
  } else {
    for_each_jsonl(in, [&](const json& obj, size_t line) {
      check_jsonl_keys(obj, {"entity", "context", "label"}, line);
      ContextSample s;
      s.entity = jsonl_string(obj, "entity", line);
      s.context = jsonl_string(obj, "context", line);
      if (!obj.contains("label") || !obj["label"].is_number_integer())
        fail(Errc::malformed_row, "line " + std::to_string(line) + ": missing integer label");
      int label = obj["label"].get<int>();
      require(label == 0 || label == 1, Errc::malformed_row,
              "line " + std::to_string(line) + ": label must be 0 or 1");
      s.label = label;
      push(std::move(s), line);
    });
  }
  return out;
}

std::vector<ContextSample> parse_samples(const std::string& bytes, Format format) {
  std::istringstream in(bytes);
  return parse_samples(in, format);
}

std::string serialize_samples(const std::vector<ContextSample>& samples, Format format) {
  std::string out;
  if (format == Format::csv) {
    out = "entity,context,label\n";
    for (const auto& s : samples)
      out += csv_join({s.entity, s.context, std::to_string(s.label)}) + "\n";
  } else {
    for (const auto& s : samples) {
      json obj{{"entity", s.entity}, {"context", s.context}, {"label", s.label}};
      out += obj.dump() + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Predictions

PredictionSet parse_predictions(std::istream& in, Format format, bool bounded) {
  PredictionSet out;
  std::set<std::pair<EntityId, ContextId>> seen;
  auto push = [&](PredictionRow r, size_t line) {
    require(!r.entity.empty(), Errc::malformed_row,
            "line " + std::to_string(line) + ": empty entity");
    require(std::isfinite(r.score), Errc::malformed_row,
            "line " + std::to_string(line) + ": score must be finite");
    require(!bounded || (r.score >= 0.0 && r.score <= 1.0), Errc::malformed_row,
            "line " + std::to_string(line) + ": score must be in [0,1]");
    if (!seen.emplace(r.entity, r.context).second)
      fail(Errc::duplicate_key, "(" + r.entity + ", " + r.context + ")");
    out.rows.push_back(std::move(r));
  };

  if (format == Format::csv) {
    CsvReader reader(in);
    std::vector<std::string> fields;
    require(reader.next(fields), Errc::malformed_row, "empty input, header expected");
    auto idx = bind_header(fields, {"entity", "context", "score"});
    while (reader.next(fields)) {
      require(fields.size() == 3, Errc::malformed_row,
              "line " + std::to_string(reader.line()) + ": expected 3 fields");
      double score;
      require(parse_real(fields[idx[2]], score), Errc::malformed_row,
              "line " + std::to_string(reader.line()) + ": bad score '" + fields[idx[2]] + "'");
      push({fields[idx[0]], fields[idx[1]], score}, reader.line());
    }
  } else {
    for_each_jsonl(in, [&](const json& obj, size_t line) {
      check_jsonl_keys(obj, {"entity", "context", "score"}, line);
      PredictionRow r;
      r.entity = jsonl_string(obj, "entity", line);
      r.context = jsonl_string(obj, "context", line);
      if (!obj.contains("score") || !obj["score"].is_number())
        fail(Errc::malformed_row, "line " + std::to_string(line) + ": missing numeric score");
      r.score = obj["score"].get<double>();
      push(std::move(r), line);
    });
  }
  return out;
}

PredictionSet parse_predictions(const std::string& bytes, Format format, bool bounded) {
  std::istringstream in(bytes);
  return parse_predictions(in, format, bounded);
}

std::string serialize_predictions(const PredictionSet& preds, Format format) {
  std::string out;
  if (format == Format::csv) {
    out = "entity,context,score\n";
    for (const auto& r : preds.rows)
      out += csv_join({r.entity, r.context, fmt_real(r.score)}) + "\n";
  } else {
    for (const auto& r : preds.rows) {
      json obj{{"entity", r.entity}, {"context", r.context}, {"score", r.score}};
      out += obj.dump() + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Graph files

ContextGraph parse_graph(std::istream& edges, std::istream& membership) {
  ContextGraph g;
  CsvReader edge_reader(edges, '\t');
  std::vector<std::string> fields;
  while (edge_reader.next(fields)) {
    require(fields.size() == 2 || fields.size() == 3, Errc::malformed_row,
            "edge line " + std::to_string(edge_reader.line()) + ": expected 2 or 3 fields");
    double w = 1.0;
    if (fields.size() == 3)
      require(parse_real(fields[2], w), Errc::malformed_row,
              "edge line " + std::to_string(edge_reader.line()) + ": bad weight");
    g.add_edge(fields[0], fields[1], w);
  }
  CsvReader member_reader(membership, '\t');
  while (member_reader.next(fields)) {
    require(fields.size() == 2, Errc::malformed_row,
            "membership line " + std::to_string(member_reader.line()) + ": expected 2 fields");
    g.add_to_context(fields[1], fields[0]);
  }
  return g;
}

ContextGraph parse_graph(const std::string& edges, const std::string& membership) {
  std::istringstream e(edges), m(membership);
  return parse_graph(e, m);
}

std::pair<std::string, std::string> serialize_graph(const ContextGraph& g) {
  std::string edges;
  for (uint32_t i = 0; i < g.node_count(); ++i)
    for (const auto& [j, w] : g.neighbors(i))
      if (i < j)
        edges += g.node_name(i) + "\t" + g.node_name(j) + "\t" + fmt_real(w) + "\n";
  std::string membership;
  for (const auto& [ctx, members] : g.contexts())
    for (uint32_t idx : members) membership += g.node_name(idx) + "\t" + ctx + "\n";
  return {edges, membership};
}

// ---------------------------------------------------------------------------
// Trial records

std::vector<TrialRecord> parse_trials(std::istream& in, Format format) {
  std::vector<TrialRecord> out;
  std::set<EntityId> seen;
  auto validate = [&](TrialRecord& r, size_t line) {
    require(!r.trial_id.empty(), Errc::malformed_row,
            "line " + std::to_string(line) + ": empty trial_id");
    require(is_iso_date(r.start_date) && is_iso_date(r.completion_date), Errc::malformed_row,
            "line " + std::to_string(line) + ": dates must be ISO-8601 (YYYY-MM-DD)");
    require(r.start_date <= r.completion_date, Errc::malformed_row,
            "line " + std::to_string(line) + ": start_date after completion_date");
    if (!seen.insert(r.trial_id).second) fail(Errc::duplicate_key, r.trial_id);
  };

  static const std::vector<std::string> kCore = {"trial_id", "start_date", "completion_date",
                                                 "phase", "label"};
  if (format == Format::csv) {
    CsvReader reader(in);
    std::vector<std::string> header;
    require(reader.next(header), Errc::malformed_row, "empty input, header expected");
    std::vector<long> core_idx(kCore.size(), -1);
    std::vector<size_t> attr_idx;
    for (size_t i = 0; i < header.size(); ++i) {
      auto it = std::find(kCore.begin(), kCore.end(), header[i]);
      if (it != kCore.end()) core_idx[it - kCore.begin()] = static_cast<long>(i);
      else attr_idx.push_back(i);
    }
    for (size_t i = 0; i < kCore.size(); ++i)
      require(core_idx[i] >= 0, Errc::unknown_column, "missing column '" + kCore[i] + "'");
    std::vector<std::string> fields;
    while (reader.next(fields)) {
      require(fields.size() == header.size(), Errc::malformed_row,
              "line " + std::to_string(reader.line()) + ": field count mismatch");
      TrialRecord r;
      r.trial_id = fields[core_idx[0]];
      r.start_date = fields[core_idx[1]];
      r.completion_date = fields[core_idx[2]];
      r.phase = parse_phase(fields[core_idx[3]]);
      r.label = parse_binary_label(fields[core_idx[4]], reader.line());
      for (size_t i : attr_idx) r.attrs.emplace_back(header[i], fields[i]);
      validate(r, reader.line());
      out.push_back(std::move(r));
    }
  } else {
    for_each_jsonl(in, [&](const json& obj, size_t line) {
      TrialRecord r;
      r.trial_id = jsonl_string(obj, "trial_id", line);
      r.start_date = jsonl_string(obj, "start_date", line);
      r.completion_date = jsonl_string(obj, "completion_date", line);
      r.phase = parse_phase(jsonl_string(obj, "phase", line));
      if (!obj.contains("label") || !obj["label"].is_number_integer())
        fail(Errc::malformed_row, "line " + std::to_string(line) + ": missing integer label");
      r.label = obj["label"].get<int>();
      require(r.label == 0 || r.label == 1, Errc::malformed_row,
              "line " + std::to_string(line) + ": label must be 0 or 1");
      for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find(kCore.begin(), kCore.end(), it.key()) != kCore.end()) continue;
        r.attrs.emplace_back(it.key(), it.value().is_string()
                                           ? it.value().get<std::string>()
                                           : it.value().dump());
      }
      validate(r, line);
      out.push_back(std::move(r));
    });
  }
  return out;
}

std::vector<TrialRecord> parse_trials(const std::string& bytes, Format format) {
  std::istringstream in(bytes);
  return parse_trials(in, format);
}

std::string serialize_trials(const std::vector<TrialRecord>& records, Format format) {
  // Attribute columns: union over records, in first-seen order.
  std::vector<std::string> attr_cols;
  for (const auto& r : records)
    for (const auto& [k, v] : r.attrs)
      if (std::find(attr_cols.begin(), attr_cols.end(), k) == attr_cols.end())
        attr_cols.push_back(k);

  std::string out;
  if (format == Format::csv) {
    std::vector<std::string> header = {"trial_id", "start_date", "completion_date", "phase",
                                       "label"};
    header.insert(header.end(), attr_cols.begin(), attr_cols.end());
    out = csv_join(header) + "\n";
    for (const auto& r : records) {
      std::vector<std::string> row = {r.trial_id, r.start_date, r.completion_date,
                                      phase_name(r.phase), std::to_string(r.label)};
      for (const auto& col : attr_cols) {
        auto it = std::find_if(r.attrs.begin(), r.attrs.end(),
                               [&](const auto& kv) { return kv.first == col; });
        row.push_back(it == r.attrs.end() ? "" : it->second);
      }
      out += csv_join(row) + "\n";
    }
  } else {
    for (const auto& r : records) {
      json obj{{"trial_id", r.trial_id},
               {"start_date", r.start_date},
               {"completion_date", r.completion_date},
               {"phase", phase_name(r.phase)},
               {"label", r.label}};
      for (const auto& [k, v] : r.attrs) obj[k] = v;
      out += obj.dump() + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binding pairs

namespace {
bool is_amino_sequence(const std::string& s) {
  static constexpr const char* kAlphabet = "ACDEFGHIKLMNPQRSTVWY";
  for (char c : s)
    if (!std::strchr(kAlphabet, c)) return false;
  return true;
}
}  // namespace

std::vector<BindingPair> parse_binding_pairs(std::istream& in, Format format,
                                             bool validate_alphabet) {
  std::vector<BindingPair> out;
  std::set<std::pair<EntityId, EntityId>> seen;
  auto push = [&](BindingPair p, size_t line) {
    require(!p.receptor.empty() && !p.ligand.empty(), Errc::malformed_row,
            "line " + std::to_string(line) + ": empty sequence");
    if (validate_alphabet)
      require(is_amino_sequence(p.receptor) && is_amino_sequence(p.ligand), Errc::malformed_row,
              "line " + std::to_string(line) + ": sequence outside amino-acid alphabet");
    if (!seen.emplace(p.receptor, p.ligand).second)
      fail(Errc::duplicate_key, "(" + p.receptor + ", " + p.ligand + ")");
    out.push_back(std::move(p));
  };

  if (format == Format::csv) {
    CsvReader reader(in);
    std::vector<std::string> fields;
    require(reader.next(fields), Errc::malformed_row, "empty input, header expected");
    auto idx = bind_header(fields, {"receptor", "ligand", "label"});
    while (reader.next(fields)) {
      require(fields.size() == 3, Errc::malformed_row,
              "line " + std::to_string(reader.line()) + ": expected 3 fields");
      push({fields[idx[0]], fields[idx[1]], parse_binary_label(fields[idx[2]], reader.line())},
           reader.line());
    }
  } else {
    for_each_jsonl(in, [&](const json& obj, size_t line) {
      check_jsonl_keys(obj, {"receptor", "ligand", "label"}, line);
      BindingPair p;
      p.receptor = jsonl_string(obj, "receptor", line);
      p.ligand = jsonl_string(obj, "ligand", line);
      if (!obj.contains("label") || !obj["label"].is_number_integer())
        fail(Errc::malformed_row, "line " + std::to_string(line) + ": missing integer label");
      p.label = obj["label"].get<int>();
      require(p.label == 0 || p.label == 1, Errc::malformed_row,
              "line " + std::to_string(line) + ": label must be 0 or 1");
      push(std::move(p), line);
    });
  }
  return out;
}

std::vector<BindingPair> parse_binding_pairs(const std::string& bytes, Format format,
                                             bool validate_alphabet) {
  std::istringstream in(bytes);
  return parse_binding_pairs(in, format, validate_alphabet);
}

std::string serialize_binding_pairs(const std::vector<BindingPair>& pairs, Format format) {
  std::string out;
  if (format == Format::csv) {
    out = "receptor,ligand,label\n";
    for (const auto& p : pairs)
      out += csv_join({p.receptor, p.ligand, std::to_string(p.label)}) + "\n";
  } else {
    for (const auto& p : pairs) {
      json obj{{"receptor", p.receptor}, {"ligand", p.ligand}, {"label", p.label}};
      out += obj.dump() + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Expression matrix CSV

ExpressionMatrix parse_expression_matrix(std::istream& in, Condition condition,
                                         ContextId context) {
  CsvReader reader(in);
  std::vector<std::string> header;
  require(reader.next(header), Errc::malformed_row, "empty input, header expected");
  require(header.size() >= 2 && header[0] == "cell", Errc::unknown_column,
          "expression header must start with 'cell'");
  std::vector<EntityId> genes(header.begin() + 1, header.end());

  std::vector<std::string> cells;
  std::vector<double> counts;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    require(fields.size() == header.size(), Errc::malformed_row,
            "line " + std::to_string(reader.line()) + ": field count mismatch");
    cells.push_back(fields[0]);
    for (size_t g = 1; g < fields.size(); ++g) {
      double v;
      require(parse_real(fields[g], v) && v >= 0.0, Errc::malformed_row,
              "line " + std::to_string(reader.line()) + ": bad count '" + fields[g] + "'");
      counts.push_back(v);
    }
  }
  return ExpressionMatrix(std::move(genes), std::move(cells), std::move(counts),
                          std::move(condition), std::move(context));
}

ExpressionMatrix parse_expression_matrix(const std::string& bytes, Condition condition,
                                         ContextId context) {
  std::istringstream in(bytes);
  return parse_expression_matrix(in, std::move(condition), std::move(context));
}

std::string serialize_expression_matrix(const ExpressionMatrix& m) {
  std::vector<std::string> header = {"cell"};
  header.insert(header.end(), m.genes().begin(), m.genes().end());
  std::string out = csv_join(header) + "\n";
  for (size_t c = 0; c < m.n_cells(); ++c) {
    std::vector<std::string> row = {m.cells()[c]};
    for (size_t g = 0; g < m.n_genes(); ++g) row.push_back(fmt_real(m.count_at(c, g)));
    out += csv_join(row) + "\n";
  }
  return out;
}

}  // namespace slicebench
