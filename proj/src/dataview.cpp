#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "httplib.h"
#include "slicebench/csv.hpp"
#include "slicebench/registry.hpp"
#include "slicebench/sha256.hpp"

namespace slicebench {

using nlohmann::json;

// ---------------------------------------------------------------------------
// DataViewConfig document form

namespace {

const std::set<std::string>& registered_transforms() {
  static const std::set<std::string> kSet = {"autofill_identifier", "create_range",
                                             "insert_sequence", "insert_protein_sequence",
                                             "filter_rows", "select_columns"};
  return kSet;
}

}  // namespace

json DataViewConfig::to_document() const {
  json doc;
  doc["dataset_name"] = dataset_name;
  json functions = json::array();
  json args = json::array();
  for (const auto& step : steps) {
    functions.push_back(step.function);
    args.push_back(step.args.is_null() ? json::object() : step.args);
  }
  doc["functions_to_run"] = functions;
  doc["args_for_functions"] = args;
  json vm = json::object();
  for (const auto& [from, to] : var_map) vm[from] = to;
  doc["var_map"] = vm;
  return doc;
}

DataViewConfig DataViewConfig::from_document(const json& doc) {
  DataViewConfig cfg;
  cfg.dataset_name = doc.at("dataset_name").get<std::string>();
  const json& functions = doc.value("functions_to_run", json::array());
  const json& args = doc.value("args_for_functions", json::array());
  require(functions.size() == args.size(), Errc::invalid_argument,
          "functions_to_run and args_for_functions differ in length");
  for (size_t i = 0; i < functions.size(); ++i) {
    std::string fn = functions[i].get<std::string>();
    require(registered_transforms().count(fn) != 0, Errc::unknown_transform, fn);
    cfg.steps.push_back({std::move(fn), args[i]});
  }
  if (doc.contains("var_map")) {
    std::set<std::string> seen;
    for (auto it = doc["var_map"].begin(); it != doc["var_map"].end(); ++it) {
      require(seen.insert(it.key()).second, Errc::invalid_argument,
              "duplicate var_map key '" + it.key() + "'");
      cfg.var_map.emplace_back(it.key(), it.value().get<std::string>());
    }
    std::sort(cfg.var_map.begin(), cfg.var_map.end());
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Fetchers

FixtureFetcher::FixtureFetcher(const std::string& fixture_path) {
  std::ifstream in(fixture_path);
  require(in.good(), Errc::io_error, "cannot open fixture " + fixture_path);
  json doc = json::parse(in, nullptr, false);
  require(!doc.is_discarded() && doc.is_object(), Errc::corrupt_file,
          "fixture must be a JSON object: " + fixture_path);
  for (auto it = doc.begin(); it != doc.end(); ++it)
    entries_[it.key()] = it.value().get<std::string>();
}

FixtureFetcher::FixtureFetcher(std::unordered_map<std::string, std::string> entries)
    : entries_(std::move(entries)) {}

std::string FixtureFetcher::fetch(const std::string& key) {
  auto it = entries_.find(key);
  require(it != entries_.end(), Errc::fixture_missing, key);
  return it->second;
}

std::atomic<uint64_t> RestFetcher::network_ops_{0};

RestFetcher::RestFetcher(const FetcherSpec& spec) : spec_(spec) {
  require(!spec_.endpoint_template.empty(), Errc::invalid_argument, "empty endpoint template");
}

std::string RestFetcher::fetch(const std::string& key) {
  network_ops_.fetch_add(1);
  std::string url = spec_.endpoint_template;
  size_t pos = url.find("{key}");
  require(pos != std::string::npos, Errc::invalid_argument,
          "endpoint template has no {key} placeholder");
  url.replace(pos, 5, key);

  // scheme://host[:port]/path
  size_t scheme_end = url.find("://");
  require(scheme_end != std::string::npos, Errc::invalid_argument, "bad endpoint url " + url);
  size_t path_start = url.find('/', scheme_end + 3);
  std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(static_cast<time_t>(spec_.timeout_seconds), 0);
  client.set_read_timeout(static_cast<time_t>(spec_.timeout_seconds), 0);
  auto res = client.Get(path);
  require(res && res->status == 200, Errc::fetch_failure,
          key + " (" + (res ? "HTTP " + std::to_string(res->status) : "no response") + ")");
  return res->body;
}

CachingFetcher::CachingFetcher(std::unique_ptr<Fetcher> inner, std::string cache_dir)
    : inner_(std::move(inner)), cache_dir_(std::move(cache_dir)) {
  if (!cache_dir_.empty()) std::filesystem::create_directories(cache_dir_);
}

std::string CachingFetcher::fetch(const std::string& key) {
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  if (!cache_dir_.empty()) {
    auto path = std::filesystem::path(cache_dir_) / Sha256::hex(key);
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      return cache_[key] = ss.str();
    }
  }
  ++inner_fetches_;
  std::string value = inner_->fetch(key);
  if (!cache_dir_.empty()) {
    auto path = std::filesystem::path(cache_dir_) / Sha256::hex(key);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << value;
  }
  return cache_[key] = value;
}

std::unique_ptr<Fetcher> make_fetcher(const FetcherSpec& spec) {
  std::unique_ptr<Fetcher> inner;
  if (spec.kind == FetcherSpec::Kind::fixture_file)
    inner = std::make_unique<FixtureFetcher>(spec.fixture_path);
  else
    inner = std::make_unique<RestFetcher>(spec);
  return std::make_unique<CachingFetcher>(std::move(inner), spec.cache_dir);
}

// ---------------------------------------------------------------------------
// Row filters

namespace {

struct Token {
  enum class Kind { word, quoted, op, lparen, rparen, comma };
  Kind kind;
  std::string text;
};

std::vector<Token> tokenize_filter(const std::string& expr) {
  std::vector<Token> tokens;
  size_t i = 0;
  while (i < expr.size()) {
    char c = expr[i];
    if (c == ' ' || c == '\t') {
      ++i;
    } else if (c == '\'' || c == '"') {
      size_t end = expr.find(c, i + 1);
      require(end != std::string::npos, Errc::bad_filter, "unterminated quote");
      tokens.push_back({Token::Kind::quoted, expr.substr(i + 1, end - i - 1)});
      i = end + 1;
    } else if (c == '(') {
      tokens.push_back({Token::Kind::lparen, "("});
      ++i;
    } else if (c == ')') {
      tokens.push_back({Token::Kind::rparen, ")"});
      ++i;
    } else if (c == ',') {
      tokens.push_back({Token::Kind::comma, ","});
      ++i;
    } else if (c == '=' || c == '!' || c == '<' || c == '>') {
      std::string op(1, c);
      if (i + 1 < expr.size() && expr[i + 1] == '=') {
        op += '=';
        i += 2;
      } else {
        ++i;
      }
      require(op != "=" && op != "!", Errc::bad_filter, "bad operator '" + op + "'");
      tokens.push_back({Token::Kind::op, op});
    } else {
      size_t start = i;
      while (i < expr.size() && !std::strchr(" \t()',\"=!<>", expr[i])) ++i;
      tokens.push_back({Token::Kind::word, expr.substr(start, i - start)});
    }
  }
  return tokens;
}

bool both_numeric(const std::string& a, const std::string& b, double& x, double& y) {
  return parse_real(a, x) && parse_real(b, y);
}

bool clause_matches(const FilterClause& clause, const std::string& cell) {
  auto eq = [&](const std::string& lit) {
    double x, y;
    if (both_numeric(cell, lit, x, y)) return x == y;
    return cell == lit;
  };
  if (clause.op == "in") {
    return std::any_of(clause.literals.begin(), clause.literals.end(), eq);
  }
  const std::string& lit = clause.literals[0];
  double x, y;
  bool numeric = both_numeric(cell, lit, x, y);
  if (clause.op == "==") return eq(lit);
  if (clause.op == "!=") return !eq(lit);
  if (clause.op == "<") return numeric ? x < y : cell < lit;
  if (clause.op == "<=") return numeric ? x <= y : cell <= lit;
  if (clause.op == ">") return numeric ? x > y : cell > lit;
  return numeric ? x >= y : cell >= lit;  // ">="
}

}  // namespace

RowFilter RowFilter::compile(const std::string& expr, const std::vector<std::string>& columns) {
  RowFilter filter;
  if (expr.empty()) return filter;
  auto tokens = tokenize_filter(expr);
  size_t i = 0;
  auto expect_value = [&](const char* what) -> std::string {
    require(i < tokens.size() && (tokens[i].kind == Token::Kind::word ||
                                  tokens[i].kind == Token::Kind::quoted),
            Errc::bad_filter, std::string("expected ") + what);
    return tokens[i++].text;
  };
  for (;;) {
    FilterClause clause;
    clause.column = expect_value("column name");
    auto col = std::find(columns.begin(), columns.end(), clause.column);
    require(col != columns.end(), Errc::bad_filter, "unknown column '" + clause.column + "'");
    clause.col_idx = static_cast<size_t>(col - columns.begin());

    require(i < tokens.size(), Errc::bad_filter, "expected operator");
    if (tokens[i].kind == Token::Kind::op) {
      clause.op = tokens[i++].text;
      clause.literals.push_back(expect_value("literal"));
    } else if (tokens[i].kind == Token::Kind::word && tokens[i].text == "in") {
      ++i;
      clause.op = "in";
      require(i < tokens.size() && tokens[i].kind == Token::Kind::lparen, Errc::bad_filter,
              "expected '(' after in");
      ++i;
      for (;;) {
        clause.literals.push_back(expect_value("literal"));
        require(i < tokens.size(), Errc::bad_filter, "unterminated in-list");
        if (tokens[i].kind == Token::Kind::comma) {
          ++i;
          continue;
        }
        require(tokens[i].kind == Token::Kind::rparen, Errc::bad_filter,
                "expected ')' in in-list");
        ++i;
        break;
      }
    } else {
      fail(Errc::bad_filter, "expected operator, got '" + tokens[i].text + "'");
    }
    filter.clauses_.push_back(std::move(clause));

    if (i == tokens.size()) break;
    require(tokens[i].kind == Token::Kind::word && tokens[i].text == "and", Errc::bad_filter,
            "clauses must be joined with 'and'");
    ++i;
  }
  return filter;
}

bool RowFilter::matches(const std::vector<std::string>& row) const {
  for (const auto& clause : clauses_) {
    if (clause.col_idx >= row.size() || !clause_matches(clause, row[clause.col_idx]))
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// View transforms

namespace {

std::string arg_string(const json& args, const char* key, const std::string& fn) {
  require(args.is_object() && args.contains(key) && args[key].is_string(), Errc::invalid_argument,
          fn + ": missing string arg '" + key + "'");
  return args[key].get<std::string>();
}

std::string json_scalar_to_cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void run_autofill_identifier(Table& t, const json& args) {
  size_t fill_col = t.col(arg_string(args, "autofill_column", "autofill_identifier"));
  size_t key_col = t.col(arg_string(args, "key_column", "autofill_identifier"));
  std::unordered_map<std::string, std::string> first_value;
  for (const auto& row : t.rows)
    if (!row[fill_col].empty() && !first_value.count(row[key_col]))
      first_value[row[key_col]] = row[fill_col];
  for (auto& row : t.rows) {
    if (row[fill_col].empty()) {
      auto it = first_value.find(row[key_col]);
      if (it != first_value.end()) row[fill_col] = it->second;
    }
  }
}

void run_create_range(Table& t, const json& args) {
  size_t col = t.col(arg_string(args, "column", "create_range"));
  require(args.contains("keys") && args["keys"].is_array() && args.contains("subs") &&
              args["subs"].is_array() && args["keys"].size() == args["subs"].size(),
          Errc::invalid_argument, "create_range: keys and subs must be arrays of equal length");
  std::unordered_map<std::string, std::string> subs;
  for (size_t i = 0; i < args["keys"].size(); ++i)
    subs[json_scalar_to_cell(args["keys"][i])] = json_scalar_to_cell(args["subs"][i]);
  for (auto& row : t.rows) {
    auto it = subs.find(row[col]);
    if (it != subs.end()) row[col] = it->second;
  }
}

void run_insert_sequence(Table& t, const json& args, Fetcher* fetcher) {
  static const std::string kSeqColumn = "protein_or_rna_sequence";
  size_t key_col = t.col(arg_string(args, "gene_column", "insert_sequence"));
  require(!t.find_col(kSeqColumn), Errc::invalid_argument,
          "column " + kSeqColumn + " already present");
  require(fetcher != nullptr, Errc::fetch_failure, "no sequence fetcher configured");
  std::unordered_map<std::string, std::string> sequences;
  for (const auto& row : t.rows)
    if (!sequences.count(row[key_col])) sequences[row[key_col]] = fetcher->fetch(row[key_col]);
  t.columns.push_back(kSeqColumn);
  for (auto& row : t.rows) row.push_back(sequences[row[key_col]]);
}

void run_filter_rows(Table& t, const json& args) {
  std::string expr = arg_string(args, "filter", "filter_rows");
  RowFilter filter = RowFilter::compile(expr, t.columns);
  std::vector<std::vector<std::string>> kept;
  for (auto& row : t.rows)
    if (filter.matches(row)) kept.push_back(std::move(row));
  t.rows = std::move(kept);
}

void run_select_columns(Table& t, const json& args) {
  require(args.contains("columns") && args["columns"].is_array(), Errc::invalid_argument,
          "select_columns: missing array arg 'columns'");
  std::vector<size_t> keep;
  std::vector<std::string> new_columns;
  for (const auto& c : args["columns"]) {
    std::string name = c.get<std::string>();
    keep.push_back(t.col(name));
    new_columns.push_back(name);
  }
  std::vector<std::vector<std::string>> new_rows;
  new_rows.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    std::vector<std::string> out;
    out.reserve(keep.size());
    for (size_t idx : keep) out.push_back(row[idx]);
    new_rows.push_back(std::move(out));
  }
  t.columns = std::move(new_columns);
  t.rows = std::move(new_rows);
}

}  // namespace

Table apply_view_steps(const DataViewConfig& cfg, Table table, Fetcher* sequence_fetcher) {
  for (const auto& step : cfg.steps) {
    if (step.function == "autofill_identifier") run_autofill_identifier(table, step.args);
    else if (step.function == "create_range") run_create_range(table, step.args);
    else if (step.function == "insert_sequence" || step.function == "insert_protein_sequence")
      run_insert_sequence(table, step.args, sequence_fetcher);
    else if (step.function == "filter_rows") run_filter_rows(table, step.args);
    else if (step.function == "select_columns") run_select_columns(table, step.args);
    else fail(Errc::unknown_transform, step.function);
  }

  if (!cfg.var_map.empty()) {
    // Simultaneous rename: olds resolved against the pre-rename header.
    std::vector<std::string> renamed = table.columns;
    std::set<std::string> olds, news;
    for (const auto& [from, to] : cfg.var_map) {
      require(olds.insert(from).second, Errc::invalid_argument,
              "duplicate var_map key '" + from + "'");
      require(news.insert(to).second, Errc::invalid_argument,
              "duplicate var_map target '" + to + "'");
      renamed[table.col(from)] = to;
    }
    std::set<std::string> unique_check(renamed.begin(), renamed.end());
    require(unique_check.size() == renamed.size(), Errc::invalid_argument,
            "var_map produces duplicate column names");
    table.columns = std::move(renamed);
  }
  return table;
}

// ---------------------------------------------------------------------------
// DatasetStream

struct DatasetStream::Impl {
  std::ifstream in;
  CsvReader reader;
  size_t pending_skip;

  Impl(const std::filesystem::path& path, size_t skip)
      : in(path, std::ios::binary), reader(in), pending_skip(skip) {}
};

DatasetStream::DatasetStream(std::filesystem::path blob_path, const std::string& filter_expr,
                             size_t chunk_size, size_t skip_rows)
    : chunk_size_(chunk_size) {
  require(chunk_size_ >= 1, Errc::invalid_argument, "chunk_size must be >= 1");
  impl_ = std::make_shared<Impl>(blob_path, skip_rows);
  require(impl_->in.good(), Errc::io_error, "cannot open " + blob_path.string());
  require(impl_->reader.next(columns_), Errc::malformed_row, "empty table, header expected");
  filter_ = RowFilter::compile(filter_expr, columns_);
}

bool DatasetStream::next(Table& batch) {
  batch.columns = columns_;
  batch.rows.clear();
  std::vector<std::string> fields;
  while (batch.rows.size() < chunk_size_ && impl_->reader.next(fields)) {
    require(fields.size() == columns_.size(), Errc::malformed_row,
            "line " + std::to_string(impl_->reader.line()) + ": field count mismatch");
    if (!filter_.matches(fields)) continue;
    if (impl_->pending_skip > 0) {
      --impl_->pending_skip;
      continue;
    }
    batch.rows.push_back(fields);
    peak_resident_ = std::max(peak_resident_, batch.rows.size());
  }
  return !batch.rows.empty();
}

}  // namespace slicebench
