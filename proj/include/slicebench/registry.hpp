#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "slicebench/core.hpp"

namespace slicebench {

// ---------------------------------------------------------------------------
// Tabular data, all cells as strings; the schema assigns types.

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  size_t col(const std::string& name) const;  // throws ColumnMissing
  std::optional<size_t> find_col(const std::string& name) const;
  std::string to_csv() const;
  static Table from_csv(const std::string& bytes);
  static Table from_csv(std::istream& in);

  bool operator==(const Table&) const = default;
};

// ---------------------------------------------------------------------------
// Data-view pipeline configuration. The document form mirrors the dataset
// configuration layout (dataset_name / functions_to_run / args_for_functions
// / var_map); internally the steps are a normalized list.

struct ViewStep {
  std::string function;  // autofill_identifier, create_range, insert_sequence,
                         // filter_rows, select_columns
  nlohmann::json args;

  bool operator==(const ViewStep&) const = default;
};

struct DataViewConfig {
  std::string dataset_name;
  std::vector<ViewStep> steps;
  std::vector<std::pair<std::string, std::string>> var_map;  // old name -> new name

  nlohmann::json to_document() const;
  static DataViewConfig from_document(const nlohmann::json& doc);

  bool operator==(const DataViewConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Manifests

struct DatasetManifest {
  std::string name;
  uint64_t version = 0;
  std::string content_hash;  // sha256 of the stored bytes
  std::vector<std::pair<std::string, std::string>> schema;  // column -> string|int|real
  std::optional<std::pair<std::string, uint64_t>> parent;
  std::optional<DataViewConfig> view_config;
  std::string created_at;

  std::string id() const { return name + ":" + std::to_string(version); }
  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& doc);
};

// ---------------------------------------------------------------------------
// Sequence fetchers. Fixture mode is fully offline; the REST fetcher counts
// every network attempt so offline runs can prove they made none.

class Fetcher {
 public:
  virtual ~Fetcher() = default;
  virtual std::string fetch(const std::string& key) = 0;  // throws FetchFailure / FixtureMissing
};

struct FetcherSpec {
  enum class Kind { rest_get_sequence, fixture_file };
  Kind kind = Kind::fixture_file;
  std::string endpoint_template;  // "{key}" substituted, e.g. https://host/seq/{key}
  std::string fixture_path;      // JSON object key -> sequence
  std::string cache_dir;         // optional on-disk response cache
  double timeout_seconds = 10.0;
};

class FixtureFetcher : public Fetcher {
 public:
  explicit FixtureFetcher(const std::string& fixture_path);
  explicit FixtureFetcher(std::unordered_map<std::string, std::string> entries);
  std::string fetch(const std::string& key) override;

 private:
  std::unordered_map<std::string, std::string> entries_;
};

class RestFetcher : public Fetcher {
 public:
  explicit RestFetcher(const FetcherSpec& spec);
  std::string fetch(const std::string& key) override;

  static uint64_t network_operations() { return network_ops_.load(); }
  static void reset_network_operations() { network_ops_.store(0); }

 private:
  FetcherSpec spec_;
  static std::atomic<uint64_t> network_ops_;
};

// Memoizes by key and optionally persists to spec.cache_dir; repeated keys
// hit the inner fetcher exactly once.
class CachingFetcher : public Fetcher {
 public:
  CachingFetcher(std::unique_ptr<Fetcher> inner, std::string cache_dir = {});
  std::string fetch(const std::string& key) override;
  size_t inner_fetches() const { return inner_fetches_; }

 private:
  std::unique_ptr<Fetcher> inner_;
  std::string cache_dir_;
  std::unordered_map<std::string, std::string> cache_;
  size_t inner_fetches_ = 0;
};

std::unique_ptr<Fetcher> make_fetcher(const FetcherSpec& spec);

// ---------------------------------------------------------------------------
// Row filters: conjunctions of `column op literal`,
// ops {==, !=, <, <=, >, >=, in}.

struct FilterClause {
  std::string column;
  std::string op;
  std::vector<std::string> literals;  // one, or several for `in`
  size_t col_idx = 0;
};

class RowFilter {
 public:
  RowFilter() = default;  // matches everything

  // Binds column names; throws BadFilter naming the offending column or
  // syntax element.
  static RowFilter compile(const std::string& expr, const std::vector<std::string>& columns);

  bool matches(const std::vector<std::string>& row) const;
  bool empty() const { return clauses_.empty(); }

 private:
  std::vector<FilterClause> clauses_;
};

// Applies steps in order, then var_map renames; pure in (config, input,
// fetcher contents).
Table apply_view_steps(const DataViewConfig& cfg, Table table, Fetcher* sequence_fetcher);

// ---------------------------------------------------------------------------
// Incremental row batches over a stored blob; at most chunk_size rows plus
// the row in flight are resident.

class DatasetStream {
 public:
  DatasetStream(std::filesystem::path blob_path, const std::string& filter_expr,
                size_t chunk_size, size_t skip_rows = 0);

  // Fills `batch` with up to chunk_size matching rows; false when exhausted.
  bool next(Table& batch);
  const std::vector<std::string>& columns() const { return columns_; }
  // Instrumentation: maximum rows materialized at once.
  size_t peak_resident_rows() const { return peak_resident_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  std::vector<std::string> columns_;
  RowFilter filter_;
  size_t chunk_size_;
  size_t peak_resident_ = 0;
};

// ---------------------------------------------------------------------------
// Content-addressed dataset registry: blobs/<sha256> plus a JSON manifest
// index. Registration is serialized by a file lock; reads are lock-free.

class Registry {
 public:
  using Clock = std::function<std::string()>;  // ISO-8601 UTC timestamp

  explicit Registry(std::filesystem::path data_dir, Clock clock = {});

  DatasetManifest register_dataset(
      const std::string& name, const std::string& bytes,
      const std::vector<std::pair<std::string, std::string>>& schema,
      std::optional<std::pair<std::string, uint64_t>> parent = std::nullopt,
      std::optional<DataViewConfig> view_config = std::nullopt);

  std::vector<DatasetManifest> list() const;
  DatasetManifest manifest(const std::string& name, uint64_t version) const;
  uint64_t latest_version(const std::string& name) const;  // throws UnknownDataset
  std::string read_blob(const DatasetManifest& m) const;   // verifies content hash
  std::vector<DatasetManifest> lineage(const std::string& name, uint64_t version) const;

  // Loads the config's source dataset (latest version), applies the pipeline,
  // registers the result as `<name>_view` with lineage to the source.
  std::pair<Table, DatasetManifest> apply_view(const DataViewConfig& cfg, Fetcher* fetcher);

  DatasetStream stream(const std::string& name, uint64_t version, const std::string& filter,
                       size_t chunk_size, size_t skip_rows = 0) const;

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  Clock clock_;
  std::filesystem::path index_path() const;
  std::filesystem::path blob_path(const std::string& hash) const;
  std::vector<DatasetManifest> load_index() const;
  void store_index(const std::vector<DatasetManifest>& manifests) const;
};

// Validates bytes against a schema (header match, cell types); throws
// SchemaMismatch.
void validate_schema(const std::string& bytes,
                     const std::vector<std::pair<std::string, std::string>>& schema);

// Current UTC time as ISO-8601, the default registry clock.
std::string iso_timestamp_now();

}  // namespace slicebench
