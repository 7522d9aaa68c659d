#include "slicebench/registry.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "slicebench/csv.hpp"
#include "slicebench/sha256.hpp"

namespace slicebench {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Table

size_t Table::col(const std::string& name) const {
  auto idx = find_col(name);
  require(idx.has_value(), Errc::column_missing, name);
  return *idx;
}

std::optional<size_t> Table::find_col(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) return std::nullopt;
  return static_cast<size_t>(it - columns.begin());
}

std::string Table::to_csv() const {
  std::string out = csv_join(columns) + "\n";
  for (const auto& row : rows) out += csv_join(row) + "\n";
  return out;
}

Table Table::from_csv(std::istream& in) {
  Table t;
  CsvReader reader(in);
  require(reader.next(t.columns), Errc::malformed_row, "empty table, header expected");
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    require(fields.size() == t.columns.size(), Errc::malformed_row,
            "line " + std::to_string(reader.line()) + ": field count mismatch");
    t.rows.push_back(fields);
  }
  return t;
}

Table Table::from_csv(const std::string& bytes) {
  std::istringstream in(bytes);
  return from_csv(in);
}

// ---------------------------------------------------------------------------
// Manifests

json DatasetManifest::to_json() const {
  json doc;
  doc["name"] = name;
  doc["version"] = version;
  doc["content_hash"] = content_hash;
  json schema_doc = json::array();
  for (const auto& [col, type] : schema) schema_doc.push_back({{"column", col}, {"type", type}});
  doc["schema"] = schema_doc;
  if (parent) doc["parent"] = {{"name", parent->first}, {"version", parent->second}};
  if (view_config) doc["view_config"] = view_config->to_document();
  doc["created_at"] = created_at;
  return doc;
}

DatasetManifest DatasetManifest::from_json(const json& doc) {
  DatasetManifest m;
  m.name = doc.at("name").get<std::string>();
  m.version = doc.at("version").get<uint64_t>();
  m.content_hash = doc.at("content_hash").get<std::string>();
  for (const auto& entry : doc.at("schema"))
    m.schema.emplace_back(entry.at("column").get<std::string>(),
                          entry.at("type").get<std::string>());
  if (doc.contains("parent"))
    m.parent = {doc["parent"].at("name").get<std::string>(),
                doc["parent"].at("version").get<uint64_t>()};
  if (doc.contains("view_config"))
    m.view_config = DataViewConfig::from_document(doc["view_config"]);
  m.created_at = doc.value("created_at", "");
  return m;
}

void validate_schema(const std::string& bytes,
                     const std::vector<std::pair<std::string, std::string>>& schema) {
  require(!schema.empty(), Errc::schema_mismatch, "empty schema");
  for (const auto& [col, type] : schema)
    require(type == "string" || type == "int" || type == "real", Errc::schema_mismatch,
            "unknown type '" + type + "' for column '" + col + "'");
  Table t = Table::from_csv(bytes);
  require(t.columns.size() == schema.size(), Errc::schema_mismatch,
          "header has " + std::to_string(t.columns.size()) + " columns, schema has " +
              std::to_string(schema.size()));
  for (size_t i = 0; i < schema.size(); ++i)
    require(t.columns[i] == schema[i].first, Errc::schema_mismatch,
            "column " + std::to_string(i) + " is '" + t.columns[i] + "', schema says '" +
                schema[i].first + "'");
  for (size_t r = 0; r < t.rows.size(); ++r) {
    for (size_t c = 0; c < schema.size(); ++c) {
      const std::string& type = schema[c].second;
      const std::string& cell = t.rows[r][c];
      if (type == "int") {
        long long v;
        require(parse_int(cell, v), Errc::schema_mismatch,
                "row " + std::to_string(r + 1) + ": '" + cell + "' is not an int");
      } else if (type == "real") {
        double v;
        require(parse_real(cell, v), Errc::schema_mismatch,
                "row " + std::to_string(r + 1) + ": '" + cell + "' is not a real");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Registry storage

std::string iso_timestamp_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(out.good(), Errc::io_error, "cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(out.good(), Errc::io_error, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Exclusive advisory lock held for the duration of a registration.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR, 0644);
    require(fd_ >= 0, Errc::io_error, "cannot open lock file " + path.string());
    ::flock(fd_, LOCK_EX);
  }
  ~FileLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace

Registry::Registry(std::filesystem::path data_dir, Clock clock)
    : dir_(std::move(data_dir)), clock_(clock ? std::move(clock) : iso_timestamp_now) {
  std::filesystem::create_directories(dir_ / "blobs");
}

std::filesystem::path Registry::index_path() const { return dir_ / "manifests.json"; }
std::filesystem::path Registry::blob_path(const std::string& hash) const {
  return dir_ / "blobs" / hash;
}

std::vector<DatasetManifest> Registry::load_index() const {
  if (!std::filesystem::exists(index_path())) return {};
  json doc = json::parse(read_file(index_path()));
  std::vector<DatasetManifest> out;
  for (const auto& entry : doc) out.push_back(DatasetManifest::from_json(entry));
  return out;
}

void Registry::store_index(const std::vector<DatasetManifest>& manifests) const {
  json doc = json::array();
  for (const auto& m : manifests) doc.push_back(m.to_json());
  write_file_atomic(index_path(), doc.dump(2) + "\n");
}

DatasetManifest Registry::register_dataset(
    const std::string& name, const std::string& bytes,
    const std::vector<std::pair<std::string, std::string>>& schema,
    std::optional<std::pair<std::string, uint64_t>> parent,
    std::optional<DataViewConfig> view_config) {
  require(!name.empty(), Errc::invalid_argument, "dataset name must be non-empty");
  validate_schema(bytes, schema);

  FileLock lock(dir_ / ".registry.lock");
  auto manifests = load_index();

  if (parent) {
    bool found = std::any_of(manifests.begin(), manifests.end(), [&](const DatasetManifest& m) {
      return m.name == parent->first && m.version == parent->second;
    });
    require(found, Errc::unknown_parent, parent->first + ":" + std::to_string(parent->second));
  }

  DatasetManifest m;
  m.name = name;
  m.version = 1;
  for (const auto& existing : manifests)
    if (existing.name == name) m.version = std::max(m.version, existing.version + 1);
  m.content_hash = Sha256::hex(bytes);
  m.schema = schema;
  m.parent = parent;
  m.view_config = std::move(view_config);
  m.created_at = clock_();

  auto blob = blob_path(m.content_hash);
  if (std::filesystem::exists(blob)) {
    require(read_file(blob) == bytes, Errc::hash_collision, m.content_hash);
  } else {
    write_file_atomic(blob, bytes);
  }
  manifests.push_back(m);
  store_index(manifests);
  return m;
}

std::vector<DatasetManifest> Registry::list() const { return load_index(); }

DatasetManifest Registry::manifest(const std::string& name, uint64_t version) const {
  for (const auto& m : load_index())
    if (m.name == name && m.version == version) return m;
  fail(Errc::unknown_dataset, name + ":" + std::to_string(version));
}

uint64_t Registry::latest_version(const std::string& name) const {
  uint64_t latest = 0;
  for (const auto& m : load_index())
    if (m.name == name) latest = std::max(latest, m.version);
  require(latest > 0, Errc::unknown_dataset, name);
  return latest;
}

std::string Registry::read_blob(const DatasetManifest& m) const {
  std::string bytes = read_file(blob_path(m.content_hash));
  require(Sha256::hex(bytes) == m.content_hash, Errc::corrupt_file,
          m.id() + ": stored bytes do not match content hash");
  return bytes;
}

std::vector<DatasetManifest> Registry::lineage(const std::string& name, uint64_t version) const {
  std::vector<DatasetManifest> chain;
  DatasetManifest cur = manifest(name, version);
  chain.push_back(cur);
  size_t guard = 0;
  while (cur.parent) {
    require(++guard <= 10000, Errc::invalid_argument, "lineage chain too deep");
    cur = manifest(cur.parent->first, cur.parent->second);
    chain.push_back(cur);
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

std::pair<Table, DatasetManifest> Registry::apply_view(const DataViewConfig& cfg,
                                                       Fetcher* fetcher) {
  uint64_t version = latest_version(cfg.dataset_name);
  DatasetManifest source = manifest(cfg.dataset_name, version);
  Table table = Table::from_csv(read_blob(source));
  Table result = apply_view_steps(cfg, std::move(table), fetcher);

  std::vector<std::pair<std::string, std::string>> schema;
  for (const auto& col : result.columns) schema.emplace_back(col, "string");
  DatasetManifest derived = register_dataset(cfg.dataset_name + "_view", result.to_csv(), schema,
                                             std::make_pair(source.name, source.version), cfg);
  return {std::move(result), std::move(derived)};
}

DatasetStream Registry::stream(const std::string& name, uint64_t version,
                               const std::string& filter, size_t chunk_size,
                               size_t skip_rows) const {
  DatasetManifest m = manifest(name, version);
  return DatasetStream(blob_path(m.content_hash), filter, chunk_size, skip_rows);
}

}  // namespace slicebench
