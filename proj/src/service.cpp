#include "slicebench/service.hpp"

#include <cstdlib>
#include <fstream>
#include <mutex>

#include "httplib.h"
#include "slicebench/csv.hpp"

namespace slicebench {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

ServiceConfig ServiceConfig::load(const std::string& config_path) {
  ServiceConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    require(in.good(), Errc::io_error, "cannot open config " + config_path);
    json doc = json::parse(in);
    cfg.data_dir = doc.value("data_dir", cfg.data_dir);
    cfg.host = doc.value("host", cfg.host);
    cfg.port = doc.value("port", cfg.port);
    cfg.fixture_mode = doc.value("fixture_mode", cfg.fixture_mode);
    cfg.fixture_path = doc.value("fixture_path", cfg.fixture_path);
    cfg.endpoint_template = doc.value("endpoint_template", cfg.endpoint_template);
    cfg.cache_dir = doc.value("cache_dir", cfg.cache_dir);
  }
  cfg.apply_env();
  return cfg;
}

void ServiceConfig::apply_env() {
  if (const char* v = std::getenv("SLICEBENCH_PORT")) port = std::atoi(v);
  if (const char* v = std::getenv("SLICEBENCH_DATA_DIR")) data_dir = v;
  if (const char* v = std::getenv("SLICEBENCH_FIXTURE_MODE"))
    fixture_mode = std::string(v) != "0" && std::string(v) != "false";
  if (const char* v = std::getenv("SLICEBENCH_FIXTURE_PATH")) fixture_path = v;
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

void send_json(httplib::Response& res, int status, const json& doc) {
  res.status = status;
  res.set_content(doc.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& err) {
  int status = 500;
  switch (err.code()) {
    case Errc::unknown_dataset:
    case Errc::unknown_group:
      status = 404;
      break;
    case Errc::bad_filter:
    case Errc::bad_cursor:
    case Errc::missing_predictions:
    case Errc::unknown_keys:
    case Errc::malformed_row:
    case Errc::duplicate_key:
    case Errc::unknown_column:
    case Errc::invalid_argument:
      status = 400;
      break;
    case Errc::degenerate_slice:
    case Errc::not_enough_contexts:
    case Errc::constant_actual:
      status = 422;
      break;
    default:
      status = 500;
  }
  send_json(res, status, json{{"error", errc_name(err.code())}, {"detail", err.what()}});
}

template <typename Fn>
void handle(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& err) {
    send_error(res, err);
  } catch (const std::exception& ex) {
    send_json(res, 500, json{{"error", "Internal"}, {"detail", ex.what()}});
  }
}

std::string hex_encode(const std::string& s) {
  static const char* hexd = "0123456789abcdef";
  std::string out;
  out.reserve(s.size() * 2);
  for (unsigned char c : s) {
    out.push_back(hexd[c >> 4]);
    out.push_back(hexd[c & 0xf]);
  }
  return out;
}

std::string hex_decode(const std::string& s) {
  require(s.size() % 2 == 0, Errc::bad_cursor, "odd hex length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    fail(Errc::bad_cursor, "bad hex digit");
  };
  std::string out;
  out.reserve(s.size() / 2);
  for (size_t i = 0; i < s.size(); i += 2)
    out.push_back(static_cast<char>((nibble(s[i]) << 4) | nibble(s[i + 1])));
  return out;
}

// Cursors bind to the blob's content hash plus the filter text, so a
// re-registration or filter change invalidates them.
std::string make_cursor(const std::string& content_hash, const std::string& filter,
                        size_t offset) {
  return hex_encode(content_hash + "|" + std::to_string(offset) + "|" + filter);
}

struct Cursor {
  std::string content_hash;
  size_t offset = 0;
  std::string filter;
};

Cursor parse_cursor(const std::string& encoded) {
  std::string raw = hex_decode(encoded);
  size_t first = raw.find('|');
  require(first != std::string::npos, Errc::bad_cursor, "malformed cursor");
  size_t second = raw.find('|', first + 1);
  require(second != std::string::npos, Errc::bad_cursor, "malformed cursor");
  Cursor c;
  c.content_hash = raw.substr(0, first);
  long long offset;
  require(parse_int(raw.substr(first + 1, second - first - 1), offset) && offset >= 0,
          Errc::bad_cursor, "malformed cursor offset");
  c.offset = static_cast<size_t>(offset);
  c.filter = raw.substr(second + 1);
  return c;
}

PredictionSet parse_prediction_body(const json& body, bool bounded) {
  require(body.contains("predictions") && body["predictions"].is_array(), Errc::invalid_argument,
          "body must carry a predictions array");
  PredictionSet preds;
  for (const auto& row : body["predictions"]) {
    PredictionRow r;
    r.entity = row.at("entity").get<std::string>();
    r.context = row.value("context", "");
    require(row.contains("score") && row["score"].is_number(), Errc::malformed_row,
            "prediction rows need a numeric score");
    r.score = row["score"].get<double>();
    require(std::isfinite(r.score), Errc::malformed_row, "score must be finite");
    require(!bounded || (r.score >= 0.0 && r.score <= 1.0), Errc::malformed_row,
            "score must be in [0,1]");
    preds.rows.push_back(std::move(r));
  }
  return preds;
}

json spec_document() {
  json endpoints = json::array();
  endpoints.push_back({{"method", "GET"},
                       {"path", "/v1/datasets"},
                       {"description", "manifest summaries, latest version flagged"}});
  endpoints.push_back({{"method", "GET"},
                       {"path", "/v1/datasets/{name}/{version}/rows"},
                       {"query", {"filter", "cursor", "limit"}},
                       {"description", "cursor-paginated filtered rows"}});
  endpoints.push_back({{"method", "GET"},
                       {"path", "/v1/benchmarks/{group}/split"},
                       {"query", {"seed"}},
                       {"description", "deterministic split; test rows carry no labels"}});
  endpoints.push_back({{"method", "POST"},
                       {"path", "/v1/benchmarks/{group}/evaluate"},
                       {"body", {"seed", "submission_id", "predictions"}},
                       {"description", "score predictions against held labels"}});
  endpoints.push_back({{"method", "GET"},
                       {"path", "/v1/leaderboards/{group}"},
                       {"description", "submissions sorted by primary metric"}});
  return json{{"service", "slicebench"}, {"version", "1"}, {"endpoints", endpoints}};
}

std::mutex submit_mutex;

}  // namespace

// ---------------------------------------------------------------------------
// Service

Service::Service(ServiceConfig cfg)
    : cfg_(std::move(cfg)),
      registry_(cfg_.data_dir, cfg_.clock),
      groups_(cfg_.data_dir),
      leaderboard_(cfg_.data_dir),
      server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

Service::~Service() = default;

bool Service::run() { return server_->listen(cfg_.host, cfg_.port); }

int Service::bind_any_port() { return server_->bind_to_any_port("127.0.0.1"); }

bool Service::run_after_bind() { return server_->listen_after_bind(); }

void Service::stop() { server_->stop(); }

void Service::install_routes() {
  auto& srv = *server_;

  srv.Get("/v1/spec", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, spec_document());
  });

  srv.Get("/v1/datasets", [this](const httplib::Request&, httplib::Response& res) {
    handle(res, [&] {
      auto manifests = registry_.list();
      std::map<std::string, uint64_t> latest;
      for (const auto& m : manifests)
        latest[m.name] = std::max(latest[m.name], m.version);
      std::sort(manifests.begin(), manifests.end(),
                [](const DatasetManifest& a, const DatasetManifest& b) {
                  if (a.name != b.name) return a.name < b.name;
                  return a.version < b.version;
                });
      json out = json::array();
      for (const auto& m : manifests) {
        json doc = m.to_json();
        doc["latest"] = latest[m.name] == m.version;
        out.push_back(doc);
      }
      send_json(res, 200, out);
    });
  });

  srv.Get(R"(/v1/datasets/([^/]+)/(\d+)/rows)",
          [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
              std::string name = req.matches[1];
              uint64_t version = std::stoull(req.matches[2]);
              std::string filter = req.get_param_value("filter");
              size_t limit = 1000;
              if (req.has_param("limit")) {
                long long v;
                require(parse_int(req.get_param_value("limit"), v) && v >= 1 && v <= 10000,
                        Errc::invalid_argument, "limit must be in [1, 10000]");
                limit = static_cast<size_t>(v);
              }
              DatasetManifest m = registry_.manifest(name, version);
              size_t offset = 0;
              if (req.has_param("cursor")) {
                Cursor c = parse_cursor(req.get_param_value("cursor"));
                require(c.content_hash == m.content_hash, Errc::bad_cursor,
                        "cursor does not match current dataset content");
                require(c.filter == filter, Errc::bad_cursor,
                        "cursor was issued for a different filter");
                offset = c.offset;
              }

              // Hide label columns of datasets whose labels a benchmark holds out.
              bool holdout = groups_.holds_labels_for(name);

              DatasetStream stream = registry_.stream(name, version, filter, limit + 1, offset);
              Table batch;
              bool any = stream.next(batch);
              json rows = json::array();
              std::vector<std::string> columns = stream.columns();
              std::optional<size_t> label_col;
              if (holdout) {
                for (size_t i = 0; i < columns.size(); ++i)
                  if (columns[i] == "label") label_col = i;
                if (label_col) columns.erase(columns.begin() + static_cast<long>(*label_col));
              }
              size_t emitted = 0;
              bool more = false;
              if (any) {
                more = batch.rows.size() > limit;
                emitted = std::min(limit, batch.rows.size());
                for (size_t i = 0; i < emitted; ++i) {
                  auto row = batch.rows[i];
                  if (label_col) row.erase(row.begin() + static_cast<long>(*label_col));
                  rows.push_back(row);
                }
              }
              json out;
              out["columns"] = columns;
              out["rows"] = rows;
              out["next_cursor"] =
                  more ? json(make_cursor(m.content_hash, filter, offset + emitted))
                       : json(nullptr);
              send_json(res, 200, out);
            });
          });

  srv.Get(R"(/v1/benchmarks/([^/]+)/split)",
          [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
              BenchmarkGroup group = groups_.get(std::string(req.matches[1]));
              uint64_t seed = 0;
              if (req.has_param("seed")) {
                long long v;
                require(parse_int(req.get_param_value("seed"), v) && v >= 0,
                        Errc::invalid_argument, "seed must be a non-negative integer");
                seed = static_cast<uint64_t>(v);
              }
              GroupData data = prepare_group(registry_, group, seed);
              send_json(res, 200, split_document(data));
            });
          });

  srv.Post(R"(/v1/benchmarks/([^/]+)/evaluate)",
           [this](const httplib::Request& req, httplib::Response& res) {
             handle(res, [&] {
               BenchmarkGroup group = groups_.get(std::string(req.matches[1]));
               json body = json::parse(req.body, nullptr, false);
               require(!body.is_discarded() && body.is_object(), Errc::invalid_argument,
                       "body must be a JSON object");
               uint64_t seed = body.value("seed", 0ULL);
               bool bounded = group.suite.family != "perturbation";
               PredictionSet preds = parse_prediction_body(body, bounded);
               MetricReport report = evaluate_group(registry_, group, preds, seed);

               std::string submission_id = body.value("submission_id", "");
               if (submission_id.empty())
                 submission_id = "anon-" + std::to_string(std::hash<std::string>{}(req.body));
               {
                 std::lock_guard<std::mutex> lock(submit_mutex);
                 std::string now = cfg_.clock ? cfg_.clock() : iso_timestamp_now();
                 leaderboard_.append(group.group_id, submission_id, seed, report, now);
               }
               res.status = 200;
               res.set_content(report.canonical_json(), "application/json");
             });
           });

  srv.Get(R"(/v1/leaderboards/([^/]+))",
          [this](const httplib::Request& req, httplib::Response& res) {
            handle(res, [&] {
              BenchmarkGroup group = groups_.get(std::string(req.matches[1]));
              auto entries = leaderboard_.entries(group.group_id, group.suite.primary_metric);
              json out = json::array();
              for (const auto& e : entries) out.push_back(e.to_json());
              send_json(res, 200, out);
            });
          });
}

}  // namespace slicebench
