#include "slicebench/service.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "slicebench/benchmark_group.hpp"
#include "slicebench/rng.hpp"

using namespace slicebench;
using nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("slicebench_svc_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

// Server running on an ephemeral port for the fixture's lifetime.
struct LiveService {
  Service service;
  int port;
  std::thread thread;

  explicit LiveService(ServiceConfig cfg) : service(std::move(cfg)), port(service.bind_any_port()) {
    thread = std::thread([this] { service.run_after_bind(); });
    httplib::Client probe("127.0.0.1", port);
    for (int i = 0; i < 100; ++i) {
      if (auto res = probe.Get("/v1/spec"); res && res->status == 200) break;
      ::usleep(10000);
    }
  }
  ~LiveService() {
    service.stop();
    thread.join();
  }
  httplib::Client client() { return httplib::Client("127.0.0.1", port); }
};

std::string scdtn_csv(size_t n_entities, size_t n_contexts) {
  std::string csv = "entity,context,label\n";
  for (size_t e = 0; e < n_entities; ++e)
    for (size_t c = 0; c < n_contexts; ++c)
      csv += "p" + std::to_string(e) + ",ct" + std::to_string(c) + "," +
             std::to_string(e % 2) + "\n";
  return csv;
}

const std::vector<std::pair<std::string, std::string>> kSampleSchema = {
    {"entity", "string"}, {"context", "string"}, {"label", "int"}};

// Seeds a registry + one scdtn group in the data dir.
void seed_scdtn_group(const std::filesystem::path& dir, const std::string& group_id,
                      size_t n_entities = 30, size_t n_contexts = 3) {
  Registry reg(dir, [] { return std::string("2026-02-02T00:00:00Z"); });
  auto manifest = reg.register_dataset("scdtn_toy", scdtn_csv(n_entities, n_contexts),
                                       kSampleSchema);
  GroupStore groups(dir);
  BenchmarkGroup group;
  group.group_id = group_id;
  group.dataset_name = "scdtn_toy";
  group.dataset_version = manifest.version;
  group.split.kind = SplitKind::cold;
  group.suite.family = "scdtn";
  group.suite.k_list = {1, 2};
  group.suite.r_list = {5};
  group.suite.primary_metric = "topk_auroc.1";
  groups.add(group);
}

json get_json(httplib::Client& client, const std::string& path, int expect_status = 200) {
  auto res = client.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect_status);
  return json::parse(res->body);
}

// Perfect predictions: score equals the held label, nudged into (0,1).
json perfect_predictions(const json& split_doc, const std::filesystem::path& dir,
                         const std::string& dataset) {
  Registry reg(dir);
  Table table = Table::from_csv(reg.read_blob(reg.manifest(dataset, 1)));
  std::map<std::pair<std::string, std::string>, std::string> labels;
  size_t e = table.col("entity"), c = table.col("context"), l = table.col("label");
  for (const auto& row : table.rows) labels[{row[e], row[c]}] = row[l];

  json preds = json::array();
  for (const auto& row : split_doc.at("test")) {
    std::string entity = row.at("entity"), context = row.at("context");
    double score = labels.at({entity, context}) == "1" ? 0.9 : 0.1;
    preds.push_back({{"entity", entity}, {"context", context}, {"score", score}});
  }
  return preds;
}

}  // namespace

TEST_CASE("GET /v1/datasets lists manifests with a latest flag") {
  TempDir dir;
  {
    Registry reg(dir.path);
    reg.register_dataset("a", "id,value\nx,1\n", {{"id", "string"}, {"value", "int"}});
    reg.register_dataset("a", "id,value\nx,2\n", {{"id", "string"}, {"value", "int"}});
  }
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  LiveService live(cfg);
  auto client = live.client();

  json listing = get_json(client, "/v1/datasets");
  REQUIRE(listing.size() == 2);
  CHECK(listing[0]["version"] == 1);
  CHECK(listing[0]["latest"] == false);
  CHECK(listing[1]["version"] == 2);
  CHECK(listing[1]["latest"] == true);

  // fresh registry serves an empty list
  TempDir empty;
  ServiceConfig cfg2;
  cfg2.data_dir = empty.path.string();
  LiveService live2(cfg2);
  auto client2 = live2.client();
  CHECK(get_json(client2, "/v1/datasets") == json::array());
}

TEST_CASE("rows endpoint paginates exactly and validates input") {
  TempDir dir;
  std::string csv = "id,value\n";
  for (int i = 0; i < 250; ++i) csv += "r" + std::to_string(i) + "," + std::to_string(i) + "\n";
  {
    Registry reg(dir.path);
    reg.register_dataset("rows", csv, {{"id", "string"}, {"value", "int"}});
  }
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  LiveService live(cfg);
  auto client = live.client();

  std::vector<json> pages;
  std::string cursor;
  for (;;) {
    std::string url = "/v1/datasets/rows/1/rows?limit=100";
    if (!cursor.empty()) url += "&cursor=" + cursor;
    json page = get_json(client, url);
    pages.push_back(page);
    if (page["next_cursor"].is_null()) break;
    cursor = page["next_cursor"];
  }
  REQUIRE(pages.size() == 3);
  CHECK(pages[0]["rows"].size() == 100);
  CHECK(pages[1]["rows"].size() == 100);
  CHECK(pages[2]["rows"].size() == 50);

  // reassembly matches the eager read
  Table eager = Table::from_csv(csv);
  size_t idx = 0;
  for (const auto& page : pages)
    for (const auto& row : page["rows"]) {
      CHECK(row[0] == eager.rows[idx][0]);
      ++idx;
    }
  CHECK(idx == eager.rows.size());

  auto bad_limit = client.Get("/v1/datasets/rows/1/rows?limit=0");
  CHECK(bad_limit->status == 400);
  auto bad_limit2 = client.Get("/v1/datasets/rows/1/rows?limit=20000");
  CHECK(bad_limit2->status == 400);
  auto missing = client.Get("/v1/datasets/ghost/1/rows");
  CHECK(missing->status == 404);
  auto bad_filter = client.Get("/v1/datasets/rows/1/rows?filter=ghost%20%3D%3D%201");
  CHECK(bad_filter->status == 400);
  CHECK(json::parse(bad_filter->body)["detail"].get<std::string>().find("ghost") !=
        std::string::npos);
  auto bad_cursor = client.Get("/v1/datasets/rows/1/rows?cursor=zzzz");
  CHECK(bad_cursor->status == 400);
}

TEST_CASE("cursors go stale when content changes") {
  TempDir dir;
  {
    Registry reg(dir.path);
    reg.register_dataset("d", "id,value\na,1\nb,2\nc,3\n",
                         {{"id", "string"}, {"value", "int"}});
    reg.register_dataset("d", "id,value\nz,9\ny,8\nx,7\n",
                         {{"id", "string"}, {"value", "int"}});
  }
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  LiveService live(cfg);
  auto client = live.client();

  json page = get_json(client, "/v1/datasets/d/1/rows?limit=2");
  std::string cursor = page["next_cursor"];
  // same cursor against the re-registered version: content hash differs
  auto res = client.Get("/v1/datasets/d/2/rows?limit=2&cursor=" + cursor);
  CHECK(res->status == 400);
  CHECK(json::parse(res->body)["error"] == "BadCursor");
}

TEST_CASE("split endpoint is deterministic and withholds test labels") {
  TempDir dir;
  seed_scdtn_group(dir.path, "scdtn");
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  LiveService live(cfg);
  auto client = live.client();

  auto r1 = client.Get("/v1/benchmarks/scdtn/split?seed=7");
  auto r2 = client.Get("/v1/benchmarks/scdtn/split?seed=7");
  REQUIRE(r1);
  CHECK(r1->status == 200);
  CHECK(r1->body == r2->body);  // byte-identical
  auto r3 = client.Get("/v1/benchmarks/scdtn/split?seed=8");
  CHECK(r3->body != r1->body);

  json doc = json::parse(r1->body);
  CHECK(doc["kind"] == "cold");
  CHECK(doc["prng"] == kPrngName);
  for (const auto& row : doc["train"]) CHECK(row.contains("label"));
  for (const auto& row : doc["test"]) {
    CHECK(row.contains("entity"));
    CHECK(row.contains("context"));
    CHECK_FALSE(row.contains("label"));
  }

  // cold-split context consistency: an entity keeps one fold across contexts
  std::map<std::string, std::set<std::string>> entity_folds;
  for (const char* fold : {"train", "valid", "test"})
    for (const auto& row : doc[fold])
      entity_folds[row["entity"].get<std::string>()].insert(fold);
  for (const auto& [entity, folds] : entity_folds) CHECK(folds.size() == 1);

  CHECK(client.Get("/v1/benchmarks/ghost/split")->status == 404);
}

TEST_CASE("evaluate matches the in-process library call bit for bit") {
  TempDir dir;
  seed_scdtn_group(dir.path, "scdtn");
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  cfg.clock = [] { return std::string("2026-02-02T01:00:00Z"); };
  LiveService live(cfg);
  auto client = live.client();

  json split = get_json(client, "/v1/benchmarks/scdtn/split?seed=3");
  json preds = perfect_predictions(split, dir.path, "scdtn_toy");
  json body{{"seed", 3}, {"submission_id", "sub1"}, {"predictions", preds}};

  auto res = client.Post("/v1/benchmarks/scdtn/evaluate", body.dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);

  // one code path: the server body equals the library's canonical JSON
  Registry reg(dir.path);
  GroupStore groups(dir.path);
  PredictionSet pset;
  for (const auto& row : preds)
    pset.rows.push_back({row["entity"], row["context"], row["score"]});
  MetricReport lib = evaluate_group(reg, groups.get("scdtn"), pset, 3);
  CHECK(res->body == lib.canonical_json());

  json report = json::parse(res->body);
  for (const auto& [k, v] : report["topk_auroc"].items()) CHECK(v.get<double>() == 1.0);

  // idempotence: identical numbers on re-post
  auto res2 = client.Post("/v1/benchmarks/scdtn/evaluate", body.dump(), "application/json");
  CHECK(res2->body == res->body);

  // constant scores: full ties pool to AUROC 0.5
  json flat = preds;
  for (auto& row : flat) row["score"] = 0.5;
  json flat_body{{"seed", 3}, {"predictions", flat}};
  auto res3 = client.Post("/v1/benchmarks/scdtn/evaluate", flat_body.dump(), "application/json");
  REQUIRE(res3->status == 200);
  CHECK(json::parse(res3->body)["context_free"]["auroc"].get<double>() == 0.5);
}

TEST_CASE("evaluate rejects incomplete or stray predictions") {
  TempDir dir;
  seed_scdtn_group(dir.path, "scdtn");
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  LiveService live(cfg);
  auto client = live.client();

  json split = get_json(client, "/v1/benchmarks/scdtn/split?seed=1");
  json preds = perfect_predictions(split, dir.path, "scdtn_toy");

  json missing = preds;
  missing.erase(0);
  missing.erase(0);
  missing.erase(0);
  auto res = client.Post("/v1/benchmarks/scdtn/evaluate",
                         json{{"seed", 1}, {"predictions", missing}}.dump(), "application/json");
  CHECK(res->status == 400);
  json err = json::parse(res->body);
  CHECK(err["error"] == "MissingPredictions");
  CHECK(err["detail"].get<std::string>().find("3") != std::string::npos);

  json stray = preds;
  stray.push_back({{"entity", "ghost"}, {"context", "ct0"}, {"score", 0.5}});
  auto res2 = client.Post("/v1/benchmarks/scdtn/evaluate",
                          json{{"seed", 1}, {"predictions", stray}}.dump(), "application/json");
  CHECK(res2->status == 400);
  CHECK(json::parse(res2->body)["error"] == "UnknownKeys");

  auto res3 = client.Post("/v1/benchmarks/ghost/evaluate",
                          json{{"seed", 1}, {"predictions", preds}}.dump(), "application/json");
  CHECK(res3->status == 404);
}

TEST_CASE("degenerate classification folds return 422") {
  TempDir dir;
  {
    Registry reg(dir.path);
    // labels all positive: the stratified split cannot exist, so use random;
    // the single-class test fold must surface DegenerateSlice
    std::string csv = "entity,label\n";
    for (int i = 0; i < 20; ++i) csv += "e" + std::to_string(i) + ",1\n";
    reg.register_dataset("allpos", csv, {{"entity", "string"}, {"label", "int"}});
    GroupStore groups(dir.path);
    BenchmarkGroup group;
    group.group_id = "degen";
    group.dataset_name = "allpos";
    group.dataset_version = 1;
    group.split.kind = SplitKind::random_uniform;
    group.suite.family = "classification";
    group.suite.primary_metric = "cf.auprc";
    groups.add(group);
  }
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  LiveService live(cfg);
  auto client = live.client();

  json split = get_json(client, "/v1/benchmarks/degen/split?seed=2");
  json preds = json::array();
  for (const auto& row : split["test"])
    preds.push_back({{"entity", row["entity"]}, {"context", ""}, {"score", 0.6}});
  auto res = client.Post("/v1/benchmarks/degen/evaluate",
                         json{{"seed", 2}, {"predictions", preds}}.dump(), "application/json");
  CHECK(res->status == 422);
  CHECK(json::parse(res->body)["error"] == "DegenerateSlice");
}

TEST_CASE("leaderboard sorts by primary metric, ties by submission time") {
  TempDir dir;
  seed_scdtn_group(dir.path, "scdtn");

  int tick = 0;
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  cfg.clock = [&tick]() mutable {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "2026-02-02T00:00:%02dZ", tick++);
    return std::string(buf);
  };
  LiveService live(cfg);
  auto client = live.client();

  CHECK(get_json(client, "/v1/leaderboards/scdtn") == json::array());
  CHECK(client.Get("/v1/leaderboards/ghost")->status == 404);

  json split = get_json(client, "/v1/benchmarks/scdtn/split?seed=3");
  json good = perfect_predictions(split, dir.path, "scdtn_toy");
  json bad = good;
  for (auto& row : bad) row["score"] = 1.0 - row["score"].get<double>();
  json mediocre = good;  // same numbers as good, posted later: tie case

  client.Post("/v1/benchmarks/scdtn/evaluate",
              json{{"seed", 3}, {"submission_id", "first"}, {"predictions", good}}.dump(),
              "application/json");
  client.Post("/v1/benchmarks/scdtn/evaluate",
              json{{"seed", 3}, {"submission_id", "loser"}, {"predictions", bad}}.dump(),
              "application/json");
  client.Post("/v1/benchmarks/scdtn/evaluate",
              json{{"seed", 3}, {"submission_id", "later"}, {"predictions", mediocre}}.dump(),
              "application/json");

  json board = get_json(client, "/v1/leaderboards/scdtn");
  REQUIRE(board.size() == 3);
  CHECK(board[0]["submission_id"] == "first");  // tie with "later", earlier submit wins
  CHECK(board[1]["submission_id"] == "later");
  CHECK(board[2]["submission_id"] == "loser");
  CHECK(board[0]["n_seeds"] == 1);
  CHECK(board[0]["aggregates"].contains("topk_auroc.1"));

  // multi-seed submission aggregates server-side
  json split5 = get_json(client, "/v1/benchmarks/scdtn/split?seed=5");
  json preds5 = perfect_predictions(split5, dir.path, "scdtn_toy");
  client.Post("/v1/benchmarks/scdtn/evaluate",
              json{{"seed", 5}, {"submission_id", "first"}, {"predictions", preds5}}.dump(),
              "application/json");
  board = get_json(client, "/v1/leaderboards/scdtn");
  CHECK(board[0]["submission_id"] == "first");
  CHECK(board[0]["n_seeds"] == 2);
}

TEST_CASE("label columns of holdout datasets are hidden from row streaming") {
  TempDir dir;
  seed_scdtn_group(dir.path, "holdout");
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  LiveService live(cfg);
  auto client = live.client();

  json page = get_json(client, "/v1/datasets/scdtn_toy/1/rows?limit=100");
  json cols = page["columns"];
  for (const auto& c : cols) CHECK(c.get<std::string>() != "label");
  for (const auto& row : page["rows"]) CHECK(row.size() == cols.size());
}

TEST_CASE("perturbation groups evaluate MSE@kDEG and R2 over genes") {
  TempDir dir;
  {
    Registry reg(dir.path);
    // 4 genes, 3 cells each; gene g2 strongly responds to the perturbation
    std::string control = "cell,g1,g2,g3,g4\nc1,5,1,7,3\nc2,6,2,6,3\nc3,5,1,7,4\n";
    std::string perturbed = "cell,g1,g2,g3,g4\np1,5,30,7,3\np2,6,32,6,4\np3,5,31,7,3\n";
    std::vector<std::pair<std::string, std::string>> schema = {{"cell", "string"},
                                                               {"g1", "real"},
                                                               {"g2", "real"},
                                                               {"g3", "real"},
                                                               {"g4", "real"}};
    reg.register_dataset("pert", perturbed, schema);
    reg.register_dataset("ctrl", control, schema);
    GroupStore groups(dir.path);
    BenchmarkGroup group;
    group.group_id = "geneperturb";
    group.dataset_name = "pert";
    group.dataset_version = 1;
    group.control_dataset_name = "ctrl";
    group.control_dataset_version = 1;
    group.context = "K562";
    group.suite.family = "perturbation";
    group.suite.deg_k = 2;
    group.suite.primary_metric = "r_squared";
    groups.add(group);
  }
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  LiveService live(cfg);
  auto client = live.client();

  json split = get_json(client, "/v1/benchmarks/geneperturb/split");
  REQUIRE(split["test"].size() == 4);
  CHECK(split["kind"] == "perturbation");

  // predict the held actual means exactly via the library to cross-check
  Registry reg(dir.path);
  GroupStore groups(dir.path);
  GroupData data = prepare_group(reg, groups.get("geneperturb"), 0);
  json preds = json::array();
  for (const auto& [gene, idx] : data.gene_index)
    preds.push_back(
        {{"entity", gene}, {"context", "K562"}, {"score", data.actual_means[idx]}});
  auto res = client.Post("/v1/benchmarks/geneperturb/evaluate",
                         json{{"seed", 0}, {"predictions", preds}}.dump(), "application/json");
  REQUIRE(res->status == 200);
  json report = json::parse(res->body);
  CHECK(report["r_squared"].get<double>() == 1.0);
  CHECK(report["mse_at_deg"]["2"].get<double>() == 0.0);
  CHECK(report["deg"].size() == 2);
  // the responding gene must be among the selected DEGs
  bool has_g2 = false;
  for (const auto& g : report["deg"]) has_g2 |= g.get<std::string>() == "g2";
  CHECK(has_g2);
}

TEST_CASE("service config loads from file with env overrides") {
  TempDir dir;
  std::string cfg_path = (dir.path / "cfg.json").string();
  std::ofstream(cfg_path)
      << R"({"port": 9100, "data_dir": ")" << dir.path.string()
      << R"(", "fixture_mode": false, "fixture_path": "seqs.json"})";
  ::unsetenv("SLICEBENCH_PORT");
  ::unsetenv("SLICEBENCH_FIXTURE_MODE");
  ServiceConfig cfg = ServiceConfig::load(cfg_path);
  CHECK(cfg.port == 9100);
  CHECK(cfg.data_dir == dir.path.string());
  CHECK_FALSE(cfg.fixture_mode);

  ::setenv("SLICEBENCH_PORT", "9200", 1);
  ::setenv("SLICEBENCH_FIXTURE_MODE", "1", 1);
  ServiceConfig overridden = ServiceConfig::load(cfg_path);
  CHECK(overridden.port == 9200);
  CHECK(overridden.fixture_mode);
  ::unsetenv("SLICEBENCH_PORT");
  ::unsetenv("SLICEBENCH_FIXTURE_MODE");
}

TEST_CASE("concurrent requests are handled") {
  TempDir dir;
  seed_scdtn_group(dir.path, "scdtn");
  ServiceConfig cfg;
  cfg.data_dir = dir.path.string();
  LiveService live(cfg);

  std::atomic<int> ok{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&live, &ok] {
      auto client = live.client();
      for (int i = 0; i < 5; ++i) {
        auto res = client.Get("/v1/datasets");
        if (res && res->status == 200) ok.fetch_add(1);
        auto split = client.Get("/v1/benchmarks/scdtn/split?seed=1");
        if (split && split->status == 200) ok.fetch_add(1);
      }
    });
  for (auto& th : threads) th.join();
  CHECK(ok.load() == 8 * 5 * 2);
}
