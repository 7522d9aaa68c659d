// bench: operator entry points for the registry, splits, baselines,
// evaluation, and the HTTP service. All commands emit machine-readable JSON;
// --human switches summary tables on where available.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "slicebench/baseline_runners.hpp"
#include "slicebench/benchmark_group.hpp"
#include "slicebench/graph_baselines.hpp"
#include "slicebench/metrics.hpp"
#include "slicebench/registry.hpp"
#include "slicebench/service.hpp"
#include "slicebench/splits.hpp"

using namespace slicebench;
using nlohmann::json;

namespace {

std::string read_file_or_die(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_error, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::io_error, "cannot open " + path);
  out << bytes;
}

std::vector<std::pair<std::string, std::string>> parse_schema_arg(const std::string& arg) {
  std::vector<std::pair<std::string, std::string>> schema;
  std::stringstream ss(arg);
  std::string part;
  while (std::getline(ss, part, ',')) {
    size_t colon = part.rfind(':');
    require(colon != std::string::npos, Errc::invalid_argument,
            "schema entries look like column:type, got '" + part + "'");
    schema.emplace_back(part.substr(0, colon), part.substr(colon + 1));
  }
  return schema;
}

std::pair<std::string, uint64_t> parse_dataset_ref(const std::string& arg, Registry& registry) {
  size_t colon = arg.rfind(':');
  if (colon == std::string::npos) return {arg, registry.latest_version(arg)};
  std::string name = arg.substr(0, colon);
  std::string ver = arg.substr(colon + 1);
  if (ver == "latest") return {name, registry.latest_version(name)};
  return {name, std::stoull(ver)};
}

Fractions parse_fractions_arg(const std::string& arg) {
  Fractions f{0.8, 0.1, 0.1};
  if (arg.empty()) return f;
  std::stringstream ss(arg);
  std::string part;
  size_t i = 0;
  while (std::getline(ss, part, ',') && i < 3) f[i++] = std::stod(part);
  require(i == 3, Errc::invalid_argument, "fractions need 3 comma-separated values");
  return f;
}

std::vector<size_t> parse_size_list(const std::string& arg) {
  std::vector<size_t> out;
  std::stringstream ss(arg);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(std::stoull(part));
  return out;
}

// ---------------------------------------------------------------------------
// Baseline runners

EmbeddingTable embeddings_for_graph(const ContextGraph& graph, Node2VecConfig cfg,
                                    bool per_context) {
  if (!per_context) {
    auto walks = node2vec_walks(graph, cfg);
    return train_skipgram(graph, walks, cfg);
  }
  // Walk each context subgraph, mapped back into reference indices.
  std::vector<std::vector<uint32_t>> walks;
  uint64_t stream = 0;
  for (const auto& [ctx, members] : graph.contexts()) {
    ContextGraph sub = context_subgraph(graph, ctx);
    Node2VecConfig sub_cfg = cfg;
    sub_cfg.seed = cfg.seed + (++stream);
    for (auto& walk : node2vec_walks(sub, sub_cfg)) {
      std::vector<uint32_t> mapped;
      mapped.reserve(walk.size());
      for (uint32_t idx : walk) mapped.push_back(graph.index_of(sub.node_name(idx)));
      walks.push_back(std::move(mapped));
    }
  }
  return train_skipgram(graph, walks, cfg);
}

// ---------------------------------------------------------------------------
// Command options

struct CommonOpts {
  std::string data_dir = "data";
  bool human = false;
};

int run_command(const CommonOpts& common, const std::string& group_id,
                const std::string& baseline, std::vector<uint64_t> seeds,
                const std::string& edges_path, const std::string& membership_path,
                const std::string& out_dir, bool per_context, const Node2VecConfig& n2v_base,
                const std::string& embeddings_in, const std::string& embeddings_out) {
  Registry registry(common.data_dir);
  GroupStore groups(common.data_dir);
  BenchmarkGroup group = groups.get(group_id);
  require(group.suite.family == "scdtn" || group.suite.family == "classification",
          Errc::invalid_argument, "graph baselines run on label-based groups");
  if (seeds.empty()) seeds = {0};
  std::filesystem::create_directories(out_dir);

  ContextGraph graph;
  {
    std::ifstream edges(edges_path), membership(membership_path);
    require(edges.good(), Errc::io_error, "cannot open " + edges_path);
    require(membership.good(), Errc::io_error, "cannot open " + membership_path);
    graph = parse_graph(edges, membership);
  }

  EmbeddingTable emb;
  bool have_embeddings = false;
  if (baseline == "node2vec" && !embeddings_in.empty()) {
    emb = load_embeddings(embeddings_in);
    have_embeddings = true;
  }

  std::vector<MetricReport> reports;
  for (uint64_t seed : seeds) {
    GroupData data = prepare_group(registry, group, seed);
    PredictionSet preds;
    if (baseline == "labelprop") {
      preds = labelprop_predict(graph, data.train_samples, data.valid_samples, data.test_samples);
    } else {
      if (!have_embeddings) {
        Node2VecConfig cfg = n2v_base;
        cfg.seed = seed + 1;  // seed 0 keeps a distinct embedding stream
        emb = embeddings_for_graph(graph, cfg, per_context);
        if (!embeddings_out.empty())
          store_embeddings(emb, embeddings_out + ".seed" + std::to_string(seed));
      }
      preds = node2vec_predict(emb, data.train_samples, data.valid_samples, data.test_samples,
                               data.split);
    }
    MetricReport report = evaluate_prepared(data, preds);
    reports.push_back(report);
    std::string path = out_dir + "/" + group_id + "_" + baseline + "_seed" +
                       std::to_string(seed) + ".json";
    write_file(path, report.canonical_json() + "\n");
  }

  auto aggregates = aggregate_seeds(reports);
  json agg_doc;
  agg_doc["group_id"] = group_id;
  agg_doc["baseline"] = baseline;
  agg_doc["n_seeds"] = seeds.size();
  agg_doc["metrics"] = aggregates_to_json(aggregates);
  write_file(out_dir + "/" + group_id + "_" + baseline + "_aggregate.json",
             agg_doc.dump() + "\n");
  if (common.human)
    std::cout << aggregates_to_table(aggregates);
  else
    std::cout << agg_doc.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slicebench: context-sliced benchmark engine and dataset registry"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--data-dir", common.data_dir, "registry/service data directory")
      ->envname("SLICEBENCH_DATA_DIR");
  app.add_flag("--human", common.human, "human-readable tables instead of JSON");

  // registry ------------------------------------------------------------
  auto* registry_cmd = app.add_subcommand("registry", "dataset registry operations");
  registry_cmd->require_subcommand(1);

  std::string reg_name, reg_file, reg_schema, reg_parent;
  auto* reg_add = registry_cmd->add_subcommand("add", "register a dataset version");
  reg_add->add_option("--name", reg_name)->required();
  reg_add->add_option("--file", reg_file, "CSV file")->required();
  reg_add->add_option("--schema", reg_schema, "column:type[,column:type...]")->required();
  reg_add->add_option("--parent", reg_parent, "parent dataset name:version");

  std::string view_name;
  int64_t view_version = -1;
  auto* reg_view = registry_cmd->add_subcommand("view", "show manifests");
  reg_view->add_option("--name", view_name);
  reg_view->add_option("--version", view_version);

  std::string lin_name;
  uint64_t lin_version = 0;
  auto* reg_lineage = registry_cmd->add_subcommand("lineage", "manifest chain root -> version");
  reg_lineage->add_option("--name", lin_name)->required();
  reg_lineage->add_option("--version", lin_version)->required();

  // view apply ----------------------------------------------------------
  auto* view_cmd = app.add_subcommand("view", "data-view pipeline operations");
  view_cmd->require_subcommand(1);
  std::string dv_config, dv_fixtures, dv_endpoint, dv_cache;
  auto* view_apply = view_cmd->add_subcommand("apply", "apply a data-view config");
  view_apply->add_option("--config", dv_config, "view config JSON document")->required();
  view_apply->add_option("--fixtures", dv_fixtures, "sequence fixture JSON (offline mode)");
  view_apply->add_option("--live-endpoint", dv_endpoint, "live GET endpoint, {key} placeholder");
  view_apply->add_option("--cache-dir", dv_cache, "response cache directory");

  // split make ----------------------------------------------------------
  auto* split_cmd = app.add_subcommand("split", "split generators");
  split_cmd->require_subcommand(1);
  std::string sp_kind, sp_input, sp_input_kind = "samples", sp_cutoff, sp_fractions, sp_out;
  double sp_test_fraction = 0.9;
  uint64_t sp_seed = 0;
  bool sp_receptor_cold = false;
  auto* split_make = split_cmd->add_subcommand("make", "generate a deterministic split");
  split_make->add_option("--kind", sp_kind, "cold|temporal|stratified|random")->required();
  split_make->add_option("--input", sp_input, "input records file")->required();
  split_make->add_option("--input-kind", sp_input_kind, "samples|trials|pairs|ids");
  split_make->add_option("--seed", sp_seed);
  split_make->add_option("--cutoff", sp_cutoff, "temporal cutoff date (YYYY-MM-DD)");
  split_make->add_option("--fractions", sp_fractions, "train,valid,test e.g. 0.8,0.1,0.1");
  split_make->add_option("--test-fraction", sp_test_fraction, "stratified test share");
  split_make->add_flag("--receptor-cold", sp_receptor_cold,
                       "cold split binding pairs on receptors instead of ligands");
  split_make->add_option("--out", sp_out, "output path (stdout when omitted)");

  // negatives make --------------------------------------------------------
  auto* negatives_cmd = app.add_subcommand("negatives", "negative-sampling heuristics");
  negatives_cmd->require_subcommand(1);
  std::string ng_heuristic, ng_positives, ng_pool, ng_experimental, ng_out;
  double ng_ratio = 1.0;
  uint64_t ng_seed = 0;
  auto* negatives_make = negatives_cmd->add_subcommand("make", "generate negative binding pairs");
  negatives_make->add_option("--heuristic", ng_heuristic, "RN|ET|NA")->required();
  negatives_make->add_option("--positives", ng_positives, "positive pairs CSV")->required();
  negatives_make->add_option("--ratio", ng_ratio, "negatives per positive");
  negatives_make->add_option("--seed", ng_seed);
  negatives_make->add_option("--pool", ng_pool, "external receptor pool, one sequence per line");
  negatives_make->add_option("--experimental", ng_experimental,
                             "experimentally labeled negatives CSV (NA)");
  negatives_make->add_option("--out", ng_out, "output path (stdout when omitted)");

  // group -----------------------------------------------------------------
  auto* group_cmd = app.add_subcommand("group", "benchmark group management");
  group_cmd->require_subcommand(1);
  std::string gr_id, gr_dataset, gr_control, gr_family = "scdtn", gr_split_kind = "cold";
  std::string gr_context, gr_cutoff, gr_fractions, gr_k_list = "1", gr_r_list = "5", gr_primary;
  double gr_threshold = 0.5, gr_test_fraction = 0.9;
  size_t gr_deg_k = 20;
  auto* group_add = group_cmd->add_subcommand("add", "register a benchmark group");
  group_add->add_option("--id", gr_id)->required();
  group_add->add_option("--dataset", gr_dataset, "name[:version|:latest]")->required();
  group_add->add_option("--control", gr_control, "control dataset (perturbation family)");
  group_add->add_option("--family", gr_family, "scdtn|classification|perturbation");
  group_add->add_option("--split-kind", gr_split_kind, "cold|temporal|stratified|random");
  group_add->add_option("--context", gr_context, "cell line context (perturbation)");
  group_add->add_option("--cutoff", gr_cutoff, "temporal cutoff date");
  group_add->add_option("--fractions", gr_fractions, "train,valid,test");
  group_add->add_option("--test-fraction", gr_test_fraction);
  group_add->add_option("--k-list", gr_k_list, "top-K values, comma separated");
  group_add->add_option("--r-list", gr_r_list, "AP@R ranks, comma separated");
  group_add->add_option("--deg-k", gr_deg_k);
  group_add->add_option("--threshold", gr_threshold);
  group_add->add_option("--primary", gr_primary, "primary metric key for leaderboards");
  auto* group_list = group_cmd->add_subcommand("list", "list benchmark groups");

  // run ---------------------------------------------------------------------
  std::string run_group, run_baseline, run_edges, run_membership, run_out = "reports";
  std::string run_embeddings_in, run_embeddings_out;
  std::vector<uint64_t> run_seeds;
  bool run_per_context = false;
  Node2VecConfig n2v;
  auto* run_cmd = app.add_subcommand("run", "train a baseline per seed and evaluate");
  run_cmd->add_option("--group", run_group)->required();
  run_cmd->add_option("--baseline", run_baseline, "labelprop|node2vec")->required();
  run_cmd->add_option("--seeds", run_seeds, "seed list")->expected(-1);
  run_cmd->add_option("--edges", run_edges, "edge list TSV")->required();
  run_cmd->add_option("--membership", run_membership, "node\\tcontext TSV")->required();
  run_cmd->add_option("--out", run_out, "report directory");
  run_cmd->add_flag("--per-context", run_per_context, "walk per-context subgraphs");
  run_cmd->add_option("--embeddings-in", run_embeddings_in, "reuse a stored embedding table");
  run_cmd->add_option("--embeddings-out", run_embeddings_out, "store trained embeddings");
  run_cmd->add_option("--dim", n2v.dim);
  run_cmd->add_option("--walks-per-node", n2v.walks_per_node);
  run_cmd->add_option("--walk-length", n2v.walk_length);
  run_cmd->add_option("--window", n2v.window);
  run_cmd->add_option("--p", n2v.return_p);
  run_cmd->add_option("--q", n2v.inout_q);
  run_cmd->add_option("--negatives", n2v.negatives);
  run_cmd->add_option("--epochs", n2v.epochs);
  run_cmd->add_option("--workers", n2v.workers);

  // evaluate ------------------------------------------------------------------
  std::string ev_group, ev_preds;
  uint64_t ev_seed = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a prediction file against a group");
  eval_cmd->add_option("--group", ev_group)->required();
  eval_cmd->add_option("--preds", ev_preds, "prediction CSV (entity,context,score)")->required();
  eval_cmd->add_option("--seed", ev_seed);

  // serve ----------------------------------------------------------------------
  std::string srv_config;
  int srv_port = 8080;
  bool srv_fixture_mode = false;
  std::string srv_fixture_path;
  auto* serve_cmd = app.add_subcommand("serve", "run the benchmark HTTP service");
  serve_cmd->add_option("--config", srv_config, "JSON config file");
  serve_cmd->add_option("--port", srv_port)->envname("SLICEBENCH_PORT");
  serve_cmd->add_flag("--fixture-mode", srv_fixture_mode);
  serve_cmd->add_option("--fixture-path", srv_fixture_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (reg_add->parsed()) {
      Registry registry(common.data_dir);
      std::optional<std::pair<std::string, uint64_t>> parent;
      if (!reg_parent.empty()) parent = parse_dataset_ref(reg_parent, registry);
      auto manifest = registry.register_dataset(reg_name, read_file_or_die(reg_file),
                                                parse_schema_arg(reg_schema), parent);
      std::cout << manifest.to_json().dump() << "\n";
    } else if (reg_view->parsed()) {
      Registry registry(common.data_dir);
      json out = json::array();
      for (const auto& m : registry.list()) {
        if (!view_name.empty() && m.name != view_name) continue;
        if (view_version >= 0 && m.version != static_cast<uint64_t>(view_version)) continue;
        out.push_back(m.to_json());
      }
      std::cout << out.dump() << "\n";
    } else if (reg_lineage->parsed()) {
      Registry registry(common.data_dir);
      json out = json::array();
      for (const auto& m : registry.lineage(lin_name, lin_version)) out.push_back(m.to_json());
      std::cout << out.dump() << "\n";
    } else if (view_apply->parsed()) {
      Registry registry(common.data_dir);
      DataViewConfig cfg = DataViewConfig::from_document(json::parse(read_file_or_die(dv_config)));
      FetcherSpec spec;
      if (!dv_fixtures.empty()) {
        spec.kind = FetcherSpec::Kind::fixture_file;
        spec.fixture_path = dv_fixtures;
      } else {
        require(!dv_endpoint.empty(), Errc::invalid_argument,
                "need --fixtures or --live-endpoint");
        spec.kind = FetcherSpec::Kind::rest_get_sequence;
        spec.endpoint_template = dv_endpoint;
      }
      spec.cache_dir = dv_cache;
      auto fetcher = make_fetcher(spec);
      auto [table, manifest] = registry.apply_view(cfg, fetcher.get());
      std::cout << manifest.to_json().dump() << "\n";
    } else if (split_make->parsed()) {
      SplitKind kind = parse_split_kind(sp_kind);
      Fractions fractions = parse_fractions_arg(sp_fractions);
      std::string bytes = read_file_or_die(sp_input);
      SplitSpec spec;
      if (sp_input_kind == "samples") {
        auto samples = parse_samples(bytes);
        if (kind == SplitKind::cold) {
          spec = cold_split(samples, fractions, sp_seed);
        } else if (kind == SplitKind::stratified) {
          std::vector<std::pair<EntityId, int>> items;
          for (const auto& s : samples) items.emplace_back(s.entity, s.label);
          spec = stratified_split(items, sp_test_fraction, sp_seed);
        } else if (kind == SplitKind::random_uniform) {
          std::vector<EntityId> ids;
          for (const auto& s : samples) ids.push_back(s.entity);
          std::sort(ids.begin(), ids.end());
          ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
          spec = random_split(ids, fractions, sp_seed);
        } else {
          fail(Errc::invalid_argument, "temporal split needs --input-kind trials");
        }
      } else if (sp_input_kind == "trials") {
        auto trials = parse_trials(bytes);
        if (kind == SplitKind::temporal) {
          require(!sp_cutoff.empty(), Errc::invalid_argument, "temporal split needs --cutoff");
          spec = temporal_split(trials, sp_cutoff, sp_seed);
        } else if (kind == SplitKind::stratified) {
          std::vector<std::pair<EntityId, int>> items;
          for (const auto& t : trials) items.emplace_back(t.trial_id, t.label);
          spec = stratified_split(items, sp_test_fraction, sp_seed);
        } else {
          std::vector<EntityId> ids;
          for (const auto& t : trials) ids.push_back(t.trial_id);
          spec = random_split(ids, fractions, sp_seed);
        }
      } else if (sp_input_kind == "pairs") {
        auto pairs = parse_binding_pairs(bytes);
        if (kind == SplitKind::cold) {
          spec = binding_cold_split(pairs, fractions, sp_seed, sp_receptor_cold);
        } else if (kind == SplitKind::stratified) {
          std::vector<std::pair<EntityId, int>> items;
          for (const auto& p : pairs) items.emplace_back(binding_pair_key(p), p.label);
          spec = stratified_split(items, sp_test_fraction, sp_seed);
        } else {
          std::vector<EntityId> ids;
          for (const auto& p : pairs) ids.push_back(binding_pair_key(p));
          spec = random_split(ids, fractions, sp_seed);
        }
      } else if (sp_input_kind == "ids") {
        std::vector<EntityId> ids;
        std::istringstream in(bytes);
        std::string line;
        while (std::getline(in, line))
          if (!line.empty()) ids.push_back(line);
        spec = random_split(ids, fractions, sp_seed);
      } else {
        fail(Errc::invalid_argument, "unknown --input-kind '" + sp_input_kind + "'");
      }
      std::string serialized = spec.serialize() + "\n";
      if (sp_out.empty()) std::cout << serialized;
      else write_file(sp_out, serialized);
    } else if (negatives_make->parsed()) {
      NegativeSamplingConfig cfg;
      cfg.heuristic = parse_negative_heuristic(ng_heuristic);
      cfg.ratio = ng_ratio;
      cfg.seed = ng_seed;
      if (!ng_pool.empty()) {
        std::istringstream in(read_file_or_die(ng_pool));
        std::string line;
        while (std::getline(in, line))
          if (!line.empty()) cfg.external_pool.push_back(line);
      }
      auto positives = parse_binding_pairs(read_file_or_die(ng_positives));
      std::vector<BindingPair> experimental;
      if (!ng_experimental.empty())
        experimental = parse_binding_pairs(read_file_or_die(ng_experimental));
      auto negatives = generate_negatives(positives, cfg, experimental);
      std::string serialized = serialize_binding_pairs(negatives);
      if (ng_out.empty()) std::cout << serialized;
      else write_file(ng_out, serialized);
    } else if (group_add->parsed()) {
      Registry registry(common.data_dir);
      GroupStore groups(common.data_dir);
      BenchmarkGroup group;
      group.group_id = gr_id;
      std::tie(group.dataset_name, group.dataset_version) =
          parse_dataset_ref(gr_dataset, registry);
      if (!gr_control.empty())
        std::tie(group.control_dataset_name, group.control_dataset_version) =
            parse_dataset_ref(gr_control, registry);
      group.context = gr_context;
      group.split.kind = parse_split_kind(gr_split_kind);
      group.split.fractions = parse_fractions_arg(gr_fractions);
      group.split.cutoff = gr_cutoff;
      group.split.test_fraction = gr_test_fraction;
      group.suite.family = gr_family;
      group.suite.k_list = parse_size_list(gr_k_list);
      group.suite.r_list = parse_size_list(gr_r_list);
      group.suite.deg_k = gr_deg_k;
      group.suite.threshold = gr_threshold;
      if (!gr_primary.empty()) {
        group.suite.primary_metric = gr_primary;
      } else if (gr_family == "scdtn") {
        require(!group.suite.k_list.empty(), Errc::invalid_argument, "scdtn needs --k-list");
        group.suite.primary_metric = "topk_auroc." + std::to_string(group.suite.k_list.front());
      } else if (gr_family == "perturbation") {
        group.suite.primary_metric = "r_squared";
      } else {
        group.suite.primary_metric = "cf.auprc";
      }
      groups.add(group);
      std::cout << group.to_json().dump() << "\n";
    } else if (group_list->parsed()) {
      GroupStore groups(common.data_dir);
      json out = json::array();
      for (const auto& g : groups.list()) out.push_back(g.to_json());
      std::cout << out.dump() << "\n";
    } else if (run_cmd->parsed()) {
      return run_command(common, run_group, run_baseline, run_seeds, run_edges, run_membership,
                         run_out, run_per_context, n2v, run_embeddings_in, run_embeddings_out);
    } else if (eval_cmd->parsed()) {
      Registry registry(common.data_dir);
      GroupStore groups(common.data_dir);
      BenchmarkGroup group = groups.get(ev_group);
      bool bounded = group.suite.family != "perturbation";
      std::ifstream in(ev_preds);
      require(in.good(), Errc::io_error, "cannot open " + ev_preds);
      PredictionSet preds = parse_predictions(in, Format::csv, bounded);
      MetricReport report = evaluate_group(registry, group, preds, ev_seed);
      std::cout << report.canonical_json() << "\n";
    } else if (serve_cmd->parsed()) {
      ServiceConfig cfg = ServiceConfig::load(srv_config);
      if (serve_cmd->count("--port")) cfg.port = srv_port;
      if (common.data_dir != "data" || cfg.data_dir.empty()) cfg.data_dir = common.data_dir;
      if (srv_fixture_mode) cfg.fixture_mode = true;
      if (!srv_fixture_path.empty()) cfg.fixture_path = srv_fixture_path;
      Service service(std::move(cfg));
      std::cerr << "listening on port " << srv_port << "\n";
      service.run();
    }
  } catch (const Error& err) {
    std::cerr << err.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
