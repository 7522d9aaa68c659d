#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "slicebench/csv.hpp"
#include "slicebench/gradients.hpp"
#include "slicebench/graph_baselines.hpp"
#include "slicebench/metrics.hpp"

namespace slicebench {

const std::vector<float>& EmbeddingTable::at(const EntityId& id) const {
  auto it = vectors.find(id);
  require(it != vectors.end(), Errc::missing_embedding, id);
  return it->second;
}

namespace {

std::string fmt_float(float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool parse_float(const std::string& s, float& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  float v = std::strtof(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size() || !std::isfinite(v)) return false;
  out = v;
  return true;
}

}  // namespace

void store_embeddings(const EmbeddingTable& table, const std::string& path) {
  require(table.dim > 0, Errc::invalid_argument, "embedding dim must be positive");
  for (const auto& [id, vec] : table.vectors)
    require(vec.size() == table.dim, Errc::dim_mismatch,
            id + " has dim " + std::to_string(vec.size()));

  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_error, "cannot open " + path);
  out << "dim,provenance,count\n";
  out << csv_join({std::to_string(table.dim), table.provenance,
                   std::to_string(table.vectors.size())})
      << "\n";
  for (const auto& [id, vec] : table.vectors) {
    std::vector<std::string> row{id};
    for (float v : vec) row.push_back(fmt_float(v));
    out << csv_join(row) << "\n";
  }
  require(out.good(), Errc::io_error, "write failed for " + path);
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_error, "cannot open " + path);
  CsvReader reader(in);
  std::vector<std::string> fields;
  require(reader.next(fields) && fields == std::vector<std::string>{"dim", "provenance", "count"},
          Errc::corrupt_file, "bad embedding header in " + path);
  require(reader.next(fields) && fields.size() == 3, Errc::corrupt_file,
          "missing embedding metadata in " + path);

  EmbeddingTable table;
  long long dim, count;
  require(parse_int(fields[0], dim) && dim > 0, Errc::corrupt_file, "bad dim field");
  require(parse_int(fields[2], count) && count >= 0, Errc::corrupt_file, "bad count field");
  table.dim = static_cast<size_t>(dim);
  table.provenance = fields[1];

  while (reader.next(fields)) {
    require(fields.size() == table.dim + 1, Errc::dim_mismatch,
            "row '" + fields[0] + "' has " + std::to_string(fields.size() - 1) +
                " values, expected " + std::to_string(table.dim));
    std::vector<float> vec(table.dim);
    for (size_t i = 0; i < table.dim; ++i)
      require(parse_float(fields[i + 1], vec[i]), Errc::corrupt_file,
              "bad value in row '" + fields[0] + "'");
    require(table.vectors.emplace(fields[0], std::move(vec)).second, Errc::corrupt_file,
            "duplicate entity '" + fields[0] + "'");
  }
  require(table.vectors.size() == static_cast<size_t>(count), Errc::corrupt_file,
          "row count does not match header");
  return table;
}

// ---------------------------------------------------------------------------
// Logistic head

size_t LinearHead::context_index(const ContextId& ctx) const {
  auto it = std::find(contexts.begin(), contexts.end(), ctx);
  require(it != contexts.end(), Errc::unknown_context, ctx);
  return static_cast<size_t>(it - contexts.begin());
}

namespace {

std::vector<double> make_features(const LinearHead& head, const EmbeddingTable& emb,
                                  const EntityId& entity, const ContextId& ctx) {
  const auto& vec = emb.at(entity);
  require(vec.size() == head.embedding_dim, Errc::dim_mismatch, entity);
  std::vector<double> x(head.embedding_dim + head.contexts.size(), 0.0);
  for (size_t i = 0; i < vec.size(); ++i) x[i] = static_cast<double>(vec[i]);
  x[head.embedding_dim + head.context_index(ctx)] = 1.0;
  return x;
}

}  // namespace

LinearHead train_linear_head(const EmbeddingTable& emb,
                             const std::vector<ContextSample>& samples, const SplitSpec& split,
                             const std::vector<ContextId>& contexts, const HeadConfig& cfg,
                             std::vector<double>* epoch_losses) {
  require(!contexts.empty(), Errc::invalid_argument, "empty context list");
  LinearHead head;
  head.embedding_dim = emb.dim;
  head.contexts = contexts;
  head.weights.assign(emb.dim + contexts.size(), 0.0);
  head.bias = 0.0;
  head.trained_seed = split.seed;

  std::vector<std::vector<double>> train_x, valid_x;
  std::vector<int> train_y, valid_y;
  for (const auto& s : samples) {
    if (split.in_train(s.entity)) {
      train_x.push_back(make_features(head, emb, s.entity, s.context));
      train_y.push_back(s.label);
    } else if (split.in_valid(s.entity)) {
      valid_x.push_back(make_features(head, emb, s.entity, s.context));
      valid_y.push_back(s.label);
    }
  }
  require(!train_x.empty() || cfg.epochs == 0, Errc::invalid_argument, "empty train fold");

  bool valid_usable = false;
  {
    size_t pos = 0;
    for (int y : valid_y) pos += (y == 1);
    valid_usable = !valid_y.empty() && pos > 0 && pos < valid_y.size();
  }

  auto valid_auroc = [&]() {
    std::vector<double> scores(valid_x.size());
    for (size_t i = 0; i < valid_x.size(); ++i)
      scores[i] = stable_sigmoid(dot(head.weights, valid_x[i]) + head.bias);
    return auroc(scores, valid_y);
  };

  std::vector<double> best_w = head.weights;
  double best_b = head.bias;
  double best_metric = valid_usable ? valid_auroc() : 0.0;
  size_t stale = 0;

  size_t n_features = head.weights.size();
  std::vector<double> grad_w(n_features);
  double inv_n = train_x.empty() ? 0.0 : 1.0 / static_cast<double>(train_x.size());
  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch_losses) {
      double loss = 0.0;
      for (size_t i = 0; i < train_x.size(); ++i)
        loss += logistic_example_loss(head.weights, head.bias, train_x[i], train_y[i]);
      epoch_losses->push_back(loss * inv_n);
    }
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    double grad_b = 0.0;
    for (size_t i = 0; i < train_x.size(); ++i)
      logistic_example_grad(head.weights, head.bias, train_x[i], train_y[i], grad_w, grad_b);
    for (size_t i = 0; i < n_features; ++i)
      head.weights[i] -= cfg.lr * (grad_w[i] * inv_n + cfg.l2 * head.weights[i]);
    head.bias -= cfg.lr * grad_b * inv_n;

    if (valid_usable) {
      double metric = valid_auroc();
      if (metric > best_metric + 1e-12) {
        best_metric = metric;
        best_w = head.weights;
        best_b = head.bias;
        stale = 0;
      } else if (++stale > cfg.patience) {
        break;
      }
    }
  }
  if (valid_usable) {
    head.weights = std::move(best_w);
    head.bias = best_b;
  }
  return head;
}

PredictionSet predict_scores(const LinearHead& head, const EmbeddingTable& emb,
                             const std::vector<std::pair<EntityId, ContextId>>& pairs) {
  PredictionSet out;
  out.rows.reserve(pairs.size());
  for (const auto& [entity, ctx] : pairs) {
    std::vector<double> x = make_features(head, emb, entity, ctx);
    double score = stable_sigmoid(dot(head.weights, x) + head.bias);
    out.rows.push_back({entity, ctx, score});
  }
  return out;
}

}  // namespace slicebench
