#include "slicebench/baseline_runners.hpp"

#include <algorithm>
#include <set>

#include "slicebench/rng.hpp"

namespace slicebench {

PredictionSet labelprop_predict(const ContextGraph& g,
                                const std::vector<ContextSample>& train,
                                const std::vector<ContextSample>& valid,
                                const std::vector<ContextSample>& test) {
  std::map<ContextId, std::map<EntityId, int>> seeds_by_context;
  for (const auto* fold : {&train, &valid})
    for (const auto& s : *fold)
      if (g.has_node(s.entity)) seeds_by_context[s.context][s.entity] = s.label;

  std::map<ContextId, LabelState> states;
  for (auto& [ctx, seeds] : seeds_by_context) {
    if (g.contexts().count(ctx) == 0) continue;
    const auto& members = g.context_nodes(ctx);
    std::map<EntityId, int> usable;
    for (const auto& [id, y] : seeds)
      if (std::binary_search(members.begin(), members.end(), g.index_of(id))) usable[id] = y;
    states[ctx] = label_propagation(g, ctx, usable, g.node_count());
  }

  PredictionSet preds;
  preds.rows.reserve(test.size());
  for (const auto& s : test) {
    double score = 0.5;
    auto it = states.find(s.context);
    if (it != states.end()) {
      auto sc = it->second.scores.find(s.entity);
      if (sc != it->second.scores.end()) score = sc->second;
    }
    preds.rows.push_back({s.entity, s.context, score});
  }
  return preds;
}

PredictionSet node2vec_predict(const EmbeddingTable& emb,
                               const std::vector<ContextSample>& train,
                               const std::vector<ContextSample>& valid,
                               const std::vector<ContextSample>& test, const SplitSpec& split,
                               const HeadConfig& head_cfg) {
  std::vector<ContextId> contexts;
  {
    std::set<ContextId> set;
    for (const auto* fold : {&train, &valid, &test})
      for (const auto& s : *fold) set.insert(s.context);
    contexts.assign(set.begin(), set.end());
  }
  std::vector<ContextSample> labeled = train;
  labeled.insert(labeled.end(), valid.begin(), valid.end());
  LinearHead head = train_linear_head(emb, labeled, split, contexts, head_cfg);

  std::vector<std::pair<EntityId, ContextId>> pairs;
  pairs.reserve(test.size());
  for (const auto& s : test) pairs.emplace_back(s.entity, s.context);
  return predict_scores(head, emb, pairs);
}

PredictionSet random_predict(const std::vector<ContextSample>& test, uint64_t seed) {
  Rng rng(seed);
  PredictionSet preds;
  preds.rows.reserve(test.size());
  for (const auto& s : test) preds.rows.push_back({s.entity, s.context, rng.next_double()});
  return preds;
}

}  // namespace slicebench
