#include <algorithm>

#include "slicebench/graph_baselines.hpp"

namespace slicebench {

ContextGraph context_subgraph(const ContextGraph& g, const ContextId& context) {
  const auto& members = g.context_nodes(context);
  std::vector<char> in_context(g.node_count(), 0);
  for (uint32_t idx : members) in_context[idx] = 1;

  ContextGraph sub;
  for (uint32_t idx : members) {
    sub.add_node(g.node_name(idx));
    sub.add_to_context(context, g.node_name(idx));
  }
  for (uint32_t idx : members)
    for (const auto& [nbr, w] : g.neighbors(idx))
      if (in_context[nbr] && idx < nbr) sub.add_edge(g.node_name(idx), g.node_name(nbr), w);
  return sub;
}

LabelState label_propagation(const ContextGraph& g, const ContextId& context,
                             const std::map<EntityId, int>& seeds, size_t max_rounds) {
  const auto& members = g.context_nodes(context);
  std::vector<char> in_context(g.node_count(), 0);
  for (uint32_t idx : members) in_context[idx] = 1;

  constexpr int kUnlabeled = -1;
  std::vector<int> label(g.node_count(), kUnlabeled);
  for (const auto& [id, y] : seeds) {
    require(g.has_node(id) && in_context[g.index_of(id)], Errc::seed_node_missing,
            id + " not in context " + context);
    label[g.index_of(id)] = y;
  }

  LabelState state;
  state.fixed = seeds;

  size_t rounds = 0;
  while (rounds < max_rounds) {
    std::vector<std::pair<uint32_t, int>> adopted;
    for (uint32_t idx : members) {
      if (label[idx] != kUnlabeled) continue;
      size_t pos = 0, neg = 0;
      for (const auto& [nbr, w] : g.neighbors(idx)) {
        if (!in_context[nbr]) continue;
        if (label[nbr] == 1) ++pos;
        else if (label[nbr] == 0) ++neg;
      }
      if (pos > neg) adopted.emplace_back(idx, 1);
      else if (neg > pos) adopted.emplace_back(idx, 0);
      // tie or no labeled neighbors: stays unlabeled this round
    }
    if (adopted.empty()) break;
    for (const auto& [idx, y] : adopted) {
      label[idx] = y;
      state.inferred[g.node_name(idx)] = y;
    }
    ++rounds;
  }
  state.rounds = rounds;

  for (uint32_t idx : members) {
    size_t pos = 0, labeled = 0;
    for (const auto& [nbr, w] : g.neighbors(idx)) {
      if (!in_context[nbr] || label[nbr] == kUnlabeled) continue;
      ++labeled;
      pos += (label[nbr] == 1);
    }
    state.scores[g.node_name(idx)] =
        labeled == 0 ? 0.5 : static_cast<double>(pos) / static_cast<double>(labeled);
  }
  return state;
}

}  // namespace slicebench
