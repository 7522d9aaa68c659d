#pragma once

#include "slicebench/graph_baselines.hpp"

namespace slicebench {

// Scores every test (entity, context) pair by per-context label propagation
// seeded from the train+valid labels. Entities absent from the graph or
// context fall back to 0.5.
PredictionSet labelprop_predict(const ContextGraph& g,
                                const std::vector<ContextSample>& train,
                                const std::vector<ContextSample>& valid,
                                const std::vector<ContextSample>& test);

// Trains a logistic head on [embedding || one-hot(context)] and scores the
// test pairs. Contexts are the union seen across the three folds.
PredictionSet node2vec_predict(const EmbeddingTable& emb,
                               const std::vector<ContextSample>& train,
                               const std::vector<ContextSample>& valid,
                               const std::vector<ContextSample>& test, const SplitSpec& split,
                               const HeadConfig& head_cfg = {});

// Uniform random scores, the floor baseline.
PredictionSet random_predict(const std::vector<ContextSample>& test, uint64_t seed);

}  // namespace slicebench
