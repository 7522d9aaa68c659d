#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "slicebench/datamodel.hpp"

namespace slicebench {

enum class SplitKind { cold, temporal, stratified, random_uniform };

const char* split_kind_name(SplitKind k);
SplitKind parse_split_kind(const std::string& s);

// Fold membership over entity/record ids. Folds are stored sorted, so the
// serialized form is byte-deterministic.
struct SplitSpec {
  SplitKind kind = SplitKind::random_uniform;
  uint64_t seed = 0;
  std::string prng;  // algorithm name, see kPrngName
  std::vector<EntityId> train;
  std::vector<EntityId> valid;
  std::vector<EntityId> test;
  std::vector<EntityId> dropped;  // temporal straddlers

  bool in_train(const EntityId& id) const;
  bool in_valid(const EntityId& id) const;
  bool in_test(const EntityId& id) const;

  nlohmann::json to_json() const;
  std::string serialize() const;  // canonical JSON bytes
  static SplitSpec from_json(const nlohmann::json& doc);
};

using Fractions = std::array<double, 3>;  // train, valid, test; sums to 1

// Largest-remainder fold sizes for n items; exact to +/-1 per fold.
std::array<size_t, 3> allocate_fold_sizes(size_t n, const Fractions& fractions);

// Split over distinct entities, then applied uniformly to every
// (entity, context) sample: an entity's samples never span folds.
SplitSpec cold_split(const std::vector<ContextSample>& samples, const Fractions& fractions,
                     uint64_t seed);

// test = {start_date > cutoff}; train/valid = {completion_date < cutoff},
// sub-split 90/10 seeded. Records satisfying neither clause are dropped and
// listed in `dropped`.
SplitSpec temporal_split(const std::vector<TrialRecord>& records, const std::string& cutoff,
                         uint64_t seed = 0);

// Per-class proportional allocation into train/test (valid empty);
// `test_fraction` defaults to the 10/90 protocol.
SplitSpec stratified_split(const std::vector<std::pair<EntityId, int>>& items,
                           double test_fraction, uint64_t seed);

// Seeded shuffle then contiguous slicing.
SplitSpec random_split(const std::vector<EntityId>& records, const Fractions& fractions,
                       uint64_t seed);

// Ligand-cold split for binding data: ligands never cross folds. Set
// `receptor_cold` to make receptors cold instead.
SplitSpec binding_cold_split(const std::vector<BindingPair>& pairs, const Fractions& fractions,
                             uint64_t seed, bool receptor_cold = false);

// SplitSpec folds hold composite "receptor|ligand" keys for binding data.
std::string binding_pair_key(const BindingPair& p);

// ---------------------------------------------------------------------------
// Negative sampling

enum class NegativeHeuristic { RN, ET, NA };

const char* negative_heuristic_name(NegativeHeuristic h);
NegativeHeuristic parse_negative_heuristic(const std::string& s);

struct NegativeSamplingConfig {
  NegativeHeuristic heuristic = NegativeHeuristic::RN;
  double ratio = 1.0;                  // negatives per positive
  std::vector<EntityId> external_pool; // receptors, ET only
  uint64_t seed = 0;
};

// RN: recombines observed receptor/ligand sequences; ET: pairs ligands with
// receptors from the external pool; NA: passes through the provided
// experimental negatives. Output labels are all 0, duplicate-free, and never
// intersect the positive set.
std::vector<BindingPair> generate_negatives(const std::vector<BindingPair>& positives,
                                            const NegativeSamplingConfig& cfg,
                                            const std::vector<BindingPair>& experimental_negatives = {});

}  // namespace slicebench
