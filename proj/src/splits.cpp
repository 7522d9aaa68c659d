#include "slicebench/splits.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "slicebench/rng.hpp"

namespace slicebench {

using nlohmann::json;

const char* split_kind_name(SplitKind k) {
  switch (k) {
    case SplitKind::cold: return "cold";
    case SplitKind::temporal: return "temporal";
    case SplitKind::stratified: return "stratified";
    case SplitKind::random_uniform: return "random";
  }
  return "random";
}

SplitKind parse_split_kind(const std::string& s) {
  if (s == "cold") return SplitKind::cold;
  if (s == "temporal") return SplitKind::temporal;
  if (s == "stratified") return SplitKind::stratified;
  if (s == "random") return SplitKind::random_uniform;
  fail(Errc::invalid_argument, "unknown split kind '" + s + "'");
}

namespace {

bool contains(const std::vector<EntityId>& sorted, const EntityId& id) {
  return std::binary_search(sorted.begin(), sorted.end(), id);
}

void validate_fractions(const Fractions& f) {
  double sum = f[0] + f[1] + f[2];
  require(std::fabs(sum - 1.0) < 1e-9, Errc::invalid_argument, "fractions must sum to 1");
  for (double x : f)
    require(x >= 0.0, Errc::invalid_argument, "fractions must be non-negative");
}

std::vector<EntityId> sorted_unique(std::vector<EntityId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

bool SplitSpec::in_train(const EntityId& id) const { return contains(train, id); }
bool SplitSpec::in_valid(const EntityId& id) const { return contains(valid, id); }
bool SplitSpec::in_test(const EntityId& id) const { return contains(test, id); }

json SplitSpec::to_json() const {
  return json{{"kind", split_kind_name(kind)}, {"seed", seed},    {"prng", prng},
              {"train", train},                {"valid", valid},  {"test", test},
              {"dropped", dropped}};
}

std::string SplitSpec::serialize() const { return to_json().dump(); }

SplitSpec SplitSpec::from_json(const json& doc) {
  SplitSpec spec;
  spec.kind = parse_split_kind(doc.at("kind").get<std::string>());
  spec.seed = doc.at("seed").get<uint64_t>();
  spec.prng = doc.at("prng").get<std::string>();
  spec.train = doc.at("train").get<std::vector<EntityId>>();
  spec.valid = doc.at("valid").get<std::vector<EntityId>>();
  spec.test = doc.at("test").get<std::vector<EntityId>>();
  if (doc.contains("dropped")) spec.dropped = doc.at("dropped").get<std::vector<EntityId>>();
  return spec;
}

std::array<size_t, 3> allocate_fold_sizes(size_t n, const Fractions& fractions) {
  validate_fractions(fractions);
  std::array<size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  size_t assigned = 0;
  for (size_t i = 0; i < 3; ++i) {
    double exact = static_cast<double>(n) * fractions[i];
    sizes[i] = static_cast<size_t>(std::floor(exact));
    remainders[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  // Largest remainder first; ties go to the earlier fold.
  std::array<size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return remainders[a] > remainders[b]; });
  for (size_t i = 0; assigned < n; ++i, ++assigned) sizes[order[i % 3]]++;
  return sizes;
}

namespace {

// Shared core: shuffle sorted ids, slice by largest-remainder sizes.
SplitSpec split_ids(std::vector<EntityId> ids, const Fractions& fractions, uint64_t seed,
                    SplitKind kind) {
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);
  auto sizes = allocate_fold_sizes(ids.size(), fractions);

  SplitSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.prng = kPrngName;
  spec.train.assign(ids.begin(), ids.begin() + sizes[0]);
  spec.valid.assign(ids.begin() + sizes[0], ids.begin() + sizes[0] + sizes[1]);
  spec.test.assign(ids.begin() + sizes[0] + sizes[1], ids.end());
  std::sort(spec.train.begin(), spec.train.end());
  std::sort(spec.valid.begin(), spec.valid.end());
  std::sort(spec.test.begin(), spec.test.end());
  return spec;
}

}  // namespace

SplitSpec cold_split(const std::vector<ContextSample>& samples, const Fractions& fractions,
                     uint64_t seed) {
  std::vector<EntityId> entities;
  entities.reserve(samples.size());
  for (const auto& s : samples) entities.push_back(s.entity);
  entities = sorted_unique(std::move(entities));
  require(entities.size() >= 3, Errc::too_few_entities,
          std::to_string(entities.size()) + " distinct entities, need >= 3");
  return split_ids(std::move(entities), fractions, seed, SplitKind::cold);
}

SplitSpec temporal_split(const std::vector<TrialRecord>& records, const std::string& cutoff,
                         uint64_t seed) {
  require(is_iso_date(cutoff), Errc::invalid_argument, "cutoff must be ISO-8601 (YYYY-MM-DD)");
  std::vector<EntityId> test_ids, pool, dropped;
  for (const auto& r : records) {
    if (r.start_date > cutoff) test_ids.push_back(r.trial_id);
    else if (r.completion_date < cutoff) pool.push_back(r.trial_id);
    else dropped.push_back(r.trial_id);
  }
  require(!pool.empty(), Errc::empty_fold, "train");
  require(!test_ids.empty(), Errc::empty_fold, "test");

  SplitSpec spec = split_ids(sorted_unique(std::move(pool)), {0.9, 0.1, 0.0}, seed,
                             SplitKind::temporal);
  spec.test = sorted_unique(std::move(test_ids));
  spec.dropped = sorted_unique(std::move(dropped));
  return spec;
}

SplitSpec stratified_split(const std::vector<std::pair<EntityId, int>>& items,
                           double test_fraction, uint64_t seed) {
  require(test_fraction > 0.0 && test_fraction < 1.0, Errc::invalid_argument,
          "test_fraction must be in (0,1)");
  std::vector<EntityId> pos, neg;
  for (const auto& [id, label] : items) (label == 1 ? pos : neg).push_back(id);
  require(!pos.empty() && !neg.empty(), Errc::degenerate_class,
          "stratified split needs both classes");

  SplitSpec spec;
  spec.kind = SplitKind::stratified;
  spec.seed = seed;
  spec.prng = kPrngName;
  Fractions fr{1.0 - test_fraction, 0.0, test_fraction};
  uint64_t stream = 0;
  for (auto* cls : {&pos, &neg}) {
    std::sort(cls->begin(), cls->end());
    Rng rng = Rng::substream(seed, stream++);
    rng.shuffle(*cls);
    auto sizes = allocate_fold_sizes(cls->size(), fr);
    spec.train.insert(spec.train.end(), cls->begin(), cls->begin() + sizes[0]);
    spec.test.insert(spec.test.end(), cls->begin() + sizes[0], cls->end());
  }
  std::sort(spec.train.begin(), spec.train.end());
  std::sort(spec.test.begin(), spec.test.end());
  return spec;
}

SplitSpec random_split(const std::vector<EntityId>& records, const Fractions& fractions,
                       uint64_t seed) {
  return split_ids(records, fractions, seed, SplitKind::random_uniform);
}

std::string binding_pair_key(const BindingPair& p) { return p.receptor + "|" + p.ligand; }

SplitSpec binding_cold_split(const std::vector<BindingPair>& pairs, const Fractions& fractions,
                             uint64_t seed, bool receptor_cold) {
  std::vector<EntityId> anchors;
  for (const auto& p : pairs) anchors.push_back(receptor_cold ? p.receptor : p.ligand);
  anchors = sorted_unique(std::move(anchors));
  require(anchors.size() >= 3, Errc::too_few_entities,
          std::to_string(anchors.size()) + " distinct anchors, need >= 3");
  SplitSpec anchor_split = split_ids(std::move(anchors), fractions, seed, SplitKind::cold);

  SplitSpec spec;
  spec.kind = SplitKind::cold;
  spec.seed = seed;
  spec.prng = kPrngName;
  for (const auto& p : pairs) {
    const EntityId& anchor = receptor_cold ? p.receptor : p.ligand;
    if (anchor_split.in_train(anchor)) spec.train.push_back(binding_pair_key(p));
    else if (anchor_split.in_valid(anchor)) spec.valid.push_back(binding_pair_key(p));
    else spec.test.push_back(binding_pair_key(p));
  }
  std::sort(spec.train.begin(), spec.train.end());
  std::sort(spec.valid.begin(), spec.valid.end());
  std::sort(spec.test.begin(), spec.test.end());
  return spec;
}

// ---------------------------------------------------------------------------
// Negative sampling

const char* negative_heuristic_name(NegativeHeuristic h) {
  switch (h) {
    case NegativeHeuristic::RN: return "RN";
    case NegativeHeuristic::ET: return "ET";
    case NegativeHeuristic::NA: return "NA";
  }
  return "RN";
}

NegativeHeuristic parse_negative_heuristic(const std::string& s) {
  if (s == "RN") return NegativeHeuristic::RN;
  if (s == "ET") return NegativeHeuristic::ET;
  if (s == "NA") return NegativeHeuristic::NA;
  fail(Errc::invalid_argument, "unknown negative-sampling heuristic '" + s + "'");
}

namespace {

// Draws `needed` distinct (receptor, ligand) combinations, excluding the
// positive pairs. Enumerates when the space is small, otherwise rejection
// samples.
std::vector<BindingPair> sample_combinations(const std::vector<EntityId>& receptors,
                                             const std::vector<EntityId>& ligands,
                                             const std::set<std::pair<EntityId, EntityId>>& excluded,
                                             size_t needed, uint64_t seed) {
  size_t space = receptors.size() * ligands.size();
  size_t excluded_in_space = 0;
  for (const auto& [r, l] : excluded)
    if (std::binary_search(receptors.begin(), receptors.end(), r) &&
        std::binary_search(ligands.begin(), ligands.end(), l))
      ++excluded_in_space;
  size_t available = space - excluded_in_space;
  require(needed <= available, Errc::exhausted_candidates,
          "need " + std::to_string(needed) + " negatives, candidate space has " +
              std::to_string(available));

  Rng rng(seed);
  std::vector<BindingPair> out;
  out.reserve(needed);
  if (space <= 4 * needed + 1024) {
    std::vector<std::pair<uint32_t, uint32_t>> candidates;
    candidates.reserve(available);
    for (uint32_t i = 0; i < receptors.size(); ++i)
      for (uint32_t j = 0; j < ligands.size(); ++j)
        if (!excluded.count({receptors[i], ligands[j]})) candidates.emplace_back(i, j);
    rng.shuffle(candidates);
    for (size_t k = 0; k < needed; ++k)
      out.push_back({receptors[candidates[k].first], ligands[candidates[k].second], 0});
  } else {
    std::set<std::pair<uint32_t, uint32_t>> drawn;
    while (out.size() < needed) {
      uint32_t i = static_cast<uint32_t>(rng.next_below(receptors.size()));
      uint32_t j = static_cast<uint32_t>(rng.next_below(ligands.size()));
      if (excluded.count({receptors[i], ligands[j]})) continue;
      if (!drawn.emplace(i, j).second) continue;
      out.push_back({receptors[i], ligands[j], 0});
    }
  }
  return out;
}

}  // namespace

std::vector<BindingPair> generate_negatives(const std::vector<BindingPair>& positives,
                                            const NegativeSamplingConfig& cfg,
                                            const std::vector<BindingPair>& experimental_negatives) {
  std::set<std::pair<EntityId, EntityId>> positive_keys;
  for (const auto& p : positives) positive_keys.emplace(p.receptor, p.ligand);

  if (cfg.heuristic == NegativeHeuristic::NA) {
    require(!experimental_negatives.empty(), Errc::missing_experimental_negatives,
            "NA heuristic requires experimentally labeled negatives");
    std::vector<BindingPair> out;
    std::set<std::pair<EntityId, EntityId>> seen;
    for (const auto& p : experimental_negatives) {
      if (positive_keys.count({p.receptor, p.ligand})) continue;
      if (!seen.emplace(p.receptor, p.ligand).second) continue;
      out.push_back({p.receptor, p.ligand, 0});
    }
    return out;
  }

  require(cfg.ratio > 0.0, Errc::invalid_argument, "ratio must be positive");
  require(!positives.empty(), Errc::invalid_argument, "no positives given");
  size_t needed = static_cast<size_t>(
      std::ceil(cfg.ratio * static_cast<double>(positives.size()) - 1e-9));

  std::vector<EntityId> ligands;
  for (const auto& p : positives) ligands.push_back(p.ligand);
  ligands = sorted_unique(std::move(ligands));

  std::vector<EntityId> receptors;
  if (cfg.heuristic == NegativeHeuristic::RN) {
    for (const auto& p : positives) receptors.push_back(p.receptor);
    receptors = sorted_unique(std::move(receptors));
  } else {
    require(!cfg.external_pool.empty(), Errc::missing_external_pool,
            "ET heuristic requires an external receptor pool");
    receptors = sorted_unique(cfg.external_pool);
  }
  return sample_combinations(receptors, ligands, positive_keys, needed, cfg.seed);
}

}  // namespace slicebench
