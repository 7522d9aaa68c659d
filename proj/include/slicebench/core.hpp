#pragma once

#include <stdexcept>
#include <string>

namespace slicebench {

// Entity and context identifiers are plain strings; datasets define the
// namespace they are unique in.
using EntityId = std::string;
using ContextId = std::string;

enum class Errc {
  // parsing / datamodel
  malformed_row,
  duplicate_key,
  unknown_column,
  self_loop,
  unknown_node,
  non_positive_weight,
  empty_matrix,
  not_normalized,
  too_few_cells,
  // metrics
  degenerate_slice,
  not_enough_contexts,
  key_mismatch,
  missing_gene,
  constant_actual,
  // splits
  too_few_entities,
  empty_fold,
  degenerate_class,
  exhausted_candidates,
  missing_external_pool,
  missing_experimental_negatives,
  // graph baselines
  unknown_context,
  seed_node_missing,
  missing_embedding,
  empty_corpus,
  dim_mismatch,
  corrupt_file,
  // registry
  schema_mismatch,
  hash_collision,
  unknown_parent,
  unknown_dataset,
  unknown_transform,
  column_missing,
  fetch_failure,
  fixture_missing,
  bad_filter,
  bad_cursor,
  // service
  unknown_group,
  missing_predictions,
  unknown_keys,
  // generic
  invalid_argument,
  io_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& detail) { throw Error(code, detail); }

inline void require(bool ok, Errc code, const std::string& detail) {
  if (!ok) fail(code, detail);
}

}  // namespace slicebench
