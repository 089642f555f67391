#pragma once

#include "cetp/model.hpp"
#include "cetp/schema.hpp"

namespace cetp {

// Contextual node states for one local view, in local node order.
struct EncodedGraph {
  const LocalHkg* local = nullptr;
  Var states;  // [N, d_e] on the tape
};

// Sum of relation embeddings along a path: empty -> zero vector, unreachable
// -> the dedicated no-path row. Plain-tensor variant for callers outside a
// tape.
Tensor relation_path_encoding(const RelationPath& path, const ParameterSet& params,
                              const RelationRegistry& rels);

// Relation-enhanced transformer over all node pairs of the local view.
// Queries and keys carry the shortest-relation-path encodings; blocks are
// pre-norm residual MHA + gelu FFN.
EncodedGraph encode_nodes(Tape& t, const LocalHkg& local,
                          const std::vector<std::vector<RelationPath>>& paths,
                          ParameterSet& params, const ModelConfig& cfg,
                          const RelationRegistry& rels, const RunMode& mode);

}  // namespace cetp
