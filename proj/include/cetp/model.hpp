#pragma once

#include <random>

#include "cetp/config.hpp"
#include "cetp/hkg.hpp"
#include "cetp/params.hpp"
#include "cetp/tape.hpp"

namespace cetp {

struct RunMode {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
};

struct GenerationContext {
  NodeId user = -1;
  NodeId item = -1;
  int rating = 0;
};

// Tape handles for one attention sublayer's projections.
struct AttnWeights {
  Var wq, wk, wv, wo;
};

AttnWeights attn_weights(Tape& t, ParameterSet& ps, const std::string& prefix);

// Standard scaled-dot-product multi-head attention. `mask` (optional,
// [nq, nk], >0 = allowed) gates key visibility; fully masked query rows
// produce a zero output row.
Var multi_head_attention(Tape& t, Var q, Var k, Var v, const AttnWeights& w, int heads,
                         const Tensor* mask, const RunMode& mode);

// gelu position-wise feed-forward: gelu(x W1 + b1) W2 + b2.
Var feed_forward(Tape& t, Var x, ParameterSet& ps, const std::string& prefix);

Var layer_norm_named(Tape& t, Var x, ParameterSet& ps, const std::string& prefix);

// Additive attention over the three context embeddings (user, item, rating):
// softmax over tanh(w . [query; ctx_k]), returning the convex combination.
Var context_vector(Tape& t, Var query_row, const GenerationContext& ctx,
                   ParameterSet& ps, const NodeRegistry& nodes, const ModelConfig& cfg,
                   const std::string& ctx_weight_name);

// Rating index into the rating embedding table.
int rating_index(const ModelConfig& cfg, int rating);

ModelDims dims_from(const ModelConfig& cfg, const NodeRegistry& nodes,
                    const RelationRegistry& rels, int vocab, int schema_count);

}  // namespace cetp
