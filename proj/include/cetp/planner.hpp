#pragma once

#include "cetp/graph_encoder.hpp"
#include "cetp/schema.hpp"

namespace cetp {

// Plan prefixes start with a START sentinel that embeds as a learned vector
// and never appears in a finished plan.
Subgraph start_sentinel();
bool is_start(const Subgraph& g);

// Average pooling of member node states; START/EMPTY/STOP map to dedicated
// learned rows.
Var embed_subgraph(Tape& t, const Subgraph& g, const EncodedGraph& enc,
                   ParameterSet& params);

// States for every prefix position after the stacked planner blocks:
// subgraph-level attention over earlier subgraphs, node-level attention over
// their member nodes, then the residual FFN. Position j only sees k < j.
struct PlannerForward {
  Var states;  // [prefix_len, d_e]
};
PlannerForward encode_plan_prefix(Tape& t, const std::vector<Subgraph>& prefix,
                                  const EncodedGraph& enc, ParameterSet& params,
                                  const ModelConfig& cfg, const RunMode& mode);

// Next-step heads; both take the planner state and the context vector.
Var next_schema_logits(Tape& t, Var state_row, Var ctx_row, ParameterSet& params);
Var next_node_logits(Tape& t, Var state_row, Var ctx_row, ParameterSet& params);

// Mask tensor over the global node vocabulary restricted to the local view.
Tensor local_node_mask(const LocalHkg& local, int num_nodes);

// Distributions (for inference and the normalization audit).
Tensor predict_next_schema(const std::vector<Subgraph>& prefix, const EncodedGraph& enc,
                           Tape& t, const GenerationContext& ctx, ParameterSet& params,
                           const NodeRegistry& nodes, const ModelConfig& cfg);
Tensor predict_next_nodes(const std::vector<Subgraph>& prefix, const EncodedGraph& enc,
                          Tape& t, const GenerationContext& ctx, ParameterSet& params,
                          const NodeRegistry& nodes, const ModelConfig& cfg);

// Greedy plan decoding: argmax schema per step with feasibility fallback
// (next best schema, then EMPTY); stops at STOP or the length bound, STOP
// always terminating the plan.
DocumentPlan plan_document(const GenerationContext& ctx, const LocalHkg& local,
                           ParameterSet& params, const ModelConfig& cfg,
                           const SchemaRegistry& registry, const NodeRegistry& nodes,
                           const RelationRegistry& rels);

}  // namespace cetp
