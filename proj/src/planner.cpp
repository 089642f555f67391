#include "cetp/planner.hpp"

#include <algorithm>
#include <numeric>

#include "cetp/errors.hpp"

namespace cetp {

Subgraph start_sentinel() {
  Subgraph g;
  g.schema.canonical_code = "START";
  g.schema_id = -1;
  return g;
}

bool is_start(const Subgraph& g) { return g.schema.canonical_code == "START"; }

Var embed_subgraph(Tape& t, const Subgraph& g, const EncodedGraph& enc,
                   ParameterSet& params) {
  if (is_start(g)) return t.gather_rows(t.param(params.get("special_graph_emb")), {0});
  if (g.schema.is_empty()) return t.gather_rows(t.param(params.get("special_graph_emb")), {1});
  if (g.schema.is_stop()) return t.gather_rows(t.param(params.get("special_graph_emb")), {2});
  std::vector<int> rows;
  rows.reserve(g.nodes.size());
  for (NodeId n : g.nodes) {
    const int li = enc.local->local_index(n);
    if (li < 0) throw ValidationError("embed_subgraph: node missing from the local view");
    rows.push_back(li);
  }
  return t.mean_rows(t.gather_rows(enc.states, rows));
}

PlannerForward encode_plan_prefix(Tape& t, const std::vector<Subgraph>& prefix,
                                  const EncodedGraph& enc, ParameterSet& params,
                                  const ModelConfig& cfg, const RunMode& mode) {
  const int m = static_cast<int>(prefix.size());
  if (m < 1) throw ValidationError("encode_plan_prefix: prefix must include START");

  std::vector<Var> base;
  base.reserve(m);
  for (const Subgraph& g : prefix) base.push_back(embed_subgraph(t, g, enc, params));
  Var g_states = t.stack_rows(base);  // [m, d_e]

  // Node occurrences of earlier subgraphs, one key per (position, member).
  std::vector<int> occ_rows;
  std::vector<int> occ_pos;
  for (int p = 0; p < m; ++p)
    for (NodeId n : prefix[p].nodes) {
      occ_rows.push_back(enc.local->local_index(n));
      occ_pos.push_back(p);
    }
  const int n_occ = static_cast<int>(occ_rows.size());

  Tensor sub_mask(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < j; ++k) sub_mask.at(j, k) = 1.0;
  Tensor node_mask(m, std::max(1, n_occ));
  for (int j = 0; j < m; ++j)
    for (int o = 0; o < n_occ; ++o)
      if (occ_pos[o] < j) node_mask.at(j, o) = 1.0;

  Var node_keys;
  if (n_occ > 0) node_keys = t.gather_rows(enc.states, occ_rows);

  for (int b = 0; b < cfg.blocks_plan; ++b) {
    const std::string prefix_name = "plan." + std::to_string(b) + ".";
    if (!cfg.disable_subgraph_attention && m > 1) {
      Var y = layer_norm_named(t, g_states, params, prefix_name + "ln1");
      Var out = multi_head_attention(t, y, y, y, attn_weights(t, params, prefix_name + "attn"),
                                     cfg.heads, &sub_mask, mode);
      g_states = t.add(g_states, out);
    }
    if (!cfg.disable_node_attention && n_occ > 0) {
      Var y = layer_norm_named(t, g_states, params, prefix_name + "ln2");
      Var out = multi_head_attention(t, y, node_keys, node_keys,
                                     attn_weights(t, params, prefix_name + "attn2"),
                                     cfg.heads, &node_mask, mode);
      g_states = t.add(g_states, out);
    }
    Var f = feed_forward(t, layer_norm_named(t, g_states, params, prefix_name + "lnf"), params,
                         prefix_name + "ffn");
    if (mode.training && mode.dropout > 0.0) f = t.dropout(f, mode.dropout, *mode.rng, true);
    g_states = t.add(g_states, f);
  }
  return PlannerForward{g_states};
}

Var next_schema_logits(Tape& t, Var state_row, Var ctx_row, ParameterSet& params) {
  Var cat = t.concat_cols({state_row, ctx_row});
  return t.add_rowvec(t.matmul_nt(cat, t.param(params.get("plan.schema.w"))),
                      t.param(params.get("plan.schema.b")));
}

Var next_node_logits(Tape& t, Var state_row, Var ctx_row, ParameterSet& params) {
  Var cat = t.concat_cols({state_row, ctx_row});
  return t.add_rowvec(t.matmul_nt(cat, t.param(params.get("plan.node.w"))),
                      t.param(params.get("plan.node.b")));
}

Tensor local_node_mask(const LocalHkg& local, int num_nodes) {
  Tensor mask(1, num_nodes);
  for (NodeId n : local.nodes) mask.at(0, n) = 1.0;
  return mask;
}

namespace {

struct StepOut {
  Tensor schema_probs;
  Tensor node_probs;
};

StepOut forward_step(const std::vector<Subgraph>& prefix, const EncodedGraph& enc, Tape& t,
                     const GenerationContext& ctx, ParameterSet& params,
                     const NodeRegistry& nodes, const ModelConfig& cfg) {
  RunMode mode;  // inference
  PlannerForward fwd = encode_plan_prefix(t, prefix, enc, params, cfg, mode);
  Var last = t.gather_rows(fwd.states, {static_cast<int>(prefix.size()) - 1});
  Var ctil = context_vector(t, last, ctx, params, nodes, cfg, "plan.ctx.w");
  Var schema = t.softmax_rows(next_schema_logits(t, last, ctil, params));
  Tensor mask = local_node_mask(*enc.local, nodes.size());
  Var node = t.softmax_rows(next_node_logits(t, last, ctil, params), &mask);
  return StepOut{t.val(schema), t.val(node)};
}

}  // namespace

Tensor predict_next_schema(const std::vector<Subgraph>& prefix, const EncodedGraph& enc,
                           Tape& t, const GenerationContext& ctx, ParameterSet& params,
                           const NodeRegistry& nodes, const ModelConfig& cfg) {
  return forward_step(prefix, enc, t, ctx, params, nodes, cfg).schema_probs;
}

Tensor predict_next_nodes(const std::vector<Subgraph>& prefix, const EncodedGraph& enc,
                          Tape& t, const GenerationContext& ctx, ParameterSet& params,
                          const NodeRegistry& nodes, const ModelConfig& cfg) {
  return forward_step(prefix, enc, t, ctx, params, nodes, cfg).node_probs;
}

DocumentPlan plan_document(const GenerationContext& ctx, const LocalHkg& local,
                           ParameterSet& params, const ModelConfig& cfg,
                           const SchemaRegistry& registry, const NodeRegistry& nodes,
                           const RelationRegistry& rels) {
  DocumentPlan plan;
  std::vector<Subgraph> prefix{start_sentinel()};
  const auto paths = local_path_matrix(local, cfg.max_path_hops);
  RunMode mode;  // inference

  for (;;) {
    if (static_cast<int>(plan.subgraphs.size()) >= cfg.max_plan_len - 1) {
      plan.subgraphs.push_back(Subgraph::stop());
      break;
    }
    Tape t;
    EncodedGraph enc = encode_nodes(t, local, paths, params, cfg, rels, mode);
    StepOut step = forward_step(prefix, enc, t, ctx, params, nodes, cfg);

    std::vector<int> order(registry.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (step.schema_probs.at(0, a) != step.schema_probs.at(0, b))
        return step.schema_probs.at(0, a) > step.schema_probs.at(0, b);
      return a < b;
    });

    std::vector<double> scores(local.nodes.size());
    for (size_t i = 0; i < local.nodes.size(); ++i)
      scores[i] = step.node_probs.at(0, local.nodes[i]);

    bool placed = false;
    for (int id : order) {
      if (id == SchemaRegistry::kStopId) {
        plan.subgraphs.push_back(Subgraph::stop());
        placed = true;
        break;
      }
      if (id == SchemaRegistry::kEmptyId) {
        plan.subgraphs.push_back(Subgraph::empty());
        placed = true;
        break;
      }
      auto g = instantiate_schema(registry.schema(id), scores, local, nodes);
      if (g) {
        g->schema_id = id;
        plan.subgraphs.push_back(std::move(*g));
        placed = true;
        break;
      }
    }
    if (!placed) plan.subgraphs.push_back(Subgraph::empty());  // nothing feasible
    if (plan.subgraphs.back().schema.is_stop()) break;
    prefix.push_back(plan.subgraphs.back());
  }
  return plan;
}

}  // namespace cetp
