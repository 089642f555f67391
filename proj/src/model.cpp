#include "cetp/model.hpp"

#include <cmath>

#include "cetp/errors.hpp"

namespace cetp {

AttnWeights attn_weights(Tape& t, ParameterSet& ps, const std::string& prefix) {
  return AttnWeights{t.param(ps.get(prefix + ".wq")), t.param(ps.get(prefix + ".wk")),
                     t.param(ps.get(prefix + ".wv")), t.param(ps.get(prefix + ".wo"))};
}

Var multi_head_attention(Tape& t, Var q, Var k, Var v, const AttnWeights& w, int heads,
                         const Tensor* mask, const RunMode& mode) {
  const int d = t.val(q).cols;
  const int dh = d / heads;
  Var qw = t.matmul(q, w.wq);
  Var kw = t.matmul(k, w.wk);
  Var vw = t.matmul(v, w.wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(qw, h * dh, (h + 1) * dh);
    Var kh = t.slice_cols(kw, h * dh, (h + 1) * dh);
    Var vh = t.slice_cols(vw, h * dh, (h + 1) * dh);
    Var logits = t.scale(t.matmul_nt(qh, kh), scale);
    Var attn = t.softmax_rows(logits, mask);
    if (mode.training && mode.dropout > 0.0)
      attn = t.dropout(attn, mode.dropout, *mode.rng, true);
    head_outs.push_back(t.matmul(attn, vh));
  }
  Var concat = heads == 1 ? head_outs[0] : t.concat_cols(head_outs);
  return t.matmul(concat, w.wo);
}

Var feed_forward(Tape& t, Var x, ParameterSet& ps, const std::string& prefix) {
  Var h = t.add_rowvec(t.matmul(x, t.param(ps.get(prefix + ".w1"))),
                       t.param(ps.get(prefix + ".b1")));
  h = t.gelu(h);
  return t.add_rowvec(t.matmul(h, t.param(ps.get(prefix + ".w2"))),
                      t.param(ps.get(prefix + ".b2")));
}

Var layer_norm_named(Tape& t, Var x, ParameterSet& ps, const std::string& prefix) {
  return t.layer_norm(x, t.param(ps.get(prefix + ".g")), t.param(ps.get(prefix + ".b")));
}

int rating_index(const ModelConfig& cfg, int rating) {
  if (rating < cfg.rating_min || rating > cfg.rating_max)
    throw ValidationError("rating " + std::to_string(rating) + " outside configured scale");
  return rating - cfg.rating_min;
}

Var context_vector(Tape& t, Var query_row, const GenerationContext& ctx,
                   ParameterSet& ps, const NodeRegistry& nodes, const ModelConfig& cfg,
                   const std::string& ctx_weight_name) {
  Var u = t.gather_rows(t.param(ps.get("user_emb")), {nodes.kind_ordinal(ctx.user)});
  Var i = t.gather_rows(t.param(ps.get("item_emb")), {nodes.kind_ordinal(ctx.item)});
  Var a = t.gather_rows(t.param(ps.get("rating_emb")), {rating_index(cfg, ctx.rating)});
  Var keys = t.stack_rows({u, i, a});                       // [3, d_e]
  Var qrep = t.gather_rows(query_row, {0, 0, 0});           // [3, qd]
  Var scores = t.tanh_(t.matmul_nt(t.concat_cols({qrep, keys}), t.param(ps.get(ctx_weight_name))));
  Var weights = t.softmax_rows(t.transpose(scores));        // [1, 3]
  return t.matmul(weights, keys);                           // [1, d_e]
}

ModelDims dims_from(const ModelConfig& cfg, const NodeRegistry& nodes,
                    const RelationRegistry& rels, int vocab, int schema_count) {
  ModelDims d;
  d.num_nodes = nodes.size();
  d.num_relations = rels.size();
  d.vocab = vocab;
  d.num_users = nodes.count(NodeKind::kUser);
  d.num_items = nodes.count(NodeKind::kItem);
  d.num_ratings = cfg.rating_max - cfg.rating_min + 1;
  d.schema_count = schema_count;
  return d;
}

}  // namespace cetp
