#include "cetp/graph_encoder.hpp"

#include <cmath>

#include "cetp/errors.hpp"

namespace cetp {

Tensor relation_path_encoding(const RelationPath& path, const ParameterSet& params,
                              const RelationRegistry& rels) {
  const Tensor& table = params.get("rel_emb").value;
  Tensor out(1, table.cols);
  if (!path.reachable) {
    for (int c = 0; c < table.cols; ++c) out.at(0, c) = table.at(rels.size(), c);
    return out;
  }
  for (RelId r : path.rels) {
    if (r < 0 || r >= rels.size()) throw ValidationError("relation_path_encoding: unknown relation id");
    for (int c = 0; c < table.cols; ++c) out.at(0, c) += table.at(r, c);
  }
  return out;
}

EncodedGraph encode_nodes(Tape& t, const LocalHkg& local,
                          const std::vector<std::vector<RelationPath>>& paths,
                          ParameterSet& params, const ModelConfig& cfg,
                          const RelationRegistry& rels, const RunMode& mode) {
  const int n = static_cast<int>(local.nodes.size());
  if (n == 0) throw ValidationError("encode_nodes: empty local graph");
  const int dh = cfg.d_head();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int no_path_row = rels.size();

  // Pairwise path encodings, row-major over (j, k). These depend on the
  // relation table only, so they are built once and reused by every block.
  std::vector<std::vector<int>> path_rows(static_cast<size_t>(n) * n);
  std::vector<int> idx_j(static_cast<size_t>(n) * n), idx_k(static_cast<size_t>(n) * n);
  std::vector<int> transpose_idx(static_cast<size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      const int p = j * n + k;
      idx_j[p] = j;
      idx_k[p] = k;
      transpose_idx[p] = k * n + j;
      const RelationPath& rp = paths[j][k];
      if (!rp.reachable) {
        path_rows[p] = {no_path_row};
      } else {
        path_rows[p].assign(rp.rels.begin(), rp.rels.end());
      }
    }
  Var rel_table = t.param(params.get("rel_emb"));
  Var path_enc = t.sum_rows_multi(rel_table, path_rows);        // [n*n, d_e]
  Var path_enc_rev = t.gather_rows(path_enc, transpose_idx);    // encoding of k -> j

  std::vector<int> node_rows;
  node_rows.reserve(n);
  for (NodeId id : local.nodes) node_rows.push_back(id);
  Var x = t.gather_rows(t.param(params.get("node_emb")), node_rows);

  for (int b = 0; b < cfg.blocks_enc; ++b) {
    const std::string prefix = "enc." + std::to_string(b) + ".";
    Var y = layer_norm_named(t, x, params, prefix + "ln1");
    Var yj = t.gather_rows(y, idx_j);
    Var yk = t.gather_rows(y, idx_k);
    Var q_pair = t.add(yj, path_enc);      // q_j = v_j + v_{j->k}
    Var k_pair = t.add(yk, path_enc_rev);  // k_k = v_k + v_{k->j}
    AttnWeights w = attn_weights(t, params, prefix + "attn");
    Var qw = t.matmul(q_pair, w.wq);
    Var kw = t.matmul(k_pair, w.wk);
    Var vw = t.matmul(y, w.wv);
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (int h = 0; h < cfg.heads; ++h) {
      Var qh = t.slice_cols(qw, h * dh, (h + 1) * dh);
      Var kh = t.slice_cols(kw, h * dh, (h + 1) * dh);
      Var logits = t.reshape(t.scale(t.rowwise_dot(qh, kh), scale), n, n);
      Var attn = t.softmax_rows(logits);
      if (mode.training && mode.dropout > 0.0)
        attn = t.dropout(attn, mode.dropout, *mode.rng, true);
      heads.push_back(t.matmul(attn, t.slice_cols(vw, h * dh, (h + 1) * dh)));
    }
    Var concat = cfg.heads == 1 ? heads[0] : t.concat_cols(heads);
    x = t.add(x, t.matmul(concat, w.wo));

    Var f = feed_forward(t, layer_norm_named(t, x, params, prefix + "lnf"), params,
                         prefix + "ffn");
    if (mode.training && mode.dropout > 0.0) f = t.dropout(f, mode.dropout, *mode.rng, true);
    x = t.add(x, f);
  }

  return EncodedGraph{&local, x};
}

}  // namespace cetp
