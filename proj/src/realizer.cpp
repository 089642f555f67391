#include "cetp/realizer.hpp"

#include <algorithm>
#include <cmath>

#include "cetp/errors.hpp"

namespace cetp {

Var decoder_forward(Tape& t, const std::vector<int>& input_ids, ParameterSet& params,
                    const ModelConfig& cfg, const RunMode& mode) {
  const int n = static_cast<int>(input_ids.size());
  if (n == 0) throw ValidationError("decoder_forward: empty input");
  if (n > cfg.max_positions)
    throw ValidationError("decoder_forward: prefix longer than max_positions");
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) pos[i] = i;
  Var x = t.add(t.gather_rows(t.param(params.get("word_emb")), input_ids),
                t.gather_rows(t.param(params.get("pos_emb")), pos));
  Tensor causal(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) causal.at(i, j) = 1.0;
  for (int b = 0; b < cfg.blocks_dec; ++b) {
    const std::string prefix = "dec." + std::to_string(b) + ".";
    Var y = layer_norm_named(t, x, params, prefix + "ln1");
    Var out = multi_head_attention(t, y, y, y, attn_weights(t, params, prefix + "attn"),
                                   cfg.heads, &causal, mode);
    x = t.add(x, out);
    Var f = feed_forward(t, layer_norm_named(t, x, params, prefix + "lnf"), params,
                         prefix + "ffn");
    if (mode.training && mode.dropout > 0.0) f = t.dropout(f, mode.dropout, *mode.rng, true);
    x = t.add(x, f);
  }
  return x;
}

Var decoder_cat_at(Tape& t, Var hidden, int pos, const GenerationContext& ctx,
                   ParameterSet& params, const NodeRegistry& nodes, const ModelConfig& cfg) {
  Var v = t.gather_rows(hidden, {pos});
  Var c = context_vector(t, v, ctx, params, nodes, cfg, "dec.ctx.w");
  return t.concat_cols({v, c});
}

Var vocab_logits(Tape& t, Var cat, ParameterSet& params) {
  return t.add_rowvec(t.matmul_nt(cat, t.param(params.get("dec.out.w"))),
                      t.param(params.get("dec.out.b")));
}

Var copy_logits(Tape& t, Var cat, Var enc_states, const std::vector<int>& member_rows,
                ParameterSet& params) {
  const int n = static_cast<int>(member_rows.size());
  Var members = t.gather_rows(enc_states, member_rows);  // [n, d_e]
  std::vector<int> rep(n, 0);
  Var cat_rep = t.gather_rows(cat, rep);  // [n, d_w + d_e]
  Var scores = t.tanh_(t.matmul_nt(t.concat_cols({cat_rep, members}),
                                   t.param(params.get("dec.copy.w"))));  // [n, 1]
  return t.transpose(scores);                                            // [1, n]
}

Var switch_logit(Tape& t, Var cat, ParameterSet& params) {
  return t.add_rowvec(t.matmul_nt(cat, t.param(params.get("dec.switch.w"))),
                      t.param(params.get("dec.switch.b")));
}

CopyStep decode_step(const std::vector<int>& prefix_ids, const Subgraph* g,
                     const GenerationContext& ctx, const Tensor& enc_states,
                     const LocalHkg& local, ParameterSet& params, const ModelConfig& cfg,
                     const NodeRegistry& nodes) {
  if (prefix_ids.empty() || prefix_ids.front() != Vocab::kBos)
    throw ValidationError("decode_step: prefix must begin with BOS");
  if (static_cast<int>(prefix_ids.size()) > cfg.max_positions - 1)
    throw ValidationError("decode_step: prefix too long");
  const bool empty_plan = g == nullptr || g->schema.is_empty() || cfg.disable_copy;

  Tape t;
  RunMode mode;  // inference
  Var hidden = decoder_forward(t, prefix_ids, params, cfg, mode);
  Var cat = decoder_cat_at(t, hidden, static_cast<int>(prefix_ids.size()) - 1, ctx, params,
                           nodes, cfg);
  CopyStep out;
  out.gen_dist = t.val(t.softmax_rows(vocab_logits(t, cat, params)));
  if (empty_plan) {
    out.switch_prob = 1.0;  // base decoder only
    return out;
  }
  std::vector<int> member_rows;
  for (NodeId n : g->nodes) {
    const int li = local.local_index(n);
    if (li < 0) throw ValidationError("decode_step: subgraph node outside the local view");
    member_rows.push_back(li);
  }
  Var enc = t.leaf(enc_states);
  out.copy_dist = t.val(t.softmax_rows(copy_logits(t, cat, enc, member_rows, params)));
  out.switch_prob = 1.0 / (1.0 + std::exp(-t.val(switch_logit(t, cat, params)).at(0, 0)));
  return out;
}

namespace {

struct Hypothesis {
  std::vector<int> tokens;
  std::vector<TokenTag> tags;
  double logprob = 0.0;
  int actions = 0;
  bool finished = false;

  double normalized() const { return actions == 0 ? -1e300 : logprob / actions; }
};

std::vector<int> surface_token_ids(const NodeRegistry& nodes, const Vocab& vocab, NodeId n) {
  std::vector<int> ids;
  for (const std::string& w : tokenize(nodes.name(n))) ids.push_back(vocab.id(w));
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return ids;
}

}  // namespace

GeneratedSentence generate_sentence(const Subgraph* g, const GenerationContext& ctx,
                                    const Tensor& enc_states, const LocalHkg& local,
                                    ParameterSet& params, const ModelConfig& cfg,
                                    const NodeRegistry& nodes, const Vocab& vocab,
                                    int beam_size) {
  const bool with_copy = g != nullptr && !g->schema.is_empty() && !cfg.disable_copy;
  std::vector<Hypothesis> beam{Hypothesis{}};
  std::vector<Hypothesis> finished;

  for (int step = 0; step < cfg.max_sent_len; ++step) {
    struct Cand {
      int hyp;
      double logprob;
      bool copy;
      int token;
      NodeId node;
    };
    std::vector<Cand> cands;
    bool all_done = true;
    for (int hi = 0; hi < static_cast<int>(beam.size()); ++hi) {
      Hypothesis& h = beam[hi];
      if (h.finished) continue;
      all_done = false;
      std::vector<int> prefix{Vocab::kBos};
      prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
      CopyStep cs = decode_step(prefix, g, ctx, enc_states, local, params, cfg, nodes);
      const double lam = with_copy ? cs.switch_prob : 1.0;
      for (int v = 0; v < cs.gen_dist.cols; ++v) {
        if (v == Vocab::kPad || v == Vocab::kBos) continue;
        const double p = lam * cs.gen_dist.at(0, v);
        cands.push_back({hi, h.logprob + std::log(std::max(p, 1e-300)), false, v, -1});
      }
      if (with_copy)
        for (int m = 0; m < cs.copy_dist.cols; ++m) {
          const int surface_len =
              static_cast<int>(surface_token_ids(nodes, vocab, g->nodes[m]).size());
          if (static_cast<int>(h.tokens.size()) + surface_len > cfg.max_positions - 2)
            continue;  // surface would overflow the position table
          const double p = (1.0 - lam) * cs.copy_dist.at(0, m);
          cands.push_back(
              {hi, h.logprob + std::log(std::max(p, 1e-300)), true, -1, g->nodes[m]});
        }
    }
    if (all_done) break;

    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.hyp != b.hyp) return a.hyp < b.hyp;
      if (a.copy != b.copy) return !a.copy;
      return a.token != b.token ? a.token < b.token : a.node < b.node;
    });

    std::vector<Hypothesis> next;
    for (const Cand& c : cands) {
      if (static_cast<int>(next.size()) >= beam_size) break;
      Hypothesis h = beam[c.hyp];
      h.logprob = c.logprob;
      h.actions += 1;
      if (c.copy) {
        for (int tid : surface_token_ids(nodes, vocab, c.node)) {
          h.tokens.push_back(tid);
          h.tags.push_back({true, c.node});
        }
      } else {
        h.tokens.push_back(c.token);
        h.tags.push_back({false, -1});
        if (c.token == Vocab::kEos) h.finished = true;
      }
      if (static_cast<int>(h.tokens.size()) >= cfg.max_sent_len) h.finished = true;
      if (h.finished) {
        finished.push_back(h);
        // The slot still counts toward the beam so width stays bounded.
      }
      next.push_back(std::move(h));
    }
    // Keep only live hypotheses in the beam; finished ones are banked.
    std::vector<Hypothesis> live;
    for (Hypothesis& h : next)
      if (!h.finished) live.push_back(std::move(h));
    beam = std::move(live);
    if (beam.empty()) break;
  }
  for (Hypothesis& h : beam)
    if (!h.finished) finished.push_back(h);

  if (finished.empty()) finished.push_back(Hypothesis{{Vocab::kEos}, {{false, -1}}, 0.0, 1});
  const Hypothesis* best = &finished[0];
  for (const Hypothesis& h : finished)
    if (h.normalized() > best->normalized()) best = &h;

  GeneratedSentence out;
  out.tokens = best->tokens;
  out.tags = best->tags;
  out.norm_logprob = best->normalized();
  for (size_t i = 0; i < best->tokens.size(); ++i) {
    if (best->tags[i].copied) {
      // Keep the node's true surface even when the token fell out of vocab.
      out.words.push_back(vocab.tok(best->tokens[i]) == "<unk>"
                              ? tokenize(nodes.name(best->tags[i].node))[0]
                              : vocab.tok(best->tokens[i]));
    } else {
      out.words.push_back(vocab.tok(best->tokens[i]));
    }
  }
  return out;
}

GeneratedReview realize_document(const DocumentPlan& plan, const GenerationContext& ctx,
                                 const LocalHkg& local, ParameterSet& params,
                                 const ModelConfig& cfg, const NodeRegistry& nodes,
                                 const RelationRegistry& rels, const Vocab& vocab) {
  GeneratedReview out;
  out.ctx = ctx;
  out.plan = plan;

  // Node states are computed once per document and shared by all sentences.
  Tape t;
  RunMode mode;
  const auto paths = local_path_matrix(local, cfg.max_path_hops);
  EncodedGraph enc = encode_nodes(t, local, paths, params, cfg, rels, mode);
  const Tensor enc_states = t.val(enc.states);

  for (const Subgraph& g : plan.subgraphs) {
    if (g.schema.is_stop()) break;
    const Subgraph* gp = g.schema.is_empty() ? nullptr : &g;
    out.sentences.push_back(generate_sentence(gp, ctx, enc_states, local, params, cfg, nodes,
                                              vocab, cfg.beam_size));
  }
  return out;
}

std::string document_text(const GeneratedReview& review) {
  std::string out;
  for (const GeneratedSentence& s : review.sentences) {
    for (size_t i = 0; i < s.words.size(); ++i) {
      if (s.words[i] == "<eos>") continue;
      if (!out.empty()) out += ' ';
      out += s.words[i];
    }
  }
  return out;
}

}  // namespace cetp
