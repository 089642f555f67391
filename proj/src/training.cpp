#include "cetp/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cetp/errors.hpp"

namespace cetp {

std::vector<TrainingExample> prepare_examples(const Corpus& corpus, const Hkg& hkg,
                                              const NodeRegistry& nodes,
                                              const RelationRegistry& rels,
                                              const SchemaRegistry& registry,
                                              const ModelConfig& cfg) {
  std::vector<TrainingExample> out;
  out.reserve(corpus.reviews.size());
  for (const Review& r : corpus.reviews) {
    TrainingExample ex;
    ex.ctx = r.ctx;
    ex.split = r.split;
    ex.local = local_hkg(hkg, nodes, r.ctx.user, r.ctx.item, cfg.local_node_cap);
    ex.paths = local_path_matrix(ex.local, cfg.max_path_hops);

    std::vector<SentenceMentions> mentions(r.doc.sentences.size());
    for (const MentionSpan& m : r.doc.mentions) mentions[m.sentence].nodes.push_back(m.node);
    AlignResult aligned = align_sentence_subgraphs(mentions, ex.local, nodes, rels,
                                                   cfg.max_slots, cfg.max_plan_len);
    ex.gold_plan = std::move(aligned.plan);
    label_plan(ex.gold_plan, registry);

    // Sentence decode targets for every planned sentence.
    const int planned = static_cast<int>(ex.gold_plan.subgraphs.size()) - 1;  // minus STOP
    for (int j = 0; j < planned; ++j) {
      const Subgraph& g = ex.gold_plan.subgraphs[j];
      const bool with_copy = !g.schema.is_empty() && !cfg.disable_copy;
      const auto& toks = r.doc.sentences[j];

      // Copyable spans: in-order, non-overlapping mentions whose node made it
      // into the sentence's subgraph.
      struct Span {
        int start, len, member;
      };
      std::vector<Span> spans;
      if (with_copy) {
        auto ms = r.doc.sentence_mentions(j);
        std::sort(ms.begin(), ms.end(),
                  [](const MentionSpan& a, const MentionSpan& b) { return a.start < b.start; });
        int covered = -1;
        for (const MentionSpan& m : ms) {
          if (m.start <= covered) continue;
          auto it = std::find(g.nodes.begin(), g.nodes.end(), m.node);
          if (it == g.nodes.end()) continue;  // dropped from the plan: generate instead
          spans.push_back({m.start, m.len, static_cast<int>(it - g.nodes.begin())});
          covered = m.start + m.len - 1;
        }
      }

      TrainingExample::SentenceView view;
      view.plan_index = j;
      view.input_ids.push_back(Vocab::kBos);
      for (int tok : toks) view.input_ids.push_back(tok);
      size_t si = 0;
      int p = 0;
      const int n = static_cast<int>(toks.size());
      while (p < n) {
        if (si < spans.size() && spans[si].start == p) {
          view.steps.push_back({p, true, spans[si].member, 0});
          p += spans[si].len;
          ++si;
        } else {
          view.steps.push_back({p, false, toks[p], 1});
          p += 1;
        }
      }
      view.steps.push_back({n, false, Vocab::kEos, 1});
      ex.sentences.push_back(std::move(view));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

Var sum_terms(Tape& t, const std::vector<Var>& terms) {
  if (terms.empty()) return t.leaf(Tensor(1, 1));
  if (terms.size() == 1) return terms[0];
  return t.sum_all(t.stack_rows(terms));
}

}  // namespace

Var plan_loss(Tape& t, const TrainingExample& ex, ParameterSet& params,
              const ModelConfig& cfg, const NodeRegistry& nodes,
              const RelationRegistry& rels, const RunMode& mode, PlanStats* stats) {
  EncodedGraph enc = encode_nodes(t, ex.local, ex.paths, params, cfg, rels, mode);

  std::vector<Subgraph> prefix{start_sentinel()};
  for (const Subgraph& g : ex.gold_plan.subgraphs)
    if (!g.schema.is_stop()) prefix.push_back(g);

  PlannerForward fwd = encode_plan_prefix(t, prefix, enc, params, cfg, mode);
  const Tensor node_mask = local_node_mask(ex.local, nodes.size());

  std::vector<Var> terms;
  for (size_t j = 0; j < ex.gold_plan.subgraphs.size(); ++j) {
    const Subgraph& target = ex.gold_plan.subgraphs[j];
    if (target.schema_id < 0) throw ValidationError("plan_loss: unlabeled gold subgraph");
    Var state = t.gather_rows(fwd.states, {static_cast<int>(j)});
    Var ctil = context_vector(t, state, ctx_of(ex), params, nodes, cfg, "plan.ctx.w");
    Var schema_ls = t.log_softmax_rows(next_schema_logits(t, state, ctil, params));
    terms.push_back(t.scale(t.pick(schema_ls, 0, target.schema_id), -1.0));
    if (stats) {
      ++stats->steps;
      if (argmax_row(t.val(schema_ls), 0) == target.schema_id) ++stats->schema_correct;
    }
    if (!target.schema.is_reserved()) {
      Var node_ls = t.log_softmax_rows(next_node_logits(t, state, ctil, params), &node_mask);
      for (NodeId nid : target.nodes)
        terms.push_back(t.scale(t.pick(node_ls, 0, nid), -1.0));
    }
  }
  return sum_terms(t, terms);
}

Var realize_loss(Tape& t, const TrainingExample& ex, ParameterSet& params,
                 const ModelConfig& cfg, const NodeRegistry& nodes,
                 const RelationRegistry& rels, const RunMode& mode, RealizeStats* stats) {
  EncodedGraph enc = encode_nodes(t, ex.local, ex.paths, params, cfg, rels, mode);

  std::vector<Var> nll_terms;
  std::vector<Var> si_terms;
  for (const TrainingExample::SentenceView& view : ex.sentences) {
    const Subgraph& g = ex.gold_plan.subgraphs[view.plan_index];
    const bool with_copy = !g.schema.is_empty() && !cfg.disable_copy;
    std::vector<int> member_rows;
    if (with_copy)
      for (NodeId nid : g.nodes) member_rows.push_back(ex.local.local_index(nid));

    Var hidden = decoder_forward(t, view.input_ids, params, cfg, mode);
    for (const TrainingExample::Step& step : view.steps) {
      Var cat = decoder_cat_at(t, hidden, step.query_pos, ex.ctx, params, nodes, cfg);
      if (stats) ++stats->actions;
      if (!with_copy) {
        Var gen_ls = t.log_softmax_rows(vocab_logits(t, cat, params));
        nll_terms.push_back(t.scale(t.pick(gen_ls, 0, step.target), -1.0));
        continue;
      }
      Var z = switch_logit(t, cat, params);  // [1,1]
      Var log_lambda = t.scale(t.softplus(t.scale(z, -1.0)), -1.0);
      Var log_one_minus = t.scale(t.softplus(z), -1.0);
      if (step.is_copy) {
        Var copy_ls =
            t.log_softmax_rows(copy_logits(t, cat, enc.states, member_rows, params));
        Var logp = t.add(log_one_minus, t.pick(copy_ls, 0, step.target));
        nll_terms.push_back(t.scale(logp, -1.0));
        si_terms.push_back(t.scale(log_one_minus, -1.0));
      } else {
        Var gen_ls = t.log_softmax_rows(vocab_logits(t, cat, params));
        Var logp = t.add(log_lambda, t.pick(gen_ls, 0, step.target));
        nll_terms.push_back(t.scale(logp, -1.0));
        si_terms.push_back(t.scale(log_lambda, -1.0));
      }
    }
  }
  if (stats)
    for (const Var& v : nll_terms) stats->nll_sum += t.val(v).at(0, 0);
  Var loss = sum_terms(t, nll_terms);
  if (!si_terms.empty()) loss = t.add(loss, t.scale(sum_terms(t, si_terms), cfg.mu_si));
  return loss;
}

namespace {

GenerationContext ctx_of_impl(const TrainingExample& ex) { return ex.ctx; }

}  // namespace

double plan_loss_value(const std::vector<const TrainingExample*>& batch, ParameterSet& params,
                       const ModelConfig& cfg, const NodeRegistry& nodes,
                       const RelationRegistry& rels, PlanStats* stats) {
  RunMode mode;  // evaluation: no dropout
  double total = 0.0;
  for (const TrainingExample* ex : batch) {
    Tape t;
    total += t.val(plan_loss(t, *ex, params, cfg, nodes, rels, mode, stats)).at(0, 0);
  }
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

double realize_loss_value(const std::vector<const TrainingExample*>& batch,
                          ParameterSet& params, const ModelConfig& cfg,
                          const NodeRegistry& nodes, const RelationRegistry& rels,
                          RealizeStats* stats) {
  RunMode mode;
  double total = 0.0;
  for (const TrainingExample* ex : batch) {
    Tape t;
    total += t.val(realize_loss(t, *ex, params, cfg, nodes, rels, mode, stats)).at(0, 0);
  }
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

double teacher_forced_schema_accuracy(const std::vector<TrainingExample>& examples,
                                      ParameterSet& params, const ModelConfig& cfg,
                                      const NodeRegistry& nodes, const RelationRegistry& rels,
                                      Split split) {
  PlanStats stats;
  std::vector<const TrainingExample*> batch;
  for (const TrainingExample& ex : examples)
    if (ex.split == split) batch.push_back(&ex);
  plan_loss_value(batch, params, cfg, nodes, rels, &stats);
  return stats.steps == 0 ? 0.0 : static_cast<double>(stats.schema_correct) / stats.steps;
}

double token_perplexity(const std::vector<TrainingExample>& examples, ParameterSet& params,
                        const ModelConfig& cfg, const NodeRegistry& nodes,
                        const RelationRegistry& rels, Split split) {
  RealizeStats stats;
  std::vector<const TrainingExample*> batch;
  for (const TrainingExample& ex : examples)
    if (ex.split == split) batch.push_back(&ex);
  realize_loss_value(batch, params, cfg, nodes, rels, &stats);
  return stats.actions == 0 ? 1.0 : std::exp(stats.nll_sum / stats.actions);
}

double noam_lr(double factor, int d_model, int step, int warmup) {
  const double s = std::max(1, step);
  return factor * std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(warmup), -1.5));
}

namespace {

double group_multiplier(int stage, ParamGroup g, const ModelConfig& cfg) {
  if (stage == 1) {
    if (g == ParamGroup::kDecoder) return 0.0;
    return 1.0;
  }
  switch (g) {
    case ParamGroup::kDecoder: return 1.0;
    case ParamGroup::kShared: return cfg.shared_finetune_scale;
    case ParamGroup::kPlanner: return 0.0;
  }
  return 0.0;
}

void clip_and_step(ParameterSet& params, int stage, const ModelConfig& cfg, double lr,
                   int adam_t) {
  double norm_sq = 0.0;
  for (Parameter* p : params.all()) {
    if (group_multiplier(stage, p->group, cfg) == 0.0) continue;
    for (double gv : p->grad.d) norm_sq += gv * gv;
  }
  const double norm = std::sqrt(norm_sq);
  const double clip = cfg.grad_clip > 0.0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;

  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, adam_t);
  const double bc2 = 1.0 - std::pow(b2, adam_t);
  for (Parameter* p : params.all()) {
    const double mult = group_multiplier(stage, p->group, cfg);
    if (mult == 0.0) continue;
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad.d[i] * clip;
      p->adam_m.d[i] = b1 * p->adam_m.d[i] + (1.0 - b1) * g;
      p->adam_v.d[i] = b2 * p->adam_v.d[i] + (1.0 - b2) * g * g;
      const double mhat = p->adam_m.d[i] / bc1;
      const double vhat = p->adam_v.d[i] / bc2;
      p->value.d[i] -= lr * mult * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

void reset_adam(ParameterSet& params) {
  for (Parameter* p : params.all()) {
    std::fill(p->adam_m.d.begin(), p->adam_m.d.end(), 0.0);
    std::fill(p->adam_v.d.begin(), p->adam_v.d.end(), 0.0);
  }
}

}  // namespace

TrainResult train(const Corpus& corpus, const Hkg& hkg, const NodeRegistry& nodes,
                  const RelationRegistry& rels, const SchemaRegistry& registry,
                  ParameterSet& params, const ModelConfig& cfg, const ModelDims& dims,
                  const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto examples = prepare_examples(corpus, hkg, nodes, rels, registry, cfg);
  std::vector<size_t> train_idx;
  std::vector<const TrainingExample*> valid;
  for (size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].split == Split::kTrain) train_idx.push_back(i);
    if (examples[i].split == Split::kValid) valid.push_back(&examples[i]);
  }
  if (train_idx.empty()) throw ValidationError("train: no training reviews");

  std::ofstream log(out_dir + "/metrics.csv");
  log << "stage,epoch,step,loss,valid_loss,lr\n";

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5b5b5b5bull);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0xd0d0d0d0ull);
  TrainResult result;

  for (int stage = 1; stage <= 2; ++stage) {
    reset_adam(params);
    const int epochs = stage == 1 ? cfg.stage1_epochs : cfg.stage2_epochs;
    const double factor = stage == 1 ? cfg.stage1_lr_factor : cfg.stage2_lr_factor;
    const int d_model = stage == 1 ? cfg.d_e : cfg.d_w;
    int step = 0;
    double last_loss = 0.0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
      for (size_t b = 0; b < train_idx.size(); b += cfg.batch_size) {
        const size_t b_end = std::min(train_idx.size(), b + cfg.batch_size);
        const double inv = 1.0 / static_cast<double>(b_end - b);
        params.zero_grad();
        double batch_loss = 0.0;
        for (size_t k = b; k < b_end; ++k) {
          TrainingExample& ex = examples[train_idx[k]];
          Tape t;
          RunMode mode{true, cfg.dropout, &dropout_rng};
          Var loss = stage == 1
                         ? plan_loss(t, ex, params, cfg, nodes, rels, mode, nullptr)
                         : realize_loss(t, ex, params, cfg, nodes, rels, mode, nullptr);
          Var scaled = t.scale(loss, inv);
          const double lv = t.val(scaled).at(0, 0);
          if (!std::isfinite(lv))
            throw std::runtime_error("train: non-finite loss at stage " +
                                     std::to_string(stage) + " step " + std::to_string(step) +
                                     " review " + std::to_string(train_idx[k]));
          batch_loss += lv;
          t.backward(scaled);
        }
        ++step;
        const double lr = noam_lr(factor, d_model, step, cfg.warmup_steps);
        clip_and_step(params, stage, cfg, lr, step);
        last_loss = batch_loss;
        log << stage << ',' << epoch << ',' << step << ',' << batch_loss << ",,"
            << lr << "\n";
      }
      // Per-epoch validation loss (skipped when the split is empty).
      if (!valid.empty()) {
        const double vl = stage == 1
                              ? plan_loss_value(valid, params, cfg, nodes, rels)
                              : realize_loss_value(valid, params, cfg, nodes, rels);
        log << stage << ',' << epoch << ',' << step << ",," << vl << ",\n";
      }
    }
    if (stage == 1) {
      result.stage1_final_loss = last_loss;
      result.stage1_checkpoint_path = out_dir + "/checkpoint_stage1.bin";
      save_checkpoint(result.stage1_checkpoint_path, params, cfg, dims);
    } else {
      result.stage2_final_loss = last_loss;
      result.checkpoint_path = out_dir + "/checkpoint.bin";
      save_checkpoint(result.checkpoint_path, params, cfg, dims);
    }
  }
  return result;
}

}  // namespace cetp
