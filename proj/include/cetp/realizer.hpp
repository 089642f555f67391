#pragma once

#include "cetp/corpus.hpp"
#include "cetp/graph_encoder.hpp"
#include "cetp/schema.hpp"

namespace cetp {

// GPT-2-style causal self-attention stack over BOS + tokens; returns the
// hidden state of every position.
Var decoder_forward(Tape& t, const std::vector<int>& input_ids, ParameterSet& params,
                    const ModelConfig& cfg, const RunMode& mode);

// Per-position heads shared by training and decoding. `cat` is [ṽ; c̃].
Var decoder_cat_at(Tape& t, Var hidden, int pos, const GenerationContext& ctx,
                   ParameterSet& params, const NodeRegistry& nodes, const ModelConfig& cfg);
Var vocab_logits(Tape& t, Var cat, ParameterSet& params);
// Copy scores over the subgraph's nodes (local indices into enc states).
Var copy_logits(Tape& t, Var cat, Var enc_states, const std::vector<int>& member_rows,
                ParameterSet& params);
Var switch_logit(Tape& t, Var cat, ParameterSet& params);

// One decoding step: the vocabulary distribution, the copy distribution over
// the subgraph's nodes (in g->nodes order) and the generate-vs-copy switch.
// For the EMPTY plan (g == nullptr) the switch is forced to 1 and copy_dist
// is empty.
struct CopyStep {
  Tensor gen_dist;   // [1, vocab]
  Tensor copy_dist;  // [1, |g|] or empty
  double switch_prob = 1.0;
};
CopyStep decode_step(const std::vector<int>& prefix_ids, const Subgraph* g,
                     const GenerationContext& ctx, const Tensor& enc_states,
                     const LocalHkg& local, ParameterSet& params, const ModelConfig& cfg,
                     const NodeRegistry& nodes);

struct TokenTag {
  bool copied = false;
  NodeId node = -1;
};

struct GeneratedSentence {
  std::vector<int> tokens;
  std::vector<std::string> words;
  std::vector<TokenTag> tags;
  double norm_logprob = 0.0;
};

// Beam search over the generate/copy action space; a copied node emits its
// full surface token sequence as one action. Hypotheses are ranked by
// length-normalized log-probability (per action).
GeneratedSentence generate_sentence(const Subgraph* g, const GenerationContext& ctx,
                                    const Tensor& enc_states, const LocalHkg& local,
                                    ParameterSet& params, const ModelConfig& cfg,
                                    const NodeRegistry& nodes, const Vocab& vocab,
                                    int beam_size);

struct GeneratedReview {
  GenerationContext ctx;
  DocumentPlan plan;
  std::vector<GeneratedSentence> sentences;
};

// Realizes every non-STOP subgraph of the plan into a sentence.
GeneratedReview realize_document(const DocumentPlan& plan, const GenerationContext& ctx,
                                 const LocalHkg& local, ParameterSet& params,
                                 const ModelConfig& cfg, const NodeRegistry& nodes,
                                 const RelationRegistry& rels, const Vocab& vocab);

std::string document_text(const GeneratedReview& review);

}  // namespace cetp
