#pragma once

#include <functional>
#include <string>

#include "cetp/corpus.hpp"
#include "cetp/graph_encoder.hpp"
#include "cetp/planner.hpp"
#include "cetp/realizer.hpp"

namespace cetp {

// One review prepared for teacher forcing: its local view, the labeled gold
// plan and per-sentence decode targets (copy actions collapse a mention span
// into one step at its first token).
struct TrainingExample {
  GenerationContext ctx;
  Split split = Split::kTrain;
  LocalHkg local;
  std::vector<std::vector<RelationPath>> paths;
  DocumentPlan gold_plan;

  struct Step {
    int query_pos = 0;  // hidden row that predicts this step
    bool is_copy = false;
    int target = 0;  // vocab id, or index into the subgraph's node list
    int d = 1;       // supervised switch label (0 copy, 1 generate)
  };
  struct SentenceView {
    int plan_index = 0;  // subgraph realized by this sentence
    std::vector<int> input_ids;  // BOS + gold tokens
    std::vector<Step> steps;
  };
  std::vector<SentenceView> sentences;
};

std::vector<TrainingExample> prepare_examples(const Corpus& corpus, const Hkg& hkg,
                                              const NodeRegistry& nodes,
                                              const RelationRegistry& rels,
                                              const SchemaRegistry& registry,
                                              const ModelConfig& cfg);

struct PlanStats {
  int steps = 0;
  int schema_correct = 0;
};

// Teacher-forced planner loss: schema cross entropy at every plan step plus
// node cross entropy for every gold slot.
Var plan_loss(Tape& t, const TrainingExample& ex, ParameterSet& params,
              const ModelConfig& cfg, const NodeRegistry& nodes,
              const RelationRegistry& rels, const RunMode& mode, PlanStats* stats);

struct RealizeStats {
  int actions = 0;
  double nll_sum = 0.0;  // mixture NLL only; the indicator loss is separate
};

// Teacher-forced mixture NLL plus the supervised switch loss (weight mu_si).
Var realize_loss(Tape& t, const TrainingExample& ex, ParameterSet& params,
                 const ModelConfig& cfg, const NodeRegistry& nodes,
                 const RelationRegistry& rels, const RunMode& mode, RealizeStats* stats);

double plan_loss_value(const std::vector<const TrainingExample*>& batch, ParameterSet& params,
                       const ModelConfig& cfg, const NodeRegistry& nodes,
                       const RelationRegistry& rels, PlanStats* stats = nullptr);
double realize_loss_value(const std::vector<const TrainingExample*>& batch,
                          ParameterSet& params, const ModelConfig& cfg,
                          const NodeRegistry& nodes, const RelationRegistry& rels,
                          RealizeStats* stats = nullptr);

double teacher_forced_schema_accuracy(const std::vector<TrainingExample>& examples,
                                      ParameterSet& params, const ModelConfig& cfg,
                                      const NodeRegistry& nodes, const RelationRegistry& rels,
                                      Split split);
double token_perplexity(const std::vector<TrainingExample>& examples, ParameterSet& params,
                        const ModelConfig& cfg, const NodeRegistry& nodes,
                        const RelationRegistry& rels, Split split);

// Warmup-then-inverse-square-root schedule.
double noam_lr(double factor, int d_model, int step, int warmup);

struct TrainResult {
  double stage1_final_loss = 0.0;
  double stage2_final_loss = 0.0;
  std::string checkpoint_path;
  std::string stage1_checkpoint_path;
};

// Two-stage optimization: stage 1 fits the graph encoder + planner, stage 2
// fits the sentence decoder and copy heads while fine-tuning the shared
// embedding tables at a reduced rate. Writes checkpoints and a step-level
// CSV metrics log under out_dir.
TrainResult train(const Corpus& corpus, const Hkg& hkg, const NodeRegistry& nodes,
                  const RelationRegistry& rels, const SchemaRegistry& registry,
                  ParameterSet& params, const ModelConfig& cfg, const ModelDims& dims,
                  const std::string& out_dir);

}  // namespace cetp
