#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace cetp {

// Model and pipeline knobs. Loaded from a key=value text file; unknown keys
// are rejected so typos fail loudly.
struct ModelConfig {
  int d_e = 512;        // node embedding size (must be heads * d_head)
  int d_w = 512;        // word embedding size
  int heads = 8;
  int ffn_hidden = 1024;
  int blocks_enc = 6;
  int blocks_plan = 6;
  int blocks_dec = 6;
  double dropout = 0.2;
  int max_path_hops = 4;
  int max_plan_len = 5;   // document plan length bound, STOP included
  int max_sent_len = 50;  // decoding cap per sentence
  int max_positions = 104;
  int beam_size = 8;
  int vocab_limit = 30000;
  int top_k_schemas = 13;
  int max_slots = 6;
  int local_node_cap = 64;
  int min_cooccur = 2;
  int rating_min = 1;
  int rating_max = 5;

  // Training.
  uint64_t seed = 1;
  int batch_size = 8;
  int stage1_epochs = 30;
  int stage2_epochs = 30;
  double stage1_lr_factor = 1.0;
  double stage2_lr_factor = 1.0;
  int warmup_steps = 400;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-9;
  double grad_clip = 1.0;
  double mu_si = 1.0;                  // weight of the copy-switch indicator loss
  double shared_finetune_scale = 0.1;  // stage-2 lr multiplier for shared tables

  // Ablation switches.
  bool disable_copy = false;
  bool disable_subgraph_attention = false;
  bool disable_node_attention = false;

  // Optional TSV with pre-trained node/word vectors; empty = random init.
  std::string embedding_import;

  int d_head() const { return d_e / heads; }
  void validate() const;
};

ModelConfig load_config(const std::string& path);
void apply_config_line(ModelConfig& cfg, const std::string& key, const std::string& value);
std::string serialize_config(const ModelConfig& cfg);
uint64_t config_fingerprint(const ModelConfig& cfg);

}  // namespace cetp
