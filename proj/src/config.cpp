#include "cetp/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cetp/errors.hpp"

namespace cetp {

void ModelConfig::validate() const {
  if (d_e <= 0 || d_w <= 0 || heads <= 0) throw ValidationError("config: dimensions must be positive");
  if (d_e % heads != 0) throw ValidationError("config: d_e must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("config: dropout must be in [0,1)");
  if (max_plan_len < 1) throw ValidationError("config: max_plan_len must be >= 1");
  if (max_positions < max_sent_len + 2)
    throw ValidationError("config: max_positions must cover max_sent_len plus specials");
  if (min_cooccur < 1) throw ValidationError("config: min_cooccur must be >= 1");
  if (rating_min > rating_max) throw ValidationError("config: empty rating range");
}

namespace {

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail()) throw ValidationError("config: bad value for " + key + ": " + v);
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ValidationError("config: bad boolean for " + key + ": " + v);
}

}  // namespace

void apply_config_line(ModelConfig& c, const std::string& key, const std::string& v) {
  if (key == "d_e") c.d_e = parse_num<int>(v, key);
  else if (key == "d_w") c.d_w = parse_num<int>(v, key);
  else if (key == "heads") c.heads = parse_num<int>(v, key);
  else if (key == "ffn_hidden") c.ffn_hidden = parse_num<int>(v, key);
  else if (key == "blocks_enc") c.blocks_enc = parse_num<int>(v, key);
  else if (key == "blocks_plan") c.blocks_plan = parse_num<int>(v, key);
  else if (key == "blocks_dec") c.blocks_dec = parse_num<int>(v, key);
  else if (key == "dropout") c.dropout = parse_num<double>(v, key);
  else if (key == "max_path_hops") c.max_path_hops = parse_num<int>(v, key);
  else if (key == "max_plan_len") c.max_plan_len = parse_num<int>(v, key);
  else if (key == "max_sent_len") c.max_sent_len = parse_num<int>(v, key);
  else if (key == "max_positions") c.max_positions = parse_num<int>(v, key);
  else if (key == "beam_size") c.beam_size = parse_num<int>(v, key);
  else if (key == "vocab_limit") c.vocab_limit = parse_num<int>(v, key);
  else if (key == "top_k_schemas") c.top_k_schemas = parse_num<int>(v, key);
  else if (key == "max_slots") c.max_slots = parse_num<int>(v, key);
  else if (key == "local_node_cap") c.local_node_cap = parse_num<int>(v, key);
  else if (key == "min_cooccur") c.min_cooccur = parse_num<int>(v, key);
  else if (key == "rating_min") c.rating_min = parse_num<int>(v, key);
  else if (key == "rating_max") c.rating_max = parse_num<int>(v, key);
  else if (key == "seed") c.seed = parse_num<uint64_t>(v, key);
  else if (key == "batch_size") c.batch_size = parse_num<int>(v, key);
  else if (key == "stage1_epochs") c.stage1_epochs = parse_num<int>(v, key);
  else if (key == "stage2_epochs") c.stage2_epochs = parse_num<int>(v, key);
  else if (key == "stage1_lr_factor") c.stage1_lr_factor = parse_num<double>(v, key);
  else if (key == "stage2_lr_factor") c.stage2_lr_factor = parse_num<double>(v, key);
  else if (key == "warmup_steps") c.warmup_steps = parse_num<int>(v, key);
  else if (key == "adam_beta1") c.adam_beta1 = parse_num<double>(v, key);
  else if (key == "adam_beta2") c.adam_beta2 = parse_num<double>(v, key);
  else if (key == "adam_eps") c.adam_eps = parse_num<double>(v, key);
  else if (key == "grad_clip") c.grad_clip = parse_num<double>(v, key);
  else if (key == "mu_si") c.mu_si = parse_num<double>(v, key);
  else if (key == "shared_finetune_scale") c.shared_finetune_scale = parse_num<double>(v, key);
  else if (key == "disable_copy") c.disable_copy = parse_bool(v, key);
  else if (key == "disable_subgraph_attention") c.disable_subgraph_attention = parse_bool(v, key);
  else if (key == "disable_node_attention") c.disable_node_attention = parse_bool(v, key);
  else if (key == "embedding_import") c.embedding_import = v;
  else throw ValidationError("config: unknown key: " + key);
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  ModelConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto h = line.find('#');
    if (h != std::string::npos) line = line.substr(0, h);
    size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    size_t e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config: line " + std::to_string(lineno) + " is not key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto strip = [](std::string& s) {
      size_t a = s.find_first_not_of(" \t");
      size_t z = s.find_last_not_of(" \t");
      s = (a == std::string::npos) ? "" : s.substr(a, z - a + 1);
    };
    strip(key);
    strip(val);
    apply_config_line(cfg, key, val);
  }
  cfg.validate();
  return cfg;
}

std::string serialize_config(const ModelConfig& c) {
  std::ostringstream os;
  os << "d_e=" << c.d_e << "\nd_w=" << c.d_w << "\nheads=" << c.heads
     << "\nffn_hidden=" << c.ffn_hidden << "\nblocks_enc=" << c.blocks_enc
     << "\nblocks_plan=" << c.blocks_plan << "\nblocks_dec=" << c.blocks_dec
     << "\ndropout=" << c.dropout << "\nmax_path_hops=" << c.max_path_hops
     << "\nmax_plan_len=" << c.max_plan_len << "\nmax_sent_len=" << c.max_sent_len
     << "\nmax_positions=" << c.max_positions << "\nbeam_size=" << c.beam_size
     << "\nvocab_limit=" << c.vocab_limit << "\ntop_k_schemas=" << c.top_k_schemas
     << "\nmax_slots=" << c.max_slots << "\nlocal_node_cap=" << c.local_node_cap
     << "\nmin_cooccur=" << c.min_cooccur << "\nrating_min=" << c.rating_min
     << "\nrating_max=" << c.rating_max << "\nseed=" << c.seed
     << "\nbatch_size=" << c.batch_size << "\nstage1_epochs=" << c.stage1_epochs
     << "\nstage2_epochs=" << c.stage2_epochs << "\nstage1_lr_factor=" << c.stage1_lr_factor
     << "\nstage2_lr_factor=" << c.stage2_lr_factor << "\nwarmup_steps=" << c.warmup_steps
     << "\nadam_beta1=" << c.adam_beta1 << "\nadam_beta2=" << c.adam_beta2
     << "\nadam_eps=" << c.adam_eps << "\ngrad_clip=" << c.grad_clip
     << "\nmu_si=" << c.mu_si << "\nshared_finetune_scale=" << c.shared_finetune_scale
     << "\ndisable_copy=" << (c.disable_copy ? 1 : 0)
     << "\ndisable_subgraph_attention=" << (c.disable_subgraph_attention ? 1 : 0)
     << "\ndisable_node_attention=" << (c.disable_node_attention ? 1 : 0)
     << "\nembedding_import=" << c.embedding_import << "\n";
  return os.str();
}

uint64_t config_fingerprint(const ModelConfig& c) {
  // FNV-1a over the architecture-relevant fields only, so checkpoints stay
  // loadable when pure training knobs (epochs, lr) differ.
  std::ostringstream os;
  os << c.d_e << '|' << c.d_w << '|' << c.heads << '|' << c.ffn_hidden << '|'
     << c.blocks_enc << '|' << c.blocks_plan << '|' << c.blocks_dec << '|'
     << c.max_positions << '|' << c.rating_min << '|' << c.rating_max;
  uint64_t h = 1469598103934665603ull;
  for (char ch : os.str()) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace cetp
