#pragma once

#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cetp/config.hpp"
#include "cetp/tensor.hpp"

namespace cetp {

// Which training stage owns a tensor. Shared tables are trained in stage 1
// and fine-tuned at a reduced rate in stage 2; the rest is frozen outside
// its own stage.
enum class ParamGroup { kPlanner, kDecoder, kShared };

struct Parameter {
  std::string name;
  ParamGroup group = ParamGroup::kShared;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
};

class ParameterSet {
 public:
  Parameter& add(const std::string& name, int rows, int cols, ParamGroup group);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const { return by_name_.count(name) > 0; }

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> order_;
  std::unordered_map<std::string, Parameter*> by_name_;
};

// Index-space sizes the tensors are shaped from.
struct ModelDims {
  int num_nodes = 0;
  int num_relations = 0;  // inverses included; the no-path row is extra
  int vocab = 0;
  int num_users = 0;
  int num_items = 0;
  int num_ratings = 0;
  int schema_count = 0;
};

// Builds all trainable tensors: embedding tables, per-block attention and FFN
// weights for the graph encoder / planner / sentence decoder, the planner and
// decoder output heads, the copy scorer and the generate-copy switch.
ParameterSet build_parameters(const ModelConfig& cfg, const ModelDims& dims,
                              std::mt19937_64& rng);

// Optional import of pre-trained vectors: TSV `kind<TAB>row<TAB>v0,v1,...`
// with kind in {node, word}. Rows not mentioned keep their random init.
void import_embeddings(ParameterSet& params, const std::string& path);

void save_checkpoint(const std::string& path, const ParameterSet& params,
                     const ModelConfig& cfg, const ModelDims& dims);
// Throws ValidationError on magic/version/fingerprint/shape mismatch.
void load_checkpoint(const std::string& path, ParameterSet& params,
                     const ModelConfig& cfg, const ModelDims& dims);

}  // namespace cetp
