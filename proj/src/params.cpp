#include "cetp/params.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cetp/errors.hpp"

namespace cetp {

Parameter& ParameterSet::add(const std::string& name, int rows, int cols, ParamGroup group) {
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->group = group;
  p->value = Tensor(rows, cols);
  p->grad = Tensor(rows, cols);
  p->adam_m = Tensor(rows, cols);
  p->adam_v = Tensor(rows, cols);
  Parameter* raw = p.get();
  order_.push_back(std::move(p));
  by_name_[name] = raw;
  return *raw;
}

Parameter& ParameterSet::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::logic_error("unknown parameter: " + name);
  return *it->second;
}

const Parameter& ParameterSet::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::logic_error("unknown parameter: " + name);
  return *it->second;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(order_.size());
  for (auto& p : order_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(order_.size());
  for (auto& p : order_) out.push_back(p.get());
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : order_) std::fill(p->grad.d.begin(), p->grad.d.end(), 0.0);
}

size_t ParameterSet::scalar_count() const {
  size_t n = 0;
  for (const auto& p : order_) n += p->value.size();
  return n;
}

namespace {

void init_normal(Tensor& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& x : t.d) x = dist(rng);
}

void init_xavier(Tensor& t, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (t.rows + t.cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : t.d) x = dist(rng);
}

void add_block(ParameterSet& ps, const std::string& prefix, int d_model, int ffn_hidden,
               ParamGroup g, std::mt19937_64& rng, bool extra_sublayer) {
  auto lin = [&](const std::string& n, int r, int c) {
    init_xavier(ps.add(prefix + n, r, c, g).value, rng);
  };
  auto ln = [&](const std::string& n, int cols) {
    Parameter& gain = ps.add(prefix + n + ".g", 1, cols, g);
    std::fill(gain.value.d.begin(), gain.value.d.end(), 1.0);
    ps.add(prefix + n + ".b", 1, cols, g);
  };
  lin("attn.wq", d_model, d_model);
  lin("attn.wk", d_model, d_model);
  lin("attn.wv", d_model, d_model);
  lin("attn.wo", d_model, d_model);
  ln("ln1", d_model);
  if (extra_sublayer) {
    lin("attn2.wq", d_model, d_model);
    lin("attn2.wk", d_model, d_model);
    lin("attn2.wv", d_model, d_model);
    lin("attn2.wo", d_model, d_model);
    ln("ln2", d_model);
  }
  lin("ffn.w1", d_model, ffn_hidden);
  ps.add(prefix + "ffn.b1", 1, ffn_hidden, g);
  lin("ffn.w2", ffn_hidden, d_model);
  ps.add(prefix + "ffn.b2", 1, d_model, g);
  ln("lnf", d_model);
}

}  // namespace

ParameterSet build_parameters(const ModelConfig& cfg, const ModelDims& dims,
                              std::mt19937_64& rng) {
  cfg.validate();
  ParameterSet ps;
  constexpr double kEmbStd = 0.02;

  auto emb = [&](const std::string& n, int rows, int cols, ParamGroup g) {
    init_normal(ps.add(n, rows, cols, g).value, rng, kEmbStd);
  };

  emb("node_emb", std::max(1, dims.num_nodes), cfg.d_e, ParamGroup::kShared);
  emb("rel_emb", dims.num_relations + 1, cfg.d_e, ParamGroup::kPlanner);  // last row = no-path
  emb("word_emb", std::max(1, dims.vocab), cfg.d_w, ParamGroup::kShared);
  emb("pos_emb", cfg.max_positions, cfg.d_w, ParamGroup::kDecoder);
  emb("user_emb", std::max(1, dims.num_users), cfg.d_e, ParamGroup::kShared);
  emb("item_emb", std::max(1, dims.num_items), cfg.d_e, ParamGroup::kShared);
  emb("rating_emb", std::max(1, dims.num_ratings), cfg.d_e, ParamGroup::kShared);
  emb("special_graph_emb", 3, cfg.d_e, ParamGroup::kPlanner);  // START, EMPTY, STOP

  for (int b = 0; b < cfg.blocks_enc; ++b)
    add_block(ps, "enc." + std::to_string(b) + ".", cfg.d_e, cfg.ffn_hidden,
              ParamGroup::kPlanner, rng, /*extra_sublayer=*/false);
  for (int b = 0; b < cfg.blocks_plan; ++b)
    add_block(ps, "plan." + std::to_string(b) + ".", cfg.d_e, cfg.ffn_hidden,
              ParamGroup::kPlanner, rng, /*extra_sublayer=*/true);
  for (int b = 0; b < cfg.blocks_dec; ++b)
    add_block(ps, "dec." + std::to_string(b) + ".", cfg.d_w, cfg.ffn_hidden,
              ParamGroup::kDecoder, rng, /*extra_sublayer=*/false);

  auto lin = [&](const std::string& n, int r, int c, ParamGroup g) {
    init_xavier(ps.add(n, r, c, g).value, rng);
  };

  lin("plan.ctx.w", 1, 2 * cfg.d_e, ParamGroup::kPlanner);
  lin("plan.schema.w", std::max(1, dims.schema_count), 2 * cfg.d_e, ParamGroup::kPlanner);
  ps.add("plan.schema.b", 1, std::max(1, dims.schema_count), ParamGroup::kPlanner);
  lin("plan.node.w", std::max(1, dims.num_nodes), 2 * cfg.d_e, ParamGroup::kPlanner);
  ps.add("plan.node.b", 1, std::max(1, dims.num_nodes), ParamGroup::kPlanner);

  lin("dec.ctx.w", 1, cfg.d_w + cfg.d_e, ParamGroup::kDecoder);
  lin("dec.out.w", std::max(1, dims.vocab), cfg.d_w + cfg.d_e, ParamGroup::kDecoder);
  ps.add("dec.out.b", 1, std::max(1, dims.vocab), ParamGroup::kDecoder);
  lin("dec.copy.w", 1, cfg.d_w + 2 * cfg.d_e, ParamGroup::kDecoder);
  lin("dec.switch.w", 1, cfg.d_w + cfg.d_e, ParamGroup::kDecoder);
  ps.add("dec.switch.b", 1, 1, ParamGroup::kDecoder);

  if (!cfg.embedding_import.empty()) import_embeddings(ps, cfg.embedding_import);
  return ps;
}

void import_embeddings(ParameterSet& params, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("embedding import: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string kind, values;
    int row;
    if (!(is >> kind >> row >> values))
      throw ValidationError("embedding import: malformed line " + std::to_string(lineno));
    Tensor& t = params.get(kind == "node" ? "node_emb" : "word_emb").value;
    if (row < 0 || row >= t.rows)
      throw ValidationError("embedding import: row out of range at line " + std::to_string(lineno));
    std::istringstream vs(values);
    std::string tok;
    int c = 0;
    while (std::getline(vs, tok, ',')) {
      if (c >= t.cols)
        throw ValidationError("embedding import: too many values at line " + std::to_string(lineno));
      t.at(row, c++) = std::stod(tok);
    }
    if (c != t.cols)
      throw ValidationError("embedding import: expected " + std::to_string(t.cols) +
                            " values at line " + std::to_string(lineno));
  }
}

namespace {

constexpr char kMagic[8] = {'C', 'E', 'T', 'P', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params,
                     const ModelConfig& cfg, const ModelDims& dims) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ValidationError("checkpoint: cannot write " + tmp);
    os.write(kMagic, sizeof(kMagic));
    write_pod(os, kVersion);
    uint64_t fp = config_fingerprint(cfg);
    write_pod(os, fp);
    write_pod(os, static_cast<int32_t>(dims.num_nodes));
    write_pod(os, static_cast<int32_t>(dims.num_relations));
    write_pod(os, static_cast<int32_t>(dims.vocab));
    write_pod(os, static_cast<int32_t>(dims.schema_count));
    auto ts = params.all();
    write_pod(os, static_cast<uint32_t>(ts.size()));
    for (const Parameter* p : ts) {
      write_pod(os, static_cast<uint16_t>(p->name.size()));
      os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      write_pod(os, static_cast<uint32_t>(p->value.rows));
      write_pod(os, static_cast<uint32_t>(p->value.cols));
      for (double x : p->value.d) write_pod(os, static_cast<float>(x));
    }
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(const std::string& path, ParameterSet& params,
                     const ModelConfig& cfg, const ModelDims& dims) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ValidationError("checkpoint: bad magic in " + path);
  uint32_t version;
  read_pod(is, version);
  if (version != kVersion)
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  uint64_t fp;
  read_pod(is, fp);
  if (fp != config_fingerprint(cfg))
    throw ValidationError("checkpoint: config fingerprint mismatch");
  int32_t n_nodes, n_rel, n_vocab, n_schema;
  read_pod(is, n_nodes);
  read_pod(is, n_rel);
  read_pod(is, n_vocab);
  read_pod(is, n_schema);
  if (n_nodes != dims.num_nodes || n_rel != dims.num_relations || n_vocab != dims.vocab ||
      n_schema != dims.schema_count)
    throw ValidationError("checkpoint: dimension mismatch against current corpus");
  uint32_t count;
  read_pod(is, count);
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len;
    read_pod(is, len);
    std::string name(len, '\0');
    is.read(name.data(), len);
    uint32_t rows, cols;
    read_pod(is, rows);
    read_pod(is, cols);
    if (!params.has(name))
      throw ValidationError("checkpoint: unknown tensor " + name);
    Tensor& t = params.get(name).value;
    if (t.rows != static_cast<int>(rows) || t.cols != static_cast<int>(cols))
      throw ValidationError("checkpoint: shape mismatch for " + name);
    for (double& x : t.d) {
      float f;
      read_pod(is, f);
      x = static_cast<double>(f);
    }
    if (!is) throw ValidationError("checkpoint: truncated file " + path);
  }
}

}  // namespace cetp
