#include "cetp/schema.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "cetp/errors.hpp"

namespace cetp {

SubgraphSchema SubgraphSchema::stop() {
  SubgraphSchema s;
  s.canonical_code = "STOP";
  return s;
}

SubgraphSchema SubgraphSchema::empty() {
  SubgraphSchema s;
  s.canonical_code = "EMPTY";
  return s;
}

namespace {

char kind_char(NodeKind k) {
  switch (k) {
    case NodeKind::kUser: return 'u';
    case NodeKind::kItem: return 'i';
    case NodeKind::kEntity: return 'e';
    case NodeKind::kKeyword: return 'k';
  }
  return '?';
}

// Forward-direction edge between node positions, relation id made even.
struct PosEdge {
  int a;
  RelId rel;
  int b;
};

std::string code_for_permutation(const std::vector<NodeKind>& kinds,
                                 const std::vector<PosEdge>& edges,
                                 const std::vector<int>& slot_of,
                                 const RelationRegistry& rels) {
  const int n = static_cast<int>(kinds.size());
  std::vector<int> pos_at_slot(n);
  for (int p = 0; p < n; ++p) pos_at_slot[slot_of[p]] = p;
  std::string code;
  for (int s = 0; s < n; ++s) {
    if (s) code += ',';
    code += kind_char(kinds[pos_at_slot[s]]);
  }
  code += '|';
  std::vector<std::string> parts;
  parts.reserve(edges.size());
  for (const PosEdge& e : edges) {
    std::ostringstream os;
    os << slot_of[e.a] << '-' << rels.name(e.rel) << '>' << slot_of[e.b];
    parts.push_back(os.str());
  }
  std::sort(parts.begin(), parts.end());
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) code += ';';
    code += parts[i];
  }
  return code;
}

bool connected(int n, const std::vector<PosEdge>& edges) {
  if (n == 0) return false;
  std::vector<std::vector<int>> adj(n);
  for (const PosEdge& e : edges) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  std::vector<bool> seen(n, false);
  std::vector<int> stack{0};
  seen[0] = true;
  int reached = 1;
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        stack.push_back(v);
      }
  }
  return reached == n;
}

}  // namespace

CanonicalGraph schema_of(const std::vector<NodeId>& graph_nodes,
                         const std::vector<Triple>& graph_edges,
                         const NodeRegistry& nodes, const RelationRegistry& rels,
                         int max_slots) {
  const int n = static_cast<int>(graph_nodes.size());
  if (n == 0) throw ValidationError("schema_of: empty graph");
  if (n > max_slots)
    throw ValidationError("schema_of: graph exceeds max_slots (" + std::to_string(n) + " > " +
                          std::to_string(max_slots) + ")");

  std::map<NodeId, int> pos;
  for (int i = 0; i < n; ++i) pos[graph_nodes[i]] = i;
  std::vector<NodeKind> kinds(n);
  for (int i = 0; i < n; ++i) kinds[i] = nodes.kind(graph_nodes[i]);

  // Normalize to forward relations and drop duplicate directions.
  std::set<std::tuple<int, RelId, int>> seen;
  std::vector<PosEdge> edges;
  for (const Triple& t : graph_edges) {
    auto ia = pos.find(t.head);
    auto ib = pos.find(t.tail);
    if (ia == pos.end() || ib == pos.end())
      throw ValidationError("schema_of: edge references a node outside the graph");
    int a = ia->second, b = ib->second;
    RelId r = t.rel;
    if (r & 1) {
      std::swap(a, b);
      r = RelationRegistry::inverse_of(r);
    }
    if (seen.insert({a, r, b}).second) edges.push_back({a, r, b});
  }
  if (!connected(n, edges)) throw ValidationError("schema_of: graph is not connected");

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::string best;
  std::vector<int> best_perm;
  do {
    std::string code = code_for_permutation(kinds, edges, perm, rels);
    if (best.empty() || code < best) {
      best = code;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  CanonicalGraph out;
  out.schema.canonical_code = best;
  out.schema.slot_kinds.resize(n);
  out.node_order.resize(n);
  for (int p = 0; p < n; ++p) {
    out.schema.slot_kinds[best_perm[p]] = kinds[p];
    out.node_order[best_perm[p]] = graph_nodes[p];
  }
  for (const PosEdge& e : edges)
    out.schema.edges.push_back({best_perm[e.a], e.rel, best_perm[e.b]});
  std::sort(out.schema.edges.begin(), out.schema.edges.end());
  return out;
}

CanonicalGraph induced_schema(const std::vector<NodeId>& graph_nodes, const Hkg& graph,
                              const NodeRegistry& nodes, const RelationRegistry& rels,
                              int max_slots) {
  std::set<NodeId> in(graph_nodes.begin(), graph_nodes.end());
  std::vector<Triple> edges;
  for (NodeId a : graph_nodes)
    for (const HkgEdge& e : graph.neighbors(a))
      if (in.count(e.to)) edges.push_back({a, e.rel, e.to});
  return schema_of(graph_nodes, edges, nodes, rels, max_slots);
}

SchemaRegistry::SchemaRegistry() {
  schemas_ = {SubgraphSchema::stop(), SubgraphSchema::empty()};
  freq_ = {0, 0};
  by_code_["STOP"] = kStopId;
  by_code_["EMPTY"] = kEmptyId;
}

int SchemaRegistry::add(const SubgraphSchema& s, long frequency) {
  auto it = by_code_.find(s.canonical_code);
  if (it != by_code_.end()) return it->second;
  const int id = static_cast<int>(schemas_.size());
  schemas_.push_back(s);
  freq_.push_back(frequency);
  by_code_[s.canonical_code] = id;
  return id;
}

std::optional<int> SchemaRegistry::find(const std::string& code) const {
  auto it = by_code_.find(code);
  if (it == by_code_.end()) return std::nullopt;
  return it->second;
}

namespace {

// Grow a disconnected mention set by single intermediate nodes that join two
// or more components; returns the final node set (largest component if still
// split).
std::vector<NodeId> connect_mentions(std::vector<NodeId> keep, const LocalHkg& local,
                                     int max_slots) {
  auto components = [&](const std::vector<NodeId>& ns) {
    std::map<NodeId, int> comp;
    int next = 0;
    for (NodeId n : ns)
      if (!comp.count(n)) {
        std::vector<NodeId> stack{n};
        comp[n] = next;
        while (!stack.empty()) {
          NodeId u = stack.back();
          stack.pop_back();
          for (const HkgEdge& e : local.graph.neighbors(u)) {
            if (comp.count(e.to)) continue;
            if (std::find(ns.begin(), ns.end(), e.to) == ns.end()) continue;
            comp[e.to] = next;
            stack.push_back(e.to);
          }
        }
        ++next;
      }
    return std::pair(comp, next);
  };

  for (;;) {
    auto [comp, ncomp] = components(keep);
    if (ncomp <= 1) return keep;
    if (static_cast<int>(keep.size()) >= max_slots) break;
    // Candidate connectors: non-member nodes adjacent to >= 2 components.
    NodeId best = -1;
    int best_joined = 1;
    for (NodeId cand : local.nodes) {
      if (comp.count(cand)) continue;
      std::set<int> joined;
      for (const HkgEdge& e : local.graph.neighbors(cand)) {
        auto it = comp.find(e.to);
        if (it != comp.end()) joined.insert(it->second);
      }
      const int j = static_cast<int>(joined.size());
      if (j > best_joined || (j == best_joined && j >= 2 && (best == -1 || cand < best))) {
        best_joined = j;
        best = cand;
      }
    }
    if (best == -1) break;
    keep.push_back(best);
  }

  // Still split: keep the largest component (ties: the one holding the
  // smallest node id).
  auto [comp, ncomp] = components(keep);
  std::vector<std::vector<NodeId>> groups(ncomp);
  for (NodeId n : keep) groups[comp[n]].push_back(n);
  for (auto& g : groups) std::sort(g.begin(), g.end());
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.front() < b.front();
  });
  return groups.front();
}

}  // namespace

AlignResult align_sentence_subgraphs(const std::vector<SentenceMentions>& sentences,
                                     const LocalHkg& local, const NodeRegistry& nodes,
                                     const RelationRegistry& rels, int max_slots,
                                     int max_plan_len) {
  AlignResult out;
  const int max_sentences = std::max(0, max_plan_len - 1);
  for (size_t si = 0; si < sentences.size() && static_cast<int>(si) < max_sentences; ++si) {
    std::vector<NodeId> keep;
    for (NodeId n : sentences[si].nodes) {
      if (local.local_index(n) < 0) {
        ++out.dropped_mentions;
        continue;
      }
      if (std::find(keep.begin(), keep.end(), n) == keep.end()) keep.push_back(n);
    }
    // Mention order is capped before connecting so the slot budget favors
    // mentioned nodes over connectors.
    if (static_cast<int>(keep.size()) > max_slots) keep.resize(max_slots);
    if (keep.empty()) {
      out.plan.subgraphs.push_back(Subgraph::empty());
      continue;
    }
    keep = connect_mentions(std::move(keep), local, max_slots);
    std::sort(keep.begin(), keep.end());
    CanonicalGraph cg = induced_schema(keep, local.graph, nodes, rels, max_slots);
    Subgraph g;
    g.schema = cg.schema;
    g.nodes = cg.node_order;
    out.plan.subgraphs.push_back(std::move(g));
  }
  out.plan.subgraphs.push_back(Subgraph::stop());
  return out;
}

SchemaRegistry mine_frequent_schemas(const std::vector<DocumentPlan>& plans, int top_k) {
  if (top_k < 1) throw ValidationError("mine_frequent_schemas: top_k must be >= 1");
  std::map<std::string, std::pair<long, const SubgraphSchema*>> counts;
  long stop_count = 0, empty_count = 0;
  for (const DocumentPlan& p : plans)
    for (const Subgraph& g : p.subgraphs) {
      if (g.schema.is_stop()) {
        ++stop_count;
        continue;
      }
      if (g.schema.is_empty()) {
        ++empty_count;
        continue;
      }
      auto& slot = counts[g.schema.canonical_code];
      slot.first += 1;
      slot.second = &g.schema;
    }

  std::vector<std::pair<long, std::string>> ranked;
  ranked.reserve(counts.size());
  for (const auto& [code, cs] : counts) ranked.push_back({cs.first, code});
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  SchemaRegistry reg;
  reg.set_frequency(SchemaRegistry::kStopId, stop_count);
  reg.set_frequency(SchemaRegistry::kEmptyId, empty_count);
  for (int i = 0; i < static_cast<int>(ranked.size()) && i < top_k; ++i)
    reg.add(*counts[ranked[i].second].second, ranked[i].first);
  return reg;
}

namespace {

std::multiset<std::tuple<char, RelId, char>> edge_signature(const SubgraphSchema& s) {
  std::multiset<std::tuple<char, RelId, char>> out;
  for (const SchemaEdge& e : s.edges)
    out.insert({kind_char(s.slot_kinds[e.a]), e.rel, kind_char(s.slot_kinds[e.b])});
  return out;
}

int common_size(const std::multiset<std::tuple<char, RelId, char>>& a,
                const std::multiset<std::tuple<char, RelId, char>>& b) {
  std::vector<std::tuple<char, RelId, char>> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  return static_cast<int>(inter.size());
}

}  // namespace

void label_plan(DocumentPlan& plan, const SchemaRegistry& registry) {
  for (Subgraph& g : plan.subgraphs) {
    if (g.schema.is_stop()) {
      g.schema_id = SchemaRegistry::kStopId;
      continue;
    }
    if (g.schema.is_empty()) {
      g.schema_id = SchemaRegistry::kEmptyId;
      continue;
    }
    if (auto id = registry.find(g.schema.canonical_code)) {
      g.schema_id = *id;
      continue;
    }
    // Long-tail schema: remap to the closest mined one.
    const auto sig = edge_signature(g.schema);
    int best = SchemaRegistry::kEmptyId;
    int best_common = -1;
    long best_freq = -1;
    for (int id = 2; id < registry.size(); ++id) {
      const int c = common_size(sig, edge_signature(registry.schema(id)));
      const long f = registry.frequency(id);
      if (c > best_common || (c == best_common && f > best_freq)) {
        best_common = c;
        best_freq = f;
        best = id;
      }
    }
    g.schema_id = best;
  }
}

std::optional<Subgraph> instantiate_schema(const SubgraphSchema& schema,
                                           const std::vector<double>& scores,
                                           const LocalHkg& local,
                                           const NodeRegistry& nodes) {
  if (schema.is_reserved()) {
    Subgraph g;
    g.schema = schema;
    return g;
  }
  assert(scores.size() == local.nodes.size());
  const int n = schema.slots();
  std::vector<NodeId> filled(n, -1);
  std::vector<bool> used(local.nodes.size(), false);
  for (int slot = 0; slot < n; ++slot) {
    int best = -1;
    for (size_t i = 0; i < local.nodes.size(); ++i) {
      if (used[i]) continue;
      const NodeId cand = local.nodes[i];
      if (nodes.kind(cand) != schema.slot_kinds[slot]) continue;
      bool ok = true;
      for (const SchemaEdge& e : schema.edges) {
        if (e.a == slot && filled[e.b] != -1 && !local.graph.has_edge(cand, e.rel, filled[e.b]))
          ok = false;
        if (e.b == slot && filled[e.a] != -1 && !local.graph.has_edge(filled[e.a], e.rel, cand))
          ok = false;
        if (!ok) break;
      }
      if (!ok) continue;
      if (best == -1 || scores[i] > scores[best] ||
          (scores[i] == scores[best] && cand < local.nodes[best]))
        best = static_cast<int>(i);
    }
    if (best == -1) return std::nullopt;
    filled[slot] = local.nodes[best];
    used[best] = true;
  }
  Subgraph g;
  g.schema = schema;
  g.nodes = filled;
  return g;
}

bool subgraph_valid(const Subgraph& g, const LocalHkg& local, const NodeRegistry& nodes) {
  if (g.schema.is_reserved()) return g.nodes.empty();
  if (static_cast<int>(g.nodes.size()) != g.schema.slots()) return false;
  std::set<NodeId> uniq(g.nodes.begin(), g.nodes.end());
  if (uniq.size() != g.nodes.size()) return false;
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    if (local.local_index(g.nodes[i]) < 0) return false;
    if (nodes.kind(g.nodes[i]) != g.schema.slot_kinds[i]) return false;
  }
  for (const SchemaEdge& e : g.schema.edges)
    if (!local.graph.has_edge(g.nodes[e.a], e.rel, g.nodes[e.b])) return false;
  return true;
}

}  // namespace cetp
