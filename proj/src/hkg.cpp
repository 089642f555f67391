#include "cetp/hkg.hpp"

#include <algorithm>
#include <cassert>
#include <queue>

#include "cetp/errors.hpp"

namespace cetp {

const char* kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::kUser: return "user";
    case NodeKind::kItem: return "item";
    case NodeKind::kEntity: return "entity";
    case NodeKind::kKeyword: return "keyword";
  }
  return "?";
}

std::optional<NodeKind> parse_kind(const std::string& s) {
  if (s == "user") return NodeKind::kUser;
  if (s == "item") return NodeKind::kItem;
  if (s == "entity") return NodeKind::kEntity;
  if (s == "keyword") return NodeKind::kKeyword;
  return std::nullopt;
}

NodeId NodeRegistry::declare(const std::string& name, NodeKind kind) {
  auto it = by_name_.find(name);
  if (it != by_name_.end()) {
    if (kinds_[it->second] != kind)
      throw ValidationError("node '" + name + "' redeclared with a different kind");
    return it->second;
  }
  const NodeId id = static_cast<NodeId>(names_.size());
  names_.push_back(name);
  kinds_.push_back(kind);
  ordinals_.push_back(kind_counts_[static_cast<int>(kind)]++);
  by_name_[name] = id;
  return id;
}

NodeId NodeRegistry::require(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ValidationError("unknown node: " + name);
  return it->second;
}

std::optional<NodeId> NodeRegistry::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

RelationRegistry::RelationRegistry() {
  names_ = {"r_int", "r_int_inv", "r_co", "r_co_inv"};
  for (size_t i = 0; i < names_.size(); ++i) by_name_[names_[i]] = static_cast<RelId>(i);
}

RelId RelationRegistry::declare(const std::string& name) {
  auto it = by_name_.find(name);
  if (it != by_name_.end()) return it->second;
  const RelId id = static_cast<RelId>(names_.size());
  names_.push_back(name);
  names_.push_back(name + "_inv");
  by_name_[name] = id;
  by_name_[name + "_inv"] = id + 1;
  return id;
}

RelId RelationRegistry::require(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ValidationError("unknown relation: " + name);
  return it->second;
}

std::optional<RelId> RelationRegistry::find(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

void Hkg::add_edge_pair(NodeId h, RelId r, NodeId t) {
  assert(has_node(h) && has_node(t));
  const Triple fwd{h, r, t};
  if (edges_.count(fwd)) return;  // exact duplicates collapse
  const Triple bwd{t, RelationRegistry::inverse_of(r), h};
  edges_.insert(fwd);
  edges_.insert(bwd);
  adj_[h].push_back({r, t});
  adj_[t].push_back({RelationRegistry::inverse_of(r), h});
  std::sort(adj_[h].begin(), adj_[h].end());
  std::sort(adj_[t].begin(), adj_[t].end());
  edge_count_ += 2;
}

bool Hkg::has_edge(NodeId h, RelId r, NodeId t) const {
  return edges_.count(Triple{h, r, t}) > 0;
}

int Hkg::cooccur_count(NodeId e, NodeId k) const {
  auto it = cooccur_.find({e, k});
  return it == cooccur_.end() ? 0 : it->second;
}

namespace {

std::string edge_str(const NodeRegistry& nodes, const RelationRegistry& rels, NodeId h,
                     RelId r, NodeId t) {
  return "(" + nodes.name(h) + ", " + rels.name(r) + ", " + nodes.name(t) + ")";
}

}  // namespace

Hkg build_hkg(const NodeRegistry& nodes, const RelationRegistry& rels,
              const std::vector<Triple>& kg_triples,
              const std::vector<std::pair<NodeId, NodeId>>& interactions,
              const std::map<std::pair<NodeId, NodeId>, int>& cooccurrence_counts,
              int min_cooccur) {
  if (min_cooccur < 1) throw ValidationError("build_hkg: min_cooccur must be >= 1");
  Hkg g(nodes.size());

  for (const Triple& t : kg_triples) {
    if (!g.has_node(t.head) || !g.has_node(t.tail))
      throw ValidationError("build_hkg: triple references undeclared node");
    if (t.head == t.tail)
      throw ValidationError("build_hkg: self-loop rejected " +
                            edge_str(nodes, rels, t.head, t.rel, t.tail));
    if (t.rel <= RelationRegistry::kCooccurrenceInv)
      throw ValidationError("build_hkg: reserved relation in KG triple " +
                            edge_str(nodes, rels, t.head, t.rel, t.tail));
    const NodeKind hk = nodes.kind(t.head);
    const NodeKind tk = nodes.kind(t.tail);
    auto item_or_entity = [](NodeKind k) {
      return k == NodeKind::kItem || k == NodeKind::kEntity;
    };
    if (!item_or_entity(hk) || !item_or_entity(tk))
      throw ValidationError("build_hkg: KG triple must connect item/entity nodes: " +
                            edge_str(nodes, rels, t.head, t.rel, t.tail));
    g.add_edge_pair(t.head, t.rel, t.tail);
  }

  for (const auto& [u, i] : interactions) {
    if (!g.has_node(u) || !g.has_node(i))
      throw ValidationError("build_hkg: interaction references undeclared node");
    if (nodes.kind(u) != NodeKind::kUser || nodes.kind(i) != NodeKind::kItem)
      throw ValidationError("build_hkg: r_int must go user->item: " +
                            edge_str(nodes, rels, u, RelationRegistry::kInteraction, i));
    g.add_edge_pair(u, RelationRegistry::kInteraction, i);
  }

  for (const auto& [pair, count] : cooccurrence_counts) {
    const auto [e, k] = pair;
    if (!g.has_node(e) || !g.has_node(k))
      throw ValidationError("build_hkg: co-occurrence references undeclared node");
    if (nodes.kind(e) != NodeKind::kEntity || nodes.kind(k) != NodeKind::kKeyword)
      throw ValidationError("build_hkg: r_co must go entity->keyword: " +
                            edge_str(nodes, rels, e, RelationRegistry::kCooccurrence, k));
    if (count >= min_cooccur) {
      g.add_edge_pair(e, RelationRegistry::kCooccurrence, k);
      g.set_cooccur_count(e, k, count);
    }
  }
  return g;
}

int LocalHkg::local_index(NodeId n) const {
  auto it = index.find(n);
  return it == index.end() ? -1 : it->second;
}

LocalHkg local_hkg(const Hkg& hkg, const NodeRegistry& nodes, NodeId user, NodeId item,
                   int node_cap) {
  if (!hkg.has_node(user) || !hkg.has_node(item))
    throw ValidationError("local_hkg: user or item not in graph");
  if (nodes.kind(user) != NodeKind::kUser || nodes.kind(item) != NodeKind::kItem)
    throw ValidationError("local_hkg: wrong node kinds for (user, item) query");

  // Candidate entities: the item's one-hop KG neighbors, highest global
  // degree first. Keywords: r_co neighbors of the kept entities, highest
  // co-occurrence count first. The user and item are always kept.
  std::vector<NodeId> entities;
  for (const HkgEdge& e : hkg.neighbors(item))
    if (nodes.kind(e.to) == NodeKind::kEntity) entities.push_back(e.to);
  std::sort(entities.begin(), entities.end());
  entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
  std::stable_sort(entities.begin(), entities.end(), [&](NodeId a, NodeId b) {
    if (hkg.degree(a) != hkg.degree(b)) return hkg.degree(a) > hkg.degree(b);
    return a < b;
  });

  std::set<NodeId> chosen{user, item};
  int budget = std::max(node_cap, 2) - 2;
  std::vector<NodeId> kept_entities;
  for (NodeId e : entities) {
    if (budget <= 0) break;
    if (chosen.insert(e).second) {
      kept_entities.push_back(e);
      --budget;
    }
  }

  struct KwCand {
    int count;
    NodeId id;
  };
  std::vector<KwCand> keywords;
  std::set<NodeId> kw_seen;
  for (NodeId e : kept_entities)
    for (const HkgEdge& edge : hkg.neighbors(e))
      if (edge.rel == RelationRegistry::kCooccurrence &&
          nodes.kind(edge.to) == NodeKind::kKeyword && kw_seen.insert(edge.to).second)
        keywords.push_back({hkg.cooccur_count(e, edge.to), edge.to});
  std::sort(keywords.begin(), keywords.end(), [](const KwCand& a, const KwCand& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.id < b.id;
  });
  for (const KwCand& k : keywords) {
    if (budget <= 0) break;
    if (chosen.insert(k.id).second) --budget;
  }

  LocalHkg out;
  out.user = user;
  out.item = item;
  out.nodes.assign(chosen.begin(), chosen.end());
  std::sort(out.nodes.begin(), out.nodes.end());
  out.graph = Hkg(hkg.num_nodes());
  for (size_t i = 0; i < out.nodes.size(); ++i) out.index[out.nodes[i]] = static_cast<int>(i);

  // Induced edges: every stored edge whose endpoints were both kept. Only the
  // forward direction is re-added; the pair insert restores the inverse.
  for (NodeId n : out.nodes)
    for (const HkgEdge& e : hkg.neighbors(n))
      if (chosen.count(e.to) && n != e.to) out.graph.add_edge_pair(n, e.rel, e.to);
  for (NodeId e : kept_entities)
    for (const HkgEdge& edge : hkg.neighbors(e))
      if (edge.rel == RelationRegistry::kCooccurrence && chosen.count(edge.to))
        out.graph.set_cooccur_count(e, edge.to, hkg.cooccur_count(e, edge.to));

  out.cold_start = !hkg.has_edge(user, RelationRegistry::kInteraction, item);
  if (out.cold_start)
    out.graph.add_edge_pair(user, RelationRegistry::kInteraction, item);
  return out;
}

RelationPath shortest_relation_path(const Hkg& hkg, NodeId a, NodeId b, int max_hops) {
  if (!hkg.has_node(a) || !hkg.has_node(b))
    throw ValidationError("shortest_relation_path: node not in graph");
  if (a == b) return RelationPath::empty();

  // Layered BFS keeping, per reached node, the lexicographically smallest
  // (relation sequence, intermediate node sequence) among shortest paths.
  struct Best {
    std::vector<RelId> rels;
    std::vector<NodeId> via;
  };
  std::unordered_map<NodeId, Best> best;
  std::vector<NodeId> frontier{a};
  best[a] = {};
  for (int depth = 1; depth <= max_hops && !frontier.empty(); ++depth) {
    std::unordered_map<NodeId, Best> layer;
    for (NodeId u : frontier) {
      const Best& bu = best[u];
      for (const HkgEdge& e : hkg.neighbors(u)) {
        if (best.count(e.to)) continue;  // reached at an earlier depth
        Best cand;
        cand.rels = bu.rels;
        cand.rels.push_back(e.rel);
        cand.via = bu.via;
        if (u != a) cand.via.push_back(u);
        auto it = layer.find(e.to);
        if (it == layer.end()) {
          layer[e.to] = std::move(cand);
        } else if (std::pair(cand.rels, cand.via) < std::pair(it->second.rels, it->second.via)) {
          it->second = std::move(cand);
        }
      }
    }
    if (auto it = layer.find(b); it != layer.end())
      return RelationPath{true, it->second.rels};
    frontier.clear();
    for (auto& [n, bst] : layer) {
      best[n] = std::move(bst);
      frontier.push_back(n);
    }
    std::sort(frontier.begin(), frontier.end());
  }
  return RelationPath::none();
}

std::vector<std::vector<RelationPath>> local_path_matrix(const LocalHkg& local, int max_hops) {
  const int n = static_cast<int>(local.nodes.size());
  std::vector<std::vector<RelationPath>> out(n, std::vector<RelationPath>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out[i][j] = shortest_relation_path(local.graph, local.nodes[i], local.nodes[j], max_hops);
  return out;
}

}  // namespace cetp
