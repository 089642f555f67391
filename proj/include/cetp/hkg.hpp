#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace cetp {

using NodeId = int32_t;
using RelId = int32_t;

enum class NodeKind : uint8_t { kUser = 0, kItem = 1, kEntity = 2, kKeyword = 3 };

const char* kind_name(NodeKind k);
std::optional<NodeKind> parse_kind(const std::string& s);

// Node ids are assigned densely in declaration order; kind is fixed at
// declaration.
class NodeRegistry {
 public:
  NodeId declare(const std::string& name, NodeKind kind);
  NodeId require(const std::string& name) const;  // throws ValidationError
  std::optional<NodeId> find(const std::string& name) const;
  NodeKind kind(NodeId id) const { return kinds_[id]; }
  const std::string& name(NodeId id) const { return names_[id]; }
  int size() const { return static_cast<int>(names_.size()); }
  // Ordinal of a node within its kind (used to index context tables).
  int kind_ordinal(NodeId id) const { return ordinals_[id]; }
  int count(NodeKind k) const { return kind_counts_[static_cast<int>(k)]; }

 private:
  std::vector<std::string> names_;
  std::vector<NodeKind> kinds_;
  std::vector<int> ordinals_;
  int kind_counts_[4] = {0, 0, 0, 0};
  std::unordered_map<std::string, NodeId> by_name_;
};

// Every relation has an inverse; ids come in (r, r_inv) pairs so
// inverse_of(r) flips the low bit. r_int / r_co pairs are pre-declared.
class RelationRegistry {
 public:
  static constexpr RelId kInteraction = 0;
  static constexpr RelId kInteractionInv = 1;
  static constexpr RelId kCooccurrence = 2;
  static constexpr RelId kCooccurrenceInv = 3;

  RelationRegistry();
  RelId declare(const std::string& name);  // returns forward id; inverse is id^1
  RelId require(const std::string& name) const;
  std::optional<RelId> find(const std::string& name) const;
  static RelId inverse_of(RelId r) { return r ^ 1; }
  const std::string& name(RelId r) const { return names_[r]; }
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, RelId> by_name_;
};

struct Triple {
  NodeId head;
  RelId rel;
  NodeId tail;
  auto operator<=>(const Triple&) const = default;
};

struct HkgEdge {
  RelId rel;
  NodeId to;
  auto operator<=>(const HkgEdge&) const = default;
};

// Immutable after construction. Stores every edge together with its inverse;
// adjacency lists are kept sorted for deterministic traversal.
class Hkg {
 public:
  Hkg() = default;
  explicit Hkg(int num_nodes) : adj_(num_nodes) {}

  void add_edge_pair(NodeId h, RelId r, NodeId t);  // inserts (h,r,t) and (t,r^1,h)
  bool has_edge(NodeId h, RelId r, NodeId t) const;
  bool has_node(NodeId n) const { return n >= 0 && n < static_cast<int>(adj_.size()); }
  const std::vector<HkgEdge>& neighbors(NodeId n) const { return adj_[n]; }
  int num_nodes() const { return static_cast<int>(adj_.size()); }
  size_t num_edges() const { return edge_count_; }  // directed, inverses counted
  int degree(NodeId n) const { return static_cast<int>(adj_[n].size()); }

  void set_cooccur_count(NodeId e, NodeId k, int c) { cooccur_[{e, k}] = c; }
  int cooccur_count(NodeId e, NodeId k) const;

 private:
  std::vector<std::vector<HkgEdge>> adj_;
  std::set<Triple> edges_;
  std::map<std::pair<NodeId, NodeId>, int> cooccur_;
  size_t edge_count_ = 0;
};

// Shortest relation path by hop count, or no path within max_hops.
struct RelationPath {
  bool reachable = false;
  std::vector<RelId> rels;

  static RelationPath none() { return {}; }
  static RelationPath empty() { return {true, {}}; }
  bool operator==(const RelationPath&) const = default;
};

// r_co edges are added only for pairs with count >= min_cooccur. KG triples
// may not use the reserved relations and must connect item/entity nodes;
// interactions are user->item. Violations throw ValidationError naming the
// offending edge.
Hkg build_hkg(const NodeRegistry& nodes, const RelationRegistry& rels,
              const std::vector<Triple>& kg_triples,
              const std::vector<std::pair<NodeId, NodeId>>& interactions,
              const std::map<std::pair<NodeId, NodeId>, int>& cooccurrence_counts,
              int min_cooccur);

// The per-(user,item) view the model runs on: the pair itself, the item's
// one-hop entity neighbors and their keywords. Node order is ascending id.
struct LocalHkg {
  Hkg graph;
  NodeId user = -1;
  NodeId item = -1;
  bool cold_start = false;             // no stored interaction edge
  std::vector<NodeId> nodes;           // ascending
  std::unordered_map<NodeId, int> index;  // node id -> position in `nodes`

  int local_index(NodeId n) const;
};

LocalHkg local_hkg(const Hkg& hkg, const NodeRegistry& nodes, NodeId user, NodeId item,
                   int node_cap = 64);

// BFS by hop count; among equal-hop paths picks the lexicographically
// smallest relation-id sequence, then the smallest intermediate node ids.
RelationPath shortest_relation_path(const Hkg& hkg, NodeId a, NodeId b, int max_hops);

// All-pairs paths over the local view, in local node order.
std::vector<std::vector<RelationPath>> local_path_matrix(const LocalHkg& local, int max_hops);

}  // namespace cetp
