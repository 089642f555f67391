#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cetp/hkg.hpp"

namespace cetp {

struct SchemaEdge {
  int a;      // slot index
  RelId rel;  // forward relation (even id)
  int b;      // slot index
  auto operator<=>(const SchemaEdge&) const = default;
};

// A subgraph shape: slot kinds plus relation-labeled edges between slots,
// identified by a canonical code that is invariant under slot relabeling.
struct SubgraphSchema {
  std::vector<NodeKind> slot_kinds;
  std::vector<SchemaEdge> edges;  // sorted, canonical slot order
  std::string canonical_code;

  int slots() const { return static_cast<int>(slot_kinds.size()); }
  bool is_stop() const { return canonical_code == "STOP"; }
  bool is_empty() const { return canonical_code == "EMPTY"; }
  bool is_reserved() const { return is_stop() or is_empty(); }

  static SubgraphSchema stop();
  static SubgraphSchema empty();
};

struct Subgraph {
  SubgraphSchema schema;
  std::vector<NodeId> nodes;  // one per slot, canonical slot order
  int schema_id = -1;         // registry label; -1 until labeled

  static Subgraph stop() { return {SubgraphSchema::stop(), {}, 0}; }
  static Subgraph empty() { return {SubgraphSchema::empty(), {}, 1}; }
};

struct DocumentPlan {
  std::vector<Subgraph> subgraphs;  // a complete plan ends with STOP
};

// Canonical form of a connected labeled graph with <= max_slots nodes.
// Throws ValidationError on disconnected or oversize input. `node_order`
// gives the input nodes arranged in canonical slot order.
struct CanonicalGraph {
  SubgraphSchema schema;
  std::vector<NodeId> node_order;
};
CanonicalGraph schema_of(const std::vector<NodeId>& graph_nodes,
                         const std::vector<Triple>& graph_edges,
                         const NodeRegistry& nodes, const RelationRegistry& rels,
                         int max_slots = 6);

// Convenience: canonicalize an induced subgraph of a local view.
CanonicalGraph induced_schema(const std::vector<NodeId>& graph_nodes, const Hkg& graph,
                              const NodeRegistry& nodes, const RelationRegistry& rels,
                              int max_slots = 6);

// Schema vocabulary. Ids are dense; STOP=0 and EMPTY=1 are always present.
class SchemaRegistry {
 public:
  static constexpr int kStopId = 0;
  static constexpr int kEmptyId = 1;

  SchemaRegistry();
  int add(const SubgraphSchema& s, long frequency);
  std::optional<int> find(const std::string& code) const;
  const SubgraphSchema& schema(int id) const { return schemas_[id]; }
  long frequency(int id) const { return freq_[id]; }
  void set_frequency(int id, long f) { freq_[id] = f; }
  int size() const { return static_cast<int>(schemas_.size()); }

 private:
  std::vector<SubgraphSchema> schemas_;
  std::vector<long> freq_;
  std::unordered_map<std::string, int> by_code_;
};

// Per-sentence node mentions, already resolved to ids.
struct SentenceMentions {
  std::vector<NodeId> nodes;  // in first-mention order, may repeat
};

struct AlignResult {
  DocumentPlan plan;
  int dropped_mentions = 0;  // mentioned but absent from the local view
};

// Gold-plan extraction: per sentence, the induced connected subgraph over its
// mentioned nodes; disconnected mention sets are joined through at most one
// intermediate node on a shortest path, else reduced to the largest
// component. Sentences without usable mentions become EMPTY. At most
// max_plan_len-1 sentences are planned; the plan ends with STOP.
AlignResult align_sentence_subgraphs(const std::vector<SentenceMentions>& sentences,
                                     const LocalHkg& local, const NodeRegistry& nodes,
                                     const RelationRegistry& rels, int max_slots,
                                     int max_plan_len);

// Top-k schema mining over whole-sentence subgraphs: frequency of canonical
// codes, descending, ties by code. STOP and EMPTY are prepended for free.
SchemaRegistry mine_frequent_schemas(const std::vector<DocumentPlan>& plans, int top_k);

// Labels every subgraph of a plan against the registry. Out-of-vocabulary
// schemas are remapped to the mined schema sharing the largest common edge
// multiset (ties: higher frequency, then smaller id).
void label_plan(DocumentPlan& plan, const SchemaRegistry& registry);

// Greedy slot filling in slot order: highest-scoring unused node of the right
// kind whose edges toward already-filled slots exist in the local view; ties
// by smallest node id. scores[i] corresponds to local.nodes[i].
std::optional<Subgraph> instantiate_schema(const SubgraphSchema& schema,
                                           const std::vector<double>& scores,
                                           const LocalHkg& local,
                                           const NodeRegistry& nodes);

// True iff the assignment is injective, kinds match and all schema edges
// exist between the assigned nodes.
bool subgraph_valid(const Subgraph& g, const LocalHkg& local, const NodeRegistry& nodes);

}  // namespace cetp
