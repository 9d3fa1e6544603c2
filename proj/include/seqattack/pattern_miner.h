#ifndef SEQATTACK_PATTERN_MINER_H_
#define SEQATTACK_PATTERN_MINER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "seqattack/sequence.h"

namespace seqattack {

// A frequent contiguous n-gram of benign behaviors.
struct Pattern {
  std::vector<BehaviorId> behaviors;
  double support = 0.0;  // fraction of corpus sequences containing it

  bool operator==(const Pattern&) const = default;
};

struct MinerConfig {
  double min_support = 0.2;
  std::size_t max_length = 5;
};

// The support rule shared by the miner and its oracle tests: `count` of
// `total` sequences clears `min_support` with a 1e-12 slack so that
// thresholds written as fractions (2/3) are met by the matching count.
inline bool MeetsSupport(std::size_t count, std::size_t total, double min_support) {
  return static_cast<double>(count) / static_cast<double>(total) + 1e-12 >= min_support;
}

// Every n-gram (2 <= n <= max_length) whose document frequency meets the
// threshold. Level-wise with Apriori pruning on prefix and suffix.
// Output order: descending support, then lexicographic behaviors.
std::vector<Pattern> MineFrequent(std::span<const BehaviorSequence> benign,
                                  const MinerConfig& config);

// Directed graph over the distinct behaviors of one or more patterns;
// adjacency(x, y) == 1 means behavior y may directly follow x.
class PerturbationGraph {
 public:
  PerturbationGraph() = default;

  // Nodes in first-appearance order, one edge per consecutive pair.
  static PerturbationGraph FromPattern(const Pattern& pattern);

  const std::vector<BehaviorId>& nodes() const { return nodes_; }
  double support() const { return support_; }
  std::size_t size() const { return nodes_.size(); }

  bool contains(BehaviorId b) const { return index_of(b).has_value(); }
  std::optional<std::size_t> index_of(BehaviorId b) const;
  bool adjacency(std::size_t from_index, std::size_t to_index) const {
    return adjacency_[from_index * nodes_.size() + to_index] != 0;
  }
  bool has_edge(BehaviorId from, BehaviorId to) const;

  // Successors of `node` in node order. Throws LookupError for unknown nodes.
  std::vector<BehaviorId> successors(BehaviorId node) const;

  std::vector<std::pair<BehaviorId, BehaviorId>> edges() const;

  // True if every consecutive pair of `walk` is an edge (a single behavior
  // only has to be a node).
  bool is_walk(std::span<const BehaviorId> walk) const;

  void add_node(BehaviorId b);
  void add_edge(BehaviorId from, BehaviorId to);
  void set_support(double s) { support_ = s; }

  bool operator==(const PerturbationGraph&) const = default;

 private:
  std::vector<BehaviorId> nodes_;
  std::vector<std::uint8_t> adjacency_;  // row-major |nodes| x |nodes|
  double support_ = 0.0;
};

// Grouping used when compiling patterns into graphs.
enum class GraphGrouping {
  kPerPattern,            // one graph per pattern
  kSharedFirstBehavior,   // union of patterns starting with the same behavior
  kSingleGraph,           // everything in one graph
};

struct PerturbationGraphSet {
  std::vector<PerturbationGraph> graphs;
  MinerConfig provenance;
  GraphGrouping grouping = GraphGrouping::kSharedFirstBehavior;

  bool empty() const { return graphs.empty(); }
  std::size_t size() const { return graphs.size(); }
};

// Unions build-graph outputs within each group. Graph support is the max of
// its members; graphs are ordered by descending support, then by node list.
PerturbationGraphSet MergeGraphs(std::span<const Pattern> patterns, GraphGrouping grouping);

// Simple paths of 2..max_depth+1 nodes starting at `start`, depth-first with
// successors in node order; each prefix is emitted before its extensions.
std::vector<std::vector<BehaviorId>> EnumeratePaths(const PerturbationGraph& g, BehaviorId start,
                                                    std::size_t max_depth);

// Graph-set file: a JSON list of {nodes: [names], edges: [[from, to], ...],
// support: float}, order preserved.
void SaveGraphSet(const PerturbationGraphSet& set, const Vocabulary& vocab,
                  const std::filesystem::path& path);
PerturbationGraphSet LoadGraphSet(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace seqattack

#endif  // SEQATTACK_PATTERN_MINER_H_
