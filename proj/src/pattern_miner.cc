#include "seqattack/pattern_miner.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "seqattack/errors.h"

namespace seqattack {

namespace {

using Gram = std::vector<BehaviorId>;

bool PatternOrder(const Pattern& a, const Pattern& b) {
  if (a.support != b.support) return a.support > b.support;
  return a.behaviors < b.behaviors;
}

}  // namespace

std::vector<Pattern> MineFrequent(std::span<const BehaviorSequence> benign,
                                  const MinerConfig& config) {
  if (!(config.min_support > 0.0) || config.min_support > 1.0) {
    throw ConfigError("support threshold must lie in (0, 1]");
  }
  if (config.max_length < 2) throw ConfigError("max pattern length must be >= 2");
  if (benign.empty()) throw ConfigError("cannot mine an empty corpus");
  for (const auto& s : benign) {
    if (s.label != Label::kBenign) throw ConfigError("pattern mining expects benign sequences only");
  }

  const std::size_t total = benign.size();
  std::vector<Pattern> out;
  std::set<Gram> previous;
  for (std::size_t n = 2; n <= config.max_length; ++n) {
    std::map<Gram, std::size_t> counts;
    for (const auto& seq : benign) {
      if (seq.tokens.size() < n) continue;
      std::set<Gram> present;
      for (std::size_t i = 0; i + n <= seq.tokens.size(); ++i) {
        Gram gram(seq.tokens.begin() + static_cast<std::ptrdiff_t>(i),
                  seq.tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
        if (n > 2) {
          Gram prefix(gram.begin(), gram.end() - 1);
          Gram suffix(gram.begin() + 1, gram.end());
          if (!previous.contains(prefix) || !previous.contains(suffix)) continue;
        }
        present.insert(std::move(gram));
      }
      for (const auto& g : present) ++counts[g];
    }
    previous.clear();
    for (const auto& [gram, count] : counts) {
      if (!MeetsSupport(count, total, config.min_support)) continue;
      previous.insert(gram);
      out.push_back({gram, static_cast<double>(count) / static_cast<double>(total)});
    }
    if (previous.empty()) break;
  }
  std::stable_sort(out.begin(), out.end(), PatternOrder);
  return out;
}

std::optional<std::size_t> PerturbationGraph::index_of(BehaviorId b) const {
  auto it = std::find(nodes_.begin(), nodes_.end(), b);
  if (it == nodes_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - nodes_.begin());
}

void PerturbationGraph::add_node(BehaviorId b) {
  if (contains(b)) return;
  const std::size_t old = nodes_.size();
  std::vector<std::uint8_t> grown((old + 1) * (old + 1), 0);
  for (std::size_t r = 0; r < old; ++r) {
    for (std::size_t c = 0; c < old; ++c) grown[r * (old + 1) + c] = adjacency_[r * old + c];
  }
  nodes_.push_back(b);
  adjacency_ = std::move(grown);
}

void PerturbationGraph::add_edge(BehaviorId from, BehaviorId to) {
  add_node(from);
  add_node(to);
  adjacency_[*index_of(from) * nodes_.size() + *index_of(to)] = 1;
}

bool PerturbationGraph::has_edge(BehaviorId from, BehaviorId to) const {
  auto f = index_of(from);
  auto t = index_of(to);
  return f && t && adjacency(*f, *t);
}

std::vector<BehaviorId> PerturbationGraph::successors(BehaviorId node) const {
  auto idx = index_of(node);
  if (!idx) throw LookupError("behavior " + std::to_string(node) + " is not a node of the graph");
  std::vector<BehaviorId> out;
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    if (adjacency(*idx, j)) out.push_back(nodes_[j]);
  }
  return out;
}

std::vector<std::pair<BehaviorId, BehaviorId>> PerturbationGraph::edges() const {
  std::vector<std::pair<BehaviorId, BehaviorId>> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (std::size_t j = 0; j < nodes_.size(); ++j) {
      if (adjacency(i, j)) out.emplace_back(nodes_[i], nodes_[j]);
    }
  }
  return out;
}

bool PerturbationGraph::is_walk(std::span<const BehaviorId> walk) const {
  if (walk.empty()) return false;
  if (!contains(walk.front())) return false;
  for (std::size_t i = 1; i < walk.size(); ++i) {
    if (!has_edge(walk[i - 1], walk[i])) return false;
  }
  return true;
}

PerturbationGraph PerturbationGraph::FromPattern(const Pattern& pattern) {
  PerturbationGraph g;
  for (BehaviorId b : pattern.behaviors) g.add_node(b);
  for (std::size_t k = 1; k < pattern.behaviors.size(); ++k) {
    g.add_edge(pattern.behaviors[k - 1], pattern.behaviors[k]);
  }
  g.support_ = pattern.support;
  return g;
}

PerturbationGraphSet MergeGraphs(std::span<const Pattern> patterns, GraphGrouping grouping) {
  PerturbationGraphSet set;
  set.grouping = grouping;
  std::vector<PerturbationGraph> graphs;
  std::map<BehaviorId, std::size_t> by_first;
  for (const auto& p : patterns) {
    if (p.behaviors.size() < 2) throw ConfigError("patterns must hold at least two behaviors");
    std::size_t slot = graphs.size();
    switch (grouping) {
      case GraphGrouping::kPerPattern:
        break;
      case GraphGrouping::kSharedFirstBehavior: {
        auto [it, fresh] = by_first.emplace(p.behaviors.front(), graphs.size());
        slot = it->second;
        break;
      }
      case GraphGrouping::kSingleGraph:
        slot = graphs.empty() ? 0 : graphs.size() - 1;
        break;
    }
    if (slot == graphs.size()) graphs.emplace_back();
    auto& g = graphs[slot];
    auto piece = PerturbationGraph::FromPattern(p);
    for (BehaviorId b : piece.nodes()) g.add_node(b);
    for (auto [from, to] : piece.edges()) g.add_edge(from, to);
    g.set_support(std::max(g.support(), p.support));
  }
  std::stable_sort(graphs.begin(), graphs.end(),
                   [](const PerturbationGraph& a, const PerturbationGraph& b) {
                     if (a.support() != b.support()) return a.support() > b.support();
                     return a.nodes() < b.nodes();
                   });
  set.graphs = std::move(graphs);
  return set;
}

std::vector<std::vector<BehaviorId>> EnumeratePaths(const PerturbationGraph& g, BehaviorId start,
                                                    std::size_t max_depth) {
  if (!g.contains(start)) {
    throw LookupError("start behavior " + std::to_string(start) + " is not a node of the graph");
  }
  if (max_depth == 0) throw ConfigError("max_depth must be >= 1");
  std::vector<std::vector<BehaviorId>> out;
  std::vector<BehaviorId> path{start};
  std::vector<bool> on_path(g.size(), false);
  on_path[*g.index_of(start)] = true;

  auto dfs = [&](auto&& self) -> void {
    if (path.size() > max_depth) return;
    for (BehaviorId next : g.successors(path.back())) {
      std::size_t idx = *g.index_of(next);
      if (on_path[idx]) continue;
      path.push_back(next);
      on_path[idx] = true;
      out.push_back(path);
      self(self);
      on_path[idx] = false;
      path.pop_back();
    }
  };
  dfs(dfs);
  return out;
}

void SaveGraphSet(const PerturbationGraphSet& set, const Vocabulary& vocab,
                  const std::filesystem::path& path) {
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& g : set.graphs) {
    nlohmann::ordered_json entry;
    entry["nodes"] = nlohmann::ordered_json::array();
    for (BehaviorId b : g.nodes()) entry["nodes"].push_back(vocab.name(b));
    entry["edges"] = nlohmann::ordered_json::array();
    for (auto [from, to] : g.edges()) {
      entry["edges"].push_back({vocab.name(from), vocab.name(to)});
    }
    entry["support"] = g.support();
    list.push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << list.dump(2) << '\n';
}

PerturbationGraphSet LoadGraphSet(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  nlohmann::json list;
  try {
    in >> list;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  if (!list.is_array()) throw ParseError(path.string() + ": graph set must be a JSON list", 0);
  PerturbationGraphSet set;
  try {
    for (const auto& entry : list) {
      PerturbationGraph g;
      for (const auto& n : entry.at("nodes")) g.add_node(vocab.id(n.get<std::string>()));
      for (const auto& e : entry.at("edges")) {
        BehaviorId from = vocab.id(e.at(0).get<std::string>());
        BehaviorId to = vocab.id(e.at(1).get<std::string>());
        if (!g.contains(from) || !g.contains(to)) {
          throw ParseError("edge endpoint missing from node list", 0);
        }
        g.add_edge(from, to);
      }
      g.set_support(entry.at("support").get<double>());
      set.graphs.push_back(std::move(g));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return set;
}

}  // namespace seqattack
