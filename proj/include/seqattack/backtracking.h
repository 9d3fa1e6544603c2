#ifndef SEQATTACK_BACKTRACKING_H_
#define SEQATTACK_BACKTRACKING_H_

#include <optional>
#include <string>
#include <vector>

#include "seqattack/classifier.h"
#include "seqattack/dqn.h"
#include "seqattack/pattern_miner.h"

namespace seqattack {

struct AttackBudget {
  std::size_t max_step = 100;  // global cap on insertions across graphs
  std::size_t mod_limit = 5;   // insertions per graph attempt
  std::size_t query_cap = 500;  // surrogate predictions per attack

  // Throws ConfigError unless all fields are positive.
  void Validate() const;
};

struct SearchState {
  std::vector<BehaviorId> best_seq;
  std::vector<bool> inserted;  // parallel to best_seq
  std::optional<BehaviorId> current_node;
  std::size_t graph_index = 0;
  std::size_t steps = 0;  // insertions under the current graph
};

// All graph nodes before the first insertion under a graph, afterwards the
// successors of the last inserted behavior (possibly none).
std::vector<BehaviorId> CandidateBehaviors(const SearchState& state, const PerturbationGraph& graph);

// Backtracking search over the graph set. `agent` orders candidates; when
// null they are tried in id order. Returns a record whose queries field
// counts surrogate predictions. A sequence the surrogate already calls
// benign yields a record with no insertions and success=true. Throws
// ConfigError for an empty graph set or invalid budget; a budget with
// mod_limit > max_step is refused with an unsuccessful no-op record.
AttackRecord Attack(const BehaviorSequence& seq, const SequenceClassifier& surrogate,
                    const QAgent* agent, const PerturbationGraphSet& graphs,
                    const AttackBudget& budget, std::string id = {});

// True iff every maximal run of consecutive inserted positions is a walk in
// at least one graph.
bool LegalityCheck(const AttackRecord& record, const PerturbationGraphSet& graphs);

// Maximal runs of consecutive inserted positions as token lists.
std::vector<std::vector<BehaviorId>> InsertedRuns(const AttackRecord& record);

}  // namespace seqattack

#endif  // SEQATTACK_BACKTRACKING_H_
