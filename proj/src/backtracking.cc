#include "seqattack/backtracking.h"

#include <algorithm>

#include "seqattack/errors.h"

namespace seqattack {

void AttackBudget::Validate() const {
  if (max_step == 0 || mod_limit == 0 || query_cap == 0) {
    throw ConfigError("attack budget fields must be positive");
  }
}

std::vector<BehaviorId> CandidateBehaviors(const SearchState& state, const PerturbationGraph& graph) {
  if (!state.current_node) return graph.nodes();
  if (!graph.contains(*state.current_node)) return {};
  return graph.successors(*state.current_node);
}

namespace {

// The run of inserted tokens that would contain a behavior placed before
// index `pos` of the current sequence.
std::vector<BehaviorId> RunAfterInsert(const SearchState& s, std::size_t pos, BehaviorId b) {
  std::size_t lo = pos;
  while (lo > 0 && s.inserted[lo - 1]) --lo;
  std::size_t hi = pos;
  while (hi < s.best_seq.size() && s.inserted[hi]) ++hi;
  std::vector<BehaviorId> run(s.best_seq.begin() + static_cast<long>(lo),
                              s.best_seq.begin() + static_cast<long>(pos));
  run.push_back(b);
  run.insert(run.end(), s.best_seq.begin() + static_cast<long>(pos),
             s.best_seq.begin() + static_cast<long>(hi));
  return run;
}

std::vector<std::size_t> PositionsOf(const std::vector<bool>& inserted) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < inserted.size(); ++i) {
    if (inserted[i]) out.push_back(i);
  }
  return out;
}

}  // namespace

AttackRecord Attack(const BehaviorSequence& seq, const SequenceClassifier& surrogate,
                    const QAgent* agent, const PerturbationGraphSet& graphs,
                    const AttackBudget& budget, std::string id) {
  budget.Validate();
  if (graphs.empty()) throw ConfigError("attack needs a non-empty graph set");
  if (seq.tokens.empty()) throw EncodingError("cannot attack an empty sequence");

  AttackRecord record;
  record.id = id.empty() ? seq.origin : std::move(id);
  record.original = seq;
  record.adversarial = seq;
  record.adversarial.label = Label::kMalicious;
  if (budget.mod_limit > budget.max_step) return record;

  std::size_t queries = 0;
  auto query = [&](std::span<const BehaviorId> tokens) {
    ++queries;
    return surrogate.PredictProba(tokens);
  };

  const Probabilities initial = query(seq.tokens);
  if (initial.verdict() == Label::kBenign) {
    record.success = true;
    record.adversarial.label = Label::kBenign;
    record.queries = queries;
    return record;
  }

  double best_p = initial.malicious;
  SearchState best;
  best.best_seq = seq.tokens;
  best.inserted.assign(seq.tokens.size(), false);
  std::optional<std::size_t> best_graph;
  std::size_t total_insertions = 0;

  for (std::size_t g = 0; g < graphs.size(); ++g) {
    const PerturbationGraph& graph = graphs.graphs[g];
    SearchState state;
    state.best_seq = seq.tokens;
    state.inserted.assign(seq.tokens.size(), false);
    state.graph_index = g;
    for (std::size_t k = 1; k <= budget.mod_limit; ++k) {
      if (queries >= budget.query_cap || total_insertions >= budget.max_step) break;
      auto candidates = CandidateBehaviors(state, graph);
      if (candidates.empty()) break;
      std::vector<BehaviorId> ranked =
          agent ? GreedyRanking(*agent, state.best_seq, candidates) : candidates;
      if (!agent) std::sort(ranked.begin(), ranked.end());

      const auto mags = PositionGradients(surrogate, state.best_seq, Label::kMalicious);
      const std::size_t valid = std::min(state.best_seq.size(), surrogate.max_len());
      const auto order = RankPositions(mags, valid);

      // Highest-Q behavior, at the k-th best position or the next rank
      // down that keeps the surrounding inserted run a walk.
      std::optional<std::pair<BehaviorId, std::size_t>> choice;
      for (BehaviorId b : ranked) {
        for (std::size_t r = 0; r < order.size() && !choice; ++r) {
          const std::size_t pos = order[(k - 1 + r) % order.size()];
          if (graph.is_walk(RunAfterInsert(state, pos, b))) choice.emplace(b, pos);
        }
        if (choice) break;
      }
      if (!choice) break;

      auto [b, pos] = *choice;
      state.best_seq = Insert(state.best_seq, b, pos + 1);
      state.inserted.insert(state.inserted.begin() + static_cast<long>(pos), true);
      state.current_node = b;
      ++state.steps;
      ++total_insertions;

      const Probabilities p = query(state.best_seq);
      if (p.malicious < best_p) {
        best_p = p.malicious;
        best = state;
        best_graph = g;
      }
      if (p.verdict() == Label::kBenign) {
        record.success = true;
        record.adversarial.tokens = state.best_seq;
        record.adversarial.label = Label::kBenign;
        record.inserted_positions = PositionsOf(state.inserted);
        record.graph_index = g;
        record.queries = queries;
        return record;
      }
    }
    if (queries >= budget.query_cap || total_insertions >= budget.max_step) break;
  }

  record.adversarial.tokens = best.best_seq;
  record.inserted_positions = PositionsOf(best.inserted);
  record.graph_index = best_graph;
  record.queries = queries;
  return record;
}

std::vector<std::vector<BehaviorId>> InsertedRuns(const AttackRecord& record) {
  std::vector<std::vector<BehaviorId>> runs;
  const auto& pos = record.inserted_positions;
  const auto& tokens = record.adversarial.tokens;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    if (i == 0 || pos[i] != pos[i - 1] + 1) runs.emplace_back();
    runs.back().push_back(tokens.at(pos[i]));
  }
  return runs;
}

bool LegalityCheck(const AttackRecord& record, const PerturbationGraphSet& graphs) {
  for (const auto& run : InsertedRuns(record)) {
    bool ok = std::any_of(graphs.graphs.begin(), graphs.graphs.end(),
                          [&](const PerturbationGraph& g) { return g.is_walk(run); });
    if (!ok) return false;
  }
  return true;
}

}  // namespace seqattack
