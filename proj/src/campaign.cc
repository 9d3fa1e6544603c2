#include "seqattack/campaign.h"

#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "seqattack/errors.h"

namespace seqattack {

void ParallelFor(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<AttackRecord> RunCampaign(std::span<const BehaviorSequence> sequences,
                                      const SequenceClassifier& surrogate, const QAgent* agent,
                                      const PerturbationGraphSet& graphs,
                                      const AttackBudget& budget, std::size_t workers) {
  std::vector<AttackRecord> records(sequences.size());
  ParallelFor(sequences.size(), workers, [&](std::size_t i) {
    std::string id = sequences[i].origin.empty() ? "seq" + std::to_string(i) : sequences[i].origin;
    records[i] = Attack(sequences[i], surrogate, agent, graphs, budget, id);
  });
  return records;
}

std::vector<BehaviorSequence> DetectedMalicious(std::span<const BehaviorSequence> sequences,
                                                const SequenceClassifier& model,
                                                std::size_t limit) {
  std::vector<BehaviorSequence> out;
  for (const auto& s : sequences) {
    if (limit != 0 && out.size() >= limit) break;
    if (s.label == Label::kMalicious && Predict(model, s.tokens) == Label::kMalicious) {
      out.push_back(s);
    }
  }
  return out;
}

std::optional<double> TransferStats::success_rate() const {
  if (eligible == 0) return std::nullopt;
  return static_cast<double>(evaded) / static_cast<double>(eligible);
}

std::optional<double> TransferStats::overall_success_rate() const {
  if (overall_eligible == 0) return std::nullopt;
  return static_cast<double>(overall_evaded) / static_cast<double>(overall_eligible);
}

TransferStats EvaluateTransfer(std::span<const AttackRecord> records,
                               const SequenceClassifier& target, std::string name) {
  TransferStats stats;
  stats.target = std::move(name);
  for (const auto& r : records) {
    if (Predict(target, r.original.tokens) != Label::kMalicious) continue;
    const bool evaded = Predict(target, r.adversarial.tokens) == Label::kBenign;
    ++stats.overall_eligible;
    stats.overall_evaded += evaded ? 1 : 0;
    if (r.success) {
      ++stats.eligible;
      stats.evaded += evaded ? 1 : 0;
    }
  }
  return stats;
}

CampaignSummary Summarize(std::span<const AttackRecord> records) {
  CampaignSummary s;
  s.records = records.size();
  s.success_rate = SuccessRate(records);
  s.perturbation_rate = PerturbationRate(records);
  double queries = 0.0;
  for (const auto& r : records) {
    s.successes += r.success ? 1 : 0;
    queries += static_cast<double>(r.queries);
  }
  s.mean_queries = queries / static_cast<double>(records.size());
  return s;
}

namespace {

std::vector<std::string> Names(const std::vector<BehaviorId>& tokens, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (auto t : tokens) out.push_back(vocab.name(t));
  return out;
}

std::vector<BehaviorId> Ids(const std::vector<std::string>& names, const Vocabulary& vocab) {
  std::vector<BehaviorId> out;
  for (const auto& n : names) out.push_back(vocab.id(n));
  return out;
}

nlohmann::ordered_json OptionalRate(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

}  // namespace

void SaveRecords(std::span<const AttackRecord> records, const Vocabulary& vocab,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["success"] = r.success;
    j["insertions"] = r.inserted_positions.size();
    j["pr"] = static_cast<double>(r.inserted_positions.size()) /
              static_cast<double>(r.original.tokens.size());
    j["queries"] = r.queries;
    if (r.graph_index) {
      j["graph_index"] = *r.graph_index;
    } else {
      j["graph_index"] = nullptr;
    }
    j["label"] = ToInt(r.original.label);
    j["original"] = Names(r.original.tokens, vocab);
    j["adversarial"] = Names(r.adversarial.tokens, vocab);
    j["inserted_positions"] = r.inserted_positions;
    out << j.dump() << '\n';
  }
}

std::vector<AttackRecord> LoadRecords(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::vector<AttackRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      AttackRecord r;
      r.id = j.at("id").get<std::string>();
      r.success = j.at("success").get<bool>();
      r.queries = j.at("queries").get<std::size_t>();
      if (!j.at("graph_index").is_null()) r.graph_index = j.at("graph_index").get<std::size_t>();
      r.original.tokens = Ids(j.at("original").get<std::vector<std::string>>(), vocab);
      r.original.label = LabelFromInt(j.at("label").get<int>());
      r.original.origin = r.id;
      r.adversarial.tokens = Ids(j.at("adversarial").get<std::vector<std::string>>(), vocab);
      r.adversarial.label = r.success ? Label::kBenign : Label::kMalicious;
      r.adversarial.origin = r.id;
      r.inserted_positions = j.at("inserted_positions").get<std::vector<std::size_t>>();
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    } catch (const LookupError& e) {
      throw ParseError(path.string() + ": " + e.what(), line_no);
    }
  }
  return records;
}

void SaveSummary(const CampaignSummary& s, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["records"] = s.records;
  j["successes"] = s.successes;
  j["sr"] = s.success_rate;
  j["pr"] = s.perturbation_rate;
  j["mean_queries"] = s.mean_queries;
  j["transfer"] = nlohmann::ordered_json::array();
  for (const auto& t : s.transfer) {
    j["transfer"].push_back({{"target", t.target},
                             {"eligible", t.eligible},
                             {"evaded", t.evaded},
                             {"sr", OptionalRate(t.success_rate())},
                             {"overall_eligible", t.overall_eligible},
                             {"overall_evaded", t.overall_evaded},
                             {"overall_sr", OptionalRate(t.overall_success_rate())}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace seqattack
