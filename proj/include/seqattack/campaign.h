#ifndef SEQATTACK_CAMPAIGN_H_
#define SEQATTACK_CAMPAIGN_H_

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqattack/backtracking.h"
#include "seqattack/classifier.h"

namespace seqattack {

// Attacks every sequence against the surrogate. Work is split across
// `workers` threads; records come back in input order regardless.
std::vector<AttackRecord> RunCampaign(std::span<const BehaviorSequence> sequences,
                                      const SequenceClassifier& surrogate, const QAgent* agent,
                                      const PerturbationGraphSet& graphs,
                                      const AttackBudget& budget, std::size_t workers = 1);

// Malicious sequences the classifier detects, in input order, at most
// `limit` of them (0 = no limit).
std::vector<BehaviorSequence> DetectedMalicious(std::span<const BehaviorSequence> sequences,
                                                const SequenceClassifier& model,
                                                std::size_t limit = 0);

struct TransferStats {
  std::string target;
  // Surrogate-successful records whose original the target detects.
  std::size_t eligible = 0;
  std::size_t evaded = 0;
  // All records whose original the target detects.
  std::size_t overall_eligible = 0;
  std::size_t overall_evaded = 0;

  std::optional<double> success_rate() const;
  std::optional<double> overall_success_rate() const;
};

TransferStats EvaluateTransfer(std::span<const AttackRecord> records,
                               const SequenceClassifier& target, std::string name);

struct CampaignSummary {
  std::size_t records = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  double perturbation_rate = 0.0;
  double mean_queries = 0.0;
  std::vector<TransferStats> transfer;
};

// Throws MetricError for an empty record set.
CampaignSummary Summarize(std::span<const AttackRecord> records);

// Line-delimited records with behavior names.
void SaveRecords(std::span<const AttackRecord> records, const Vocabulary& vocab,
                 const std::filesystem::path& path);
std::vector<AttackRecord> LoadRecords(const std::filesystem::path& path, const Vocabulary& vocab);

void SaveSummary(const CampaignSummary& summary, const std::filesystem::path& path);

// Runs fn(i) for i in [0, n) on up to `workers` threads (static striping).
void ParallelFor(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace seqattack

#endif  // SEQATTACK_CAMPAIGN_H_
