#ifndef SEQATTACK_SYNTH_H_
#define SEQATTACK_SYNTH_H_

#include <cstdint>
#include <vector>

#include "seqattack/sequence.h"

namespace seqattack {

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_benign = 0;
  std::size_t n_malicious = 0;
  std::size_t vocab_size = 32;
  std::size_t length = 20;
  // Probability that a step of the malicious background leaves the benign
  // Markov chain for a uniform benign token.
  double context_noise = 0.5;
  std::size_t num_attack_grams = 6;
  // Planted grams have 2..max_gram_length tokens.
  std::size_t max_gram_length = 3;
  // Malicious sequences carry 1..max_grams_per_sequence planted grams.
  std::size_t max_grams_per_sequence = 3;
  // Up to this many isolated attack tokens are scattered into every
  // sequence of either class, so only contiguous grams separate them.
  std::size_t decoy_tokens = 0;
};

struct SyntheticCorpus {
  Vocabulary vocab;
  std::vector<BehaviorSequence> sequences;
  std::vector<BehaviorId> benign_tokens;
  std::vector<BehaviorId> attack_tokens;
  std::vector<std::vector<BehaviorId>> planted_grams;
};

// Desk-scale labeled corpus. Benign sequences walk a sparse Markov chain
// over the benign token subset; malicious ones carry 1-3 planted n-grams
// over the disjoint attack subset inside a noisier benign background.
// Deterministic under the seed (chain, grams and samples all derive from
// it).
SyntheticCorpus SynthDataset(const SynthConfig& config);

// True if `tokens` contains `gram` as a contiguous run.
bool ContainsGram(std::span<const BehaviorId> tokens, std::span<const BehaviorId> gram);

}  // namespace seqattack

#endif  // SEQATTACK_SYNTH_H_
