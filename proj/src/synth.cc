#include "seqattack/synth.h"

#include <algorithm>
#include <array>
#include <random>
#include <string>

#include "seqattack/errors.h"

namespace seqattack {

namespace {

// Ordered so that the first entries form squeezable families.
constexpr std::array kBenignNames = {
    "read",         "readv",        "pread64",   "write",      "writev",   "pwrite64",
    "open",         "openat",       "close",     "stat",       "fstat",    "lstat",
    "mmap",         "munmap",       "brk",       "lseek",      "ioctl",    "fcntl",
    "poll",         "select",       "getdents64", "futex",     "nanosleep", "clock_gettime",
    "getpid",       "getuid",       "gettid",    "rt_sigaction", "rt_sigprocmask", "access",
    "dup",          "pipe",         "sendto",    "recvfrom",   "socket",   "connect",
    "epoll_wait",   "getcwd",       "uname",     "sched_yield"};

constexpr std::array kAttackNames = {
    "setuid",  "execve",  "ptrace",   "mprotect",    "chmod",  "setxattr", "lsetxattr",
    "mknodat", "capset",  "init_module", "prctl",    "io_cancel", "unlink", "kill",
    "setgid",  "chown",   "mount",    "personality", "keyctl", "bpf"};

std::string NameAt(std::size_t i, const auto& table, const char* prefix) {
  if (i < table.size()) return table[i];
  return std::string(prefix) + std::to_string(i);
}

bool IsBenign(BehaviorId t, std::size_t n_benign) {
  return static_cast<std::size_t>(t) < n_benign;
}

std::size_t Uniform(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

bool ContainsGram(std::span<const BehaviorId> tokens, std::span<const BehaviorId> gram) {
  if (gram.empty()) return true;
  return std::search(tokens.begin(), tokens.end(), gram.begin(), gram.end()) != tokens.end();
}

SyntheticCorpus SynthDataset(const SynthConfig& config) {
  if (config.vocab_size < 8) {
    throw ConfigError("vocab_size must be >= 8 to hold disjoint benign and attack subsets");
  }
  if (config.length < 4) throw ConfigError("sequence length must be >= 4");
  if (config.n_benign + config.n_malicious == 0) throw ConfigError("dataset would be empty");
  if (config.context_noise < 0.0 || config.context_noise > 1.0) {
    throw ConfigError("context_noise must lie in [0,1]");
  }
  if (config.num_attack_grams == 0) throw ConfigError("num_attack_grams must be positive");
  if (config.max_gram_length < 2) throw ConfigError("max_gram_length must be at least 2");
  if (config.max_grams_per_sequence == 0) {
    throw ConfigError("max_grams_per_sequence must be positive");
  }
  if (config.length < config.decoy_tokens + 4) {
    throw ConfigError("decoy_tokens leaves too little room in a sequence");
  }

  const std::size_t n_attack = std::max<std::size_t>(3, config.vocab_size / 4);
  const std::size_t n_benign_tokens = config.vocab_size - n_attack;

  SyntheticCorpus corpus;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n_benign_tokens; ++i) {
    names.push_back(NameAt(i, kBenignNames, "benign_"));
    corpus.benign_tokens.push_back(static_cast<BehaviorId>(i));
  }
  for (std::size_t i = 0; i < n_attack; ++i) {
    names.push_back(NameAt(i, kAttackNames, "attack_"));
    corpus.attack_tokens.push_back(static_cast<BehaviorId>(n_benign_tokens + i));
  }
  corpus.vocab = Vocabulary(std::move(names));

  std::mt19937_64 rng(config.seed);

  // Sparse chain: each benign token prefers two successors.
  struct Row {
    BehaviorId first, second;
  };
  std::vector<Row> chain(n_benign_tokens);
  for (std::size_t i = 0; i < n_benign_tokens; ++i) {
    std::size_t a = Uniform(rng, n_benign_tokens);
    std::size_t b = Uniform(rng, n_benign_tokens - 1);
    if (b >= a) ++b;
    chain[i] = {static_cast<BehaviorId>(a), static_cast<BehaviorId>(b)};
  }

  for (std::size_t g = 0; g < config.num_attack_grams; ++g) {
    std::size_t len = 2 + Uniform(rng, config.max_gram_length - 1);
    std::vector<BehaviorId> gram;
    for (std::size_t k = 0; k < len; ++k) gram.push_back(corpus.attack_tokens[Uniform(rng, n_attack)]);
    corpus.planted_grams.push_back(std::move(gram));
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto walk = [&](std::size_t len, double noise) {
    std::vector<BehaviorId> out;
    out.reserve(len);
    BehaviorId cur = static_cast<BehaviorId>(Uniform(rng, n_benign_tokens));
    for (std::size_t i = 0; i < len; ++i) {
      out.push_back(cur);
      double u = unit(rng);
      const Row& row = chain[static_cast<std::size_t>(cur)];
      if (u < noise) {
        cur = static_cast<BehaviorId>(Uniform(rng, n_benign_tokens));
      } else {
        double v = unit(rng);
        if (v < 0.6) {
          cur = row.first;
        } else if (v < 0.9) {
          cur = row.second;
        } else {
          cur = static_cast<BehaviorId>(Uniform(rng, n_benign_tokens));
        }
      }
    }
    return out;
  };

  // Isolated attack tokens; never two in a row.
  auto scatter = [&](std::vector<BehaviorId>& tokens) {
    const std::size_t n = Uniform(rng, config.decoy_tokens + 1);
    for (std::size_t k = 0; k < n; ++k) {
      const auto tok = corpus.attack_tokens[Uniform(rng, n_attack)];
      const std::size_t at = Uniform(rng, tokens.size() + 1);
      const bool left = at > 0 && !IsBenign(tokens[at - 1], n_benign_tokens);
      const bool right = at < tokens.size() && !IsBenign(tokens[at], n_benign_tokens);
      if (left || right) continue;
      tokens.insert(tokens.begin() + static_cast<long>(at), tok);
    }
  };

  for (std::size_t i = 0; i < config.n_benign; ++i) {
    BehaviorSequence s;
    s.label = Label::kBenign;
    s.tokens = walk(config.length - config.decoy_tokens, 0.0);
    scatter(s.tokens);
    corpus.sequences.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < config.n_malicious; ++i) {
    std::size_t count = 1 + Uniform(rng, config.max_grams_per_sequence);
    std::vector<std::vector<BehaviorId>> grams;
    std::size_t planted_len = 0;
    for (std::size_t c = 0; c < count; ++c) {
      const auto& gram = corpus.planted_grams[Uniform(rng, corpus.planted_grams.size())];
      if (planted_len + gram.size() + config.decoy_tokens + 2 > config.length && !grams.empty()) break;
      planted_len += gram.size();
      grams.push_back(gram);
    }
    auto context = walk(config.length - planted_len - config.decoy_tokens, config.context_noise);
    scatter(context);
    std::vector<std::size_t> slots;
    for (std::size_t c = 0; c < grams.size(); ++c) slots.push_back(Uniform(rng, context.size() + 1));
    std::sort(slots.begin(), slots.end());
    BehaviorSequence s;
    s.label = Label::kMalicious;
    std::size_t next = 0;
    for (std::size_t pos = 0; pos <= context.size(); ++pos) {
      while (next < slots.size() && slots[next] == pos) {
        s.tokens.insert(s.tokens.end(), grams[next].begin(), grams[next].end());
        ++next;
      }
      if (pos < context.size()) s.tokens.push_back(context[pos]);
    }
    corpus.sequences.push_back(std::move(s));
  }

  std::shuffle(corpus.sequences.begin(), corpus.sequences.end(), rng);
  for (std::size_t i = 0; i < corpus.sequences.size(); ++i) {
    corpus.sequences[i].origin = "synth:" + std::to_string(config.seed) + ":" + std::to_string(i);
  }
  return corpus;
}

}  // namespace seqattack
