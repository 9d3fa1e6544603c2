#ifndef SEQATTACK_TRACE_IO_H_
#define SEQATTACK_TRACE_IO_H_

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "seqattack/sequence.h"

namespace seqattack {

// Trace files hold one sequence per line as space-separated decimal ids.
// Labels live in a sidecar with the same basename and a `.labels`
// extension, one 0/1 per line, aligned with the trace lines.
std::filesystem::path LabelSidecarPath(const std::filesystem::path& traces);

// Reads traces and their sidecar. When the sidecar is missing,
// `default_label` is applied; without one that is a ParseError.
std::vector<BehaviorSequence> LoadTraces(const std::filesystem::path& path,
                                         const Vocabulary& vocab,
                                         std::optional<Label> default_label = std::nullopt);

void SaveTraces(std::span<const BehaviorSequence> seqs, const std::filesystem::path& path);

// JSON object name -> id including the "__pad__" entry.
Vocabulary LoadVocabulary(const std::filesystem::path& path);
void SaveVocabulary(const Vocabulary& vocab, const std::filesystem::path& path);

}  // namespace seqattack

#endif  // SEQATTACK_TRACE_IO_H_
