#include "seqattack/trace_io.h"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "seqattack/errors.h"

namespace seqattack {

namespace {

std::vector<std::string> ReadLines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

BehaviorId ParseId(std::string_view field, std::size_t line_no) {
  BehaviorId value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError("malformed token '" + std::string(field) + "'", line_no);
  }
  return value;
}

}  // namespace

std::filesystem::path LabelSidecarPath(const std::filesystem::path& traces) {
  auto p = traces;
  p.replace_extension(".labels");
  return p;
}

std::vector<BehaviorSequence> LoadTraces(const std::filesystem::path& path,
                                         const Vocabulary& vocab,
                                         std::optional<Label> default_label) {
  auto lines = ReadLines(path);
  std::vector<BehaviorSequence> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    BehaviorSequence seq;
    std::string_view rest(line);
    while (!rest.empty()) {
      auto sp = rest.find(' ');
      auto field = rest.substr(0, sp);
      if (field.empty()) throw ParseError("empty token (double space?)", i + 1);
      BehaviorId id = ParseId(field, i + 1);
      if (!vocab.is_behavior(id)) {
        throw ParseError("token id " + std::to_string(id) + " is not a behavior of the vocabulary",
                         i + 1);
      }
      seq.tokens.push_back(id);
      rest = sp == std::string_view::npos ? std::string_view{} : rest.substr(sp + 1);
    }
    if (seq.tokens.empty()) throw ParseError("empty sequence", i + 1);
    seq.origin = path.filename().string() + ":" + std::to_string(i + 1);
    out.push_back(std::move(seq));
  }

  auto sidecar = LabelSidecarPath(path);
  if (std::filesystem::exists(sidecar)) {
    auto labels = ReadLines(sidecar);
    if (labels.size() != out.size()) {
      throw ParseError("label sidecar has " + std::to_string(labels.size()) + " lines for " +
                           std::to_string(out.size()) + " traces",
                       0);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == "0") {
        out[i].label = Label::kBenign;
      } else if (labels[i] == "1") {
        out[i].label = Label::kMalicious;
      } else {
        throw ParseError("label must be 0 or 1 in " + sidecar.filename().string(), i + 1);
      }
    }
  } else if (!out.empty()) {
    if (!default_label) throw ParseError("missing label sidecar " + sidecar.string(), 0);
    for (auto& s : out) s.label = *default_label;
  }
  return out;
}

void SaveTraces(std::span<const BehaviorSequence> seqs, const std::filesystem::path& path) {
  std::ofstream traces(path);
  std::ofstream labels(LabelSidecarPath(path));
  if (!traces || !labels) throw Error("cannot write " + path.string());
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (i) traces << ' ';
      traces << s.tokens[i];
    }
    traces << '\n';
    labels << ToInt(s.label) << '\n';
  }
}

Vocabulary LoadVocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  if (!j.is_object()) throw ParseError(path.string() + ": vocabulary must be a JSON object", 0);
  std::vector<std::string> names(j.size() - (j.contains(Vocabulary::kPadName) ? 1 : 0));
  std::vector<bool> seen(names.size(), false);
  if (!j.contains(Vocabulary::kPadName)) throw ParseError("vocabulary lacks the __pad__ entry", 0);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number_integer()) throw ParseError("id of '" + it.key() + "' not an integer", 0);
    auto id = it.value().get<long long>();
    if (it.key() == Vocabulary::kPadName) {
      if (id != static_cast<long long>(names.size())) {
        throw ParseError("__pad__ must carry the last id (" + std::to_string(names.size()) + ")", 0);
      }
      continue;
    }
    if (id < 0 || id >= static_cast<long long>(names.size()) || seen[static_cast<std::size_t>(id)]) {
      throw ParseError("ids must be unique and contiguous; bad id for '" + it.key() + "'", 0);
    }
    seen[static_cast<std::size_t>(id)] = true;
    names[static_cast<std::size_t>(id)] = it.key();
  }
  return Vocabulary(std::move(names));
}

void SaveVocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < vocab.num_behaviors(); ++i) {
    j[vocab.behavior_names()[i]] = i;
  }
  j[std::string(Vocabulary::kPadName)] = vocab.pad_id();
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace seqattack
