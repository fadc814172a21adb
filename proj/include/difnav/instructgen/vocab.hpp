#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "difnav/core/error.hpp"
#include "difnav/core/text.hpp"

namespace difnav::instructgen {

inline constexpr std::size_t kMaxInstructionLength = 32;

/// Bidirectional token string <-> id table.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
        throw FormatError("duplicate vocabulary token: " + tokens_[i]);
    }
  }

  /// Tokens compiled into the library; data/vocab.txt mirrors this list.
  static const Vocabulary& builtin() {
    static const Vocabulary v = [] {
      std::vector<std::string> t = {"[PAD]", "FORWARD", "LEFT",  "RIGHT", "STOP_AT",  "GO_TO", "TURN", "AT",
                                    "THEN",  "AND",     "PAST",  "TOWARD", "UNTIL",  "THE",   "STOP", "HERE",
                                    "ROOM",  "HALL",    "CORRIDOR", "DOOR", "MAZE",  "OPEN",  "FIRST", "SECOND",
                                    "THIRD", "FOURTH",  "FIFTH", "SIXTH", "SEVENTH", "EIGHTH"};
      for (char c = 'A'; c <= 'Z'; ++c) t.emplace_back(1, c);
      return Vocabulary(std::move(t));
    }();
    return v;
  }

  /// Parses "id token" lines; ids must be 0..N-1 in order.
  static Vocabulary parse(std::string_view text) {
    std::vector<std::string> tokens;
    for (const auto& line : split_lines(text)) {
      if (trim(line).empty()) continue;
      const auto w = split_words(line);
      if (w.size() != 2) throw FormatError("vocabulary line must be 'id token': " + line);
      if (parse_int(w[0], "vocabulary id") != static_cast<long long>(tokens.size()))
        throw FormatError("vocabulary ids must be consecutive from 0");
      tokens.push_back(w[1]);
    }
    return Vocabulary(std::move(tokens));
  }

  static Vocabulary load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

  std::string format() const {
    std::string s;
    for (std::size_t i = 0; i < tokens_.size(); ++i) s += std::to_string(i) + " " + tokens_[i] + "\n";
    return s;
  }

  std::size_t size() const { return tokens_.size(); }

  int id(std::string_view token) const {
    const auto it = ids_.find(std::string(token));
    if (it == ids_.end()) throw VocabularyError("unknown token: " + std::string(token));
    return it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw VocabularyError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::vector<int> encode(const std::vector<std::string>& words) const {
    std::vector<int> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id(w));
    return out;
  }

  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

inline std::string landmark_token(int id) { return std::string(1, static_cast<char>('A' + id)); }

inline std::string ordinal_token(int k) {
  static const char* names[] = {"FIRST", "SECOND", "THIRD", "FOURTH", "FIFTH", "SIXTH", "SEVENTH", "EIGHTH"};
  return names[std::min(k, 7)];
}

struct Instruction {
  std::vector<int> tokens;
  bool operator==(const Instruction&) const = default;
};

/// Checks ids and length against a vocabulary.
inline void validate_instruction(const Instruction& ins, const Vocabulary& vocab) {
  if (ins.tokens.empty() || ins.tokens.size() > kMaxInstructionLength)
    throw VocabularyError("instruction length " + std::to_string(ins.tokens.size()) + " outside 1.." +
                          std::to_string(kMaxInstructionLength));
  for (int t : ins.tokens) vocab.token(t);
}

}  // namespace difnav::instructgen
