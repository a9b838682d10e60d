// Part-of-speech pattern matching for aspect candidates and the
// pattern-match baseline labeler.

#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "abam/corpus.hpp"
#include "abam/stats.hpp"

namespace abam {

class PatternError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using PosPattern = std::vector<std::string>;

inline std::string join(const std::vector<std::string>& parts, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// An ordered set of distinct PoS patterns of length 1..5.
class PatternSet {
 public:
  PatternSet() = default;

  explicit PatternSet(std::vector<PosPattern> patterns) {
    for (auto& p : patterns) add(std::move(p));
  }

  void add(PosPattern p) {
    if (p.size() < kAspMin || p.size() > kAspMax)
      throw PatternError("pattern length must be in [1, 5]: \"" + join(p) + "\"");
    auto key = join(p);
    if (!keys_.insert(key).second) throw PatternError("duplicate pattern \"" + key + "\"");
    max_len_ = std::max(max_len_, p.size());
    patterns_.push_back(std::move(p));
  }

  std::size_t size() const { return patterns_.size(); }
  const std::vector<PosPattern>& patterns() const { return patterns_; }
  std::size_t max_length() const { return max_len_; }

  bool contains(const PosPattern& p) const { return keys_.count(join(p)) != 0; }
  bool contains_key(const std::string& key) const { return keys_.count(key) != 0; }

 private:
  std::vector<PosPattern> patterns_;
  std::unordered_set<std::string> keys_;
  std::size_t max_len_ = 0;
};

/// The 44 aspect-candidate patterns, column by column.
inline const char* const kDefaultPatternText =
    "NN\n"
    "NNS\n"
    "NN NN\n"
    "NN NNS\n"
    "JJ NN\n"
    "JJ NNS\n"
    "NN NN NN\n"
    "NN NN NNS\n"
    "NN IN NN\n"
    "NN IN NNS\n"
    "NN HYPH NN\n"
    "NN HYPH NNS\n"
    "NN JJ NN\n"
    "NN JJ NNS\n"
    "NNS JJ NN\n"
    "NNS JJ NNS\n"
    "NN POS NN\n"
    "NN POS NNS\n"
    "NNS POS NN\n"
    "NNS POS NNS\n"
    "IN NN NN\n"
    "IN NN NNS\n"
    "JJ NN NN\n"
    "JJ NN NNS\n"
    "JJ JJ NN\n"
    "JJ JJ NNS\n"
    "NN HYPH NN NN\n"
    "NN HYPH NN NNS\n"
    "NN POS JJ NN\n"
    "NN POS JJ NNS\n"
    "JJ HYPH NN NN\n"
    "JJ HYPH NN NNS\n"
    "JJ HYPH JJ NN\n"
    "JJ HYPH JJ NNS\n"
    "JJ JJ NN NN\n"
    "JJ JJ NN NNS\n"
    "JJ NN HYPH NN\n"
    "JJ NN HYPH NNS\n"
    "JJ NN JJ NN\n"
    "JJ NN JJ NNS\n"
    "JJ NN NN NN\n"
    "JJ NN NN NNS\n"
    "JJ HYPH NN NN NN\n"
    "JJ HYPH NN NN NNS\n";

/// Reads one space-separated tag sequence per line. Blank lines and lines
/// starting with '#' are skipped.
inline PatternSet parse_patterns(std::istream& in) {
  PatternSet set;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    PosPattern p;
    for (std::string tag; ls >> tag;) p.push_back(tag);
    if (p.empty() || p.front().starts_with('#')) continue;
    set.add(std::move(p));
  }
  return set;
}

inline PatternSet load_patterns(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PatternError("cannot open " + path);
  return parse_patterns(in);
}

inline const PatternSet& default_patterns() {
  static const PatternSet set = [] {
    std::istringstream in(kDefaultPatternText);
    return parse_patterns(in);
  }();
  return set;
}

struct Candidate {
  Span span;
  std::string surface;
  PosPattern pattern;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

inline std::string surface_of(std::span<const Token> tokens, std::size_t start, std::size_t end) {
  std::string s;
  for (std::size_t i = start; i < end; ++i) {
    if (i > start) s += ' ';
    s += tokens[i].surface;
  }
  return s;
}

/// Every window whose tag sequence equals a pattern, ordered by (start, end).
inline std::vector<Candidate> match_all(std::span<const Token> tokens, const PatternSet& patterns) {
  std::vector<Candidate> out;
  const auto n = tokens.size();
  for (std::size_t start = 0; start < n; ++start) {
    std::string key;
    for (std::size_t end = start + 1; end <= n && end - start <= patterns.max_length(); ++end) {
      if (end > start + 1) key += ' ';
      key += tokens[end - 1].pos;
      if (!patterns.contains_key(key)) continue;
      PosPattern tags;
      for (std::size_t i = start; i < end; ++i) tags.push_back(tokens[i].pos);
      out.push_back({{start, end, SpanKind::ASP}, surface_of(tokens, start, end), std::move(tags)});
    }
  }
  return out;
}

/// Token-level union of all pattern matches.
inline FlagSeq baseline_labels(std::span<const Token> tokens, const PatternSet& patterns) {
  FlagSeq flags(tokens.size(), Aspect::O);
  for (const auto& c : match_all(tokens, patterns))
    for (std::size_t i = c.span.start; i < c.span.end; ++i) flags[i] = Aspect::ASP;
  return flags;
}

/// One entry of an annotation menu. A surface form that matches at several
/// positions is listed once and covers all of its occurrences.
struct MenuItem {
  std::string text;
  std::vector<Span> occurrences;
  PosPattern pattern;

  friend bool operator==(const MenuItem&, const MenuItem&) = default;
};

inline constexpr std::string_view kNoneOption = "NONE";

/// Candidates offered to annotators for one argument unit. The NONE option is
/// implicit and always last.
struct CandidateMenu {
  std::vector<MenuItem> items;

  /// Display strings in order, NONE last.
  std::vector<std::string> options() const {
    std::vector<std::string> out;
    for (const auto& it : items) out.push_back(it.text);
    out.emplace_back(kNoneOption);
    return out;
  }
};

inline CandidateMenu generate_candidates(std::span<const Token> segment, const PatternSet& patterns) {
  if (segment.size() < kSegMin)
    throw PatternError("segment shorter than " + std::to_string(kSegMin) + " tokens");
  CandidateMenu menu;
  std::vector<std::string> keys;
  for (auto& c : match_all(segment, patterns)) {
    auto key = to_lower(c.surface);
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it != keys.end()) {
      menu.items[static_cast<std::size_t>(it - keys.begin())].occurrences.push_back(c.span);
      continue;
    }
    keys.push_back(std::move(key));
    menu.items.push_back({std::move(c.surface), {c.span}, std::move(c.pattern)});
  }
  return menu;
}

}  // namespace abam
