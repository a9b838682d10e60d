// Corpus data model: tokens, nested stance/aspect labels, spans, sentences,
// and the TSV / JSONL readers and writers.
//
// Spans are half-open [start, end) token intervals throughout.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace abam {

// Span length bounds. The maximum segment length is the sentence length.
inline constexpr std::size_t kSegMin = 3;
inline constexpr std::size_t kAspMin = 1;
inline constexpr std::size_t kAspMax = 5;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stance : std::uint8_t { NON, PRO, CON };
enum class Aspect : std::uint8_t { O, ASP };

inline std::string_view to_string(Stance s) {
  switch (s) {
    case Stance::PRO: return "PRO";
    case Stance::CON: return "CON";
    default: return "NON";
  }
}

inline std::string_view to_string(Aspect a) { return a == Aspect::ASP ? "ASP" : "O"; }

inline std::optional<Stance> parse_stance(std::string_view s) {
  if (s == "PRO") return Stance::PRO;
  if (s == "CON") return Stance::CON;
  if (s == "NON") return Stance::NON;
  return std::nullopt;
}

inline std::optional<Aspect> parse_aspect(std::string_view s) {
  if (s == "ASP") return Aspect::ASP;
  if (s == "O") return Aspect::O;
  return std::nullopt;
}

/// One of the five legal (stance, aspect) pairs. (NON, ASP) cannot be built.
class NestedLabel {
 public:
  static constexpr std::size_t kCount = 5;

  constexpr NestedLabel() = default;

  static std::optional<NestedLabel> try_make(Stance s, Aspect a) {
    if (s == Stance::NON && a == Aspect::ASP) return std::nullopt;
    return NestedLabel(s, a);
  }

  static NestedLabel make(Stance s, Aspect a) {
    auto l = try_make(s, a);
    if (!l) throw CorpusError("illegal label pair (NON, ASP): aspects must lie inside argument units");
    return *l;
  }

  /// Index in the order [NON,O], [PRO,O], [PRO,ASP], [CON,O], [CON,ASP].
  constexpr std::size_t index() const {
    switch (stance_) {
      case Stance::NON: return 0;
      case Stance::PRO: return aspect_ == Aspect::ASP ? 2 : 1;
      default: return aspect_ == Aspect::ASP ? 4 : 3;
    }
  }

  static NestedLabel from_index(std::size_t i) {
    static constexpr std::array<std::pair<Stance, Aspect>, kCount> table{{
        {Stance::NON, Aspect::O},
        {Stance::PRO, Aspect::O},
        {Stance::PRO, Aspect::ASP},
        {Stance::CON, Aspect::O},
        {Stance::CON, Aspect::ASP},
    }};
    if (i >= kCount) throw CorpusError("nested label index out of range");
    return NestedLabel(table[i].first, table[i].second);
  }

  constexpr Stance stance() const { return stance_; }
  constexpr Aspect aspect() const { return aspect_; }

  /// "PRO|ASP" style name used in model label sets.
  std::string name() const {
    return std::string(to_string(stance_)) + "|" + std::string(to_string(aspect_));
  }

  friend constexpr bool operator==(NestedLabel, NestedLabel) = default;

 private:
  constexpr NestedLabel(Stance s, Aspect a) : stance_(s), aspect_(a) {}

  Stance stance_ = Stance::NON;
  Aspect aspect_ = Aspect::O;
};

using LabelSeq = std::vector<NestedLabel>;
using FlagSeq = std::vector<Aspect>;

enum class SpanKind : std::uint8_t { PRO, CON, ASP };

inline std::string_view to_string(SpanKind k) {
  switch (k) {
    case SpanKind::PRO: return "PRO";
    case SpanKind::CON: return "CON";
    default: return "ASP";
  }
}

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  SpanKind kind = SpanKind::ASP;

  std::size_t size() const { return end - start; }
  bool contains(std::size_t i) const { return start <= i && i < end; }

  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span& a, const Span& b) {
    if (a.start != b.start) return a.start <=> b.start;
    if (a.end != b.end) return b.end <=> a.end;  // longer first at equal start
    return a.kind <=> b.kind;
  }
};

struct Token {
  std::string surface;
  std::string pos;
  std::string lemma;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Sentence {
  std::string topic_id;
  std::string sentence_id;
  std::vector<Token> tokens;
  LabelSeq labels;

  std::size_t size() const { return tokens.size(); }
  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Corpus {
  std::vector<Sentence> sentences;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }

  /// Topic ids in sorted order.
  std::vector<std::string> topics() const {
    std::set<std::string> ids;
    for (const auto& s : sentences) ids.insert(s.topic_id);
    return {ids.begin(), ids.end()};
  }

  const Sentence* find(std::string_view topic_id, std::string_view sentence_id) const {
    for (const auto& s : sentences)
      if (s.topic_id == topic_id && s.sentence_id == sentence_id) return &s;
    return nullptr;
  }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Topic names of the eight benchmark topics.
inline const std::map<std::string, std::string>& topic_names() {
  static const std::map<std::string, std::string> names{
      {"T1", "abortion"},       {"T2", "cloning"},        {"T3", "marijuana legalization"},
      {"T4", "minimum wage"},   {"T5", "nuclear energy"}, {"T6", "death penalty"},
      {"T7", "gun control"},    {"T8", "school uniforms"},
  };
  return names;
}

inline std::string topic_name(const std::string& topic_id) {
  auto it = topic_names().find(topic_id);
  return it == topic_names().end() ? topic_id : it->second;
}

// ---------------------------------------------------------------------------
// Span extraction

/// Maximal PRO, CON and ASP runs of a label sequence, sorted by Span ordering.
/// An ASP run also ends where the stance changes, so every aspect lies inside
/// one argument unit.
inline std::vector<Span> extract_spans(const LabelSeq& labels) {
  std::vector<Span> spans;
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && labels[j].stance() == labels[i].stance()) ++j;
    if (labels[i].stance() != Stance::NON)
      spans.push_back({i, j, labels[i].stance() == Stance::PRO ? SpanKind::PRO : SpanKind::CON});
    i = j;
  }
  for (std::size_t i = 0; i < n;) {
    if (labels[i].aspect() != Aspect::ASP) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < n && labels[j].aspect() == Aspect::ASP && labels[j].stance() == labels[i].stance()) ++j;
    spans.push_back({i, j, SpanKind::ASP});
    i = j;
  }
  std::sort(spans.begin(), spans.end());
  return spans;
}

/// Maximal ASP runs of a flag sequence.
inline std::vector<Span> extract_spans(const FlagSeq& flags) {
  std::vector<Span> spans;
  for (std::size_t i = 0; i < flags.size();) {
    if (flags[i] != Aspect::ASP) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < flags.size() && flags[j] == Aspect::ASP) ++j;
    spans.push_back({i, j, SpanKind::ASP});
    i = j;
  }
  return spans;
}

/// Inverse of extract_spans for span sets it produced.
inline LabelSeq encode_spans(const std::vector<Span>& spans, std::size_t n) {
  std::vector<Stance> stance(n, Stance::NON);
  std::vector<Aspect> aspect(n, Aspect::O);
  for (const auto& s : spans) {
    if (s.end > n || s.start >= s.end) throw CorpusError("span out of range");
    for (std::size_t i = s.start; i < s.end; ++i) {
      if (s.kind == SpanKind::ASP)
        aspect[i] = Aspect::ASP;
      else
        stance[i] = s.kind == SpanKind::PRO ? Stance::PRO : Stance::CON;
    }
  }
  LabelSeq labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) labels.push_back(NestedLabel::make(stance[i], aspect[i]));
  return labels;
}

inline FlagSeq aspect_flags(const LabelSeq& labels) {
  FlagSeq flags;
  flags.reserve(labels.size());
  for (auto l : labels) flags.push_back(l.aspect());
  return flags;
}

/// Argument units (PRO/CON spans) of a sentence.
inline std::vector<Span> segments(const Sentence& s) {
  std::vector<Span> out;
  for (const auto& sp : extract_spans(s.labels))
    if (sp.kind != SpanKind::ASP) out.push_back(sp);
  return out;
}

// ---------------------------------------------------------------------------
// Validation

/// Returns an empty string when the label sequence satisfies the span
/// constraints, otherwise a description including the offending token index.
inline std::string check_labels(const LabelSeq& labels) {
  const auto spans = extract_spans(labels);
  for (const auto& sp : spans) {
    if (sp.kind != SpanKind::ASP) {
      if (sp.size() < kSegMin)
        return "argument unit shorter than " + std::to_string(kSegMin) + " tokens at token " +
               std::to_string(sp.start);
      continue;
    }
    if (sp.size() > kAspMax)
      return "aspect longer than " + std::to_string(kAspMax) + " tokens at token " + std::to_string(sp.start);
  }
  return {};
}

struct ParseOptions {
  /// Enforce segment/aspect length and nesting constraints. Prediction files
  /// are read with this off; (NON, ASP) is rejected regardless.
  bool enforce_spans = true;
};

namespace detail {

inline std::string where(const std::string& topic, const std::string& sid, std::size_t line) {
  std::string w = "line " + std::to_string(line);
  if (!topic.empty()) w += " (topic " + topic + ", sentence " + sid + ")";
  return w;
}

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline void validate_sentence(const Sentence& s, const ParseOptions& opts, const std::string& loc) {
  if (s.tokens.empty()) throw CorpusError(loc + ": empty sentence");
  if (s.labels.size() != s.tokens.size()) throw CorpusError(loc + ": label count differs from token count");
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    if (s.tokens[i].surface.empty()) throw CorpusError(loc + ": empty surface at token " + std::to_string(i));
    if (s.tokens[i].pos.empty()) throw CorpusError(loc + ": empty pos at token " + std::to_string(i));
  }
  if (opts.enforce_spans) {
    auto err = check_labels(s.labels);
    if (!err.empty()) throw CorpusError(loc + ": " + err);
  }
}

inline void check_unique(const std::vector<Sentence>& sentences) {
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& s : sentences)
    if (!seen.insert({s.topic_id, s.sentence_id}).second)
      throw CorpusError("duplicate sentence id " + s.sentence_id + " in topic " + s.topic_id);
}

inline NestedLabel parse_label(std::string_view stance, std::string_view aspect, const std::string& loc,
                               std::size_t token) {
  auto st = parse_stance(stance);
  if (!st) throw CorpusError(loc + ": unknown stance label \"" + std::string(stance) + "\"");
  auto as = parse_aspect(aspect);
  if (!as) throw CorpusError(loc + ": unknown aspect label \"" + std::string(aspect) + "\"");
  auto l = NestedLabel::try_make(*st, *as);
  if (!l) throw CorpusError(loc + ": (NON, ASP) at token " + std::to_string(token));
  return *l;
}

}  // namespace detail

/// Checks every sentence of an in-memory corpus; throws CorpusError.
inline void validate(const Corpus& corpus, const ParseOptions& opts = {}) {
  for (const auto& s : corpus.sentences)
    detail::validate_sentence(s, opts, "topic " + s.topic_id + ", sentence " + s.sentence_id);
  detail::check_unique(corpus.sentences);
}

// ---------------------------------------------------------------------------
// TSV format: topic_id, sentence_id, token_index, surface, pos, lemma, stance,
// aspect. One token per row, blank line between sentences, '#' comments.

inline Corpus parse_tsv(std::istream& in, const ParseOptions& opts = {}) {
  Corpus corpus;
  Sentence cur;
  std::size_t line_no = 0;
  std::size_t sentence_line = 0;
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    detail::validate_sentence(cur, opts, detail::where(cur.topic_id, cur.sentence_id, sentence_line));
    corpus.sentences.push_back(std::move(cur));
    cur = Sentence{};
  };
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.front() == '#') continue;
    auto cols = detail::split_tabs(line);
    if (cols.size() != 8)
      throw CorpusError(detail::where(cur.topic_id, cur.sentence_id, line_no) + ": expected 8 columns, got " +
                        std::to_string(cols.size()));
    if (cur.tokens.empty()) {
      cur.topic_id = cols[0];
      cur.sentence_id = cols[1];
      sentence_line = line_no;
      if (cur.topic_id.empty() || cur.sentence_id.empty())
        throw CorpusError(detail::where({}, {}, line_no) + ": empty topic or sentence id");
    } else if (cols[0] != cur.topic_id || cols[1] != cur.sentence_id) {
      throw CorpusError(detail::where(cur.topic_id, cur.sentence_id, line_no) +
                        ": sentence id changes without blank separator line");
    }
    const auto loc = detail::where(cur.topic_id, cur.sentence_id, line_no);
    std::size_t index = 0;
    try {
      std::size_t used = 0;
      index = std::stoul(cols[2], &used);
      if (used != cols[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw CorpusError(loc + ": bad token index \"" + cols[2] + "\"");
    }
    if (index != cur.tokens.size())
      throw CorpusError(loc + ": token index " + cols[2] + " out of sequence, expected " +
                        std::to_string(cur.tokens.size()));
    cur.labels.push_back(detail::parse_label(cols[6], cols[7], loc, index));
    cur.tokens.push_back({cols[3], cols[4], cols[5]});
  }
  flush();
  detail::check_unique(corpus.sentences);
  return corpus;
}

inline void write_tsv(std::ostream& out, const Corpus& corpus) {
  out << "# topic_id\tsentence_id\ttoken_index\tsurface\tpos\tlemma\tstance\taspect\n";
  bool first = true;
  for (const auto& s : corpus.sentences) {
    if (!first) out << '\n';
    first = false;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      const auto& t = s.tokens[i];
      out << s.topic_id << '\t' << s.sentence_id << '\t' << i << '\t' << t.surface << '\t' << t.pos << '\t'
          << t.lemma << '\t' << to_string(s.labels[i].stance()) << '\t' << to_string(s.labels[i].aspect())
          << '\n';
    }
  }
}

// JSONL mirror: one sentence object per line with columnar arrays named after
// the TSV columns.

inline nlohmann::json to_json(const Sentence& s) {
  nlohmann::json j;
  j["topic_id"] = s.topic_id;
  j["sentence_id"] = s.sentence_id;
  auto& surface = j["surface"] = nlohmann::json::array();
  auto& pos = j["pos"] = nlohmann::json::array();
  auto& lemma = j["lemma"] = nlohmann::json::array();
  auto& stance = j["stance"] = nlohmann::json::array();
  auto& aspect = j["aspect"] = nlohmann::json::array();
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    surface.push_back(s.tokens[i].surface);
    pos.push_back(s.tokens[i].pos);
    lemma.push_back(s.tokens[i].lemma);
    stance.push_back(to_string(s.labels[i].stance()));
    aspect.push_back(to_string(s.labels[i].aspect()));
  }
  return j;
}

inline Corpus parse_jsonl(std::istream& in, const ParseOptions& opts = {}) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto loc0 = detail::where({}, {}, line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(loc0 + ": " + e.what());
    }
    Sentence s;
    try {
      s.topic_id = j.at("topic_id").get<std::string>();
      s.sentence_id = j.at("sentence_id").get<std::string>();
      const auto& surface = j.at("surface");
      const auto& pos = j.at("pos");
      const auto& lemma = j.at("lemma");
      const auto& stance = j.at("stance");
      const auto& aspect = j.at("aspect");
      const auto n = surface.size();
      if (pos.size() != n || lemma.size() != n || stance.size() != n || aspect.size() != n)
        throw CorpusError(detail::where(s.topic_id, s.sentence_id, line_no) + ": column arrays differ in length");
      const auto loc = detail::where(s.topic_id, s.sentence_id, line_no);
      for (std::size_t i = 0; i < n; ++i) {
        s.tokens.push_back({surface[i].get<std::string>(), pos[i].get<std::string>(), lemma[i].get<std::string>()});
        s.labels.push_back(
            detail::parse_label(stance[i].get<std::string>(), aspect[i].get<std::string>(), loc, i));
      }
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(loc0 + ": " + e.what());
    }
    detail::validate_sentence(s, opts, detail::where(s.topic_id, s.sentence_id, line_no));
    corpus.sentences.push_back(std::move(s));
  }
  detail::check_unique(corpus.sentences);
  return corpus;
}

inline void write_jsonl(std::ostream& out, const Corpus& corpus) {
  for (const auto& s : corpus.sentences) out << to_json(s).dump() << '\n';
}

enum class CorpusFormat { TSV, JSONL };

inline CorpusFormat format_for_path(std::string_view path) {
  return path.ends_with(".jsonl") || path.ends_with(".json") ? CorpusFormat::JSONL : CorpusFormat::TSV;
}

/// Reads TSV or JSONL; the format is sniffed from the first non-comment line.
inline Corpus parse_corpus(std::istream& in, const ParseOptions& opts = {}) {
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    std::string_view line(text.data() + pos, (eol == std::string::npos ? text.size() : eol) - pos);
    if (!line.empty() && line.front() != '#' && line != "\r") {
      std::istringstream is(text);
      return line.front() == '{' ? parse_jsonl(is, opts) : parse_tsv(is, opts);
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  return {};
}

inline Corpus load_corpus(const std::string& path, const ParseOptions& opts = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path);
  return parse_corpus(in, opts);
}

inline void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("cannot write " + path);
  if (format_for_path(path) == CorpusFormat::JSONL)
    write_jsonl(out, corpus);
  else
    write_tsv(out, corpus);
}

}  // namespace abam
