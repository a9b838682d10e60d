// Span-level F1 with seqeval semantics, token-level accuracy/precision/recall,
// and Cohen's kappa.

#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "abam/corpus.hpp"
#include "json.hpp"

namespace abam {

class EvalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t true_positives = 0;
  std::size_t gold = 0;  // support
  std::size_t predicted = 0;
};

inline double safe_div(double num, double den) { return den == 0 ? 0.0 : num / den; }

inline Prf make_prf(std::size_t tp, std::size_t gold, std::size_t pred) {
  Prf r;
  r.true_positives = tp;
  r.gold = gold;
  r.predicted = pred;
  r.precision = safe_div(static_cast<double>(tp), static_cast<double>(pred));
  r.recall = safe_div(static_cast<double>(tp), static_cast<double>(gold));
  r.f1 = safe_div(2 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

struct MetricReport {
  std::map<std::string, Prf> per_type;
  double macro_f1 = 0;
  // NS only: macro over {PRO, CON}, and ASP alone.
  std::optional<double> stance_macro_f1;
  std::optional<double> aspect_f1;
  // Chunking semantics recorded for report metadata.
  std::string scheme = "IOB2";
  std::string mode = "default";
};

// ---------------------------------------------------------------------------
// IOB2 conversion and seqeval-style chunking.

/// Run-based labels of one layer to IOB2 tags ("O", "B-X", "I-X").
/// `types[i]` is the span type of token i, empty for outside.
inline std::vector<std::string> to_iob2(const std::vector<std::string>& types) {
  std::vector<std::string> tags;
  tags.reserve(types.size());
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i].empty())
      tags.emplace_back("O");
    else if (i > 0 && types[i - 1] == types[i])
      tags.push_back("I-" + types[i]);
    else
      tags.push_back("B-" + types[i]);
  }
  return tags;
}

using TypedSpan = std::tuple<std::string, std::size_t, std::size_t>;

/// Chunks of an IOB2 sequence with seqeval's default (lenient) rules: a chunk
/// starts at B, or at I following O or a different type.
inline std::vector<TypedSpan> iob2_chunks(const std::vector<std::string>& tags) {
  std::vector<TypedSpan> chunks;
  std::string prev_tag = "O", prev_type;
  std::size_t begin = 0;
  auto split = [](const std::string& t) -> std::pair<char, std::string> {
    if (t == "O" || t.size() < 2) return {'O', ""};
    return {t[0], t.substr(2)};
  };
  for (std::size_t i = 0; i <= tags.size(); ++i) {
    auto [tag, type] = i < tags.size() ? split(tags[i]) : std::pair<char, std::string>{'O', ""};
    const char p = prev_tag[0];
    const bool end_chunk = p != 'O' && (tag == 'B' || tag == 'O' || type != prev_type);
    const bool start_chunk = tag != 'O' && (tag == 'B' || p == 'O' || type != prev_type);
    if (end_chunk) chunks.emplace_back(prev_type, begin, i);
    if (start_chunk) begin = i;
    prev_tag = std::string(1, tag);
    prev_type = type;
  }
  return chunks;
}

namespace detail {

inline std::vector<std::string> aspect_layer(const FlagSeq& flags) {
  std::vector<std::string> types(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i)
    if (flags[i] == Aspect::ASP) types[i] = "ASP";
  return types;
}

/// IOB2 aspect tags of a nested sequence; an aspect restarts where the
/// stance changes.
inline std::vector<std::string> aspect_tags(const LabelSeq& labels) {
  std::vector<std::string> tags;
  tags.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].aspect() != Aspect::ASP)
      tags.emplace_back("O");
    else if (i > 0 && labels[i - 1].aspect() == Aspect::ASP && labels[i - 1].stance() == labels[i].stance())
      tags.emplace_back("I-ASP");
    else
      tags.emplace_back("B-ASP");
  }
  return tags;
}

inline std::vector<std::string> stance_layer(const LabelSeq& labels) {
  std::vector<std::string> types(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i].stance() != Stance::NON) types[i] = std::string(to_string(labels[i].stance()));
  return types;
}

struct Tally {
  std::map<std::string, std::size_t> tp, gold, pred;

  void add(const std::vector<TypedSpan>& g, const std::vector<TypedSpan>& p) {
    std::set<TypedSpan> gs(g.begin(), g.end());
    for (const auto& s : g) ++gold[std::get<0>(s)];
    for (const auto& s : p) {
      ++pred[std::get<0>(s)];
      if (gs.count(s)) ++tp[std::get<0>(s)];
    }
  }

  MetricReport report() const {
    MetricReport r;
    std::set<std::string> types;
    for (const auto& [t, c] : gold) types.insert(t);
    for (const auto& [t, c] : pred) types.insert(t);
    double sum = 0;
    for (const auto& t : types) {
      auto get = [&](const std::map<std::string, std::size_t>& m) {
        auto it = m.find(t);
        return it == m.end() ? std::size_t{0} : it->second;
      };
      r.per_type[t] = make_prf(get(tp), get(gold), get(pred));
      sum += r.per_type[t].f1;
    }
    // Nothing to find and nothing predicted: the span sets are equal.
    r.macro_f1 = types.empty() ? 1.0 : sum / static_cast<double>(types.size());
    return r;
  }
};

inline double macro_of(const MetricReport& r, std::initializer_list<const char*> types) {
  double sum = 0;
  std::size_t n = 0;
  for (const char* t : types) {
    auto it = r.per_type.find(t);
    if (it == r.per_type.end()) continue;
    sum += it->second.f1;
    ++n;
  }
  return n == 0 ? 1.0 : sum / static_cast<double>(n);
}

template <class Seq>
void check_shapes(const std::vector<Seq>& gold, const std::vector<Seq>& pred) {
  if (gold.size() != pred.size())
    throw EvalError("shape mismatch: " + std::to_string(gold.size()) + " gold vs " + std::to_string(pred.size()) +
                    " predicted sequences");
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (gold[i].size() != pred[i].size())
      throw EvalError("shape mismatch in sequence " + std::to_string(i));
}

}  // namespace detail

/// ATE: exact-match F1 over ASP spans. With a single type the macro-F1 is the
/// plain span F1.
inline MetricReport span_f1(const std::vector<FlagSeq>& gold, const std::vector<FlagSeq>& pred) {
  detail::check_shapes(gold, pred);
  detail::Tally tally;
  for (std::size_t i = 0; i < gold.size(); ++i)
    tally.add(iob2_chunks(to_iob2(detail::aspect_layer(gold[i]))),
              iob2_chunks(to_iob2(detail::aspect_layer(pred[i]))));
  auto r = tally.report();
  r.aspect_f1 = r.per_type.count("ASP") ? r.per_type["ASP"].f1 : r.macro_f1;
  return r;
}

/// NS: exact-match F1 per type over {PRO, CON, ASP}; the headline macro-F1
/// averages the types that have gold or predicted support.
inline MetricReport span_f1(const std::vector<LabelSeq>& gold, const std::vector<LabelSeq>& pred) {
  detail::check_shapes(gold, pred);
  detail::Tally tally;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto g = iob2_chunks(to_iob2(detail::stance_layer(gold[i])));
    auto p = iob2_chunks(to_iob2(detail::stance_layer(pred[i])));
    auto ga = iob2_chunks(detail::aspect_tags(gold[i]));
    auto pa = iob2_chunks(detail::aspect_tags(pred[i]));
    g.insert(g.end(), ga.begin(), ga.end());
    p.insert(p.end(), pa.begin(), pa.end());
    tally.add(g, p);
  }
  auto r = tally.report();
  r.stance_macro_f1 = detail::macro_of(r, {"PRO", "CON"});
  r.aspect_f1 = detail::macro_of(r, {"ASP"});
  return r;
}

struct TokenMetrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  std::size_t tokens = 0;
};

/// Micro-averaged token metrics. A true positive is a token whose predicted
/// label is positive and equals the gold label.
template <class Label, class IsPositive>
TokenMetrics token_metrics(const std::vector<std::vector<Label>>& gold, const std::vector<std::vector<Label>>& pred,
                           IsPositive is_positive) {
  detail::check_shapes(gold, pred);
  std::size_t total = 0, correct = 0, tp = 0, pred_pos = 0, gold_pos = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (std::size_t j = 0; j < gold[i].size(); ++j) {
      const auto& g = gold[i][j];
      const auto& p = pred[i][j];
      ++total;
      if (g == p) ++correct;
      const bool gp = is_positive(g), pp = is_positive(p);
      gold_pos += gp;
      pred_pos += pp;
      if (pp && g == p) ++tp;
    }
  }
  TokenMetrics m;
  m.tokens = total;
  m.accuracy = safe_div(static_cast<double>(correct), static_cast<double>(total));
  m.precision = safe_div(static_cast<double>(tp), static_cast<double>(pred_pos));
  m.recall = safe_div(static_cast<double>(tp), static_cast<double>(gold_pos));
  return m;
}

inline TokenMetrics token_metrics(const std::vector<FlagSeq>& gold, const std::vector<FlagSeq>& pred) {
  return token_metrics(gold, pred, [](Aspect a) { return a == Aspect::ASP; });
}

inline TokenMetrics token_metrics(const std::vector<LabelSeq>& gold, const std::vector<LabelSeq>& pred) {
  return token_metrics(gold, pred, [](NestedLabel l) { return l.index() != 0; });
}

/// Cohen's kappa over two binary token selections of equal length.
inline double cohen_kappa(const std::vector<bool>& a, const std::vector<bool>& b) {
  if (a.size() != b.size()) throw EvalError("shape mismatch: annotation vectors differ in length");
  if (a.empty()) throw EvalError("cohen_kappa needs at least one token");
  std::size_t n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i]) ++n11;
    else if (a[i]) ++n10;
    else if (b[i]) ++n01;
    else ++n00;
  }
  const double n = static_cast<double>(a.size());
  const double po = static_cast<double>(n11 + n00) / n;
  const double a1 = static_cast<double>(n11 + n10) / n, b1 = static_cast<double>(n11 + n01) / n;
  const double pe = a1 * b1 + (1 - a1) * (1 - b1);
  if (pe >= 1.0) return 1.0;
  return (po - pe) / (1 - pe);
}

inline nlohmann::json to_json(const Prf& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1},
          {"tp", p.true_positives},   {"gold", p.gold},     {"predicted", p.predicted}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  for (const auto& [t, p] : r.per_type) j["per_type"][t] = to_json(p);
  j["macro_f1"] = r.macro_f1;
  if (r.stance_macro_f1) j["stance_macro_f1"] = *r.stance_macro_f1;
  if (r.aspect_f1) j["aspect_f1"] = *r.aspect_f1;
  j["scheme"] = r.scheme;
  j["mode"] = r.mode;
  return j;
}

inline nlohmann::json to_json(const TokenMetrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"tokens", m.tokens}};
}

}  // namespace abam
