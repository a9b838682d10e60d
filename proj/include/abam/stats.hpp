// Descriptive corpus statistics and aspect frequency rankings.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "abam/corpus.hpp"

namespace abam {

inline std::string to_lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Normalized key of an aspect span: lowercased lemmas joined by spaces,
/// falling back to the lowercased surface where the lemma is empty.
inline std::string aspect_key(const Sentence& s, const Span& span) {
  std::string key;
  for (std::size_t i = span.start; i < span.end; ++i) {
    const auto& t = s.tokens[i];
    if (!key.empty()) key += ' ';
    key += to_lower(t.lemma.empty() ? t.surface : t.lemma);
  }
  return key;
}

struct TopicCounts {
  std::size_t sentences = 0;
  std::size_t segments = 0;
  std::size_t aspects = 0;
  std::size_t unique_aspects = 0;
};

struct CorpusStats {
  std::map<std::string, TopicCounts> per_topic;
  TopicCounts total;
  /// Sum of per-topic unique counts; differs from total.unique_aspects when
  /// aspects recur across topics.
  std::size_t unique_sum = 0;
  /// Aspect counts by length 1..5 (index 0 = length 1).
  std::array<std::size_t, kAspMax> length_histogram{};

  double length_share(std::size_t len) const {
    return total.aspects == 0 ? 0.0
                              : static_cast<double>(length_histogram.at(len - 1)) /
                                    static_cast<double>(total.aspects);
  }
};

inline CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats st;
  std::map<std::string, std::set<std::string>> topic_keys;
  std::set<std::string> all_keys;
  for (const auto& s : corpus.sentences) {
    auto& tc = st.per_topic[s.topic_id];
    ++tc.sentences;
    for (const auto& sp : extract_spans(s.labels)) {
      if (sp.kind != SpanKind::ASP) {
        ++tc.segments;
        continue;
      }
      ++tc.aspects;
      if (sp.size() >= 1 && sp.size() <= kAspMax) ++st.length_histogram[sp.size() - 1];
      auto key = aspect_key(s, sp);
      topic_keys[s.topic_id].insert(key);
      all_keys.insert(std::move(key));
    }
  }
  for (auto& [topic, tc] : st.per_topic) {
    tc.unique_aspects = topic_keys[topic].size();
    st.total.sentences += tc.sentences;
    st.total.segments += tc.segments;
    st.total.aspects += tc.aspects;
    st.unique_sum += tc.unique_aspects;
  }
  st.total.unique_aspects = all_keys.size();
  return st;
}

struct AspectCount {
  std::string aspect;
  std::size_t count = 0;
  friend bool operator==(const AspectCount&, const AspectCount&) = default;
};

struct SharedAspect {
  std::string aspect;
  std::size_t topics = 0;  // number of topics the aspect occurs in
  std::size_t count = 0;   // occurrences across all topics
};

struct TopAspects {
  std::map<std::string, std::vector<AspectCount>> per_topic;
  /// Aspects present in at least `min_topics` topics, ranked by topic
  /// coverage, then count, then name.
  std::vector<SharedAspect> shared;
};

/// Per-topic top-k aspects (count descending, ties lexicographic) and the
/// aspects shared by at least `min_topics` topics.
inline TopAspects top_aspects(const Corpus& corpus, std::size_t k, std::size_t min_topics = 7) {
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  for (const auto& s : corpus.sentences)
    for (const auto& sp : extract_spans(s.labels))
      if (sp.kind == SpanKind::ASP) ++counts[s.topic_id][aspect_key(s, sp)];

  auto rank = [](const AspectCount& a, const AspectCount& b) {
    return a.count != b.count ? a.count > b.count : a.aspect < b.aspect;
  };

  TopAspects out;
  std::map<std::string, SharedAspect> shared;
  for (const auto& [topic, by_aspect] : counts) {
    std::vector<AspectCount> ranked;
    for (const auto& [aspect, c] : by_aspect) {
      ranked.push_back({aspect, c});
      auto& sh = shared[aspect];
      sh.aspect = aspect;
      ++sh.topics;
      sh.count += c;
    }
    std::sort(ranked.begin(), ranked.end(), rank);
    if (ranked.size() > k) ranked.resize(k);
    out.per_topic[topic] = std::move(ranked);
  }
  for (auto& [aspect, sh] : shared)
    if (sh.topics >= min_topics) out.shared.push_back(sh);
  std::sort(out.shared.begin(), out.shared.end(), [](const SharedAspect& a, const SharedAspect& b) {
    if (a.topics != b.topics) return a.topics > b.topics;
    if (a.count != b.count) return a.count > b.count;
    return a.aspect < b.aspect;
  });
  return out;
}

}  // namespace abam
