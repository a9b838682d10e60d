// Inner-topic and cross-topic train/dev/test splits.
//
// Sentences of T1-T6 are partitioned once per seed into train/dev/test
// (inner-topic). The cross-topic split reuses that partition: train is T1-T5
// and dev is T6, each without the inner test sentences; test is T7 and T8.
// NS samples are sentences, ATE samples are the argument units inside them,
// so both tasks share one sentence-level partition.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "abam/corpus.hpp"

namespace abam {

enum class Task { ATE, NS };
enum class Domain { INNER, CROSS };
enum class SplitSet { TRAIN, DEV, TEST };

inline std::string_view to_string(Task t) { return t == Task::ATE ? "ate" : "ns"; }
inline std::string_view to_string(Domain d) { return d == Domain::INNER ? "inner" : "cross"; }
inline std::string_view to_string(SplitSet s) {
  return s == SplitSet::TRAIN ? "train" : s == SplitSet::DEV ? "dev" : "test";
}

inline std::optional<Task> parse_task(std::string_view s) {
  if (s == "ate" || s == "ATE") return Task::ATE;
  if (s == "ns" || s == "NS") return Task::NS;
  return std::nullopt;
}
inline std::optional<Domain> parse_domain(std::string_view s) {
  if (s == "inner" || s == "INNER") return Domain::INNER;
  if (s == "cross" || s == "CROSS") return Domain::CROSS;
  return std::nullopt;
}
inline std::optional<SplitSet> parse_split_set(std::string_view s) {
  if (s == "train") return SplitSet::TRAIN;
  if (s == "dev") return SplitSet::DEV;
  if (s == "test") return SplitSet::TEST;
  return std::nullopt;
}

class SplitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One training/evaluation sample: a whole sentence (NS) or one argument
/// unit of it (ATE).
struct SampleRef {
  std::string topic_id;
  std::string sentence_id;
  std::optional<Span> segment;

  friend bool operator==(const SampleRef&, const SampleRef&) = default;
  friend auto operator<=>(const SampleRef& a, const SampleRef& b) {
    if (auto c = a.topic_id <=> b.topic_id; c != 0) return c;
    if (auto c = a.sentence_id <=> b.sentence_id; c != 0) return c;
    auto sa = a.segment ? std::make_pair(a.segment->start, a.segment->end) : std::make_pair(std::size_t{0}, std::size_t{0});
    auto sb = b.segment ? std::make_pair(b.segment->start, b.segment->end) : std::make_pair(std::size_t{0}, std::size_t{0});
    return sa <=> sb;
  }
};

struct SplitSpec {
  Domain domain = Domain::INNER;
  Task task = Task::ATE;
  std::uint64_t seed = 0;
  std::vector<SampleRef> train;
  std::vector<SampleRef> dev;
  std::vector<SampleRef> test;

  const std::vector<SampleRef>& set(SplitSet s) const {
    return s == SplitSet::TRAIN ? train : s == SplitSet::DEV ? dev : test;
  }

  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

/// Reference sizes of the released benchmark, used as proportions. On a
/// corpus with the benchmark's topic sizes the targets reproduce the
/// reference sample counts exactly.
struct SplitProfile {
  // T1-T5 pool and its inner-test share.
  double seen_sentences = 2623, seen_segments = 2836;
  double seen_test_sentences = 526, seen_test_segments = 572;
  // T6 pool and its inner-test share.
  double dev_topic_sentences = 588, dev_topic_segments = 637;
  double dev_topic_test_sentences = 110, dev_topic_test_segments = 121;
  // Inner dev over T1-T6.
  double inner_sentences = 3211, inner_segments = 3473;
  double inner_dev_sentences = 307, inner_dev_segments = 333;
};

namespace detail {

inline bool is_seen_topic(const std::string& t) {
  return t == "T1" || t == "T2" || t == "T3" || t == "T4" || t == "T5";
}
inline bool is_inner_topic(const std::string& t) { return is_seen_topic(t) || t == "T6"; }
inline bool is_cross_test_topic(const std::string& t) { return t == "T7" || t == "T8"; }

inline std::size_t scaled(double count, double ref_total, double ref_part) {
  if (ref_total <= 0) return 0;
  return static_cast<std::size_t>(std::llround(count * ref_part / ref_total));
}

/// Picks `want_sentences` of the candidate sentences (stratified by topic in
/// proportion to topic size, shuffled with `rng`), then swaps within topics
/// to move the picked segment total toward `want_segments`.
inline std::vector<std::size_t> pick_stratified(const Corpus& corpus, const std::vector<std::size_t>& pool,
                                                std::size_t want_sentences, std::size_t want_segments,
                                                const std::vector<std::size_t>& seg_count, std::mt19937_64& rng) {
  std::map<std::string, std::vector<std::size_t>> by_topic;
  for (auto i : pool) by_topic[corpus.sentences[i].topic_id].push_back(i);
  want_sentences = std::min(want_sentences, pool.size());

  // Largest-remainder allocation of the sentence target over topics.
  std::map<std::string, std::size_t> quota;
  std::vector<std::pair<double, std::string>> remainders;
  std::size_t assigned = 0;
  for (const auto& [topic, ids] : by_topic) {
    double exact = pool.empty() ? 0.0
                                : static_cast<double>(want_sentences) * static_cast<double>(ids.size()) /
                                      static_cast<double>(pool.size());
    auto base = static_cast<std::size_t>(std::floor(exact));
    quota[topic] = base;
    assigned += base;
    remainders.emplace_back(exact - static_cast<double>(base), topic);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < want_sentences && r < remainders.size(); ++r, ++assigned)
    ++quota[remainders[r].second];

  struct Topic {
    std::vector<std::size_t> picked, rest;
  };
  std::map<std::string, Topic> parts;
  std::size_t segs = 0;
  for (auto& [topic, ids] : by_topic) {
    auto order = ids;
    std::shuffle(order.begin(), order.end(), rng);
    auto& p = parts[topic];
    const auto q = std::min(quota[topic], order.size());
    p.picked.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(q));
    p.rest.assign(order.begin() + static_cast<std::ptrdiff_t>(q), order.end());
    for (auto i : p.picked) segs += seg_count[i];
  }

  // Swap picked/unpicked sentences with different segment counts until the
  // segment total matches, or no improving swap exists.
  while (segs != want_segments) {
    const bool too_many = segs > want_segments;
    const std::size_t gap = too_many ? segs - want_segments : want_segments - segs;
    bool swapped = false;
    for (auto& [topic, p] : parts) {
      for (auto& a : p.picked) {
        for (auto& b : p.rest) {
          const auto ca = seg_count[a], cb = seg_count[b];
          const bool helps = too_many ? (ca > cb && ca - cb <= gap) : (cb > ca && cb - ca <= gap);
          if (!helps) continue;
          segs = segs - ca + cb;
          std::swap(a, b);
          swapped = true;
          break;
        }
        if (swapped) break;
      }
      if (swapped) break;
    }
    if (!swapped) break;
  }

  std::vector<std::size_t> out;
  for (auto& [topic, p] : parts) out.insert(out.end(), p.picked.begin(), p.picked.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

/// Sentence-level assignment of T1-T6 to train/dev/test for one seed.
/// Indexed like corpus.sentences; T7/T8 sentences stay nullopt.
inline std::vector<std::optional<SplitSet>> inner_partition(const Corpus& corpus, std::uint64_t seed,
                                                            const SplitProfile& prof = {}) {
  const auto n = corpus.sentences.size();
  std::vector<std::size_t> seg_count(n);
  std::vector<std::size_t> seen, dev_topic;
  double seen_segs = 0, dev_topic_segs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = corpus.sentences[i];
    seg_count[i] = segments(s).size();
    if (detail::is_seen_topic(s.topic_id)) {
      seen.push_back(i);
      seen_segs += static_cast<double>(seg_count[i]);
    } else if (s.topic_id == "T6") {
      dev_topic.push_back(i);
      dev_topic_segs += static_cast<double>(seg_count[i]);
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::optional<SplitSet>> assign(n);
  auto mark = [&](const std::vector<std::size_t>& ids, SplitSet s) {
    for (auto i : ids) assign[i] = s;
  };

  mark(seen, SplitSet::TRAIN);
  mark(dev_topic, SplitSet::TRAIN);
  mark(detail::pick_stratified(corpus, seen,
                               detail::scaled(static_cast<double>(seen.size()), prof.seen_sentences,
                                              prof.seen_test_sentences),
                               detail::scaled(seen_segs, prof.seen_segments, prof.seen_test_segments), seg_count,
                               rng),
       SplitSet::TEST);
  mark(detail::pick_stratified(corpus, dev_topic,
                               detail::scaled(static_cast<double>(dev_topic.size()), prof.dev_topic_sentences,
                                              prof.dev_topic_test_sentences),
                               detail::scaled(dev_topic_segs, prof.dev_topic_segments,
                                              prof.dev_topic_test_segments),
                               seg_count, rng),
       SplitSet::TEST);

  std::vector<std::size_t> remaining;
  const double inner_sentences = static_cast<double>(seen.size() + dev_topic.size());
  for (std::size_t i = 0; i < n; ++i)
    if (assign[i] == SplitSet::TRAIN) remaining.push_back(i);
  mark(detail::pick_stratified(
           corpus, remaining,
           detail::scaled(inner_sentences, prof.inner_sentences, prof.inner_dev_sentences),
           detail::scaled(seen_segs + dev_topic_segs, prof.inner_segments, prof.inner_dev_segments), seg_count,
           rng),
       SplitSet::DEV);
  return assign;
}

inline SplitSpec make_splits(const Corpus& corpus, Domain domain, Task task, std::uint64_t seed,
                             const SplitProfile& prof = {}) {
  const auto topics = corpus.topics();
  auto require = [&](const std::string& t) {
    if (!std::binary_search(topics.begin(), topics.end(), t)) throw SplitError("missing topic " + t);
  };
  for (int t = 1; t <= (domain == Domain::CROSS ? 8 : 6); ++t) require("T" + std::to_string(t));

  const auto assign = inner_partition(corpus, seed, prof);
  SplitSpec spec;
  spec.domain = domain;
  spec.task = task;
  spec.seed = seed;

  auto add = [&](std::vector<SampleRef>& dst, const Sentence& s) {
    if (task == Task::NS) {
      dst.push_back({s.topic_id, s.sentence_id, std::nullopt});
      return;
    }
    for (const auto& seg : segments(s)) dst.push_back({s.topic_id, s.sentence_id, seg});
  };

  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const auto& s = corpus.sentences[i];
    if (domain == Domain::INNER) {
      if (!assign[i]) continue;
      add(*assign[i] == SplitSet::TRAIN ? spec.train : *assign[i] == SplitSet::DEV ? spec.dev : spec.test, s);
    } else if (detail::is_cross_test_topic(s.topic_id)) {
      add(spec.test, s);
    } else if (assign[i] && *assign[i] != SplitSet::TEST) {
      add(s.topic_id == "T6" ? spec.dev : spec.train, s);
    }
  }
  return spec;
}

/// A sample materialized against its corpus.
struct Sample {
  const Sentence* sentence = nullptr;
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  std::span<const Token> tokens() const { return std::span(sentence->tokens).subspan(start, end - start); }
  LabelSeq labels() const {
    return LabelSeq(sentence->labels.begin() + static_cast<std::ptrdiff_t>(start),
                    sentence->labels.begin() + static_cast<std::ptrdiff_t>(end));
  }
  FlagSeq flags() const { return aspect_flags(labels()); }
};

inline std::vector<Sample> resolve(const Corpus& corpus, const std::vector<SampleRef>& refs) {
  std::map<std::pair<std::string, std::string>, const Sentence*> index;
  for (const auto& s : corpus.sentences) index[{s.topic_id, s.sentence_id}] = &s;
  std::vector<Sample> out;
  out.reserve(refs.size());
  for (const auto& r : refs) {
    auto it = index.find({r.topic_id, r.sentence_id});
    if (it == index.end()) throw SplitError("unknown sample " + r.topic_id + "/" + r.sentence_id);
    const Sentence* s = it->second;
    if (r.segment) {
      if (r.segment->end > s->size()) throw SplitError("segment out of range in " + r.sentence_id);
      out.push_back({s, r.segment->start, r.segment->end});
    } else {
      out.push_back({s, 0, s->size()});
    }
  }
  return out;
}

/// All samples of a corpus for a task: every sentence (NS) or every argument
/// unit (ATE), in corpus order.
inline std::vector<Sample> all_samples(const Corpus& corpus, Task task) {
  std::vector<Sample> out;
  for (const auto& s : corpus.sentences) {
    if (task == Task::NS) {
      out.push_back({&s, 0, s.size()});
      continue;
    }
    for (const auto& seg : segments(s)) out.push_back({&s, seg.start, seg.end});
  }
  return out;
}

inline nlohmann::json to_json(const SampleRef& r) {
  nlohmann::json j{{"topic_id", r.topic_id}, {"sentence_id", r.sentence_id}};
  if (r.segment) j["segment"] = {r.segment->start, r.segment->end};
  return j;
}

inline nlohmann::json to_json(const SplitSpec& spec) {
  nlohmann::json j;
  j["domain"] = to_string(spec.domain);
  j["task"] = to_string(spec.task);
  j["seed"] = spec.seed;
  for (auto set : {SplitSet::TRAIN, SplitSet::DEV, SplitSet::TEST}) {
    auto arr = nlohmann::json::array();
    for (const auto& r : spec.set(set)) arr.push_back(to_json(r));
    j[std::string(to_string(set))] = std::move(arr);
  }
  return j;
}

}  // namespace abam
