// Candidate-selection annotation: tasks, an append-only response store,
// token-intersection gold merge, agreement, and gold export.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "abam/corpus.hpp"
#include "abam/evaluation.hpp"
#include "abam/patterns.hpp"
#include "json.hpp"

namespace abam {

class AnnotationError : public std::runtime_error {
 public:
  enum class Kind { UnknownTask, InvalidResponse, Incomplete, Format };
  AnnotationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::string_view kTaskSchema = "abam.task/1";
inline constexpr std::string_view kResponseSchema = "abam.response/1";

/// One argument unit to annotate. Candidate spans are relative to the
/// segment; `segment` locates it in its sentence.
struct AnnotationTask {
  std::string id;
  std::string topic_id;
  std::string sentence_id;
  Span segment;
  std::vector<Token> tokens;
  CandidateMenu menu;

  std::string text() const { return surface_of(tokens, 0, tokens.size()); }
};

struct AnnotatorResponse {
  std::string task_id;
  std::string annotator_id;
  std::vector<std::size_t> selected;  // menu indices
  bool none = false;
  std::string timestamp;

  friend bool operator==(const AnnotatorResponse&, const AnnotatorResponse&) = default;
};

inline std::string task_id_for(const Sentence& s, const Span& seg) {
  return s.topic_id + "/" + s.sentence_id + "/" + std::to_string(seg.start) + "-" + std::to_string(seg.end);
}

/// One task per argument unit, in corpus order.
inline std::vector<AnnotationTask> build_tasks(const Corpus& corpus, const PatternSet& patterns) {
  std::vector<AnnotationTask> tasks;
  for (const auto& s : corpus.sentences) {
    for (const auto& seg : segments(s)) {
      AnnotationTask t;
      t.id = task_id_for(s, seg);
      t.topic_id = s.topic_id;
      t.sentence_id = s.sentence_id;
      t.segment = seg;
      t.tokens.assign(s.tokens.begin() + static_cast<std::ptrdiff_t>(seg.start),
                      s.tokens.begin() + static_cast<std::ptrdiff_t>(seg.end));
      t.menu = generate_candidates(t.tokens, patterns);
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

/// Throws AnnotationError(InvalidResponse) naming the violated rule.
inline void check_response(const AnnotationTask& task, const AnnotatorResponse& r) {
  using K = AnnotationError::Kind;
  if (r.task_id != task.id) throw AnnotationError(K::InvalidResponse, "response targets task " + r.task_id);
  if (r.annotator_id.empty()) throw AnnotationError(K::InvalidResponse, "missing annotator id");
  if (r.none && !r.selected.empty())
    throw AnnotationError(K::InvalidResponse, "NONE cannot be combined with candidate selections");
  if (!r.none && r.selected.empty())
    throw AnnotationError(K::InvalidResponse, "select at least one candidate or NONE");
  std::set<std::size_t> seen;
  for (auto id : r.selected) {
    if (id >= task.menu.items.size())
      throw AnnotationError(K::InvalidResponse, "unknown candidate id " + std::to_string(id));
    if (!seen.insert(id).second)
      throw AnnotationError(K::InvalidResponse, "candidate id " + std::to_string(id) + " selected twice");
  }
}

/// Segment tokens covered by the selected candidates (all occurrences).
inline std::vector<bool> selection_mask(const AnnotationTask& task, const AnnotatorResponse& r) {
  std::vector<bool> mask(task.tokens.size(), false);
  if (r.none) return mask;
  for (auto id : r.selected)
    for (const auto& sp : task.menu.items.at(id).occurrences)
      for (std::size_t i = sp.start; i < sp.end; ++i) mask[i] = true;
  return mask;
}

// ---------------------------------------------------------------------------
// JSONL schemas

inline nlohmann::json to_json(const AnnotationTask& t) {
  nlohmann::json j;
  j["schema"] = kTaskSchema;
  j["task_id"] = t.id;
  j["topic_id"] = t.topic_id;
  j["topic"] = topic_name(t.topic_id);
  j["sentence_id"] = t.sentence_id;
  j["segment"] = {{"start", t.segment.start}, {"end", t.segment.end}, {"stance", to_string(t.segment.kind)}};
  j["text"] = t.text();
  auto& toks = j["tokens"] = nlohmann::json::array();
  for (const auto& tok : t.tokens) toks.push_back({{"surface", tok.surface}, {"pos", tok.pos}, {"lemma", tok.lemma}});
  auto& cands = j["candidates"] = nlohmann::json::array();
  for (std::size_t i = 0; i < t.menu.items.size(); ++i) {
    const auto& it = t.menu.items[i];
    auto spans = nlohmann::json::array();
    for (const auto& sp : it.occurrences) spans.push_back({sp.start, sp.end});
    cands.push_back({{"id", i}, {"text", it.text}, {"spans", spans}, {"pattern", join(it.pattern)}});
  }
  j["none_option"] = kNoneOption;
  return j;
}

inline AnnotationTask task_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<std::string>() != kTaskSchema)
      throw AnnotationError(AnnotationError::Kind::Format, "unsupported task schema");
    AnnotationTask t;
    t.id = j.at("task_id").get<std::string>();
    t.topic_id = j.at("topic_id").get<std::string>();
    t.sentence_id = j.at("sentence_id").get<std::string>();
    const auto& seg = j.at("segment");
    t.segment.start = seg.at("start").get<std::size_t>();
    t.segment.end = seg.at("end").get<std::size_t>();
    t.segment.kind = seg.at("stance").get<std::string>() == "CON" ? SpanKind::CON : SpanKind::PRO;
    for (const auto& tok : j.at("tokens"))
      t.tokens.push_back(
          {tok.at("surface").get<std::string>(), tok.at("pos").get<std::string>(), tok.value("lemma", "")});
    for (const auto& c : j.at("candidates")) {
      MenuItem it;
      it.text = c.at("text").get<std::string>();
      for (const auto& sp : c.at("spans")) {
        Span s{sp.at(0).get<std::size_t>(), sp.at(1).get<std::size_t>(), SpanKind::ASP};
        if (s.start >= s.end || s.end > t.tokens.size())
          throw AnnotationError(AnnotationError::Kind::Format, "candidate span outside segment in " + t.id);
        it.occurrences.push_back(s);
      }
      std::istringstream ps(c.value("pattern", ""));
      for (std::string tag; ps >> tag;) it.pattern.push_back(tag);
      t.menu.items.push_back(std::move(it));
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw AnnotationError(AnnotationError::Kind::Format, std::string("malformed task record: ") + e.what());
  }
}

inline nlohmann::json to_json(const AnnotatorResponse& r) {
  return {{"schema", kResponseSchema}, {"task_id", r.task_id}, {"annotator_id", r.annotator_id},
          {"selected", r.selected},    {"none", r.none},       {"timestamp", r.timestamp}};
}

inline AnnotatorResponse response_from_json(const nlohmann::json& j) {
  try {
    if (j.contains("schema") && j.at("schema").get<std::string>() != kResponseSchema)
      throw AnnotationError(AnnotationError::Kind::Format, "unsupported response schema");
    AnnotatorResponse r;
    r.task_id = j.at("task_id").get<std::string>();
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.selected = j.value("selected", std::vector<std::size_t>{});
    r.none = j.value("none", false);
    r.timestamp = j.value("timestamp", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw AnnotationError(AnnotationError::Kind::Format, std::string("malformed response record: ") + e.what());
  }
}

template <class T, class FromJson>
std::vector<T> read_jsonl(const std::string& path, FromJson from_json) {
  std::ifstream in(path);
  if (!in) throw AnnotationError(AnnotationError::Kind::Format, "cannot open " + path);
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    try {
      out.push_back(from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw AnnotationError(AnnotationError::Kind::Format,
                            path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<AnnotationTask> load_tasks(const std::string& path) {
  return read_jsonl<AnnotationTask>(path, task_from_json);
}

inline std::vector<AnnotatorResponse> load_responses(const std::string& path) {
  return read_jsonl<AnnotatorResponse>(path, response_from_json);
}

inline void save_tasks(const std::string& path, const std::vector<AnnotationTask>& tasks) {
  std::ofstream out(path);
  if (!out) throw AnnotationError(AnnotationError::Kind::Format, "cannot write " + path);
  for (const auto& t : tasks) out << to_json(t).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Store

/// Latest response per (task, annotator).
using ResponseSnapshot = std::map<std::string, std::map<std::string, AnnotatorResponse>>;

struct Ack {
  std::size_t sequence = 0;  // position in the log
  bool superseded = false;   // an earlier response by this annotator was replaced
};

struct Progress {
  std::size_t total = 0;
  std::size_t answered = 0;
};

/// Append-only response log with latest-wins views. One writer at a time;
/// readers see a consistent snapshot. When a log path is given, existing
/// records are replayed on construction and new ones appended.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::vector<AnnotationTask> tasks, std::optional<std::filesystem::path> log_path = {})
      : tasks_(std::move(tasks)), log_path_(std::move(log_path)) {
    for (std::size_t i = 0; i < tasks_.size(); ++i)
      if (!index_.emplace(tasks_[i].id, i).second)
        throw AnnotationError(AnnotationError::Kind::Format, "duplicate task id " + tasks_[i].id);
    if (log_path_ && std::filesystem::exists(*log_path_)) {
      for (auto& r : load_responses(log_path_->string())) apply(std::move(r));
    }
  }

  const std::vector<AnnotationTask>& tasks() const { return tasks_; }

  const AnnotationTask* find_task(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &tasks_[it->second];
  }

  Ack record(const AnnotatorResponse& r) {
    std::unique_lock lock(mu_);
    const auto* task = find_task(r.task_id);
    if (!task) throw AnnotationError(AnnotationError::Kind::UnknownTask, "unknown task id " + r.task_id);
    check_response(*task, r);
    if (log_path_) {
      std::ofstream out(*log_path_, std::ios::app);
      if (!out) throw AnnotationError(AnnotationError::Kind::Format, "cannot append to " + log_path_->string());
      out << to_json(r).dump() << '\n';
    }
    return apply(r);
  }

  ResponseSnapshot snapshot() const {
    std::shared_lock lock(mu_);
    return latest_;
  }

  std::vector<AnnotatorResponse> log() const {
    std::shared_lock lock(mu_);
    return log_;
  }

  /// All responses of an annotator for a task, oldest first.
  std::vector<AnnotatorResponse> history(const std::string& task_id, const std::string& annotator) const {
    std::shared_lock lock(mu_);
    std::vector<AnnotatorResponse> out;
    for (const auto& r : log_)
      if (r.task_id == task_id && r.annotator_id == annotator) out.push_back(r);
    return out;
  }

  std::optional<AnnotatorResponse> latest(const std::string& task_id, const std::string& annotator) const {
    std::shared_lock lock(mu_);
    auto it = latest_.find(task_id);
    if (it == latest_.end()) return std::nullopt;
    auto jt = it->second.find(annotator);
    if (jt == it->second.end()) return std::nullopt;
    return jt->second;
  }

  /// First task in id order without a response from `annotator`.
  const AnnotationTask* next_task(const std::string& annotator) const {
    std::shared_lock lock(mu_);
    const AnnotationTask* best = nullptr;
    for (const auto& t : tasks_) {
      auto it = latest_.find(t.id);
      if (it != latest_.end() && it->second.count(annotator)) continue;
      if (!best || t.id < best->id) best = &t;
    }
    return best;
  }

  Progress progress(const std::string& annotator) const {
    std::shared_lock lock(mu_);
    Progress p{tasks_.size(), 0};
    for (const auto& [task, by] : latest_) p.answered += by.count(annotator);
    return p;
  }

 private:
  Ack apply(AnnotatorResponse r) {
    Ack ack;
    ack.sequence = log_.size();
    auto& slot = latest_[r.task_id];
    ack.superseded = slot.count(r.annotator_id) != 0;
    slot[r.annotator_id] = r;
    log_.push_back(std::move(r));
    return ack;
  }

  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> index_;
  std::optional<std::filesystem::path> log_path_;
  mutable std::shared_mutex mu_;
  std::vector<AnnotatorResponse> log_;
  ResponseSnapshot latest_;
};

// ---------------------------------------------------------------------------
// Gold merge

enum class Provenance { Merged, EmptyIntersection };

inline std::string_view to_string(Provenance p) {
  return p == Provenance::Merged ? "merged" : "empty-intersection";
}

/// Merged aspects of one task, spans relative to the segment. Intersection
/// runs longer than the aspect maximum are not kept and are listed in
/// `dropped`.
struct GoldAspects {
  std::string task_id;
  std::vector<Span> spans;
  Provenance provenance = Provenance::Merged;
  std::vector<Span> dropped;

  friend bool operator==(const GoldAspects&, const GoldAspects&) = default;
};

/// Token-level intersection of two annotators' selections; each maximal run
/// of shared tokens becomes one aspect.
inline GoldAspects merge_gold(const AnnotatorResponse& a, const AnnotatorResponse& b, const AnnotationTask& task) {
  if (a.task_id != task.id || b.task_id != task.id)
    throw AnnotationError(AnnotationError::Kind::InvalidResponse,
                          "mismatched task ids: " + a.task_id + " / " + b.task_id + " for " + task.id);
  check_response(task, a);
  check_response(task, b);
  GoldAspects gold;
  gold.task_id = task.id;
  if (a.none || b.none) return gold;
  const auto ma = selection_mask(task, a), mb = selection_mask(task, b);
  for (std::size_t i = 0; i < ma.size();) {
    if (!(ma[i] && mb[i])) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < ma.size() && ma[j] && mb[j]) ++j;
    Span run{i, j, SpanKind::ASP};
    (run.size() <= kAspMax ? gold.spans : gold.dropped).push_back(run);
    i = j;
  }
  if (gold.spans.empty() && gold.dropped.empty()) gold.provenance = Provenance::EmptyIntersection;
  return gold;
}

/// The two latest responses of a task, ordered by annotator id.
inline std::pair<AnnotatorResponse, AnnotatorResponse> response_pair(const ResponseSnapshot& snap,
                                                                     const AnnotationTask& task) {
  auto it = snap.find(task.id);
  const std::size_t n = it == snap.end() ? 0 : it->second.size();
  if (n != 2)
    throw AnnotationError(AnnotationError::Kind::Incomplete,
                          "task " + task.id + " has " + std::to_string(n) + " annotators, expected 2");
  auto jt = it->second.begin();
  const auto& first = jt->second;
  ++jt;
  return {first, jt->second};
}

struct IaaReport {
  double overall = 0;
  std::size_t tokens = 0;
  std::map<std::string, double> per_topic;
};

/// Cohen's kappa over concatenated per-token selection vectors, overall and
/// per topic. NONE counts as selecting no token.
inline IaaReport iaa_report(const ResponseSnapshot& snap, const std::vector<AnnotationTask>& tasks) {
  std::vector<bool> all_a, all_b;
  std::map<std::string, std::pair<std::vector<bool>, std::vector<bool>>> by_topic;
  for (const auto& t : tasks) {
    auto [ra, rb] = response_pair(snap, t);
    auto ma = selection_mask(t, ra), mb = selection_mask(t, rb);
    auto& [ta, tb] = by_topic[t.topic_id];
    ta.insert(ta.end(), ma.begin(), ma.end());
    tb.insert(tb.end(), mb.begin(), mb.end());
    all_a.insert(all_a.end(), ma.begin(), ma.end());
    all_b.insert(all_b.end(), mb.begin(), mb.end());
  }
  IaaReport rep;
  rep.tokens = all_a.size();
  rep.overall = cohen_kappa(all_a, all_b);
  for (const auto& [topic, v] : by_topic) rep.per_topic[topic] = cohen_kappa(v.first, v.second);
  return rep;
}

struct ExportResult {
  Corpus corpus;
  /// Tasks whose merge produced no aspects or dropped over-long runs.
  std::vector<GoldAspects> sidecar;
};

/// Replaces the aspect flags of every argument unit with the merged gold.
inline ExportResult export_gold(const ResponseSnapshot& snap, const Corpus& corpus,
                                const std::vector<AnnotationTask>& tasks) {
  std::map<std::string, const AnnotationTask*> by_id;
  for (const auto& t : tasks) by_id[t.id] = &t;
  ExportResult out;
  out.corpus = corpus;
  for (auto& s : out.corpus.sentences) {
    for (const auto& seg : segments(s)) {
      const auto id = task_id_for(s, seg);
      auto it = by_id.find(id);
      if (it == by_id.end())
        throw AnnotationError(AnnotationError::Kind::Incomplete, "unmerged task remains: " + id);
      auto [ra, rb] = response_pair(snap, *it->second);
      auto gold = merge_gold(ra, rb, *it->second);
      for (std::size_t i = seg.start; i < seg.end; ++i)
        s.labels[i] = NestedLabel::make(s.labels[i].stance(), Aspect::O);
      for (const auto& sp : gold.spans)
        for (std::size_t i = sp.start; i < sp.end; ++i)
          s.labels[seg.start + i] = NestedLabel::make(s.labels[seg.start + i].stance(), Aspect::ASP);
      if (gold.provenance == Provenance::EmptyIntersection || !gold.dropped.empty())
        out.sidecar.push_back(std::move(gold));
    }
  }
  validate(out.corpus);
  return out;
}

inline nlohmann::json to_json(const GoldAspects& g) {
  auto spans = nlohmann::json::array(), dropped = nlohmann::json::array();
  for (const auto& s : g.spans) spans.push_back({s.start, s.end});
  for (const auto& s : g.dropped) dropped.push_back({s.start, s.end});
  return {{"task_id", g.task_id}, {"provenance", to_string(g.provenance)}, {"spans", spans}, {"dropped", dropped}};
}

inline nlohmann::json to_json(const IaaReport& r) {
  nlohmann::json j{{"kappa", r.overall}, {"tokens", r.tokens}};
  for (const auto& [t, k] : r.per_topic) j["per_topic"][t] = k;
  return j;
}

}  // namespace abam
