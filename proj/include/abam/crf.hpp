// Linear-chain CRF sequence labeler over sparse hand-crafted features.
//
//   score(x, y) = sum_t sum_{f in F_t} W[f, y_t] + sum_{t>0} T[y_{t-1}, y_t]
//
// Inference runs in log space. Training minimizes the mean negative
// log-likelihood with AdamW (decoupled weight decay) over shuffled
// mini-batches; per-sentence gradients are reduced in sample order so the
// result does not depend on the worker count.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "abam/corpus.hpp"
#include "abam/evaluation.hpp"
#include "abam/split.hpp"
#include "abam/stats.hpp"
#include "json.hpp"

namespace abam::crf {

class CrfError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using FeatureId = std::uint32_t;
using LabelId = std::uint32_t;
/// Active feature ids per position.
using Features = std::vector<std::vector<FeatureId>>;

enum class Field { Bias, Surface, Pos, PosBigram, Prefix, Suffix, Shape };

inline std::string_view to_string(Field f) {
  switch (f) {
    case Field::Bias: return "bias";
    case Field::Surface: return "surface";
    case Field::Pos: return "pos";
    case Field::PosBigram: return "pos_bigram";
    case Field::Prefix: return "prefix";
    case Field::Suffix: return "suffix";
    default: return "shape";
  }
}

inline std::optional<Field> parse_field(std::string_view s) {
  for (auto f : {Field::Bias, Field::Surface, Field::Pos, Field::PosBigram, Field::Prefix, Field::Suffix,
                 Field::Shape})
    if (to_string(f) == s) return f;
  return std::nullopt;
}

/// Emits one feature per offset: "<id>[<offset>]=<value>".
struct FeatureTemplate {
  std::string id;
  std::vector<int> offsets;
  Field field = Field::Surface;

  friend bool operator==(const FeatureTemplate&, const FeatureTemplate&) = default;
};

inline constexpr int kMaxOffset = 2;
inline constexpr std::size_t kAffixLength = 3;

inline void check_template(const FeatureTemplate& t) {
  if (t.id.empty()) throw CrfError("feature template without id");
  for (int o : t.offsets) {
    if (o < -kMaxOffset || o > kMaxOffset) throw CrfError("template " + t.id + ": offset outside [-2, 2]");
    if (t.field == Field::PosBigram && o == kMaxOffset)
      throw CrfError("template " + t.id + ": bigram offset must leave room for the next token");
  }
}

inline std::vector<FeatureTemplate> default_templates() {
  return {
      {"b", {0}, Field::Bias},
      {"w", {-2, -1, 0, 1, 2}, Field::Surface},
      {"p", {-2, -1, 0, 1, 2}, Field::Pos},
      {"pp", {-2, -1, 0, 1}, Field::PosBigram},
      {"pre", {0}, Field::Prefix},
      {"suf", {0}, Field::Suffix},
      {"sh", {0}, Field::Shape},
  };
}

inline std::string word_shape(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    char k = std::isupper(c) ? 'X' : std::islower(c) ? 'x' : std::isdigit(c) ? 'd' : c >= 0x80 ? 'u' : char(c);
    if (out.empty() || out.back() != k) out += k;
  }
  return out;
}

namespace detail {

inline bool utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

/// First / last `n` code points of a UTF-8 string.
inline std::string utf8_prefix(const std::string& s, std::size_t n) {
  std::size_t i = 0, count = 0;
  while (i < s.size() && count < n) {
    ++i;
    while (i < s.size() && utf8_continuation(static_cast<unsigned char>(s[i]))) ++i;
    ++count;
  }
  return s.substr(0, i);
}

inline std::string utf8_suffix(const std::string& s, std::size_t n) {
  std::size_t i = s.size(), count = 0;
  while (i > 0 && count < n) {
    --i;
    while (i > 0 && utf8_continuation(static_cast<unsigned char>(s[i]))) --i;
    ++count;
  }
  return s.substr(i);
}

inline std::string field_value(std::span<const Token> tokens, long i, Field f) {
  const auto n = static_cast<long>(tokens.size());
  if (i < 0) return "<BOS>";
  if (i >= n) return "<EOS>";
  const auto& t = tokens[static_cast<std::size_t>(i)];
  switch (f) {
    case Field::Bias: return "1";
    case Field::Surface: return to_lower(t.surface);
    case Field::Pos: return t.pos;
    case Field::PosBigram: return t.pos + "|" + (i + 1 < n ? tokens[static_cast<std::size_t>(i + 1)].pos : "<EOS>");
    case Field::Prefix: return utf8_prefix(to_lower(t.surface), kAffixLength);
    case Field::Suffix: return utf8_suffix(to_lower(t.surface), kAffixLength);
    default: return word_shape(t.surface);
  }
}

}  // namespace detail

/// Injective feature-name to id map; ids are assigned in first-seen order.
class FeatureDictionary {
 public:
  std::optional<FeatureId> find(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  FeatureId intern(const std::string& name) {
    auto [it, inserted] = ids_.try_emplace(name, static_cast<FeatureId>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::unordered_map<std::string, FeatureId> ids_;
  std::vector<std::string> names_;
};

/// Feature names per position.
inline std::vector<std::vector<std::string>> feature_names(std::span<const Token> tokens,
                                                           const std::vector<FeatureTemplate>& templates) {
  std::vector<std::vector<std::string>> out(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const auto& t : templates) {
      for (int o : t.offsets) {
        if (t.field == Field::Bias) {
          out[i].push_back(t.id);
          break;
        }
        out[i].push_back(t.id + "[" + std::to_string(o) + "]=" +
                         detail::field_value(tokens, static_cast<long>(i) + o, t.field));
      }
    }
  }
  return out;
}

/// Maps tokens to feature ids, adding unknown names to the dictionary.
inline Features featurize(std::span<const Token> tokens, const std::vector<FeatureTemplate>& templates,
                          FeatureDictionary& dict) {
  Features feats(tokens.size());
  auto names = feature_names(tokens, templates);
  for (std::size_t i = 0; i < names.size(); ++i)
    for (const auto& name : names[i]) feats[i].push_back(dict.intern(name));
  return feats;
}

/// Maps tokens to feature ids; unknown names are dropped.
inline Features featurize(std::span<const Token> tokens, const std::vector<FeatureTemplate>& templates,
                          const FeatureDictionary& dict) {
  Features feats(tokens.size());
  auto names = feature_names(tokens, templates);
  for (std::size_t i = 0; i < names.size(); ++i)
    for (const auto& name : names[i])
      if (auto id = dict.find(name)) feats[i].push_back(*id);
  return feats;
}

inline std::vector<std::string> label_names(Task task) {
  if (task == Task::ATE) return {"O", "ASP"};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < NestedLabel::kCount; ++i) out.push_back(NestedLabel::from_index(i).name());
  return out;
}

struct CrfModel {
  static constexpr int kVersion = 1;

  Task task = Task::ATE;
  std::vector<std::string> labels;
  std::vector<FeatureTemplate> templates;
  FeatureDictionary features;
  std::vector<double> emission;    // [feature * L + label]
  std::vector<double> transition;  // [prev * L + cur]

  std::size_t num_labels() const { return labels.size(); }
  std::size_t num_features() const { return features.size(); }
  std::size_t num_params() const { return emission.size() + transition.size(); }

  double& emit(FeatureId f, LabelId y) { return emission[std::size_t(f) * labels.size() + y]; }
  double emit(FeatureId f, LabelId y) const { return emission[std::size_t(f) * labels.size() + y]; }
  double& trans(LabelId a, LabelId b) { return transition[std::size_t(a) * labels.size() + b]; }
  double trans(LabelId a, LabelId b) const { return transition[std::size_t(a) * labels.size() + b]; }

  /// Zero weights sized for the current dictionary and label set.
  void reset_weights() {
    emission.assign(features.size() * labels.size(), 0.0);
    transition.assign(labels.size() * labels.size(), 0.0);
  }
};

// ---------------------------------------------------------------------------
// Inference

inline double logsumexp(std::span<const double> v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double sum = 0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

/// Per-position label scores, [t * L + y].
inline std::vector<double> emission_scores(const CrfModel& m, const Features& feats) {
  const auto L = m.num_labels();
  std::vector<double> e(feats.size() * L, 0.0);
  for (std::size_t t = 0; t < feats.size(); ++t)
    for (auto f : feats[t])
      for (LabelId y = 0; y < L; ++y) e[t * L + y] += m.emit(f, y);
  return e;
}

inline double path_score(const CrfModel& m, const Features& feats, std::span<const LabelId> path) {
  double s = 0;
  for (std::size_t t = 0; t < feats.size(); ++t) {
    for (auto f : feats[t]) s += m.emit(f, path[t]);
    if (t > 0) s += m.trans(path[t - 1], path[t]);
  }
  return s;
}

struct Lattice {
  std::size_t length = 0, labels = 0;
  std::vector<double> alpha, beta, emit;
  double log_z = 0;
};

inline Lattice forward_backward(const CrfModel& m, const Features& feats) {
  if (feats.empty()) throw CrfError("empty sequence");
  Lattice lat;
  const auto n = feats.size(), L = m.num_labels();
  lat.length = n;
  lat.labels = L;
  lat.emit = emission_scores(m, feats);
  lat.alpha.assign(n * L, 0.0);
  lat.beta.assign(n * L, 0.0);
  std::vector<double> buf(L);
  for (LabelId y = 0; y < L; ++y) lat.alpha[y] = lat.emit[y];
  for (std::size_t t = 1; t < n; ++t)
    for (LabelId y = 0; y < L; ++y) {
      for (LabelId p = 0; p < L; ++p) buf[p] = lat.alpha[(t - 1) * L + p] + m.trans(p, y);
      lat.alpha[t * L + y] = lat.emit[t * L + y] + logsumexp(buf);
    }
  for (std::size_t t = n - 1; t-- > 0;)
    for (LabelId y = 0; y < L; ++y) {
      for (LabelId nx = 0; nx < L; ++nx)
        buf[nx] = m.trans(y, nx) + lat.emit[(t + 1) * L + nx] + lat.beta[(t + 1) * L + nx];
      lat.beta[t * L + y] = logsumexp(buf);
    }
  lat.log_z = logsumexp(std::span(lat.alpha).subspan((n - 1) * L, L));
  return lat;
}

inline double log_partition(const CrfModel& m, const Features& feats) { return forward_backward(m, feats).log_z; }

struct Decoded {
  std::vector<LabelId> path;
  double score = 0;
};

/// Max-product decoding; ties go to the lowest label index at every step.
inline Decoded viterbi(const CrfModel& m, const Features& feats) {
  if (feats.empty()) throw CrfError("empty sequence");
  const auto n = feats.size(), L = m.num_labels();
  const auto e = emission_scores(m, feats);
  std::vector<double> delta(n * L);
  std::vector<LabelId> back(n * L, 0);
  for (LabelId y = 0; y < L; ++y) delta[y] = e[y];
  for (std::size_t t = 1; t < n; ++t)
    for (LabelId y = 0; y < L; ++y) {
      LabelId best = 0;
      double best_score = delta[(t - 1) * L] + m.trans(0, y);
      for (LabelId p = 1; p < L; ++p) {
        double s = delta[(t - 1) * L + p] + m.trans(p, y);
        if (s > best_score) {
          best_score = s;
          best = p;
        }
      }
      delta[t * L + y] = e[t * L + y] + best_score;
      back[t * L + y] = best;
    }
  Decoded out;
  out.path.resize(n);
  LabelId last = 0;
  for (LabelId y = 1; y < L; ++y)
    if (delta[(n - 1) * L + y] > delta[(n - 1) * L + last]) last = y;
  out.score = delta[(n - 1) * L + last];
  out.path[n - 1] = last;
  for (std::size_t t = n - 1; t > 0; --t) out.path[t - 1] = back[t * L + out.path[t]];
  return out;
}

// ---------------------------------------------------------------------------
// Likelihood and gradient

/// Negative log-likelihood of the gold path (no regularization).
inline double nll(const CrfModel& m, const Features& feats, std::span<const LabelId> gold) {
  return log_partition(m, feats) - path_score(m, feats, gold);
}

/// nll + l2/2 * ||w||^2.
inline double objective(const CrfModel& m, const Features& feats, std::span<const LabelId> gold, double l2) {
  double sq = 0;
  for (double w : m.emission) sq += w * w;
  for (double w : m.transition) sq += w * w;
  return nll(m, feats, gold) + 0.5 * l2 * sq;
}

/// Sparse emission gradient plus a dense transition block, for one sequence.
struct SparseGradient {
  std::vector<std::pair<std::size_t, double>> emission;
  std::vector<double> transition;
  double nll = 0;
};

inline void check_gold(const CrfModel& m, const Features& feats, std::span<const LabelId> gold) {
  if (gold.size() != feats.size())
    throw CrfError("gold length " + std::to_string(gold.size()) + " differs from sequence length " +
                   std::to_string(feats.size()));
  for (auto y : gold)
    if (y >= m.num_labels()) throw CrfError("label " + std::to_string(y) + " outside the declared label set");
}

/// Expected minus empirical feature counts for one sequence.
inline SparseGradient sparse_gradient(const CrfModel& m, const Features& feats, std::span<const LabelId> gold) {
  check_gold(m, feats, gold);
  const auto lat = forward_backward(m, feats);
  const auto n = lat.length, L = lat.labels;
  SparseGradient g;
  g.transition.assign(L * L, 0.0);
  std::vector<double> marg(L);
  for (std::size_t t = 0; t < n; ++t) {
    for (LabelId y = 0; y < L; ++y) marg[y] = std::exp(lat.alpha[t * L + y] + lat.beta[t * L + y] - lat.log_z);
    marg[gold[t]] -= 1.0;
    for (auto f : feats[t])
      for (LabelId y = 0; y < L; ++y) g.emission.emplace_back(std::size_t(f) * L + y, marg[y]);
    if (t == 0) continue;
    for (LabelId a = 0; a < L; ++a)
      for (LabelId b = 0; b < L; ++b)
        g.transition[a * L + b] += std::exp(lat.alpha[(t - 1) * L + a] + m.trans(a, b) + lat.emit[t * L + b] +
                                            lat.beta[t * L + b] - lat.log_z);
    g.transition[gold[t - 1] * L + gold[t]] -= 1.0;
  }
  g.nll = lat.log_z - path_score(m, feats, gold);
  return g;
}

struct Gradient {
  std::vector<double> emission;
  std::vector<double> transition;
};

/// Dense gradient of objective(m, feats, gold, l2).
inline Gradient gradient(const CrfModel& m, const Features& feats, std::span<const LabelId> gold, double l2) {
  auto sg = sparse_gradient(m, feats, gold);
  Gradient g;
  g.emission.assign(m.emission.size(), 0.0);
  for (auto [i, v] : sg.emission) g.emission[i] += v;
  g.transition = std::move(sg.transition);
  for (std::size_t i = 0; i < g.emission.size(); ++i) g.emission[i] += l2 * m.emission[i];
  for (std::size_t i = 0; i < g.transition.size(); ++i) g.transition[i] += l2 * m.transition[i];
  return g;
}

// ---------------------------------------------------------------------------
// Datasets and training

struct Instance {
  Features features;
  std::vector<LabelId> gold;
};

inline std::vector<LabelId> gold_ids(const Sample& s, Task task) {
  std::vector<LabelId> out;
  if (task == Task::ATE) {
    for (auto f : s.flags()) out.push_back(f == Aspect::ASP ? 1 : 0);
  } else {
    for (auto l : s.labels()) out.push_back(static_cast<LabelId>(l.index()));
  }
  return out;
}

/// An untrained model whose dictionary covers `samples`, plus their encoded
/// instances.
struct Dataset {
  CrfModel model;
  std::vector<Instance> instances;
};

inline Dataset build_dataset(const std::vector<Sample>& samples, Task task,
                             std::vector<FeatureTemplate> templates = default_templates()) {
  for (const auto& t : templates) check_template(t);
  Dataset ds;
  ds.model.task = task;
  ds.model.labels = label_names(task);
  ds.model.templates = std::move(templates);
  ds.instances.reserve(samples.size());
  for (const auto& s : samples)
    ds.instances.push_back({featurize(s.tokens(), ds.model.templates, ds.model.features), gold_ids(s, task)});
  ds.model.reset_weights();
  return ds;
}

/// Encodes samples against an existing dictionary (unknown features dropped).
inline std::vector<Instance> encode(const CrfModel& m, const std::vector<Sample>& samples) {
  std::vector<Instance> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({featurize(s.tokens(), m.templates, m.features), gold_ids(s, m.task)});
  return out;
}

struct TrainConfig {
  double l2 = 1e-4;  // decoupled weight decay
  std::size_t epochs = 10;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0: hardware concurrency

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void check_config(const TrainConfig& c) {
  if (!(c.l2 >= 0) || !std::isfinite(c.l2)) throw CrfError("l2 must be a non-negative real");
  if (!(c.learning_rate > 0) || !std::isfinite(c.learning_rate)) throw CrfError("learning rate must be positive");
  if (c.batch_size == 0) throw CrfError("batch size must be positive");
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_nll = 0;  // mean over sequences, accumulated during the epoch
  std::optional<double> dev_nll;
};

struct TrainResult {
  CrfModel model;
  std::vector<EpochLog> log;
};

inline double mean_nll(const CrfModel& m, const std::vector<Instance>& data) {
  if (data.empty()) return 0;
  double s = 0;
  for (const auto& in : data) s += nll(m, in.features, in.gold);
  return s / static_cast<double>(data.size());
}

/// Trains from the zero model carried by `data`. Deterministic for a given
/// seed regardless of `config.threads`.
inline TrainResult train(const Dataset& data, const TrainConfig& config, const std::vector<Instance>* dev = nullptr) {
  check_config(config);
  if (data.instances.empty()) throw CrfError("empty training set");
  TrainResult res;
  res.model = data.model;
  auto& m = res.model;
  if (m.labels.empty()) throw CrfError("empty label set");
  m.reset_weights();
  for (const auto& in : data.instances) {
    check_gold(m, in.features, in.gold);
    for (const auto& pos : in.features)
      for (auto f : pos)
        if (f >= m.num_features()) throw CrfError("feature id outside the dictionary");
  }
  if (config.epochs == 0) return res;

  const std::size_t P = m.num_params(), E = m.emission.size();
  std::vector<double> grad(P), m1(P, 0.0), m2(P, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t step = 0;

  const std::size_t workers =
      std::max<std::size_t>(1, config.threads ? config.threads : std::thread::hardware_concurrency());
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.instances.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_nll = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + config.batch_size);
      std::vector<SparseGradient> parts(b1 - b0);
      auto work = [&](std::size_t w) {
        for (std::size_t i = b0 + w; i < b1; i += workers) {
          const auto& in = data.instances[order[i]];
          parts[i - b0] = sparse_gradient(m, in.features, in.gold);
        }
      };
      if (workers == 1 || parts.size() == 1) {
        work(0);
        for (std::size_t w = 1; w < workers; ++w) work(w);
      } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(workers, parts.size()); ++w) pool.emplace_back(work, w);
      }

      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 1.0 / static_cast<double>(parts.size());
      for (const auto& p : parts) {
        epoch_nll += p.nll;
        for (auto [i, v] : p.emission) grad[i] += v * scale;
        for (std::size_t k = 0; k < p.transition.size(); ++k) grad[E + k] += p.transition[k] * scale;
      }

      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < P; ++i) {
        double& w = i < E ? m.emission[i] : m.transition[i - E];
        m1[i] = beta1 * m1[i] + (1 - beta1) * grad[i];
        m2[i] = beta2 * m2[i] + (1 - beta2) * grad[i] * grad[i];
        w -= config.learning_rate * ((m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps) + config.l2 * w);
      }
    }
    EpochLog log{epoch, epoch_nll / static_cast<double>(order.size()), std::nullopt};
    if (dev) log.dev_nll = mean_nll(m, *dev);
    res.log.push_back(log);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Prediction

struct Prediction {
  Task task = Task::ATE;
  FlagSeq flags;    // ATE
  LabelSeq labels;  // NS
  std::size_t coerced = 0;  // NS tokens decoded as (NON, ASP) and reset to (NON, O)
  std::size_t size() const { return task == Task::ATE ? flags.size() : labels.size(); }
};

namespace detail {

inline std::optional<std::pair<Stance, Aspect>> parse_pair(const std::string& name) {
  auto bar = name.find('|');
  if (bar == std::string::npos) return std::nullopt;
  auto st = parse_stance(std::string_view(name).substr(0, bar));
  auto as = parse_aspect(std::string_view(name).substr(bar + 1));
  if (!st || !as) return std::nullopt;
  return std::make_pair(*st, *as);
}

}  // namespace detail

/// Throws unless the model's label set fits the task: {O, ASP} for ATE,
/// "STANCE|ASPECT" pairs for NS.
inline void check_task(const CrfModel& m, Task task) {
  if (m.task != task)
    throw CrfError("model/task mismatch: model trained for " + std::string(to_string(m.task)) + ", asked for " +
                   std::string(to_string(task)));
  for (const auto& l : m.labels) {
    const bool ok = task == Task::ATE ? parse_aspect(l).has_value() : detail::parse_pair(l).has_value();
    if (!ok) throw CrfError("model/task mismatch: label \"" + l + "\" not valid for " + std::string(to_string(task)));
  }
}

/// Converts a decoded path to task labels; NS (NON, ASP) is coerced.
inline Prediction to_prediction(const CrfModel& m, std::span<const LabelId> path) {
  Prediction p;
  p.task = m.task;
  for (auto y : path) {
    const auto& name = m.labels.at(y);
    if (m.task == Task::ATE) {
      p.flags.push_back(*parse_aspect(name));
      continue;
    }
    auto [st, as] = *detail::parse_pair(name);
    if (st == Stance::NON && as == Aspect::ASP) {
      as = Aspect::O;
      ++p.coerced;
    }
    p.labels.push_back(NestedLabel::make(st, as));
  }
  return p;
}

inline Prediction predict(const CrfModel& m, std::span<const Token> tokens, Task task) {
  check_task(m, task);
  if (tokens.empty()) return Prediction{task, {}, {}, 0};
  const auto feats = featurize(tokens, m.templates, m.features);
  return to_prediction(m, viterbi(m, feats).path);
}

// ---------------------------------------------------------------------------
// Grid search

struct GridRow {
  double l2 = 0;
  double learning_rate = 0;
  double dev_f1 = 0;
  double dev_nll = 0;
};

struct GridResult {
  TrainConfig best;
  std::size_t best_row = 0;
  std::vector<GridRow> table;
  CrfModel best_model;
};

/// Dev span macro-F1 of a model on encoded instances.
inline double dev_span_f1(const CrfModel& m, const std::vector<Instance>& dev) {
  if (m.task == Task::ATE) {
    std::vector<FlagSeq> gold, pred;
    for (const auto& in : dev) {
      Prediction g = to_prediction(m, in.gold);
      gold.push_back(std::move(g.flags));
      pred.push_back(to_prediction(m, viterbi(m, in.features).path).flags);
    }
    return span_f1(gold, pred).macro_f1;
  }
  std::vector<LabelSeq> gold, pred;
  for (const auto& in : dev) {
    gold.push_back(to_prediction(m, in.gold).labels);
    pred.push_back(to_prediction(m, viterbi(m, in.features).path).labels);
  }
  return span_f1(gold, pred).macro_f1;
}

/// Trains one model per (l2, learning rate) pair, l2-major, and keeps the one
/// with the highest dev span macro-F1 (first wins on ties).
inline GridResult grid_search(const Dataset& train_set, const std::vector<Instance>& dev,
                              const std::vector<double>& l2s, const std::vector<double>& rates,
                              const TrainConfig& base) {
  if (l2s.empty() || rates.empty()) throw CrfError("empty hyperparameter grid");
  if (dev.empty()) throw CrfError("empty dev set");
  GridResult out;
  double best = -1;
  for (double l2 : l2s) {
    for (double lr : rates) {
      TrainConfig cfg = base;
      cfg.l2 = l2;
      cfg.learning_rate = lr;
      auto res = train(train_set, cfg);
      GridRow row{l2, lr, dev_span_f1(res.model, dev), mean_nll(res.model, dev)};
      out.table.push_back(row);
      if (row.dev_f1 > best) {
        best = row.dev_f1;
        out.best = cfg;
        out.best_row = out.table.size() - 1;
        out.best_model = std::move(res.model);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kModelFormat = "abam-crf";

inline nlohmann::json to_json(const CrfModel& m) {
  nlohmann::json j;
  j["format"] = kModelFormat;
  j["version"] = CrfModel::kVersion;
  j["task"] = to_string(m.task);
  j["labels"] = m.labels;
  auto& tpl = j["templates"] = nlohmann::json::array();
  for (const auto& t : m.templates) tpl.push_back({{"id", t.id}, {"field", to_string(t.field)}, {"offsets", t.offsets}});
  j["features"] = m.features.names();
  j["emission"] = m.emission;
  j["transition"] = m.transition;
  return j;
}

inline CrfModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kModelFormat) throw CrfError("not an abam-crf model file");
    if (j.at("version").get<int>() != CrfModel::kVersion)
      throw CrfError("unsupported model version " + std::to_string(j.at("version").get<int>()));
    CrfModel m;
    auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw CrfError("unknown task in model file");
    m.task = *task;
    m.labels = j.at("labels").get<std::vector<std::string>>();
    for (const auto& t : j.at("templates")) {
      auto field = parse_field(t.at("field").get<std::string>());
      if (!field) throw CrfError("unknown template field");
      FeatureTemplate ft{t.at("id").get<std::string>(), t.at("offsets").get<std::vector<int>>(), *field};
      check_template(ft);
      m.templates.push_back(std::move(ft));
    }
    for (const auto& name : j.at("features")) {
      const auto before = m.features.size();
      m.features.intern(name.get<std::string>());
      if (m.features.size() == before) throw CrfError("duplicate feature name in model file");
    }
    m.emission = j.at("emission").get<std::vector<double>>();
    m.transition = j.at("transition").get<std::vector<double>>();
    const auto L = m.labels.size();
    if (L == 0 || m.emission.size() != m.features.size() * L || m.transition.size() != L * L)
      throw CrfError("weight matrix dimensions do not match labels and features");
    for (double w : m.emission)
      if (!std::isfinite(w)) throw CrfError("non-finite weight in model file");
    for (double w : m.transition)
      if (!std::isfinite(w)) throw CrfError("non-finite weight in model file");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw CrfError(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const std::string& path, const CrfModel& m) {
  std::ofstream out(path);
  if (!out) throw CrfError("cannot write " + path);
  out << to_json(m).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
}

inline CrfModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CrfError("cannot open " + path);
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw CrfError(std::string("malformed model file: ") + e.what());
  }
}

}  // namespace abam::crf
