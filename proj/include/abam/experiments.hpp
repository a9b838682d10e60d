// End-to-end experiment runners shared by the CLI and the acceptance suite.

#pragma once

#include <vector>

#include "abam/crf.hpp"
#include "abam/evaluation.hpp"
#include "abam/patterns.hpp"
#include "abam/split.hpp"

namespace abam {

struct BaselineCell {
  Domain domain = Domain::INNER;
  SplitSet set = SplitSet::DEV;
  std::size_t samples = 0;
  MetricReport spans;
  TokenMetrics tokens;
};

/// Gold and baseline aspect flags for ATE samples.
inline MetricReport score_baseline(const std::vector<Sample>& samples, const PatternSet& patterns,
                                   TokenMetrics* token_out = nullptr) {
  std::vector<FlagSeq> gold, pred;
  for (const auto& s : samples) {
    gold.push_back(s.flags());
    pred.push_back(baseline_labels(s.tokens(), patterns));
  }
  if (token_out) *token_out = token_metrics(gold, pred);
  return span_f1(gold, pred);
}

/// Pattern-match baseline on the ATE dev and test sets of both domains, in
/// the order inner/dev, inner/test, cross/dev, cross/test.
inline std::vector<BaselineCell> reproduce_baseline(const Corpus& corpus, const PatternSet& patterns,
                                                    std::uint64_t seed) {
  std::vector<BaselineCell> cells;
  for (auto domain : {Domain::INNER, Domain::CROSS}) {
    const auto split = make_splits(corpus, domain, Task::ATE, seed);
    for (auto set : {SplitSet::DEV, SplitSet::TEST}) {
      BaselineCell c;
      c.domain = domain;
      c.set = set;
      const auto samples = resolve(corpus, split.set(set));
      c.samples = samples.size();
      c.spans = score_baseline(samples, patterns, &c.tokens);
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

struct CrfExperiment {
  crf::GridResult grid;
  MetricReport test;
  TokenMetrics test_tokens;
  std::size_t coerced = 0;
};

inline std::vector<FlagSeq> gold_flags(const std::vector<Sample>& samples) {
  std::vector<FlagSeq> out;
  for (const auto& s : samples) out.push_back(s.flags());
  return out;
}

inline std::vector<LabelSeq> gold_labels(const std::vector<Sample>& samples) {
  std::vector<LabelSeq> out;
  for (const auto& s : samples) out.push_back(s.labels());
  return out;
}

/// Scores a model on samples with span and token metrics.
inline CrfExperiment evaluate_model(const crf::CrfModel& model, const std::vector<Sample>& samples) {
  CrfExperiment ex;
  if (model.task == Task::ATE) {
    std::vector<FlagSeq> pred;
    for (const auto& s : samples) pred.push_back(crf::predict(model, s.tokens(), Task::ATE).flags);
    const auto gold = gold_flags(samples);
    ex.test = span_f1(gold, pred);
    ex.test_tokens = token_metrics(gold, pred);
  } else {
    std::vector<LabelSeq> pred;
    for (const auto& s : samples) {
      auto p = crf::predict(model, s.tokens(), Task::NS);
      ex.coerced += p.coerced;
      pred.push_back(std::move(p.labels));
    }
    const auto gold = gold_labels(samples);
    ex.test = span_f1(gold, pred);
    ex.test_tokens = token_metrics(gold, pred);
  }
  return ex;
}

/// Grid search on the split's train/dev sets, then scores the selected model
/// on the test set.
inline CrfExperiment run_crf(const Corpus& corpus, const SplitSpec& split, const std::vector<double>& l2s,
                             const std::vector<double>& rates, const crf::TrainConfig& base) {
  const auto train = resolve(corpus, split.train);
  const auto dev = resolve(corpus, split.dev);
  const auto test = resolve(corpus, split.test);
  auto ds = crf::build_dataset(train, split.task);
  const auto dev_inst = crf::encode(ds.model, dev);
  auto grid = crf::grid_search(ds, dev_inst, l2s, rates, base);
  auto ex = evaluate_model(grid.best_model, test);
  ex.grid = std::move(grid);
  return ex;
}

}  // namespace abam
