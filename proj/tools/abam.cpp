// abam: command-line entry point.
//
// Exit codes: 0 success, 1 data or runtime error, 2 usage error.
// Every flag can also be set through an environment variable named
// ABAM_<FLAG> (for example ABAM_DATA, ABAM_SEED).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "abam/abam.hpp"
#include "abam/experiments.hpp"
#include "abam/server.hpp"

namespace {

using namespace abam;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string data, patterns, task = "ate", domain = "inner", model, out;
  std::string pred, tasks, responses, set = "all", static_dir, host = "127.0.0.1";
  std::string l2s = "0,1e-4,1e-3", rates = "0.01,0.05,0.1";
  std::uint64_t seed = 1;
  int port = 8080;
  std::size_t epochs = 10, batch = 32, threads = 0, top = 10;
};

Task task_of(const Options& o) {
  auto t = parse_task(o.task);
  if (!t) throw UsageError("--task must be ate or ns, got \"" + o.task + "\"");
  return *t;
}

Domain domain_of(const Options& o) {
  auto d = parse_domain(o.domain);
  if (!d) throw UsageError("--domain must be inner or cross, got \"" + o.domain + "\"");
  return *d;
}

std::vector<double> number_list(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(flag + ": not a number: \"" + item + "\"");
    }
  }
  if (out.empty()) throw UsageError(flag + " needs at least one value");
  return out;
}

const PatternSet& patterns_of(const Options& o, PatternSet& storage) {
  if (o.patterns.empty()) return default_patterns();
  storage = load_patterns(o.patterns);
  return storage;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

/// Predicted label sequences aligned with the gold samples.
struct Aligned {
  std::vector<FlagSeq> gold_flags, pred_flags;
  std::vector<LabelSeq> gold_labels, pred_labels;
};

Aligned align(const std::vector<Sample>& samples, const Corpus& pred, Task task) {
  Aligned a;
  for (const auto& s : samples) {
    const auto* p = pred.find(s.sentence->topic_id, s.sentence->sentence_id);
    if (!p) throw CorpusError("prediction missing for " + s.sentence->topic_id + "/" + s.sentence->sentence_id);
    if (p->size() != s.sentence->size())
      throw CorpusError("token count differs for " + s.sentence->topic_id + "/" + s.sentence->sentence_id);
    Sample ps{p, s.start, s.end};
    if (task == Task::ATE) {
      a.gold_flags.push_back(s.flags());
      a.pred_flags.push_back(ps.flags());
    } else {
      a.gold_labels.push_back(s.labels());
      a.pred_labels.push_back(ps.labels());
    }
  }
  return a;
}

std::vector<Sample> selected_samples(const Corpus& gold, const Options& o, Task task) {
  if (o.set == "all") return all_samples(gold, task);
  auto set = parse_split_set(o.set);
  if (!set) throw UsageError("--set must be all, train, dev or test");
  return resolve(gold, make_splits(gold, domain_of(o), task, o.seed).set(*set));
}

// ---------------------------------------------------------------------------
// Commands. Each returns a JSON summary recorded in the manifest.

json cmd_ingest(const Options& o, RunManifest& man) {
  man.add_input(o.data);
  const auto c = load_corpus(o.data);
  const auto st = corpus_stats(c);
  if (!o.out.empty()) save_corpus(o.out, c);
  std::cout << "ok: " << st.total.sentences << " sentences, " << st.total.segments << " segments, "
            << st.total.aspects << " aspects\n";
  return {{"sentences", st.total.sentences}, {"segments", st.total.segments}, {"aspects", st.total.aspects}};
}

json cmd_stats(const Options& o, RunManifest& man) {
  man.add_input(o.data);
  const auto c = load_corpus(o.data);
  const auto st = corpus_stats(c);
  const auto top = top_aspects(c, o.top);
  std::cout << std::left << std::setw(6) << "topic" << std::setw(20) << "name" << std::right << std::setw(10)
            << "sentences" << std::setw(10) << "segments" << std::setw(10) << "aspects" << std::setw(10) << "unique"
            << "\n";
  json per_topic = json::object();
  for (const auto& [t, tc] : st.per_topic) {
    std::cout << std::left << std::setw(6) << t << std::setw(20) << topic_name(t) << std::right << std::setw(10)
              << tc.sentences << std::setw(10) << tc.segments << std::setw(10) << tc.aspects << std::setw(10)
              << tc.unique_aspects << "\n";
    per_topic[t] = {{"sentences", tc.sentences},
                    {"segments", tc.segments},
                    {"aspects", tc.aspects},
                    {"unique_aspects", tc.unique_aspects}};
  }
  std::cout << std::left << std::setw(26) << "total" << std::right << std::setw(10) << st.total.sentences
            << std::setw(10) << st.total.segments << std::setw(10) << st.total.aspects << std::setw(10)
            << st.unique_sum << "\n";
  std::cout << "distinct aspects across topics: " << st.total.unique_aspects << "\n";
  json lengths = json::array();
  std::cout << "aspect length share (%):";
  for (std::size_t len = 1; len <= kAspMax; ++len) {
    std::cout << "  " << len << "=" << fixed(100 * st.length_share(len), 2);
    lengths.push_back(st.length_share(len));
  }
  std::cout << "\n";
  json top_json = json::object();
  for (const auto& [t, list] : top.per_topic) {
    std::cout << t << " top:";
    for (const auto& a : list) {
      std::cout << " " << a.aspect << " (" << a.count << ")";
      top_json[t].push_back({a.aspect, a.count});
    }
    std::cout << "\n";
  }
  json shared = json::array();
  std::cout << "shared by >= 7 topics:";
  for (const auto& s : top.shared) {
    std::cout << " " << s.aspect << " [" << s.topics << "]";
    shared.push_back({{"aspect", s.aspect}, {"topics", s.topics}, {"count", s.count}});
  }
  std::cout << "\n";
  json j{{"per_topic", per_topic},
         {"total",
          {{"sentences", st.total.sentences},
           {"segments", st.total.segments},
           {"aspects", st.total.aspects},
           {"unique_aspects", st.unique_sum},
           {"distinct_aspects", st.total.unique_aspects}}},
         {"length_share", lengths},
         {"top_aspects", top_json},
         {"shared_aspects", shared}};
  if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
  return j;
}

json cmd_match(const Options& o, RunManifest& man) {
  if (task_of(o) != Task::ATE) throw UsageError("match labels aspects only; use --task ate");
  man.add_input(o.data);
  PatternSet storage;
  const auto& pats = patterns_of(o, storage);
  if (!o.patterns.empty()) man.add_input(o.patterns);
  auto c = load_corpus(o.data);
  std::size_t units = 0;
  for (auto& s : c.sentences) {
    const auto segs = segments(s);
    for (auto& l : s.labels) l = NestedLabel::make(l.stance(), Aspect::O);
    for (const auto& seg : segs) {
      ++units;
      const auto flags =
          baseline_labels(std::span(s.tokens).subspan(seg.start, seg.size()), pats);
      for (std::size_t i = 0; i < flags.size(); ++i)
        s.labels[seg.start + i] = NestedLabel::make(s.labels[seg.start + i].stance(), flags[i]);
    }
  }
  if (o.out.empty())
    write_tsv(std::cout, c);
  else
    save_corpus(o.out, c);
  return {{"units", units}, {"scope", "argument units"}, {"patterns", pats.size()}};
}

json cmd_candidates(const Options& o, RunManifest& man) {
  man.add_input(o.data);
  PatternSet storage;
  const auto& pats = patterns_of(o, storage);
  const auto tasks = build_tasks(load_corpus(o.data), pats);
  if (o.out.empty()) {
    for (const auto& t : tasks) std::cout << to_json(t).dump() << "\n";
  } else {
    save_tasks(o.out, tasks);
    std::cout << tasks.size() << " tasks written to " << o.out << "\n";
  }
  return {{"tasks", tasks.size()}};
}

json cmd_split(const Options& o, RunManifest& man) {
  man.add_input(o.data);
  const auto spec = make_splits(load_corpus(o.data), domain_of(o), task_of(o), o.seed);
  std::cout << o.domain << "/" << o.task << " train " << spec.train.size() << " / dev " << spec.dev.size()
            << " / test " << spec.test.size() << "\n";
  if (!o.out.empty()) write_text(o.out, to_json(spec).dump() + "\n");
  return {{"train", spec.train.size()}, {"dev", spec.dev.size()}, {"test", spec.test.size()}};
}

json cmd_train(const Options& o, RunManifest& man) {
  man.add_input(o.data);
  const auto corpus = load_corpus(o.data);
  const auto task = task_of(o);
  const auto spec = make_splits(corpus, domain_of(o), task, o.seed);
  crf::TrainConfig base;
  base.epochs = o.epochs;
  base.batch_size = o.batch;
  base.seed = o.seed;
  base.threads = o.threads;
  const auto l2s = number_list("--l2", o.l2s), rates = number_list("--lr", o.rates);
  auto ds = crf::build_dataset(resolve(corpus, spec.train), task);
  const auto dev = crf::encode(ds.model, resolve(corpus, spec.dev));
  auto grid = crf::grid_search(ds, dev, l2s, rates, base);
  crf::save_model(o.model, grid.best_model);
  json table = json::array();
  std::cout << "       l2        lr    dev F1   dev NLL\n";
  for (std::size_t i = 0; i < grid.table.size(); ++i) {
    const auto& r = grid.table[i];
    std::cout << std::setw(9) << r.l2 << std::setw(10) << r.learning_rate << std::setw(10) << fixed(r.dev_f1)
              << std::setw(10) << fixed(r.dev_nll) << (i == grid.best_row ? "  *" : "") << "\n";
    table.push_back({{"l2", r.l2}, {"learning_rate", r.learning_rate}, {"dev_f1", r.dev_f1}, {"dev_nll", r.dev_nll}});
  }
  std::cout << "model written to " << o.model << " (" << ds.model.num_features() << " features)\n";
  return {{"grid", table}, {"best_row", grid.best_row}, {"features", ds.model.num_features()}};
}

json cmd_predict(const Options& o, RunManifest& man) {
  man.add_input(o.data);
  man.add_input(o.model);
  const auto model = crf::load_model(o.model);
  const Task task = o.task.empty() ? model.task : task_of(o);
  crf::check_task(model, task);
  auto c = load_corpus(o.data, ParseOptions{false});
  std::size_t coerced = 0;
  for (auto& s : c.sentences) {
    if (task == Task::NS) {
      auto p = crf::predict(model, s.tokens, Task::NS);
      coerced += p.coerced;
      s.labels = std::move(p.labels);
      continue;
    }
    const auto segs = segments(s);
    for (auto& l : s.labels) l = NestedLabel::make(l.stance(), Aspect::O);
    for (const auto& seg : segs) {
      auto p = crf::predict(model, std::span(s.tokens).subspan(seg.start, seg.size()), Task::ATE);
      for (std::size_t i = 0; i < p.flags.size(); ++i)
        s.labels[seg.start + i] = NestedLabel::make(s.labels[seg.start + i].stance(), p.flags[i]);
    }
  }
  if (o.out.empty())
    write_tsv(std::cout, c);
  else
    save_corpus(o.out, c);
  if (coerced) std::cerr << "coerced " << coerced << " (NON, ASP) tokens to (NON, O)\n";
  return {{"sentences", c.size()}, {"coerced", coerced}};
}

json cmd_evaluate(const Options& o, RunManifest& man) {
  man.add_input(o.data);
  man.add_input(o.pred);
  const auto gold = load_corpus(o.data);
  const auto pred = load_corpus(o.pred, ParseOptions{false});
  const auto task = task_of(o);
  const auto samples = selected_samples(gold, o, task);
  const auto a = align(samples, pred, task);
  MetricReport spans;
  TokenMetrics tokens;
  if (task == Task::ATE) {
    spans = span_f1(a.gold_flags, a.pred_flags);
    tokens = token_metrics(a.gold_flags, a.pred_flags);
  } else {
    spans = span_f1(a.gold_labels, a.pred_labels);
    tokens = token_metrics(a.gold_labels, a.pred_labels);
  }
  std::cout << "samples " << samples.size() << "  macro-F1 " << fixed(spans.macro_f1) << "  acc "
            << fixed(tokens.accuracy) << "  pre " << fixed(tokens.precision) << "  rec " << fixed(tokens.recall)
            << "\n";
  for (const auto& [t, p] : spans.per_type)
    std::cout << "  " << t << "  P " << fixed(p.precision) << "  R " << fixed(p.recall) << "  F1 " << fixed(p.f1)
              << "\n";
  json j{{"task", o.task}, {"set", o.set}, {"samples", samples.size()}, {"spans", to_json(spans)},
         {"tokens", to_json(tokens)}};
  if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
  return j;
}

json cmd_iaa(const Options& o, RunManifest& man) {
  man.add_input(o.tasks);
  man.add_input(o.responses);
  const auto tasks = load_tasks(o.tasks);
  AnnotationStore store(tasks);
  for (const auto& r : load_responses(o.responses)) store.record(r);
  const auto rep = iaa_report(store.snapshot(), tasks);
  std::cout << "kappa " << fixed(rep.overall) << " over " << rep.tokens << " tokens\n";
  for (const auto& [t, k] : rep.per_topic) std::cout << "  " << t << "  " << fixed(k) << "\n";
  const auto j = to_json(rep);
  if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
  return j;
}

json cmd_merge(const Options& o, RunManifest& man) {
  man.add_input(o.data);
  man.add_input(o.tasks);
  man.add_input(o.responses);
  const auto tasks = load_tasks(o.tasks);
  AnnotationStore store(tasks);
  for (const auto& r : load_responses(o.responses)) store.record(r);
  const auto res = export_gold(store.snapshot(), load_corpus(o.data), tasks);
  save_corpus(o.out, res.corpus);
  std::string sidecar;
  for (const auto& g : res.sidecar) sidecar += to_json(g).dump() + "\n";
  write_text(o.out + ".sidecar.jsonl", sidecar);
  std::cout << "gold written to " << o.out << "; " << res.sidecar.size() << " units flagged in " << o.out
            << ".sidecar.jsonl\n";
  return {{"sentences", res.corpus.size()}, {"flagged", res.sidecar.size()}};
}

json cmd_serve(const Options& o, RunManifest& man) {
  man.add_input(o.tasks);
  AnnotationStore store(load_tasks(o.tasks),
                        o.responses.empty() ? std::nullopt : std::optional<std::filesystem::path>(o.responses));
  std::optional<std::filesystem::path> dir;
  if (!o.static_dir.empty()) dir = o.static_dir;
  AnnotationServer server(store, dir);
  if (!server.bind(o.host, o.port)) throw std::runtime_error("cannot bind " + o.host + ":" + std::to_string(o.port));
  std::cerr << "serving " << store.tasks().size() << " tasks on http://" << o.host << ":" << o.port << "\n";
  server.serve();
  return {{"responses", store.log().size()}};
}

json cmd_reproduce_baseline(const Options& o, RunManifest& man) {
  man.add_input(o.data);
  PatternSet storage;
  const auto& pats = patterns_of(o, storage);
  const auto cells = reproduce_baseline(load_corpus(o.data), pats, o.seed);
  std::cout << "PoS-pattern baseline, ATE (argument units)\n";
  std::cout << std::left << std::setw(10) << "" << std::right;
  for (const auto& c : cells) std::cout << std::setw(13) << (std::string(to_string(c.domain)) + " " + std::string(to_string(c.set)));
  std::cout << "\n";
  auto row = [&](const char* name, auto get) {
    std::cout << std::left << std::setw(10) << name << std::right;
    for (const auto& c : cells) std::cout << std::setw(13) << fixed(get(c));
    std::cout << "\n";
  };
  row("macro-F1", [](const BaselineCell& c) { return c.spans.macro_f1; });
  row("accuracy", [](const BaselineCell& c) { return c.tokens.accuracy; });
  row("precision", [](const BaselineCell& c) { return c.tokens.precision; });
  row("recall", [](const BaselineCell& c) { return c.tokens.recall; });
  json j = json::array();
  for (const auto& c : cells)
    j.push_back({{"domain", to_string(c.domain)},
                 {"set", to_string(c.set)},
                 {"samples", c.samples},
                 {"spans", to_json(c.spans)},
                 {"tokens", to_json(c.tokens)}});
  if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
  return {{"cells", j}, {"scope", "argument units"}};
}

void emit_manifest(RunManifest& man, const std::string& anchor) {
  man.finish();
  const auto text = man.to_json().dump(2) + "\n";
  if (anchor.empty()) {
    std::cerr << "manifest: " << man.to_json().dump() << "\n";
    return;
  }
  write_text(anchor + ".manifest.json", text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aspect-based argument mining toolkit"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  Options o;

  auto data = [&](CLI::App* s, bool required = true) {
    auto* opt = s->add_option("--data", o.data, "corpus file (TSV or JSONL)")->envname("ABAM_DATA");
    if (required) opt->required();
  };
  auto patterns = [&](CLI::App* s) {
    s->add_option("--patterns", o.patterns, "PoS pattern file (default: built-in set)")->envname("ABAM_PATTERNS");
  };
  auto task = [&](CLI::App* s) {
    s->add_option("--task", o.task, "ate or ns")->envname("ABAM_TASK")->capture_default_str();
  };
  auto domain = [&](CLI::App* s) {
    s->add_option("--domain", o.domain, "inner or cross")->envname("ABAM_DOMAIN")->capture_default_str();
  };
  auto seed = [&](CLI::App* s) { s->add_option("--seed", o.seed, "split seed")->envname("ABAM_SEED")->capture_default_str(); };
  auto out = [&](CLI::App* s, bool required = false) {
    auto* opt = s->add_option("--out", o.out, "output file")->envname("ABAM_OUT");
    if (required) opt->required();
  };
  auto model = [&](CLI::App* s) { s->add_option("--model", o.model, "model file")->envname("ABAM_MODEL")->required(); };
  auto annotations = [&](CLI::App* s, bool responses_required) {
    s->add_option("--tasks", o.tasks, "annotation tasks (JSONL)")->envname("ABAM_TASKS")->required();
    auto* r = s->add_option("--responses", o.responses, "annotator responses (JSONL)")->envname("ABAM_RESPONSES");
    if (responses_required) r->required();
  };

  auto* ingest = app.add_subcommand("ingest", "validate a corpus and optionally convert it");
  data(ingest);
  out(ingest);
  auto* stats = app.add_subcommand("stats", "corpus statistics and most frequent aspects");
  data(stats);
  out(stats);
  stats->add_option("--top", o.top, "aspects listed per topic")->envname("ABAM_TOP")->capture_default_str();
  auto* match = app.add_subcommand("match", "label aspects with the PoS-pattern baseline");
  data(match);
  patterns(match);
  task(match);
  out(match);
  auto* cands = app.add_subcommand("candidates", "build annotation tasks with candidate menus");
  data(cands);
  patterns(cands);
  out(cands);
  auto* split = app.add_subcommand("split", "train/dev/test split");
  data(split);
  task(split);
  domain(split);
  seed(split);
  out(split);
  auto* train = app.add_subcommand("train", "grid-search a CRF on the train/dev split");
  data(train);
  task(train);
  domain(train);
  seed(train);
  model(train);
  train->add_option("--l2", o.l2s, "comma-separated weight decay values")->envname("ABAM_L2")->capture_default_str();
  train->add_option("--lr", o.rates, "comma-separated learning rates")->envname("ABAM_LR")->capture_default_str();
  train->add_option("--epochs", o.epochs)->envname("ABAM_EPOCHS")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--batch", o.batch)->envname("ABAM_BATCH")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--threads", o.threads, "0 = all cores")->envname("ABAM_THREADS")->capture_default_str();
  auto* predict = app.add_subcommand("predict", "label a corpus with a trained model");
  data(predict);
  model(predict);
  out(predict);
  std::string predict_task;
  predict->add_option("--task", predict_task, "ate or ns (default: the model's task)")->envname("ABAM_TASK");
  auto* evaluate = app.add_subcommand("evaluate", "span and token metrics of predictions against gold");
  data(evaluate);
  evaluate->add_option("--pred", o.pred, "predicted corpus")->envname("ABAM_PRED")->required();
  task(evaluate);
  domain(evaluate);
  seed(evaluate);
  evaluate->add_option("--set", o.set, "all, train, dev or test")->envname("ABAM_SET")->capture_default_str();
  out(evaluate);
  auto* iaa = app.add_subcommand("iaa", "Cohen's kappa between two annotators");
  annotations(iaa, true);
  out(iaa);
  auto* merge = app.add_subcommand("merge", "merge two annotators into a gold corpus");
  data(merge);
  annotations(merge, true);
  out(merge, true);
  auto* serve = app.add_subcommand("serve", "annotation HTTP API");
  annotations(serve, false);
  serve->add_option("--port", o.port)->envname("ABAM_PORT")->capture_default_str();
  serve->add_option("--host", o.host)->envname("ABAM_HOST")->capture_default_str();
  serve->add_option("--static", o.static_dir, "directory served at /")->envname("ABAM_STATIC");
  auto* baseline = app.add_subcommand("reproduce-baseline", "PoS baseline over both domains, dev and test");
  data(baseline);
  patterns(baseline);
  seed(baseline);
  out(baseline);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* cmd = app.get_subcommands().front();
  if (cmd == predict) o.task = predict_task;
  RunManifest man;
  man.command = cmd->get_name();
  man.seed = o.seed;
  for (const auto* opt : cmd->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    man.config[opt->get_name()] = opt->count() ? opt->as<std::string>() : opt->get_default_str();
  }

  try {
    json extra;
    const std::string name = cmd->get_name();
    if (name == "ingest") extra = cmd_ingest(o, man);
    else if (name == "stats") extra = cmd_stats(o, man);
    else if (name == "match") extra = cmd_match(o, man);
    else if (name == "candidates") extra = cmd_candidates(o, man);
    else if (name == "split") extra = cmd_split(o, man);
    else if (name == "train") extra = cmd_train(o, man);
    else if (name == "predict") extra = cmd_predict(o, man);
    else if (name == "evaluate") extra = cmd_evaluate(o, man);
    else if (name == "iaa") extra = cmd_iaa(o, man);
    else if (name == "merge") extra = cmd_merge(o, man);
    else if (name == "serve") extra = cmd_serve(o, man);
    else extra = cmd_reproduce_baseline(o, man);
    man.extra = extra;
    emit_manifest(man, name == "train" ? o.model : o.out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
