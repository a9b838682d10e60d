#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "abam/annotation.hpp"
#include "abam/server.hpp"
#include "test_util.hpp"

namespace abam {
namespace {

namespace fs = std::filesystem;

AnnotationTask task_with(std::vector<std::vector<Span>> items, std::size_t n, std::string id = "T1/s1/0-8") {
  AnnotationTask t;
  t.id = std::move(id);
  t.topic_id = t.id.substr(0, 2);
  t.sentence_id = "s1";
  t.segment = {0, n, SpanKind::PRO};
  for (std::size_t i = 0; i < n; ++i) t.tokens.push_back({"w" + std::to_string(i), "NN", ""});
  for (auto& occ : items) t.menu.items.push_back({"item", occ, {"NN"}});
  return t;
}

AnnotatorResponse pick(const AnnotationTask& t, const std::string& who, std::vector<std::size_t> ids) {
  return {t.id, who, std::move(ids), false, "2020-01-01T00:00:00Z"};
}

AnnotatorResponse none(const AnnotationTask& t, const std::string& who) { return {t.id, who, {}, true, ""}; }

TEST(BuildTasks, OneTaskPerArgumentUnit) {
  const auto c = load_corpus(testing::fixture("mini_corpus.tsv"));
  const auto tasks = build_tasks(c, default_patterns());
  EXPECT_EQ(tasks.size(), 17u);
  std::set<std::string> ids;
  for (const auto& t : tasks) ids.insert(t.id);
  EXPECT_EQ(ids.size(), tasks.size());
  const auto again = build_tasks(c, default_patterns());
  for (std::size_t i = 0; i < tasks.size(); ++i) EXPECT_EQ(tasks[i].id, again[i].id);
}

TEST(BuildTasks, VerbOnlySegmentOffersOnlyNone) {
  Corpus c;
  auto P = NestedLabel::make(Stance::PRO, Aspect::O);
  c.sentences.push_back(testing::make_sentence("T1", "v", {"run", "jump", "go"}, {"VB", "VB", "VB"}, {P, P, P}));
  auto tasks = build_tasks(c, default_patterns());
  ASSERT_EQ(tasks.size(), 1u);
  EXPECT_EQ(tasks[0].menu.options(), (std::vector<std::string>{"NONE"}));
}

TEST(BuildTasks, FixtureFileIsCurrent) {
  const auto c = load_corpus(testing::fixture("mini_corpus.tsv"));
  const auto built = build_tasks(c, default_patterns());
  const auto stored = load_tasks(testing::fixture("mini_tasks.jsonl"));
  ASSERT_EQ(built.size(), stored.size());
  for (std::size_t i = 0; i < built.size(); ++i) EXPECT_EQ(to_json(built[i]), to_json(stored[i]));
}

TEST(CheckResponse, Rules) {
  auto t = task_with({{{0, 1, SpanKind::ASP}}, {{2, 4, SpanKind::ASP}}}, 8);
  EXPECT_NO_THROW(check_response(t, pick(t, "a", {0, 1})));
  EXPECT_NO_THROW(check_response(t, none(t, "a")));
  auto both = pick(t, "a", {0});
  both.none = true;
  EXPECT_THROW(check_response(t, both), AnnotationError);
  EXPECT_THROW(check_response(t, pick(t, "a", {})), AnnotationError);
  EXPECT_THROW(check_response(t, pick(t, "a", {2})), AnnotationError);
  EXPECT_THROW(check_response(t, pick(t, "a", {1, 1})), AnnotationError);
  EXPECT_THROW(check_response(t, pick(t, "", {0})), AnnotationError);
}

TEST(MergeGold, IntersectionFavoursShorterTerms) {
  // "breast cancer" [2,4) against "cancer" [3,4).
  auto t = task_with({{{2, 4, SpanKind::ASP}}, {{3, 4, SpanKind::ASP}}}, 6);
  auto g = merge_gold(pick(t, "a", {0}), pick(t, "b", {1}), t);
  EXPECT_EQ(g.spans, (std::vector<Span>{{3, 4, SpanKind::ASP}}));
  EXPECT_EQ(g.provenance, Provenance::Merged);
}

TEST(MergeGold, TwoRuns) {
  auto t = task_with({{{0, 2, SpanKind::ASP}}, {{5, 6, SpanKind::ASP}}, {{1, 3, SpanKind::ASP}}}, 8);
  auto g = merge_gold(pick(t, "a", {0, 1}), pick(t, "b", {2, 1}), t);
  EXPECT_EQ(g.spans, (std::vector<Span>{{1, 2, SpanKind::ASP}, {5, 6, SpanKind::ASP}}));
}

TEST(MergeGold, NoneAndEmptyIntersection) {
  auto t = task_with({{{0, 2, SpanKind::ASP}}, {{4, 6, SpanKind::ASP}}}, 8);
  auto g = merge_gold(none(t, "a"), pick(t, "b", {0}), t);
  EXPECT_TRUE(g.spans.empty());
  EXPECT_EQ(g.provenance, Provenance::Merged);
  auto e = merge_gold(pick(t, "a", {0}), pick(t, "b", {1}), t);
  EXPECT_TRUE(e.spans.empty());
  EXPECT_EQ(e.provenance, Provenance::EmptyIntersection);
  auto other = task_with({}, 8, "T2/s1/0-8");
  EXPECT_THROW(merge_gold(none(other, "a"), none(t, "b"), t), AnnotationError);
}

TEST(MergeGold, OverlongRunIsDropped) {
  auto t = task_with({{{0, 3, SpanKind::ASP}}, {{3, 6, SpanKind::ASP}}}, 8);
  auto g = merge_gold(pick(t, "a", {0, 1}), pick(t, "b", {0, 1}), t);
  EXPECT_TRUE(g.spans.empty());
  EXPECT_EQ(g.dropped, (std::vector<Span>{{0, 6, SpanKind::ASP}}));
}

TEST(MergeGold, RandomSelectionsEqualTokenIntersection) {
  std::mt19937_64 rng(200);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = testing::uniform(rng, 3, 14);
    std::vector<std::vector<Span>> items;
    const auto k = testing::uniform(rng, 1, 6);
    for (std::size_t i = 0; i < k; ++i) {
      const auto s = testing::uniform(rng, 0, n - 1);
      const auto e = testing::uniform(rng, s + 1, std::min(n, s + 3));
      items.push_back({{s, e, SpanKind::ASP}});
    }
    auto t = task_with(items, n);
    auto subset = [&] {
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < k; ++i)
        if (testing::uniform(rng, 0, 1)) ids.push_back(i);
      if (ids.empty()) ids.push_back(0);
      return ids;
    };
    const auto a = pick(t, "a", subset()), b = pick(t, "b", subset());
    const auto g = merge_gold(a, b, t);
    ASSERT_EQ(g.spans, merge_gold(b, a, t).spans);
    std::vector<bool> ma(n), mb(n), got(n);
    for (auto id : a.selected)
      for (auto i = items[id][0].start; i < items[id][0].end; ++i) ma[i] = true;
    for (auto id : b.selected)
      for (auto i = items[id][0].start; i < items[id][0].end; ++i) mb[i] = true;
    for (const auto& sp : g.spans) {
      ASSERT_LE(sp.size(), kAspMax);
      for (auto i = sp.start; i < sp.end; ++i) got[i] = true;
    }
    for (const auto& sp : g.dropped)
      for (auto i = sp.start; i < sp.end; ++i) got[i] = true;
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(got[i], ma[i] && mb[i]);
    // Spans are maximal: no two touch.
    auto all = g.spans;
    all.insert(all.end(), g.dropped.begin(), g.dropped.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 1; i < all.size(); ++i) ASSERT_LT(all[i - 1].end, all[i].start);
  }
}

TEST(Store, SupersedeKeepsHistory) {
  auto t = task_with({{{0, 1, SpanKind::ASP}}, {{2, 3, SpanKind::ASP}}}, 4);
  AnnotationStore store({t});
  auto first = store.record(pick(t, "a", {0, 1}));
  EXPECT_FALSE(first.superseded);
  EXPECT_EQ(store.latest(t.id, "a")->selected, (std::vector<std::size_t>{0, 1}));
  auto second = store.record(pick(t, "a", {1}));
  EXPECT_TRUE(second.superseded);
  EXPECT_EQ(second.sequence, 1u);
  EXPECT_EQ(store.latest(t.id, "a")->selected, (std::vector<std::size_t>{1}));
  auto hist = store.history(t.id, "a");
  ASSERT_EQ(hist.size(), 2u);
  EXPECT_EQ(hist[0].selected, (std::vector<std::size_t>{0, 1}));
  auto bad = pick(t, "a", {0});
  bad.none = true;
  EXPECT_THROW(store.record(bad), AnnotationError);
  try {
    store.record({"nope", "a", {0}, false, ""});
    FAIL();
  } catch (const AnnotationError& e) {
    EXPECT_EQ(e.kind(), AnnotationError::Kind::UnknownTask);
  }
  EXPECT_EQ(store.log().size(), 2u);
  EXPECT_EQ(store.progress("a").answered, 1u);
  EXPECT_EQ(store.next_task("a"), nullptr);
  EXPECT_EQ(store.next_task("b"), &store.tasks()[0]);
}

TEST(Store, LogIsReplayed) {
  auto t = task_with({{{0, 1, SpanKind::ASP}}}, 4);
  const auto path = fs::temp_directory_path() / "abam_store_replay.jsonl";
  fs::remove(path);
  {
    AnnotationStore store({t}, path);
    store.record(pick(t, "a", {0}));
    store.record(none(t, "a"));
  }
  AnnotationStore again({t}, path);
  EXPECT_EQ(again.log().size(), 2u);
  EXPECT_TRUE(again.latest(t.id, "a")->none);
  fs::remove(path);
}

TEST(Store, ConcurrentWritersKeepEveryRecord) {
  std::vector<AnnotationTask> tasks;
  for (int i = 0; i < 20; ++i) tasks.push_back(task_with({{{0, 1, SpanKind::ASP}}}, 3, "T1/s" + std::to_string(i) + "/0-3"));
  AnnotationStore store(tasks);
  {
    std::vector<std::jthread> workers;
    for (int w = 0; w < 4; ++w)
      workers.emplace_back([&, w] {
        for (const auto& t : tasks) store.record(pick(t, "ann" + std::to_string(w), {0}));
      });
  }
  EXPECT_EQ(store.log().size(), 80u);
  for (const auto& t : tasks) EXPECT_EQ(store.snapshot().at(t.id).size(), 4u);
}

TEST(Iaa, PerfectAgreement) {
  auto t1 = task_with({{{0, 1, SpanKind::ASP}}, {{2, 3, SpanKind::ASP}}}, 4, "T1/s1/0-4");
  auto t2 = task_with({{{1, 2, SpanKind::ASP}}}, 3, "T2/s1/0-3");
  AnnotationStore store({t1, t2});
  for (auto who : {"a", "b"}) {
    store.record(pick(t1, who, {1}));
    store.record(pick(t2, who, {0}));
  }
  auto r = iaa_report(store.snapshot(), store.tasks());
  EXPECT_DOUBLE_EQ(r.overall, 1.0);
  EXPECT_EQ(r.tokens, 7u);
  EXPECT_EQ(r.per_topic.size(), 2u);
  store.record(pick(t1, "c", {0}));
  EXPECT_THROW(iaa_report(store.snapshot(), store.tasks()), AnnotationError);
}

// Direct computation from the raw JSON records.
double fixture_kappa(const std::string& topic) {
  std::map<std::string, nlohmann::json> tasks;
  std::ifstream tin(testing::fixture("mini_tasks.jsonl"));
  for (std::string line; std::getline(tin, line);)
    if (!line.empty()) {
      auto j = nlohmann::json::parse(line);
      tasks[j["task_id"]] = j;
    }
  std::map<std::string, std::map<std::string, nlohmann::json>> latest;
  std::ifstream rin(testing::fixture("mini_responses.jsonl"));
  for (std::string line; std::getline(rin, line);)
    if (!line.empty()) {
      auto j = nlohmann::json::parse(line);
      latest[j["task_id"]][j["annotator_id"]] = j;
    }
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (const auto& [id, task] : tasks) {
    if (!topic.empty() && task["topic_id"] != topic) continue;
    const std::size_t n = task["tokens"].size();
    std::vector<std::vector<bool>> masks;
    for (const auto& [who, r] : latest.at(id)) {
      std::vector<bool> m(n, false);
      for (std::size_t cid : r["selected"])
        for (const auto& sp : task["candidates"][cid]["spans"])
          for (std::size_t i = sp[0]; i < std::size_t(sp[1]); ++i) m[i] = true;
      masks.push_back(m);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const bool a = masks.at(0)[i], b = masks.at(1)[i];
      (a ? (b ? n11 : n10) : (b ? n01 : n00)) += 1;
    }
  }
  const double N = n11 + n10 + n01 + n00;
  const double po = (n11 + n00) / N;
  const double pe = ((n11 + n10) * (n11 + n01) + (n00 + n01) * (n00 + n10)) / (N * N);
  return pe == 1 ? 1.0 : (po - pe) / (1 - pe);
}

TEST(Iaa, FixtureMatchesContingencyTable) {
  const auto tasks = load_tasks(testing::fixture("mini_tasks.jsonl"));
  AnnotationStore store(tasks);
  for (const auto& r : load_responses(testing::fixture("mini_responses.jsonl"))) store.record(r);
  const auto rep = iaa_report(store.snapshot(), tasks);
  EXPECT_NEAR(rep.overall, fixture_kappa(""), 1e-12);
  EXPECT_LT(rep.overall, 1.0);
  for (const auto& [topic, k] : rep.per_topic) EXPECT_NEAR(k, fixture_kappa(topic), 1e-12) << topic;
}

TEST(ExportGold, FixtureRoundTrip) {
  const auto corpus = load_corpus(testing::fixture("mini_corpus.tsv"));
  const auto tasks = load_tasks(testing::fixture("mini_tasks.jsonl"));
  AnnotationStore store(tasks);
  for (const auto& r : load_responses(testing::fixture("mini_responses.jsonl"))) store.record(r);
  const auto snap = store.snapshot();
  auto out = export_gold(snap, corpus, tasks);
  EXPECT_NO_THROW(validate(out.corpus));
  ASSERT_EQ(out.corpus.size(), corpus.size());
  // Every aspect in the export is a merged span of its task.
  std::size_t merged_spans = 0;
  for (const auto& t : tasks) {
    auto [a, b] = response_pair(snap, t);
    auto g = merge_gold(a, b, t);
    merged_spans += g.spans.size();
    const auto* s = out.corpus.find(t.topic_id, t.sentence_id);
    ASSERT_NE(s, nullptr);
    for (std::size_t i = 0; i < t.tokens.size(); ++i) {
      bool in_gold = false;
      for (const auto& sp : g.spans) in_gold = in_gold || (sp.start <= i && i < sp.end);
      EXPECT_EQ(s->labels[t.segment.start + i].aspect() == Aspect::ASP, in_gold) << t.id << " token " << i;
      EXPECT_EQ(s->labels[t.segment.start + i].stance(), corpus.find(t.topic_id, t.sentence_id)->labels[t.segment.start + i].stance());
    }
  }
  EXPECT_GT(merged_spans, 0u);
  std::stringstream tsv;
  write_tsv(tsv, out.corpus);
  EXPECT_EQ(parse_corpus(tsv), out.corpus);
}

TEST(ExportGold, UnmergedTaskFails) {
  const auto corpus = load_corpus(testing::fixture("mini_corpus.tsv"));
  const auto tasks = load_tasks(testing::fixture("mini_tasks.jsonl"));
  AnnotationStore store(tasks);
  EXPECT_THROW(export_gold(store.snapshot(), corpus, tasks), AnnotationError);
}

TEST(ExportGold, EmptyIntersectionGoesToSidecar) {
  Corpus c;
  auto P = NestedLabel::make(Stance::PRO, Aspect::O);
  c.sentences.push_back(testing::make_sentence("T1", "x", {"tax", "kills", "jobs"}, {"NN", "VBZ", "NNS"}, {P, P, P}));
  auto tasks = build_tasks(c, default_patterns());
  ASSERT_EQ(tasks[0].menu.items.size(), 2u);
  AnnotationStore store(tasks);
  store.record(pick(tasks[0], "a", {0}));
  store.record(pick(tasks[0], "b", {1}));
  auto out = export_gold(store.snapshot(), c, tasks);
  ASSERT_EQ(out.sidecar.size(), 1u);
  EXPECT_EQ(out.sidecar[0].provenance, Provenance::EmptyIntersection);
  for (auto l : out.corpus.sentences[0].labels) EXPECT_EQ(l.aspect(), Aspect::O);
}

TEST(TaskJson, RoundTrip) {
  const auto c = load_corpus(testing::fixture("mini_corpus.tsv"));
  for (const auto& t : build_tasks(c, default_patterns())) {
    auto back = task_from_json(to_json(t));
    EXPECT_EQ(to_json(back), to_json(t));
  }
  EXPECT_THROW(task_from_json(nlohmann::json{{"schema", "abam.task/1"}}), AnnotationError);
  EXPECT_THROW(response_from_json(nlohmann::json{{"task_id", 3}}), AnnotationError);
}

// ---------------------------------------------------------------------------
// HTTP API

class ServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    auto c = load_corpus(testing::fixture("mini_corpus.tsv"));
    store = std::make_unique<AnnotationStore>(build_tasks(c, default_patterns()));
    server = std::make_unique<AnnotationServer>(*store);
    port = server->bind_any_port();
    ASSERT_GT(port, 0);
    thread = std::jthread([this] { server->serve(); });
    server->wait_until_ready();
  }
  void TearDown() override {
    server->stop();
    thread = {};
  }

  httplib::Client client() { return httplib::Client("127.0.0.1", port); }

  std::unique_ptr<AnnotationStore> store;
  std::unique_ptr<AnnotationServer> server;
  int port = 0;
  std::jthread thread;
};

TEST_F(ServerTest, TaskFlow) {
  auto cli = client();
  auto res = cli.Get("/api/tasks/next?annotator=alice");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  auto task = nlohmann::json::parse(res->body);
  EXPECT_EQ(task["schema"], "abam.task/1");
  EXPECT_EQ(task["none_option"], "NONE");
  const std::string id = task["task_id"];

  auto one = cli.Get("/api/tasks/" + id);
  ASSERT_TRUE(one);
  EXPECT_EQ(one->status, 200);
  EXPECT_EQ(nlohmann::json::parse(one->body)["task_id"], id);
  EXPECT_EQ(cli.Get("/api/tasks/T9/none/0-3")->status, 404);

  nlohmann::json body{{"task_id", id}, {"annotator_id", "alice"}, {"selected", {0}}, {"none", false}};
  auto post = cli.Post("/api/responses", body.dump(), "application/json");
  ASSERT_TRUE(post);
  EXPECT_EQ(post->status, 201);
  auto ack = nlohmann::json::parse(post->body);
  EXPECT_EQ(ack["sequence"], 0);
  EXPECT_EQ(ack["superseded"], false);

  body["selected"] = nlohmann::json::array();
  body["none"] = true;
  post = cli.Post("/api/responses", body.dump(), "application/json");
  EXPECT_EQ(post->status, 201);
  EXPECT_EQ(nlohmann::json::parse(post->body)["superseded"], true);

  auto next = nlohmann::json::parse(cli.Get("/api/tasks/next?annotator=alice")->body);
  EXPECT_NE(next["task_id"], id);

  auto log = cli.Get("/api/responses");
  ASSERT_TRUE(log);
  EXPECT_EQ(std::count(log->body.begin(), log->body.end(), '\n'), 2);
  auto first = nlohmann::json::parse(log->body.substr(0, log->body.find('\n')));
  EXPECT_FALSE(first["timestamp"].get<std::string>().empty());

  auto prog = nlohmann::json::parse(cli.Get("/api/progress?annotator=alice")->body);
  EXPECT_EQ(prog["answered"], 1);
  EXPECT_EQ(prog["total"], store->tasks().size());
  EXPECT_TRUE(prog["iaa"].is_null());
}

TEST_F(ServerTest, RejectsBadResponses) {
  auto cli = client();
  const std::string id = store->tasks()[0].id;
  auto post = [&](const std::string& b) { return cli.Post("/api/responses", b, "application/json")->status; };
  EXPECT_EQ(post("{not json"), 400);
  EXPECT_EQ(post(nlohmann::json{{"task_id", id}, {"annotator_id", "a"}, {"selected", {0}}, {"none", true}}.dump()), 400);
  EXPECT_EQ(post(nlohmann::json{{"task_id", id}, {"annotator_id", "a"}, {"selected", {999}}}.dump()), 400);
  EXPECT_EQ(post(nlohmann::json{{"task_id", "T9/x/0-3"}, {"annotator_id", "a"}, {"none", true}}.dump()), 404);
  EXPECT_EQ(cli.Get("/api/tasks/next")->status, 400);
  EXPECT_TRUE(store->log().empty());
}

TEST_F(ServerTest, DoneAnnotatorGetsNoContentAndAgreementAppears) {
  auto cli = client();
  for (const auto& t : store->tasks())
    for (auto who : {"a", "b"}) {
      nlohmann::json body{{"task_id", t.id}, {"annotator_id", who}, {"none", true}};
      ASSERT_EQ(cli.Post("/api/responses", body.dump(), "application/json")->status, 201);
    }
  EXPECT_EQ(cli.Get("/api/tasks/next?annotator=a")->status, 204);
  auto prog = nlohmann::json::parse(cli.Get("/api/progress")->body);
  ASSERT_FALSE(prog["iaa"].is_null());
  EXPECT_DOUBLE_EQ(prog["iaa"]["kappa"].get<double>(), 1.0);
}

}  // namespace
}  // namespace abam
