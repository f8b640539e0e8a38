// Hierarchy, question engine, consensus and reliability.

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles/aggregate_oracle.hpp"
#include "oracles/alpha_oracle.hpp"
#include "oracles/engine_oracle.hpp"
#include "test_support.hpp"
#include "vislabel/consensus.hpp"
#include "vislabel/engine.hpp"
#include "vislabel/hierarchy.hpp"
#include "vislabel/reliability.hpp"

using namespace vislabel;
using testsupport::goldfinch;
using testsupport::twelve;

// ---- hierarchy ---------------------------------------------------------------

TEST(ConceptIdTest, ParseAndRender) {
  auto id = ConceptId::parse("2-5-3");
  EXPECT_EQ(id.str(), "2-5-3");
  EXPECT_EQ(id.depth(), 3u);
  EXPECT_EQ(id.parent().str(), "2-5");
  EXPECT_EQ(id.position(), 3u);
  EXPECT_TRUE(ConceptId::parse("2").is_ancestor_or_self_of(id));
  EXPECT_FALSE(ConceptId::parse("2-4").is_ancestor_or_self_of(id));
  EXPECT_TRUE(id.is_ancestor_or_self_of(id));
}

TEST(ConceptIdTest, RejectsMalformed) {
  for (const char* bad : {"", "0", "1--2", "-1", "1-", "a-1", "1-0", "1.2", " 1"})
    EXPECT_THROW(ConceptId::parse(bad), ParseError) << bad;
  EXPECT_FALSE(ConceptId::try_parse("x"));
}

TEST(HierarchyTest, GoldfinchLookups) {
  auto h = goldfinch();
  EXPECT_EQ(h.roots().size(), 3u);
  const auto& g = h.lookup(ConceptId::parse("1-1-1"));
  EXPECT_EQ(g.name, "Goldfinch");
  EXPECT_EQ(g.genus, "Finch");
  EXPECT_EQ(g.differentia, "Crimson face and yellow-and-black wings");
  auto anc = h.ancestors(g.id);
  ASSERT_EQ(anc.size(), 2u);
  EXPECT_EQ(anc[0]->name, "Bird");
  EXPECT_EQ(anc[1]->name, "Finch");
  EXPECT_THROW(h.lookup(ConceptId::parse("9")), NotFoundError);
}

TEST(HierarchyTest, TwelveLeafShape) {
  auto h = twelve();
  EXPECT_EQ(h.leaves().size(), 12u);
  EXPECT_EQ(h.size(), 21u);
  std::size_t birds = 0;
  for (const auto* l : h.leaves()) birds += l->id.path()[0] == 1;
  EXPECT_EQ(birds, 5u);
}

TEST(HierarchyTest, RoundTripsThroughJson) {
  auto h = twelve();
  auto again = hierarchy_from_json(hierarchy_to_json(h));
  EXPECT_TRUE(h == again);
  EXPECT_EQ(hierarchy_to_json(again).dump(), hierarchy_to_json(h).dump());
}

TEST(HierarchyTest, DuplicateIdListsEveryLocus) {
  try {
    parse_hierarchy(testsupport::read_file(VISLABEL_FIXTURES "/duplicate_ids.json"));
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_TRUE(e.has("duplicate_id"));
    std::string msg = e.what();
    EXPECT_NE(msg.find("/roots/0/children/0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("/roots/0/children/1"), std::string::npos) << msg;
  }
}

TEST(HierarchyTest, CollectsAllViolations) {
  auto doc = R"({"roots":[{"id":"1","name":"","genus":"","differentia":"",
    "children":[{"id":"1-3","name":"Finch","genus":"","differentia":"bill"}]}]})";
  try {
    parse_hierarchy(doc);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_TRUE(e.has("empty_name"));
    EXPECT_TRUE(e.has("empty_differentia"));
    EXPECT_TRUE(e.has("empty_genus"));
    EXPECT_TRUE(e.has("id_position_mismatch"));
  }
}

TEST(HierarchyTest, SyntaxErrorCarriesLineAndColumn) {
  try {
    parse_hierarchy("{\n  \"roots\": [\n    {oops}\n]}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.locus().rfind("line 3", 0), 0u) << e.locus();
  }
}

TEST(HierarchyTest, EmptyForestIsValid) {
  auto h = parse_hierarchy(R"({"roots":[]})");
  EXPECT_TRUE(h.empty());
  EXPECT_EQ(h.size(), 0u);
}

// ---- engine ------------------------------------------------------------------

namespace {

Step run(AnnotationSession& s, std::initializer_list<Answer> answers) {
  Step last = s.current();
  for (const auto& a : answers) last = s.submit(a);
  return last;
}

}  // namespace

TEST(EngineTest, GoldfinchThreeYes) {
  auto h = goldfinch();
  auto [s, q] = start_session(h, "img", Protocol::MethodC);
  EXPECT_EQ(q.subject->str(), "1");
  EXPECT_EQ(q.prompt_differentia, "Feathered, winged animal with a beak");
  auto step = run(s, {Answer::yes(), Answer::yes(), Answer::yes()});
  const auto& out = std::get<LabelOutcome>(step);
  EXPECT_EQ(out.kind, OutcomeKind::Classified);
  EXPECT_EQ(out.label->str(), "1-1-1");
  EXPECT_EQ(out.question_count, 3u);
  ASSERT_EQ(out.label_path_texts.size(), 3u);
  EXPECT_EQ(out.label_path_texts[2].differentia, "Crimson face and yellow-and-black wings");
}

TEST(EngineTest, AllRootsDeniedDischarges) {
  auto h = goldfinch();
  auto [s, q] = start_session(h, "img", Protocol::MethodB);
  auto step = run(s, {Answer::no(), Answer::no(), Answer::no()});
  const auto& out = std::get<LabelOutcome>(step);
  EXPECT_EQ(out.kind, OutcomeKind::Discharged);
  EXPECT_FALSE(out.label);
  EXPECT_EQ(out.question_count, 3u);
}

TEST(EngineTest, DeniedChildrenStopAtParent) {
  auto h = goldfinch();
  auto [s, q] = start_session(h, "img", Protocol::MethodC);
  auto step = run(s, {Answer::yes(), Answer::no()});
  const auto& out = std::get<LabelOutcome>(step);
  EXPECT_EQ(out.kind, OutcomeKind::UnrecognisedAt);
  EXPECT_EQ(out.label->str(), "1");
}

TEST(EngineTest, MethodBHidesVisualProperties) {
  auto h = goldfinch();
  auto [s, q] = start_session(h, "img", Protocol::MethodB);
  EXPECT_EQ(q.prompt_name, "Bird");
  EXPECT_TRUE(q.prompt_differentia.empty());
  EXPECT_TRUE(q.prompt_genus.empty());
}

TEST(EngineTest, MethodAIsOneFlatChoice) {
  auto h = twelve();
  auto [s, q] = start_session(h, "img", Protocol::MethodA);
  EXPECT_EQ(q.kind, QuestionKind::FlatChoice);
  EXPECT_EQ(q.choices.size(), 12u);
  EXPECT_TRUE(q.offers_none_of_these);
  auto out = std::get<LabelOutcome>(s.submit(Answer::pick(ConceptId::parse("3-1-2"))));
  EXPECT_EQ(out.kind, OutcomeKind::Classified);
  EXPECT_EQ(out.label->str(), "3-1-2");
  EXPECT_EQ(out.question_count, 1u);

  auto [s2, q2] = start_session(h, "img", Protocol::MethodA);
  EXPECT_EQ(std::get<LabelOutcome>(s2.submit(Answer::none_of_these())).kind,
            OutcomeKind::Discharged);
  auto [s3, q3] = start_session(h, "img", Protocol::MethodA);
  EXPECT_THROW(s3.submit(Answer::pick(ConceptId::parse("1-1"))), ProtocolError);
}

TEST(EngineTest, Errors) {
  auto h = goldfinch();
  auto [s, q] = start_session(h, "img", Protocol::MethodC);
  EXPECT_THROW(s.submit(Answer::none_of_these()), ProtocolError);
  EXPECT_EQ(s.transcript().size(), 0u);  // rejected answers leave no trace
  run(s, {Answer::yes(), Answer::yes(), Answer::yes()});
  try {
    s.submit(Answer::yes());
    FAIL();
  } catch (const StateError& e) {
    EXPECT_EQ(e.code(), "session_finished");
  }
  EXPECT_THROW(start_session(Hierarchy{}, "img", Protocol::MethodC), ConfigError);
}

TEST(EngineTest, QuestionUpperBound) {
  EXPECT_EQ(question_upper_bound(goldfinch()), 3u);
  EXPECT_EQ(question_upper_bound(twelve()), 7u);
  EXPECT_EQ(question_upper_bound(parse_hierarchy(
                R"({"roots":[{"id":"1","name":"x","genus":"","differentia":"d"}]})")),
            1u);
}

TEST(EngineTest, ReplayPositions) {
  auto h = goldfinch();
  std::vector<Answer> ok{Answer::yes(), Answer::yes(), Answer::yes()};
  EXPECT_EQ(replay(h, Protocol::MethodC, ok).label->str(), "1-1-1");
  std::vector<Answer> extra{Answer::yes(), Answer::yes(), Answer::yes(), Answer::no()};
  try {
    replay(h, Protocol::MethodC, extra);
    FAIL();
  } catch (const ReplayError& e) {
    EXPECT_EQ(e.position(), 4u);
  }
  std::vector<Answer> short_{Answer::yes()};
  try {
    replay(h, Protocol::MethodC, short_);
    FAIL();
  } catch (const ReplayError& e) {
    EXPECT_EQ(e.position(), 2u);
  }
  std::vector<Answer> wrong_kind{Answer::yes(), Answer::none_of_these()};
  try {
    replay(h, Protocol::MethodC, wrong_kind);
    FAIL();
  } catch (const ReplayError& e) {
    EXPECT_EQ(e.position(), 2u);
  }
}

// Random forests and random yes/no streams against the reference walk.
TEST(EngineTest, MatchesReferenceWalk) {
  std::mt19937_64 rng(20240611);
  for (int trial = 0; trial < 400; ++trial) {
    auto forest = oracle::random_forest(rng);
    auto h = testsupport::to_hierarchy(forest);
    std::vector<bool> bits(32);
    for (auto&& b : bits) b = rng() % 3 == 0;
    auto ref = oracle::reference_walk(forest, bits);

    auto [s, q] = start_session(h, "img", trial % 2 ? Protocol::MethodB : Protocol::MethodC);
    std::size_t i = 0;
    std::vector<std::string> asked;
    Step step = q;
    while (const auto* qq = std::get_if<Question>(&step)) {
      asked.push_back(qq->subject->str());
      step = s.submit(Answer::yes_no(i < bits.size() && bits[i]));
      ++i;
    }
    const auto& out = std::get<LabelOutcome>(step);
    EXPECT_EQ(asked, ref.asked);
    EXPECT_EQ(out.question_count, ref.questions);
    EXPECT_LE(out.question_count, question_upper_bound(h));
    switch (ref.kind) {
      case oracle::Kind::Classified: EXPECT_EQ(out.kind, OutcomeKind::Classified); break;
      case oracle::Kind::Unrecognised: EXPECT_EQ(out.kind, OutcomeKind::UnrecognisedAt); break;
      case oracle::Kind::Discharged: EXPECT_EQ(out.kind, OutcomeKind::Discharged); break;
    }
    EXPECT_EQ(out.label ? out.label->str() : "", ref.label);
  }
}

TEST(EngineTest, ProtocolsBAndCAskTheSameSubjects) {
  auto h = twelve();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto [b, qb] = start_session(h, "img", Protocol::MethodB);
    auto [c, qc] = start_session(h, "img", Protocol::MethodC);
    Step sb = qb, sc = qc;
    while (std::holds_alternative<Question>(sb)) {
      ASSERT_TRUE(std::holds_alternative<Question>(sc));
      EXPECT_EQ(std::get<Question>(sb).subject, std::get<Question>(sc).subject);
      auto a = Answer::yes_no(rng() % 2);
      sb = b.submit(a);
      sc = c.submit(a);
    }
    EXPECT_EQ(std::get<LabelOutcome>(sb), std::get<LabelOutcome>(sc));
  }
}

// ---- consensus ---------------------------------------------------------------

namespace {

LabelOutcome leaf(const char* id) {
  return LabelOutcome{OutcomeKind::Classified, ConceptId::parse(id), {}, 3};
}

VoteSet votes_of(const std::vector<std::string>& labels, std::size_t target = 3) {
  VoteSet v{"img", {}, target};
  for (std::size_t i = 0; i < labels.size(); ++i)
    v.votes.push_back({"a" + std::to_string(i), leaf(labels[i].c_str())});
  return v;
}

}  // namespace

TEST(BuildTasksTest, Partition) {
  std::vector<std::string> ids;
  for (int i = 0; i < 1200; ++i) ids.push_back("i" + std::to_string(i));
  auto tasks = build_tasks(ids, 50, Protocol::MethodC);
  EXPECT_EQ(tasks.size(), 24u);
  for (const auto& t : tasks) EXPECT_EQ(t.image_ids.size(), 50u);
  EXPECT_EQ(tasks.front().task_id, "t-1");

  ids.resize(101);
  auto odd = build_tasks(ids, 100, Protocol::MethodC);
  ASSERT_EQ(odd.size(), 2u);
  EXPECT_EQ(odd[1].image_ids.size(), 1u);

  ids.resize(5);
  EXPECT_EQ(build_tasks(ids, 10, Protocol::MethodC).size(), 1u);
  EXPECT_THROW(build_tasks(ids, 0, Protocol::MethodC), ConfigError);
  ids.push_back(ids.front());
  EXPECT_THROW(build_tasks(ids, 10, Protocol::MethodC), ConfigError);
}

TEST(AggregateTest, Examples) {
  auto r = aggregate(votes_of({"1", "1", "2"}));
  EXPECT_EQ(r.kind, ConsensusKind::Final);
  EXPECT_EQ(r.label->label->str(), "1");
  EXPECT_EQ(r.vote_tally.size(), 2u);
  EXPECT_EQ(aggregate(votes_of({"1", "2", "3"})).kind, ConsensusKind::NeedsEscalation);
  auto four = aggregate(votes_of({"1", "2", "3", "2"}));
  EXPECT_EQ(four.kind, ConsensusKind::Final);
  EXPECT_EQ(four.label->label->str(), "2");
  EXPECT_EQ(aggregate(votes_of({"1", "2", "1", "2"})).kind, ConsensusKind::NeedsEscalation);
  EXPECT_EQ(aggregate(votes_of({"1", "2", "3", "1", "2"})).kind, ConsensusKind::Unresolved);
  EXPECT_EQ(aggregate(votes_of({"1", "1"})).kind, ConsensusKind::NeedsEscalation);
}

TEST(AggregateTest, KindIsPartOfTheLabel) {
  VoteSet v{"img", {}, 3};
  v.votes.push_back({"a", leaf("1")});
  v.votes.push_back({"b", LabelOutcome{OutcomeKind::UnrecognisedAt, ConceptId::parse("1"), {}, 2}});
  v.votes.push_back({"c", leaf("2")});
  EXPECT_EQ(aggregate(v).kind, ConsensusKind::NeedsEscalation);
}

TEST(AggregateTest, DuplicateAnnotatorRejected) {
  auto v = votes_of({"1", "1", "2"});
  v.votes[1].annotator_id = "a0";
  EXPECT_THROW(aggregate(v), IntegrityError);
}

TEST(AggregateTest, ExhaustiveAgainstRuleOracle) {
  const std::vector<std::string> alphabet{"1", "2", "3"};
  std::size_t cases = 0, escalations_3 = 0;
  for (std::size_t n : {3u, 4u}) {
    std::size_t total = n == 3 ? 27 : 81;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<std::string> labels;
      for (std::size_t i = 0, c = code; i < n; ++i, c /= 3) labels.push_back(alphabet[c % 3]);
      auto got = aggregate(votes_of(labels));
      auto want = oracle::aggregate_rule(labels);
      ++cases;
      switch (want.verdict) {
        case oracle::Verdict::Final:
          ASSERT_EQ(got.kind, ConsensusKind::Final);
          EXPECT_EQ(got.label->label->str(), *want.label);
          break;
        case oracle::Verdict::Escalate: EXPECT_EQ(got.kind, ConsensusKind::NeedsEscalation); break;
        case oracle::Verdict::Unresolved: EXPECT_EQ(got.kind, ConsensusKind::Unresolved); break;
      }
      if (n == 3) {
        bool distinct = labels[0] != labels[1] && labels[1] != labels[2] && labels[0] != labels[2];
        EXPECT_EQ(got.kind == ConsensusKind::NeedsEscalation, distinct);
        escalations_3 += distinct;
      }
      // reordering does not change the verdict
      auto rev = labels;
      std::reverse(rev.begin(), rev.end());
      auto again = aggregate(votes_of(rev));
      EXPECT_EQ(again.kind, got.kind);
      EXPECT_EQ(again.vote_tally, got.vote_tally);
    }
  }
  EXPECT_EQ(cases, 108u);
  EXPECT_EQ(escalations_3, 6u);
}

// ---- reliability -------------------------------------------------------------

namespace {

ReliabilityData from_table(const oracle::Table& t) {
  ReliabilityData d;
  for (std::size_t u = 0; u < t.size(); ++u)
    for (std::size_t o = 0; o < t[u].size(); ++o)
      if (t[u][o]) d.add("u" + std::to_string(u), "o" + std::to_string(o), *t[u][o]);
  return d;
}

oracle::Table random_table(std::mt19937_64& rng, double missing = 0.2) {
  std::uniform_int_distribution<int> units(1, 10), observers(2, 5), labels(1, 6);
  std::uniform_real_distribution<double> unit(0, 1);
  int U = units(rng), O = observers(rng), L = labels(rng);
  oracle::Table t(U, std::vector<std::optional<std::string>>(O));
  for (auto& row : t)
    for (auto& cell : row)
      if (unit(rng) >= missing) cell = "L" + std::to_string(rng() % L);
  return t;
}

}  // namespace

TEST(AlphaTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(77);
  int compared = 0;
  for (int i = 0; i < 400; ++i) {
    auto t = random_table(rng);
    auto want = oracle::brute_force_alpha(t);
    auto got = try_alpha(from_table(t));
    ASSERT_EQ(want.has_value(), got.value.has_value()) << "fixture " << i;
    if (want) {
      EXPECT_NEAR(*got.value, *want, 1e-9);
      ++compared;
    }
  }
  EXPECT_GE(compared, 200);
}

TEST(AlphaTest, Anchors) {
  ReliabilityData perfect;
  for (const auto& [u, v] : {std::pair{"a", "x"}, {"b", "y"}, {"c", "x"}})
    for (const char* o : {"1", "2", "3"}) perfect.add(u, o, v);
  EXPECT_NEAR(krippendorff_alpha_nominal(perfect), 1.0, 1e-12);

  ReliabilityData split;
  split.add("u", "1", "x");
  split.add("u", "2", "y");
  EXPECT_NEAR(krippendorff_alpha_nominal(split), 0.0, 1e-12);
}

TEST(AlphaTest, TextbookExample) {
  // Krippendorff's nominal example: 4 observers, 12 units, alpha ~ 0.743.
  const char* rows[4] = {"1 2 3 3 2 1 4 1 2 . . .", "1 2 3 3 2 2 4 1 2 5 . 3",
                         ". 3 3 3 2 3 4 2 2 5 1 .", "1 2 3 3 2 4 4 1 2 5 1 ."};
  ReliabilityData d;
  for (int o = 0; o < 4; ++o) {
    std::istringstream in(rows[o]);
    std::string v;
    for (int u = 0; in >> v; ++u)
      if (v != ".") d.add("u" + std::to_string(u), "o" + std::to_string(o), v);
  }
  EXPECT_NEAR(krippendorff_alpha_nominal(d), 0.743, 5e-4);
}

TEST(AlphaTest, Errors) {
  ReliabilityData single;
  single.add("u1", "a", "x");
  single.add("u2", "b", "y");
  EXPECT_THROW(krippendorff_alpha_nominal(single), InsufficientDataError);
  ReliabilityData same;
  same.add("u", "a", "x");
  same.add("u", "b", "x");
  EXPECT_THROW(krippendorff_alpha_nominal(same), DegenerateDataError);
  EXPECT_THROW(same.add("u", "a", "y"), IntegrityError);
  EXPECT_EQ(try_alpha(ReliabilityData{}).status, "insufficient_data");
}

TEST(AlphaTest, Invariances) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    auto t = random_table(rng, 0.1);
    auto base = try_alpha(from_table(t));
    if (!base.value) continue;
    // relabel by a bijection
    auto relabeled = t;
    for (auto& row : relabeled)
      for (auto& c : row)
        if (c) c = "Z" + *c + "!";
    EXPECT_NEAR(*try_alpha(from_table(relabeled)).value, *base.value, 1e-12);
    // permute units and observers
    auto permuted = t;
    std::reverse(permuted.begin(), permuted.end());
    for (auto& row : permuted) std::rotate(row.begin(), row.begin() + 1, row.end());
    EXPECT_NEAR(*try_alpha(from_table(permuted)).value, *base.value, 1e-12);
  }
}

TEST(AlphaTest, UniformNoiseNearZero) {
  int inside = 0;
  for (int seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    ReliabilityData d;
    for (int u = 0; u < 1200; ++u)
      for (int o = 0; o < 3; ++o) d.add(std::to_string(u), std::to_string(o), std::to_string(rng() % 12));
    double a = krippendorff_alpha_nominal(d);
    inside += a >= -0.05 && a <= 0.05;
  }
  EXPECT_GE(inside, 9);
}

TEST(AlphaTest, CsvReader) {
  auto d = parse_reliability_csv(testsupport::read_file(VISLABEL_FIXTURES "/perfect_agreement.csv"));
  EXPECT_EQ(d.units().size(), 4u);
  EXPECT_DOUBLE_EQ(krippendorff_alpha_nominal(d), 1.0);
  EXPECT_THROW(parse_reliability_csv("a,b,c\n"), ParseError);
  auto missing = parse_reliability_csv("unit,observer,value\nu,a,x\nu,b,\nu,c,x\nv,a,y\nv,b,y\n");
  EXPECT_EQ(missing.cell_count(), 4u);
}

TEST(CountTableTest, Shapes) {
  auto h = goldfinch();
  std::vector<std::pair<std::string, LabelOutcome>> results;
  for (int i = 0; i < 3; ++i) results.push_back({"i" + std::to_string(i), leaf("1-1-1")});
  auto rows = category_count_table(results, h, leaf_ids(h));
  ASSERT_EQ(rows.size(), leaf_ids(h).size() + 2);
  EXPECT_EQ(rows[0].category, "Goldfinch");
  EXPECT_EQ(rows[0].count, 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i].count, 0u);

  results = {{"x", LabelOutcome{OutcomeKind::UnrecognisedAt, ConceptId::parse("1"), {}, 2}}};
  rows = category_count_table(results, h, leaf_ids(h));
  EXPECT_EQ(rows[rows.size() - 2].category, "Unrecognised");
  EXPECT_EQ(rows[rows.size() - 2].count, 1u);

  results = {{"x", leaf("7-1")}};
  EXPECT_THROW(category_count_table(results, h, leaf_ids(h)), IntegrityError);

  auto t12 = twelve();
  auto csv = count_table_csv(category_count_table({}, t12, leaf_ids(t12)));
  EXPECT_EQ(csv.rfind("category,count\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 12 + 2);
}

TEST(CostReportTest, RateModel) {
  std::vector<SessionCost> sessions;
  for (int i = 0; i < 50; ++i) sessions.push_back({Protocol::MethodA, "t-1/a", 50, 1});
  auto rates = RateModel::defaults();
  auto r = cost_report(sessions, rates);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_NEAR(r.rows[0].time_min, 50.0 * 5.0 / 60.0, 1e-12);
  EXPECT_EQ(format_number(r.rows[0].time_min, 2), "4.17");
  EXPECT_DOUBLE_EQ(r.rows[0].payment, 1.0);
  EXPECT_TRUE(cost_report({}, rates).rows.empty());

  RateModel partial;
  partial.seconds_per_question[Protocol::MethodA] = 5.0;
  EXPECT_THROW(cost_report(sessions, partial), ConfigError);

  std::vector<SessionCost> three;
  for (auto p : kAllProtocols) three.push_back({p, "t", 50, 2});
  auto csv = cost_report_csv(cost_report(three, rates, {{{Protocol::MethodC, 50}, 0.9}}));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,alpha,time_min,payment");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("C/50,0.900000"), std::string::npos);
}
