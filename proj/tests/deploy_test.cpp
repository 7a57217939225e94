#include <gtest/gtest.h>

#include "support.hpp"

using namespace cascom;
using namespace cascom::testing;

namespace {

const DataItemKind kLocation{"location", ValueType::text, "none"};
const DataItemKind kBattery{"batteryLevel", ValueType::real, "percent"};
const DataItemKind kStress{"airStress", ValueType::text, "none"};

Solution agri_solution(const KnowledgeBase& kb) { return compose(kb, "task-phytophtora").solutions.at(0); }

Solution shuffled(const Solution& s, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(s.nodes.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  Solution out;
  out.task_id = s.task_id;
  out.nodes.resize(s.nodes.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out.nodes[perm[i]] = s.nodes[i];
  for (const auto& e : s.edges) out.edges.push_back({perm[e.producer], perm[e.consumer], e.kind});
  std::shuffle(out.edges.begin(), out.edges.end(), rng);
  for (const auto& [k, n] : s.sinks) out.sinks.emplace_back(k, perm[n]);
  return out;
}

}  // namespace

TEST(Deploy, UseCaseOnePlanHasFiveOrderedStages) {
  auto kb = load_data("agri.kb.json");
  auto plan = generate_plan(kb, agri_solution(kb));
  std::vector<std::string> order;
  for (const auto& s : plan.stages) order.push_back(s.resource);
  EXPECT_EQ(order, (std::vector<std::string>{"s-ah", "s-at", "s-lw", "c-1", "c-2"}));
  EXPECT_EQ(plan.stages[0].id, "st01");
  EXPECT_EQ(plan.stages[3].inputs.size(), 2u);
  EXPECT_EQ(plan.stages[4].depth, 2);
  ASSERT_EQ(plan.output_stream.size(), 1u);
  EXPECT_EQ(plan.output_stream[0].stage, "st05");
  EXPECT_EQ(plan.settings.sampling_interval_ms, 5000);
  EXPECT_EQ(plan.kb_version, kb_version_hash(kb));
  EXPECT_TRUE(check_plan(plan).empty());
}

TEST(Deploy, ExtrasReuseTheDeployedSensor) {
  auto kb = load_data("agri.kb.json");
  auto plan = generate_plan(kb, agri_solution(kb), {kLocation, kBattery});
  EXPECT_EQ(plan.stages.size(), 7u);
  EXPECT_EQ(plan.output_stream.size(), 3u);
  for (const auto& item : plan.output_stream) {
    if (item.kind != kLocation && item.kind != kBattery) continue;
    auto it = std::find_if(plan.stages.begin(), plan.stages.end(), [&](const PlanStage& s) { return s.id == item.stage; });
    ASSERT_NE(it, plan.stages.end());
    EXPECT_EQ(it->resource, "s-at");
  }
  EXPECT_TRUE(check_plan(plan).empty());
  EXPECT_NE(plan.plan_id, generate_plan(kb, agri_solution(kb)).plan_id);
}

TEST(Deploy, ExistingKindAsExtraAddsNoStage) {
  auto kb = load_data("agri.kb.json");
  auto plan = generate_plan(kb, agri_solution(kb), {kStress});
  EXPECT_EQ(plan.stages.size(), 5u);
  EXPECT_EQ(plan.output_stream.size(), 2u);
  EXPECT_TRUE(check_plan(plan).empty());
}

TEST(Deploy, DerivedExtraFollowsDerivationTable) {
  auto kb = load_data("example.kb.json");
  auto solution = compose(kb, "task-crop-climate").solutions.at(0);
  auto plan = generate_plan(kb, solution, {kStress});
  bool has_c1 = std::any_of(plan.stages.begin(), plan.stages.end(), [](const PlanStage& s) { return s.resource == "c-1"; });
  EXPECT_TRUE(has_c1);
  EXPECT_TRUE(check_plan(plan).empty());
}

TEST(Deploy, UnderivableExtraFails) {
  auto kb = load_data("agri.kb.json");
  try {
    generate_plan(kb, agri_solution(kb), {real_kind("methane", "ppm")});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::underivable_extra);
  }
}

TEST(Deploy, RoundTrip) {
  auto kb = load_data("example.kb.json");
  for (const auto& t : kb.tasks())
    for (const auto& s : compose(kb, t.id).solutions) {
      auto plan = generate_plan(kb, s, {kLocation});
      auto text = emit_plan(plan);
      auto back = parse_plan(text);
      EXPECT_EQ(back, plan);
      EXPECT_EQ(emit_plan(back), text);
    }
  EXPECT_THROW(parse_plan(R"({"format":"other/9"})"), Error);
}

TEST(Deploy, DeterministicUnderPermutation) {
  auto kb = load_data("agri.kb.json");
  auto s = agri_solution(kb);
  auto reference = emit_plan(generate_plan(kb, s, {kLocation, kBattery}));
  std::mt19937_64 rng(61);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(emit_plan(generate_plan(kb, shuffled(s, rng), {kBattery, kLocation})), reference);
  }
}

TEST(Deploy, MatchesGoldenFile) {
  auto kb = load_data("agri.kb.json");
  auto text = emit_plan(generate_plan(kb, agri_solution(kb), {kLocation, kBattery}));
  EXPECT_EQ(text, read_file(golden_dir() / "agri_plan.json"));
}

TEST(Deploy, EveryComposedSolutionIsExecutable) {
  std::mt19937_64 rng(62);
  for (int i = 0; i < 200; ++i) {
    auto kb = random_composition_kb(rng);
    auto table = discover(kb);
    for (const auto& t : kb.tasks())
      for (const auto& s : compose(kb, t.id).solutions) {
        KindList extras;
        for (const auto& [k, tier] : table->tiers)
          if (std::bernoulli_distribution(0.3)(rng)) extras.push_back(k);
        auto plan = generate_plan(kb, s, extras);
        auto report = check_plan(plan);
        EXPECT_TRUE(report.empty()) << describe(report.front());
        std::set<DataItemKind> delivered;
        for (const auto& item : plan.output_stream) delivered.insert(item.kind);
        for (const auto& k : t.required_stream) EXPECT_TRUE(delivered.contains(k));
        for (const auto& k : extras) EXPECT_TRUE(delivered.contains(k));
      }
  }
}

TEST(Deploy, CheckPlanCatchesMiswiring) {
  auto kb = load_data("agri.kb.json");
  auto plan = generate_plan(kb, agri_solution(kb));
  auto reordered = plan;
  std::swap(reordered.stages[0], reordered.stages[3]);
  EXPECT_FALSE(check_plan(reordered).empty());

  auto rewired = plan;
  rewired.stages[3].inputs[0].stage = "st03";
  EXPECT_FALSE(check_plan(rewired).empty());

  auto orphan = plan;
  orphan.output_stream.clear();
  EXPECT_FALSE(check_plan(orphan).empty());
}

TEST(Deploy, RejectsInvalidSolution) {
  auto kb = load_data("agri.kb.json");
  auto s = agri_solution(kb);
  s.edges.pop_back();
  EXPECT_THROW(generate_plan(kb, s), Error);
}
