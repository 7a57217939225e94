#include <gtest/gtest.h>

#include "support.hpp"

using namespace cascom;
using namespace cascom::testing;

namespace {

const Solution& by_expression(const std::vector<Solution>& solutions, const std::string& expr) {
  for (const auto& s : solutions)
    if (solution_expression(s) == expr) return s;
  throw std::runtime_error("no solution " + expr);
}

const std::string kSol1 = "(s-cd, s-cm, s-me, s-mo, s-nd) => c-4";
const std::string kSol2 = "(s-cd, s-nd) => c-3";
const std::string kSol3 = "(s-at, s-cd, s-me) => c-4#1";

std::map<std::string, Polarity> polarity_of(const std::vector<std::string>& names, std::mt19937_64& rng) {
  std::map<std::string, Polarity> out;
  for (const auto& n : names) out[n] = std::bernoulli_distribution(0.5)(rng) ? Polarity::cost : Polarity::benefit;
  return out;
}

std::vector<std::string> order_of(const std::vector<SolutionScore>& scores) {
  std::vector<std::string> out;
  for (const auto& s : scores) out.push_back(s.solution_hash);
  return out;
}

std::vector<ScoringRow> random_rows(std::mt19937_64& rng, const std::vector<std::string>& names, bool grid) {
  std::vector<ScoringRow> rows;
  int n = std::uniform_int_distribution<int>(2, 12)(rng);
  for (int i = 0; i < n; ++i) {
    ScoringRow r;
    r.key = "sol" + std::to_string(i);
    r.node_count = static_cast<std::size_t>(std::uniform_int_distribution<int>(1, 6)(rng));
    for (const auto& a : names)
      r.raw[a] = grid ? std::uniform_int_distribution<int>(0, 20)(rng)
                      : std::uniform_real_distribution<double>(0.0, 10.0)(rng);
    rows.push_back(std::move(r));
  }
  return rows;
}

WeightVector random_weights(std::mt19937_64& rng, const std::vector<std::string>& names) {
  WeightVector w;
  double sum = 0;
  for (const auto& a : names) sum += w[a] = std::uniform_int_distribution<int>(0, 4)(rng);
  if (sum == 0) w[names.front()] = sum = 1;
  for (auto& [k, v] : w) v /= sum;
  return w;
}

const std::vector<std::string> kNames{"a", "b", "c"};

}  // namespace

TEST(Cost, HandComputedAggregates) {
  auto kb = load_data("pollution.kb.json");
  auto solutions = compose(kb, "task-pollution").solutions;
  EXPECT_DOUBLE_EQ(aggregate_attribute(kb, by_expression(solutions, kSol1), "energy"), 5.8);
  EXPECT_DOUBLE_EQ(aggregate_attribute(kb, by_expression(solutions, kSol2), "energy"), 2.5);
  EXPECT_DOUBLE_EQ(aggregate_attribute(kb, by_expression(solutions, kSol3), "energy"), 3.8);
  EXPECT_DOUBLE_EQ(aggregate_attribute(kb, by_expression(solutions, kSol1), "reliability"), 0.7);
  EXPECT_DOUBLE_EQ(aggregate_attribute(kb, by_expression(solutions, kSol2), "reliability"), 0.7);
  EXPECT_DOUBLE_EQ(aggregate_attribute(kb, by_expression(solutions, kSol3), "reliability"), 0.92);
  EXPECT_THROW(aggregate_attribute(kb, solutions.front(), "charisma"), Error);
}

TEST(Cost, SensorFeedingSeveralKindsIsPaidOnce) {
  auto a = real_kind("a"), b = real_kind("b"), c = real_kind("c");
  SensorDescription s;
  s.id = "s";
  s.name = "s";
  s.outputs = {a, b};
  s.context = {{"energy", 2.0}};
  DpcDescription d;
  d.id = "d";
  d.name = "d";
  d.signatures = {{{a, b}, c}};
  d.context = {{"energy", 0.5}};
  TaskDescription t;
  t.id = "t";
  t.name = "t";
  t.required_stream = {c};
  KnowledgeBase kb(standard_header(), {s}, {d}, {t}, {});
  auto solutions = compose(kb, "t").solutions;
  ASSERT_EQ(solutions.size(), 1u);
  EXPECT_EQ(solutions.front().nodes.size(), 3u);
  EXPECT_DOUBLE_EQ(aggregate_attribute(kb, solutions.front(), "energy"), 2.5);
}

TEST(Cost, DefaultsFillMissingValues) {
  auto kb = parse_kb(R"({"version":"1",
    "attributes":{"energy":{"polarity":"cost","default":3},"accuracy":{"polarity":"benefit","default":0.4}},
    "kinds":[{"label":"x","type":"real","unit":"count"}],
    "sensors":[{"id":"s","name":"s","outputs":["x"]}],
    "tasks":[{"id":"t","name":"t","required_stream":["x"]}]})");
  auto s = compose(kb, "t").solutions.at(0);
  EXPECT_DOUBLE_EQ(aggregate_attribute(kb, s, "energy"), 3.0);
  EXPECT_DOUBLE_EQ(aggregate_attribute(kb, s, "accuracy"), 0.4);
}

TEST(Cost, WeightsFlipTheRanking) {
  auto kb = load_data("pollution.kb.json");
  auto solutions = compose(kb, "task-pollution").solutions;
  auto energy = rank(kb, solutions, {{"energy", 1.0}});
  EXPECT_EQ(energy.front().solution_hash, canonical_hash(by_expression(solutions, kSol2)));
  EXPECT_EQ(energy.back().solution_hash, canonical_hash(by_expression(solutions, kSol1)));
  auto reliability = rank(kb, solutions, {{"reliability", 1.0}});
  EXPECT_EQ(reliability.front().solution_hash, canonical_hash(by_expression(solutions, kSol3)));
  for (const auto& s : energy) {
    EXPECT_GE(s.total, 0.0);
    EXPECT_LE(s.total, 1.0);
  }
}

TEST(Cost, WeightValidation) {
  auto kb = load_data("pollution.kb.json");
  EXPECT_THROW(normalize_weights(kb, {{"charisma", 1}}), Error);
  EXPECT_THROW(normalize_weights(kb, {{"energy", -1}}), Error);
  EXPECT_THROW(normalize_weights(kb, {{"energy", 0}}), Error);
  auto w = normalize_weights(kb, {{"energy", 3}, {"accuracy", 1}});
  EXPECT_DOUBLE_EQ(w.at("energy"), 0.75);
  auto equal = normalize_weights(kb, {});
  EXPECT_EQ(equal.size(), kb.header().attributes.size());
  EXPECT_EQ(parse_weights("accuracy=3,energy=1"), (WeightVector{{"accuracy", 3}, {"energy", 1}}));
  EXPECT_THROW(parse_weights("accuracy"), Error);
  EXPECT_THROW(parse_weights("accuracy=lots"), Error);
  EXPECT_THROW(rank(kb, {}, {}), Error);
}

TEST(Cost, MatchesIndependentScorer) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 500; ++i) {
    auto rows = random_rows(rng, kNames, false);
    auto polarity = polarity_of(kNames, rng);
    auto weights = random_weights(rng, kNames);
    auto scores = score_rows(rows, polarity, weights);
    std::map<std::string, double> totals;
    for (const auto& a : kNames) {
      double lo = 1e300, hi = -1e300;
      for (const auto& r : rows) lo = std::min(lo, r.raw.at(a)), hi = std::max(hi, r.raw.at(a));
      for (const auto& r : rows) {
        double n = hi > lo ? (r.raw.at(a) - lo) / (hi - lo) : 0.0;
        if (polarity[a] == Polarity::benefit && hi > lo) n = 1.0 - n;
        totals[r.key] += weights[a] * n;
      }
    }
    for (const auto& s : scores) EXPECT_NEAR(s.total, totals[s.solution_hash], 1e-12);
    for (std::size_t j = 1; j < scores.size(); ++j) EXPECT_LE(scores[j - 1].total, scores[j].total);
  }
}

TEST(Cost, ScaleInvarianceExactOnDyadicTransforms) {
  std::mt19937_64 rng(52);
  for (int i = 0; i < 500; ++i) {
    auto rows = random_rows(rng, kNames, true);
    auto polarity = polarity_of(kNames, rng);
    auto weights = random_weights(rng, kNames);
    auto base = score_rows(rows, polarity, weights);
    const auto& attr = kNames[std::uniform_int_distribution<std::size_t>(0, kNames.size() - 1)(rng)];
    double a = std::ldexp(1.0, std::uniform_int_distribution<int>(-6, 6)(rng));
    double b = std::uniform_int_distribution<int>(-50, 50)(rng);
    for (auto& r : rows) r.raw[attr] = a * r.raw[attr] + b;
    auto moved = score_rows(rows, polarity, weights);
    ASSERT_EQ(base.size(), moved.size());
    for (std::size_t j = 0; j < base.size(); ++j) {
      EXPECT_EQ(base[j].solution_hash, moved[j].solution_hash);
      EXPECT_EQ(base[j].total, moved[j].total);
      EXPECT_EQ(base[j].normalized, moved[j].normalized);
    }
  }
}

TEST(Cost, ScaleInvarianceOnArbitraryAffineTransforms) {
  std::mt19937_64 rng(53);
  for (int i = 0; i < 500; ++i) {
    auto rows = random_rows(rng, kNames, false);
    auto polarity = polarity_of(kNames, rng);
    auto weights = random_weights(rng, kNames);
    auto base = score_rows(rows, polarity, weights);
    const auto& attr = kNames[std::uniform_int_distribution<std::size_t>(0, kNames.size() - 1)(rng)];
    double a = std::uniform_real_distribution<double>(0.001, 1000.0)(rng);
    double b = std::uniform_real_distribution<double>(-100.0, 100.0)(rng);
    for (auto& r : rows) r.raw[attr] = a * r.raw[attr] + b;
    auto moved = score_rows(rows, polarity, weights);
    for (std::size_t j = 0; j < base.size(); ++j) {
      EXPECT_NEAR(base[j].total, moved[j].total, 1e-9);
      for (const auto& n : kNames) EXPECT_NEAR(base[j].normalized.at(n), moved[j].normalized.at(n), 1e-9);
    }
    bool separated = true;
    for (std::size_t j = 1; j < base.size(); ++j) separated = separated && base[j].total - base[j - 1].total > 1e-9;
    if (separated) EXPECT_EQ(order_of(base), order_of(moved));
  }
}

TEST(Cost, ZeroWeightAttributeIsIrrelevant) {
  std::mt19937_64 rng(54);
  for (int i = 0; i < 500; ++i) {
    auto rows = random_rows(rng, kNames, i % 2 == 0);
    auto polarity = polarity_of(kNames, rng);
    auto weights = random_weights(rng, kNames);
    weights["c"] = 0.0;
    if (weights["a"] + weights["b"] == 0) weights["a"] = 1.0;
    auto base = score_rows(rows, polarity, weights);
    for (auto& r : rows) r.raw["c"] = std::uniform_real_distribution<double>(-1e6, 1e6)(rng);
    polarity["c"] = polarity["c"] == Polarity::cost ? Polarity::benefit : Polarity::cost;
    auto changed = score_rows(rows, polarity, weights);
    EXPECT_EQ(order_of(base), order_of(changed));
    for (std::size_t j = 0; j < base.size(); ++j) EXPECT_EQ(base[j].total, changed[j].total);
  }
}

TEST(Cost, DominancePreserved) {
  std::mt19937_64 rng(55);
  for (int i = 0; i < 500; ++i) {
    auto rows = random_rows(rng, kNames, false);
    auto polarity = polarity_of(kNames, rng);
    auto weights = random_weights(rng, kNames);
    // Make row 0 dominate row 1: weakly better everywhere, strictly better
    // on some attribute with positive weight.
    std::string strict;
    for (const auto& a : kNames)
      if (weights[a] > 0) strict = a;
    for (const auto& a : kNames) {
      double better = polarity[a] == Polarity::cost ? std::min(rows[0].raw[a], rows[1].raw[a])
                                                    : std::max(rows[0].raw[a], rows[1].raw[a]);
      rows[0].raw[a] = better;
      if (a == strict) rows[0].raw[a] = better + (polarity[a] == Polarity::cost ? -1.0 : 1.0);
    }
    auto scores = score_rows(rows, polarity, weights);
    auto order = order_of(scores);
    auto pos0 = std::find(order.begin(), order.end(), "sol0") - order.begin();
    auto pos1 = std::find(order.begin(), order.end(), "sol1") - order.begin();
    EXPECT_LT(pos0, pos1);
  }
}

TEST(Cost, TiesBreakByNodeCountThenHash) {
  std::vector<ScoringRow> rows{{"b", 3, {{"e", 1.0}}}, {"a", 3, {{"e", 1.0}}}, {"c", 2, {{"e", 1.0}}}};
  auto scores = score_rows(rows, {{"e", Polarity::cost}}, {{"e", 1.0}});
  EXPECT_EQ(order_of(scores), (std::vector<std::string>{"c", "a", "b"}));
}
