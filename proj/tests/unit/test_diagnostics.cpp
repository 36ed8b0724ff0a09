#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include <json.hpp>

#include "sidforge/diagnostics.hpp"
#include "sidforge/error.hpp"

using namespace sidforge;

namespace {

RqModel flat_model(std::vector<std::size_t> sizes, std::size_t dim = 1) {
  RqConfig c;
  c.codebook_sizes = sizes;
  std::vector<Codebook> books;
  for (std::size_t h = 0; h < sizes.size(); ++h) {
    Codebook cb{h, dim, {}};
    for (std::size_t k = 0; k < sizes[h] * dim; ++k) cb.centroids.push_back(static_cast<float>(k));
    books.push_back(cb);
  }
  return RqModel(c, dim, books, {});
}

SidAssignment make(std::vector<SidSequence> sids) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < sids.size(); ++i) ids.push_back("it" + std::to_string(i));
  return SidAssignment("m", ids, std::move(sids));
}

double histogram_entropy(const SidAssignment& a, std::size_t p) {
  std::map<std::vector<std::uint32_t>, double> h;
  for (const auto& s : a.sids()) h[{s.tokens.begin(), s.tokens.begin() + p}] += 1;
  double e = 0;
  for (const auto& [k, c] : h) e -= c / a.size() * std::log2(c / a.size());
  return e;
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("collision and unique ratio") {
  const auto same = make({{{2, 2}}, {{2, 2}}, {{2, 2}}});
  CHECK(collision_rate(same) == 1.0);
  CHECK(unique_ratio(same) == 0.0);
  const auto distinct = make({{{0, 1}}, {{1, 0}}, {{1, 1}}});
  CHECK(collision_rate(distinct) == 0.0);
  CHECK(unique_ratio(distinct) == 1.0);
  const auto mixed = make({{{0, 1}}, {{0, 1}}, {{1, 1}}, {{2, 0}}});
  CHECK(collision_rate(mixed) == 0.5);
  const CollisionCounts cc = collision_counts(mixed);
  CHECK(cc.distinct_sids == 3);
  CHECK(cc.colliding_items == 2);
  CHECK(cc.unique_items == 2);
  CHECK_THROWS_AS(collision_rate(SidAssignment()), Error);

  std::mt19937_64 gen(1);
  for (int t = 0; t < 100; ++t) {
    std::vector<SidSequence> s;
    const std::size_t n = 1 + gen() % 100;
    for (std::size_t i = 0; i < n; ++i) {
      s.push_back({{static_cast<std::uint32_t>(gen() % 3), static_cast<std::uint32_t>(gen() % 4)}});
    }
    const auto a = make(s);
    CHECK(unique_ratio(a) == 1.0 - collision_rate(a));
  }
}

TEST_CASE("codebook utilization") {
  const RqModel m = flat_model({4, 4});
  const auto a = make({{{0, 0}}, {{1, 1}}, {{0, 2}}, {{1, 3}}});
  CHECK(active_codes(a) == std::vector<std::size_t>{2, 4});
  CHECK(codebook_utilization(a, m) == 0.75);
  const auto full = make({{{0, 0}}, {{1, 1}}, {{2, 2}}, {{3, 3}}});
  CHECK(codebook_utilization(full, m) == 1.0);
  CHECK_THROWS_AS(codebook_utilization(make({{{5, 0}}}), m), Error);
}

TEST_CASE("prefix entropy") {
  CHECK(prefix_entropy(make({{{3, 1}}, {{3, 1}}, {{3, 1}}})) == 0.0);
  std::vector<SidSequence> spread;
  for (std::uint32_t i = 0; i < 8; ++i) spread.push_back({{i, 7 - i, i % 2}});
  CHECK(prefix_entropy(make(spread)) == doctest::Approx(3.0).epsilon(1e-12));

  std::mt19937_64 gen(6);
  for (int t = 0; t < 50; ++t) {
    std::vector<SidSequence> s;
    const std::size_t n = 1 + gen() % 200, levels = 1 + gen() % 4;
    for (std::size_t i = 0; i < n; ++i) {
      SidSequence q;
      for (std::size_t h = 0; h < levels; ++h) q.tokens.push_back(gen() % 5);
      s.push_back(q);
    }
    const auto a = make(s);
    const auto per = prefix_entropies(a);
    double mean = 0;
    for (std::size_t p = 1; p <= levels; ++p) {
      CHECK(std::abs(per[p - 1] - histogram_entropy(a, p)) < 1e-9);
      mean += histogram_entropy(a, p) / levels;
    }
    CHECK(std::abs(prefix_entropy(a) - mean) < 1e-9);
  }
}

TEST_CASE("reconstruction curve") {
  // items that equal a level-1 centroid reconstruct exactly
  RqConfig c;
  c.codebook_sizes = {3, 2};
  const RqModel m(c, 2, {Codebook{0, 2, {1, 0, 0, 1, -1, -1}}, Codebook{1, 2, {0.1f, 0, 0, 0.1f}}},
                  {});
  const EmbeddingSet exact({"a", "b", "z"}, 2, {1, 0, -1, -1, 0, 0});
  const ReconstructionCurve curve = reconstruction_curve(m, exact, 1);
  CHECK(curve.sim.at(1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(curve.items_used == 2);
  CHECK(curve.excluded_zero_norm == 1);
  CHECK_THROWS_AS(reconstruction_curve(m, exact, 3), Error);
}

TEST_CASE("probe on separable clusters and shuffled labels") {
  // four categories, each with its own level-1 token
  const std::size_t per = 100;
  RqConfig c;
  c.codebook_sizes = {4, 2};
  const RqModel m(c, 2,
                  {Codebook{0, 2, {5, 0, 0, 5, -5, 0, 0, -5}}, Codebook{1, 2, {0.5f, 0, 0, 0.5f}}},
                  {});
  std::vector<std::string> ids;
  std::vector<SidSequence> sids;
  std::unordered_map<std::string, std::string> labels;
  std::mt19937_64 gen(2);
  for (std::uint32_t cat = 0; cat < 4; ++cat) {
    for (std::size_t i = 0; i < per; ++i) {
      ids.push_back("c" + std::to_string(cat) + "_" + std::to_string(i));
      sids.push_back({{cat, static_cast<std::uint32_t>(gen() % 2)}});
      labels[ids.back()] = "cat" + std::to_string(cat);
    }
  }
  const SidAssignment a("m", ids, sids);
  CHECK(semantic_probe(a, m, labels, 1) == 1.0);

  double shuffled = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<std::string> names;
    for (const auto& id : ids) names.push_back(labels[id]);
    std::mt19937_64 g(seed);
    std::shuffle(names.begin(), names.end(), g);
    std::unordered_map<std::string, std::string> shuf;
    for (std::size_t i = 0; i < ids.size(); ++i) shuf[ids[i]] = names[i];
    shuffled += semantic_probe(a, m, shuf, seed) / 5.0;
  }
  CHECK(std::abs(shuffled - 0.25) <= 0.05);

  std::unordered_map<std::string, std::string> one;
  for (const auto& id : ids) one[id] = "same";
  CHECK_THROWS_AS(semantic_probe(a, m, one, 1), Error);
}

TEST_CASE("report JSON") {
  const RqModel m = flat_model({4, 4});
  const auto a = make({{{0, 1}}, {{1, 0}}, {{2, 2}}});
  const auto j = nlohmann::json::parse(diagnose(a, m).to_json());
  CHECK(j["collision_rate"].get<double>() == 0.0);
  CHECK(j["unique_ratio"].get<double>() == 1.0);
  CHECK(j.contains("utilization"));
  CHECK(j.contains("prefix_entropy"));
  CHECK(diagnose(a, m).to_table().find("Collision") != std::string::npos);
}

}  // TEST_SUITE
