#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

#include "sidforge/error.hpp"
#include "sidforge/recommender.hpp"

using namespace sidforge;

namespace {

SidAssignment make(std::vector<SidSequence> sids) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < sids.size(); ++i) ids.push_back("it" + std::to_string(i));
  return SidAssignment("m", ids, std::move(sids));
}

SplitDataset repeat_split(const std::vector<std::string>& pattern, int users, int reps) {
  InteractionLog log;
  for (int u = 0; u < users; ++u) {
    std::int64_t ts = 0;
    for (int r = 0; r < reps; ++r) {
      for (const auto& item : pattern) log.events.push_back({"u" + std::to_string(u), item, ++ts});
    }
  }
  return leave_last_out_split(log);
}

// Oracle ranking: score every distinct SID step by step.
std::vector<std::pair<double, SidSequence>> brute_rank(const SequenceModel& model,
                                                       std::vector<std::uint32_t> context,
                                                       const SidAssignment& a) {
  std::set<SidSequence> distinct(a.sids().begin(), a.sids().end());
  std::vector<std::pair<double, SidSequence>> out;
  for (const auto& s : distinct) {
    auto ctx = context;
    double score = 0;
    for (std::size_t h = 0; h < s.levels(); ++h) {
      const auto tok = model.vocabulary().index(h, s.tokens[h]);
      score += model.score_next(ctx)[tok];
      ctx.push_back(tok);
    }
    out.emplace_back(score, s);
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    return x.first != y.first ? x.first > y.first : x.second < y.second;
  });
  return out;
}

}  // namespace

TEST_SUITE("recommender") {

TEST_CASE("token vocabulary offsets") {
  const TokenVocabulary v({3, 5, 2});
  CHECK(v.size() == 10);
  CHECK(v.index(0, 2) == 2);
  CHECK(v.index(1, 0) == 3);
  CHECK(v.index(2, 1) == 9);
  CHECK_THROWS_AS(v.index(1, 5), Error);
  std::vector<std::uint32_t> out;
  v.append({{1, 4, 0}}, out);
  CHECK(out == std::vector<std::uint32_t>{1, 7, 8});
}

TEST_CASE("single repeated transition") {
  const auto a = SidAssignment("m", {"A", "B"}, {{{0, 1}}, {{1, 0}}});
  const TokenVocabulary v({2, 2});
  const NGramModel m = train_ngram(repeat_split({"A", "B"}, 5, 4), a, v, 3, 0.01);
  std::vector<std::uint32_t> ctx;
  v.append(*a.find("B"), ctx);
  v.append(*a.find("A"), ctx);
  const auto lp = m.score_next(ctx);
  CHECK(std::max_element(lp.begin(), lp.end()) - lp.begin() == v.index(0, 1));
}

TEST_CASE("smoothing flattens the distribution as alpha grows") {
  const auto a = make({{{0, 1}}, {{1, 0}}, {{2, 2}}, {{1, 1}}});
  const TokenVocabulary v({3, 3});
  const auto split = repeat_split({"it0", "it1", "it2", "it3", "it1"}, 4, 3);
  std::vector<std::uint32_t> ctx;
  v.append({{0, 1}}, ctx);
  double last_gap = INFINITY;
  for (double alpha : {0.01, 1.0, 100.0}) {
    const auto lp = train_ngram(split, a, v, 4, alpha).score_next(ctx);
    const auto [lo, hi] = std::minmax_element(lp.begin(), lp.end());
    const double gap = std::exp(*hi) - std::exp(*lo);
    CHECK(gap < last_gap);
    last_gap = gap;
  }
  CHECK_THROWS_AS(train_ngram(split, a, v, 4, 0.0), Error);
  CHECK_THROWS_AS(train_ngram(split, a, v, 0, 0.1), Error);
}

TEST_CASE("probabilities sum to one") {
  std::mt19937_64 gen(8);
  std::vector<SidSequence> sids;
  for (int i = 0; i < 60; ++i) {
    sids.push_back({{static_cast<std::uint32_t>(gen() % 6), static_cast<std::uint32_t>(gen() % 6),
                     static_cast<std::uint32_t>(gen() % 4)}});
  }
  const auto a = make(sids);
  InteractionLog log;
  for (int u = 0; u < 40; ++u) {
    for (int k = 0; k < 8; ++k) log.events.push_back({"u" + std::to_string(u), "it" + std::to_string(gen() % 60), k});
  }
  const TokenVocabulary v({6, 6, 4});
  const NGramModel m = train_ngram(leave_last_out_split(log), a, v, 4, 0.05);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::uint32_t> ctx;
    const std::size_t len = gen() % 10;
    for (std::size_t k = 0; k < len; ++k) ctx.push_back(static_cast<std::uint32_t>(gen() % v.size()));
    double sum = 0;
    for (double lp : m.score_next(ctx)) sum += std::exp(lp);
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
  const NGramModel back = NGramModel::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
  std::vector<std::uint32_t> ctx{1, 7, 13};
  CHECK(back.score_next(ctx) == m.score_next(ctx));
}

TEST_CASE("beam search: forced path, exhaustive equality, shortfall") {
  const auto single = make({{{2, 1}}, {{2, 1}}});
  const TokenVocabulary v({3, 3});
  const auto split = repeat_split({"it0", "it1", "it0"}, 2, 2);
  const NGramModel m = train_ngram(split, single, v, 2, 0.5);
  const BeamResult r = beam_search(m, {}, build_trie(single), {4, 4, true});
  REQUIRE(r.ranked.size() == 1);
  CHECK(r.ranked[0].sid == SidSequence{{2, 1}});
  const auto first = m.score_next({});
  const std::vector<std::uint32_t> step{v.index(0, 2)};
  CHECK(r.ranked[0].log_prob == first[v.index(0, 2)] + m.score_next(step)[v.index(1, 1)]);
  CHECK(r.shortfall == 3);

  const auto three = make({{{0, 0}}, {{1, 2}}, {{2, 1}}});
  const BeamResult r3 = beam_search(m, {}, build_trie(three), {5, 5, true});
  CHECK(r3.ranked.size() == 3);
  CHECK(r3.shortfall == 2);

  std::mt19937_64 gen(3);
  for (int t = 0; t < 20; ++t) {
    std::vector<SidSequence> sids;
    for (int i = 0; i < 80; ++i) {
      sids.push_back({{static_cast<std::uint32_t>(gen() % 5), static_cast<std::uint32_t>(gen() % 4),
                       static_cast<std::uint32_t>(gen() % 3)}});
    }
    const auto a = make(sids);
    const TokenVocabulary v3({5, 4, 3});
    InteractionLog log;
    for (int u = 0; u < 20; ++u) {
      for (int k = 0; k < 6; ++k) log.events.push_back({"u" + std::to_string(u), "it" + std::to_string(gen() % 80), k});
    }
    const NGramModel model = train_ngram(leave_last_out_split(log), a, v3, 4, 0.1);
    std::vector<std::uint32_t> ctx;
    v3.append(sids[gen() % 80], ctx);
    const SidTrie trie = build_trie(a);
    const auto oracle = brute_rank(model, ctx, a);
    const BeamResult res = beam_search(model, ctx, trie, {trie.leaf_count(), 10, true});
    REQUIRE(res.ranked.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(res.ranked[i].sid == oracle[i].second);
    const auto exhaustive = exhaustive_ranking(model, ctx, trie);
    REQUIRE(exhaustive.size() == oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(exhaustive[i].sid == oracle[i].second);
  }
}

TEST_CASE("unconstrained beams may leave the catalog") {
  const auto a = make({{{0, 0}}, {{1, 1}}});
  const TokenVocabulary v({2, 2});
  const auto split = repeat_split({"it0", "it1"}, 3, 3);
  const NGramModel m = train_ngram(split, a, v, 2, 1.0);
  const BeamResult r = beam_search(m, {}, build_trie(a), {4, 4, false});
  CHECK(r.ranked.size() == 4);
  EvalOptions o;
  o.ks = {1, 4};
  o.beam_size = 4;
  o.constrained = false;
  const MetricsReport rep = evaluate(m, split, a, build_trie(a), o);
  CHECK(rep.invalid_generations > 0);
}

TEST_CASE("NDCG and HR formulas") {
  CHECK(ndcg_at(1, 5) == 1.0);
  CHECK(ndcg_at(3, 5) == 0.5);
  CHECK(ndcg_at(7, 5) == 0.0);
  CHECK(ndcg_at(7, 10) == 1.0 / 3.0);
  CHECK(ndcg_at(std::nullopt, 5) == 0.0);
}

TEST_CASE("evaluation reports") {
  std::vector<SidSequence> sids;
  for (std::uint32_t i = 0; i < 16; ++i) sids.push_back({{i / 4, i % 4}});
  const auto a = make(sids);
  const SidTrie trie = build_trie(a);
  InteractionLog log;
  log.events = {{"u1", "it0", 1}, {"u1", "it1", 2}, {"u1", "it2", 3},
                {"u2", "it5", 1}, {"u2", "it6", 2}, {"u2", "it9", 3}};
  const auto split = leave_last_out_split(log);
  const Ranker r = [&](const UserSplit& user, std::span<const std::string> ctx) {
    CHECK(ctx.back() == user.validation);
    std::vector<SidSequence> out;
    if (user.user_id == "u1") {
      out = {sids[3], sids[4], sids[2]};  // target at rank 3
    } else {
      out = {sids[0]};  // miss
    }
    for (std::uint32_t i = 10; out.size() < 10 && i < 16; ++i) out.push_back(sids[i]);
    return out;
  };
  const MetricsReport rep = evaluate_ranker(r, split, a, trie, EvalOptions{});
  CHECK(rep.users == 2);
  CHECK(rep.hr.at(5) == 0.5);
  CHECK(rep.ndcg.at(5) == 0.25);
  const auto j = nlohmann::json::parse(rep.to_json());
  for (const char* key : {"HR@5", "HR@10", "NDCG@5", "NDCG@10"}) CHECK(j.contains(key));
  CHECK(rep.to_csv().rfind("metric,K,value,n_users\n", 0) == 0);
  CHECK(rep.ranks_tsv().find("u1\t3") != std::string::npos);
}

TEST_CASE("popularity ranking") {
  const auto a = make({{{0, 0}}, {{0, 1}}, {{1, 0}}});
  InteractionLog log;
  log.events = {{"u", "it2", 1}, {"u", "it2", 2}, {"u", "it1", 3}, {"u", "it0", 4}, {"u", "it0", 5}};
  const auto rank = popularity_ranking(leave_last_out_split(log), a);
  REQUIRE(rank.size() == 3);
  CHECK(rank[0] == SidSequence{{1, 0}});
  CHECK(rank[1] == SidSequence{{0, 1}});
  CHECK(rank[2] == SidSequence{{0, 0}});
}

}  // TEST_SUITE
