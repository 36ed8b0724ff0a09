#include "sidforge/recommender.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "sidforge/error.hpp"
#include "sidforge/parallel.hpp"

namespace sidforge {

using nlohmann::json;
using nlohmann::ordered_json;

TokenVocabulary::TokenVocabulary(std::vector<std::size_t> level_sizes)
    : sizes_(std::move(level_sizes)) {
  for (std::size_t s : sizes_) {
    offsets_.push_back(total_);
    total_ += s;
  }
  if (total_ > std::numeric_limits<std::uint32_t>::max()) throw Error("vocabulary too large");
}

std::uint32_t TokenVocabulary::index(std::size_t level, std::uint32_t token) const {
  if (level >= sizes_.size() || token >= sizes_[level]) {
    throw Error("token " + std::to_string(token) + " out of range for level " +
                std::to_string(level));
  }
  return static_cast<std::uint32_t>(offsets_[level] + token);
}

void TokenVocabulary::append(const SidSequence& sid, std::vector<std::uint32_t>& out) const {
  if (sid.levels() != sizes_.size()) throw Error("SID depth differs from vocabulary levels");
  for (std::size_t h = 0; h < sid.levels(); ++h) out.push_back(index(h, sid.tokens[h]));
}

NGramModel::NGramModel(TokenVocabulary vocabulary, std::size_t order, double alpha)
    : vocabulary_(std::move(vocabulary)), order_(order), alpha_(alpha) {
  if (order_ < 1) throw Error("n-gram order must be at least 1");
  if (!(alpha_ > 0.0)) throw Error("n-gram smoothing alpha must be > 0");
  if (vocabulary_.size() == 0) throw Error("n-gram vocabulary is empty");
}

std::string NGramModel::key(std::span<const std::uint32_t> context) {
  return std::string(reinterpret_cast<const char*>(context.data()),
                     context.size() * sizeof(std::uint32_t));
}

void NGramModel::add_sequence(std::span<const std::uint32_t> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= vocabulary_.size()) throw Error("token outside the n-gram vocabulary");
    const std::size_t longest = std::min(order_ - 1, i);
    for (std::size_t len = 0; len <= longest; ++len) {
      Counts& c = table_[key(tokens.subspan(i - len, len))];
      ++c.total;
      ++c.next[tokens[i]];
    }
  }
}

std::vector<double> NGramModel::score_next(std::span<const std::uint32_t> context) const {
  const std::size_t v = vocabulary_.size();
  const std::size_t longest = std::min(order_ - 1, context.size());
  for (std::size_t len = longest + 1; len-- > 0;) {
    auto it = table_.find(key(context.subspan(context.size() - len, len)));
    if (it == table_.end()) continue;
    const Counts& c = it->second;
    const double denom = static_cast<double>(c.total) + alpha_ * static_cast<double>(v);
    std::vector<double> out(v, std::log(alpha_ / denom));
    for (const auto& [token, count] : c.next) {
      out[token] = std::log((static_cast<double>(count) + alpha_) / denom);
    }
    return out;
  }
  return std::vector<double>(v, -std::log(static_cast<double>(v)));
}

std::string NGramModel::to_json() const {
  std::vector<std::pair<std::vector<std::uint32_t>, const Counts*>> rows;
  for (const auto& [k, counts] : table_) {
    std::vector<std::uint32_t> ctx(k.size() / sizeof(std::uint32_t));
    std::copy_n(k.data(), k.size(), reinterpret_cast<char*>(ctx.data()));
    rows.emplace_back(std::move(ctx), &counts);
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  ordered_json j;
  j["format"] = "sidforge-ngram";
  j["order"] = order_;
  j["alpha"] = alpha_;
  j["level_sizes"] = vocabulary_.level_sizes();
  ordered_json contexts = ordered_json::array();
  for (const auto& [ctx, counts] : rows) {
    ordered_json next = ordered_json::array();
    for (const auto& [token, count] : counts->next) next.push_back({token, count});
    contexts.push_back({{"context", ctx}, {"total", counts->total}, {"next", std::move(next)}});
  }
  j["contexts"] = std::move(contexts);
  return j.dump();
}

NGramModel NGramModel::from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "sidforge-ngram") throw Error("not a sidforge n-gram model");
    NGramModel model(TokenVocabulary(j.at("level_sizes").get<std::vector<std::size_t>>()),
                     j.at("order").get<std::size_t>(), j.at("alpha").get<double>());
    for (const auto& row : j.at("contexts")) {
      const auto ctx = row.at("context").get<std::vector<std::uint32_t>>();
      Counts& c = model.table_[key(ctx)];
      c.total = row.at("total").get<std::uint64_t>();
      for (const auto& pair : row.at("next")) {
        const auto token = pair.at(0).get<std::uint32_t>();
        if (token >= model.vocabulary_.size()) throw Error("n-gram token out of range");
        c.next[token] = pair.at(1).get<std::uint64_t>();
      }
    }
    return model;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed n-gram model: ") + e.what());
  }
}

std::vector<std::uint32_t> flatten_items(std::span<const std::string> items,
                                         const SidAssignment& assignment,
                                         const TokenVocabulary& vocabulary) {
  std::vector<std::uint32_t> tokens;
  tokens.reserve(items.size() * vocabulary.levels());
  for (const auto& id : items) {
    if (const SidSequence* sid = assignment.find(id)) vocabulary.append(*sid, tokens);
  }
  return tokens;
}

NGramModel train_ngram(const SplitDataset& split, const SidAssignment& assignment,
                       const TokenVocabulary& vocabulary, std::size_t order, double alpha) {
  NGramModel model(vocabulary, order, alpha);
  std::size_t seen = 0;
  for (const auto& user : split.users) {
    const auto tokens = flatten_items(user.train, assignment, vocabulary);
    seen += tokens.size();
    model.add_sequence(tokens);
  }
  if (seen == 0) throw Error("n-gram training data is empty");
  return model;
}

namespace {

constexpr std::uint32_t kNoNode = std::numeric_limits<std::uint32_t>::max();

struct Hypothesis {
  SidSequence sid;
  std::uint32_t node = SidTrie::kRoot;
  double score = 0.0;
};

bool ranks_before(const SidSequence& a, double sa, const SidSequence& b, double sb) {
  if (sa != sb) return sa > sb;
  return a < b;
}

void sort_hypotheses(std::vector<Hypothesis>& hyps) {
  std::sort(hyps.begin(), hyps.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return ranks_before(a.sid, a.score, b.sid, b.score);
  });
}

std::vector<std::uint32_t> extend_context(std::span<const std::uint32_t> context,
                                          const SidSequence& prefix,
                                          const TokenVocabulary& vocab) {
  std::vector<std::uint32_t> ctx(context.begin(), context.end());
  for (std::size_t h = 0; h < prefix.levels(); ++h) ctx.push_back(vocab.index(h, prefix.tokens[h]));
  return ctx;
}

}  // namespace

BeamResult beam_search(const SequenceModel& model, std::span<const std::uint32_t> context,
                       const SidTrie& trie, const BeamOptions& options) {
  if (trie.node_count() == 0 || trie.leaf_count() == 0) throw Error("beam search: empty trie");
  if (options.top_k < 1 || options.beam_size < 1) {
    throw Error("beam search requires beam_size >= 1 and top_k >= 1");
  }
  const TokenVocabulary& vocab = model.vocabulary();
  if (vocab.levels() != trie.levels()) throw Error("beam search: model and trie depth differ");

  std::vector<Hypothesis> beam{Hypothesis{}};
  for (std::size_t h = 0; h < trie.levels(); ++h) {
    std::vector<Hypothesis> candidates;
    for (const auto& hyp : beam) {
      const auto log_probs = model.score_next(extend_context(context, hyp.sid, vocab));
      auto push = [&](std::uint32_t token, std::uint32_t node) {
        Hypothesis next = hyp;
        next.sid.tokens.push_back(token);
        next.node = node;
        next.score = hyp.score + log_probs[vocab.index(h, token)];
        candidates.push_back(std::move(next));
      };
      if (options.constrained) {
        for (const auto& [token, node] : trie.node(hyp.node).children) push(token, node);
      } else {
        for (std::uint32_t token = 0; token < vocab.level_sizes()[h]; ++token) {
          auto node = hyp.node == kNoNode ? std::nullopt : trie.child(hyp.node, token);
          push(token, node ? *node : kNoNode);
        }
      }
    }
    sort_hypotheses(candidates);
    if (candidates.size() > options.beam_size) candidates.resize(options.beam_size);
    beam = std::move(candidates);
  }

  BeamResult result;
  for (std::size_t i = 0; i < beam.size() && i < options.top_k; ++i) {
    result.ranked.push_back({std::move(beam[i].sid), beam[i].score});
  }
  result.shortfall = options.top_k - result.ranked.size();
  return result;
}

std::vector<ScoredSid> exhaustive_ranking(const SequenceModel& model,
                                          std::span<const std::uint32_t> context,
                                          const SidTrie& trie) {
  const TokenVocabulary& vocab = model.vocabulary();
  std::vector<Hypothesis> leaves;
  auto walk = [&](auto&& self, const Hypothesis& hyp) -> void {
    if (hyp.sid.levels() == trie.levels()) {
      leaves.push_back(hyp);
      return;
    }
    const std::size_t h = hyp.sid.levels();
    const auto log_probs = model.score_next(extend_context(context, hyp.sid, vocab));
    for (const auto& [token, node] : trie.node(hyp.node).children) {
      Hypothesis next = hyp;
      next.sid.tokens.push_back(token);
      next.node = node;
      next.score = hyp.score + log_probs[vocab.index(h, token)];
      self(self, next);
    }
  };
  walk(walk, Hypothesis{});
  sort_hypotheses(leaves);
  std::vector<ScoredSid> out;
  for (auto& leaf : leaves) out.push_back({std::move(leaf.sid), leaf.score});
  return out;
}

double ndcg_at(std::optional<std::size_t> rank, std::size_t k) {
  if (!rank || *rank > k || *rank == 0) return 0.0;
  return 1.0 / std::log2(static_cast<double>(*rank) + 1.0);
}

MetricsReport evaluate_ranker(const Ranker& ranker, const SplitDataset& split,
                              const SidAssignment& assignment, const SidTrie& trie,
                              const EvalOptions& options) {
  if (options.ks.empty()) throw Error("evaluation needs at least one K");
  MetricsReport report;
  report.ks = options.ks;
  std::sort(report.ks.begin(), report.ks.end());
  report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());
  if (report.ks.front() == 0) throw Error("K must be at least 1");
  const std::size_t max_k = report.ks.back();

  const std::size_t n = split.users.size();
  std::vector<UserRank> ranks(n);
  std::vector<char> excluded(n, 0), failed(n, 0);
  std::vector<std::size_t> invalid(n, 0);
  parallel_blocks(n, options.workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      const UserSplit& user = split.users[u];
      ranks[u].user_id = user.user_id;
      const SidSequence* target = assignment.find(user.test);
      if (!target) {
        excluded[u] = 1;
        continue;
      }
      std::vector<std::string> context = user.train;
      if (options.include_validation) context.push_back(user.validation);
      const auto ranked = ranker(user, context);
      if (ranked.size() < max_k) failed[u] = 1;
      for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (!trie.contains(ranked[i])) ++invalid[u];
        if (!ranks[u].rank && ranked[i] == *target) ranks[u].rank = i + 1;
      }
    }
  });

  for (std::size_t u = 0; u < n; ++u) {
    if (excluded[u]) {
      ++report.excluded_users;
      continue;
    }
    ++report.users;
    report.beam_failures += failed[u];
    report.invalid_generations += invalid[u];
    report.ranks.push_back(std::move(ranks[u]));
  }
  for (std::size_t k : report.ks) {
    double hits = 0.0, gain = 0.0;
    for (const auto& r : report.ranks) {
      if (r.rank && *r.rank <= k) hits += 1.0;
      gain += ndcg_at(r.rank, k);
    }
    const double users = report.users == 0 ? 1.0 : static_cast<double>(report.users);
    report.hr[k] = hits / users;
    report.ndcg[k] = gain / users;
  }
  return report;
}

MetricsReport evaluate(const SequenceModel& model, const SplitDataset& split,
                       const SidAssignment& assignment, const SidTrie& trie,
                       const EvalOptions& options) {
  const std::size_t max_k = options.ks.empty()
                                ? 0
                                : *std::max_element(options.ks.begin(), options.ks.end());
  BeamOptions beam{options.beam_size, max_k, options.constrained};
  if (max_k == 0 || beam.beam_size < max_k) {
    throw Error("beam size " + std::to_string(options.beam_size) + " must be >= max K " +
                std::to_string(max_k));
  }
  const TokenVocabulary& vocab = model.vocabulary();
  Ranker ranker = [&](const UserSplit&, std::span<const std::string> context) {
    const auto tokens = flatten_items(context, assignment, vocab);
    auto result = beam_search(model, tokens, trie, beam);
    std::vector<SidSequence> out;
    for (auto& r : result.ranked) out.push_back(std::move(r.sid));
    return out;
  };
  return evaluate_ranker(ranker, split, assignment, trie, options);
}

std::vector<SidSequence> popularity_ranking(const SplitDataset& split,
                                            const SidAssignment& assignment) {
  std::map<SidSequence, std::uint64_t> counts;
  for (const auto& sid : assignment.sids()) counts.emplace(sid, 0);
  for (const auto& user : split.users) {
    for (const auto& id : user.train) {
      if (const SidSequence* sid = assignment.find(id)) ++counts[*sid];
    }
  }
  std::vector<std::pair<SidSequence, std::uint64_t>> rows(counts.begin(), counts.end());
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<SidSequence> out;
  for (auto& [sid, count] : rows) out.push_back(std::move(sid));
  return out;
}

namespace {

std::string number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::string MetricsReport::to_json() const {
  ordered_json j;
  for (std::size_t k : ks) j["HR@" + std::to_string(k)] = hr.at(k);
  for (std::size_t k : ks) j["NDCG@" + std::to_string(k)] = ndcg.at(k);
  j["n_users"] = users;
  j["excluded_users"] = excluded_users;
  j["beam_failures"] = beam_failures;
  j["invalid_generations"] = invalid_generations;
  return j.dump(2);
}

std::string MetricsReport::to_csv() const {
  std::string out = "metric,K,value,n_users\n";
  for (const char* metric : {"HR", "NDCG"}) {
    const auto& values = std::string_view(metric) == "HR" ? hr : ndcg;
    for (std::size_t k : ks) {
      out += std::string(metric) + "," + std::to_string(k) + "," + number(values.at(k)) + "," +
             std::to_string(users) + "\n";
    }
  }
  return out;
}

std::string MetricsReport::ranks_tsv() const {
  std::string out = "user_id\trank\n";
  for (const auto& r : ranks) {
    out += r.user_id + "\t" + (r.rank ? std::to_string(*r.rank) : std::string("-")) + "\n";
  }
  return out;
}

}  // namespace sidforge
