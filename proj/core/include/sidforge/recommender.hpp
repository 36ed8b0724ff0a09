#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sidforge/interactions.hpp"
#include "sidforge/sid.hpp"

namespace sidforge {

/// Flat token space where (level h, token t) maps to offset[h] + t, so
/// equal indices at different levels are distinct tokens.
class TokenVocabulary {
 public:
  TokenVocabulary() = default;
  explicit TokenVocabulary(std::vector<std::size_t> level_sizes);

  std::size_t size() const noexcept { return total_; }
  std::size_t levels() const noexcept { return sizes_.size(); }
  const std::vector<std::size_t>& level_sizes() const noexcept { return sizes_; }
  std::uint32_t index(std::size_t level, std::uint32_t token) const;

  /// Appends the level-tagged tokens of `sid`.
  void append(const SidSequence& sid, std::vector<std::uint32_t>& out) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// Next-token model over a TokenVocabulary.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual const TokenVocabulary& vocabulary() const = 0;
  /// Natural-log probabilities over the whole vocabulary; must be defined
  /// for an empty context and sum to one after exponentiation.
  virtual std::vector<double> score_next(std::span<const std::uint32_t> context) const = 0;
};

/// Additively smoothed n-gram model that backs off to the longest context
/// suffix seen in training:
///   p(w | c) = (count(c, w) + alpha) / (count(c) + alpha * |V|).
class NGramModel final : public SequenceModel {
 public:
  NGramModel(TokenVocabulary vocabulary, std::size_t order, double alpha);

  const TokenVocabulary& vocabulary() const override { return vocabulary_; }
  std::vector<double> score_next(std::span<const std::uint32_t> context) const override;

  std::size_t order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }

  /// Counts every (context, next) pair with context length 0..order-1.
  void add_sequence(std::span<const std::uint32_t> tokens);
  std::size_t context_count() const noexcept { return table_.size(); }

  std::string to_json() const;
  static NGramModel from_json(std::string_view json);

 private:
  struct Counts {
    std::uint64_t total = 0;
    std::map<std::uint32_t, std::uint64_t> next;
  };
  static std::string key(std::span<const std::uint32_t> context);

  TokenVocabulary vocabulary_;
  std::size_t order_;
  double alpha_;
  std::unordered_map<std::string, Counts> table_;
};

/// Flattened level-tagged tokens of a chronological item list. Items
/// without a SID are skipped.
std::vector<std::uint32_t> flatten_items(std::span<const std::string> items,
                                         const SidAssignment& assignment,
                                         const TokenVocabulary& vocabulary);

/// Trains on each user's flattened train sequence. Throws Error when no
/// tokens are available, order < 1 or alpha <= 0.
NGramModel train_ngram(const SplitDataset& split, const SidAssignment& assignment,
                       const TokenVocabulary& vocabulary, std::size_t order, double alpha);

struct ScoredSid {
  SidSequence sid;
  double log_prob = 0.0;
};

/// A beam narrower than top_k returns at most beam_size SIDs.
struct BeamResult {
  std::vector<ScoredSid> ranked;
  std::size_t shortfall = 0;  // top_k minus results returned
};

struct BeamOptions {
  std::size_t beam_size = 20;
  std::size_t top_k = 10;
  /// Restrict expansions to trie children (catalog SIDs only).
  bool constrained = true;
};

/// Expands exactly H steps, ranking hypotheses by cumulative log
/// probability with lexicographic token order breaking ties.
BeamResult beam_search(const SequenceModel& model, std::span<const std::uint32_t> context,
                       const SidTrie& trie, const BeamOptions& options);

/// Scores every catalog SID as the sum of its per-step log probabilities
/// and ranks them like beam_search. Cost is linear in the trie size.
std::vector<ScoredSid> exhaustive_ranking(const SequenceModel& model,
                                          std::span<const std::uint32_t> context,
                                          const SidTrie& trie);

struct EvalOptions {
  std::vector<std::size_t> ks{5, 10};
  std::size_t beam_size = 20;
  bool include_validation = true;
  bool constrained = true;
  unsigned workers = 0;
};

struct UserRank {
  std::string user_id;
  std::optional<std::size_t> rank;  // 1-based position of the target SID
};

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> hr;
  std::map<std::size_t, double> ndcg;
  std::size_t users = 0;
  std::size_t excluded_users = 0;      // target lacked a SID
  std::size_t beam_failures = 0;       // fewer than max(K) SIDs generated
  std::size_t invalid_generations = 0;  // generated SID not in the catalog
  std::vector<UserRank> ranks;

  std::string to_json() const;
  /// Columns: metric, K, value, n_users.
  std::string to_csv() const;
  std::string ranks_tsv() const;
};

/// Binary-relevance NDCG of a single target: 1 / log2(rank + 1) when
/// rank <= k, else 0.
double ndcg_at(std::optional<std::size_t> rank, std::size_t k);

/// Produces a ranked SID list for one user given their context items.
using Ranker = std::function<std::vector<SidSequence>(const UserSplit& user,
                                                      std::span<const std::string> context)>;

MetricsReport evaluate_ranker(const Ranker& ranker, const SplitDataset& split,
                              const SidAssignment& assignment, const SidTrie& trie,
                              const EvalOptions& options);

/// Beam-search evaluation of a sequence model.
MetricsReport evaluate(const SequenceModel& model, const SplitDataset& split,
                       const SidAssignment& assignment, const SidTrie& trie,
                       const EvalOptions& options);

/// Catalog SIDs ordered by training-set frequency (descending), then
/// lexicographically. Context-independent baseline.
std::vector<SidSequence> popularity_ranking(const SplitDataset& split,
                                            const SidAssignment& assignment);

}  // namespace sidforge
