#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sidforge/embeddings.hpp"
#include "sidforge/rq.hpp"
#include "sidforge/sid.hpp"

namespace sidforge {

struct CollisionCounts {
  std::size_t items = 0;
  std::size_t distinct_sids = 0;
  std::size_t colliding_items = 0;  // full SID shared with another item
  std::size_t unique_items = 0;
};

CollisionCounts collision_counts(const SidAssignment& assignment);

/// Fraction of items whose full SID is shared. Throws on empty input.
double collision_rate(const SidAssignment& assignment);
/// 1 - collision_rate.
double unique_ratio(const SidAssignment& assignment);

/// Number of distinct tokens used at each level.
std::vector<std::size_t> active_codes(const SidAssignment& assignment);

/// Mean over levels of (distinct tokens used) / (codebook rows). Throws
/// when a token exceeds its level's codebook.
double codebook_utilization(const SidAssignment& assignment, const RqModel& model);

/// Base-2 Shannon entropy of the length-p prefix distribution for
/// p = 1..H.
std::vector<double> prefix_entropies(const SidAssignment& assignment);
/// Mean of prefix_entropies.
double prefix_entropy(const SidAssignment& assignment);

struct ReconstructionCurve {
  std::map<std::size_t, double> sim;  // depth -> mean cosine
  std::size_t items_used = 0;
  std::size_t excluded_zero_norm = 0;      // originals with zero norm
  std::size_t zero_norm_reconstructions = 0;  // contributed similarity 0
};

/// Mean cosine between each embedding and its depth-h reconstruction for
/// h = 1..h_max, using prefix sums of one encode per item.
ReconstructionCurve reconstruction_curve(const RqModel& model, const EmbeddingSet& embeddings,
                                         std::size_t h_max, unsigned workers = 0);

struct ProbeOptions {
  std::size_t steps = 500;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  double train_fraction = 0.8;
};

/// Held-out accuracy of a multinomial logistic-regression probe that
/// predicts the category from the decoded SID vector. The 80/20 split is
/// stratified by category and seeded by `split_seed`; features are
/// standardized with training-set statistics.
///
/// Requires at least two categories and ten items per category.
double semantic_probe(const SidAssignment& assignment, const RqModel& model,
                      const std::unordered_map<std::string, std::string>& labels,
                      std::uint64_t split_seed, const ProbeOptions& options = {});

struct DiagnosticsReport {
  CollisionCounts counts;
  double collision_rate = 0.0;
  double unique_ratio = 0.0;
  double utilization = 0.0;
  double prefix_entropy = 0.0;
  std::vector<double> prefix_entropies;
  std::vector<std::size_t> active_codes;
  std::vector<std::size_t> level_sizes;
  std::optional<ReconstructionCurve> reconstruction;
  std::optional<double> probe_accuracy;
  std::string probe_note;

  std::string to_json() const;
  /// Aligned columns: Collision, Unique, Util., Entropy.
  std::string to_table() const;
};

DiagnosticsReport diagnose(const SidAssignment& assignment, const RqModel& model);

}  // namespace sidforge
