#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sidforge/embeddings.hpp"
#include "sidforge/interactions.hpp"
#include "sidforge/items.hpp"

namespace sidforge {

/// Knobs of the synthetic catalog/interaction generator.
///
/// `enrichment_level` emulates richer item semantics: cluster centers sit
/// at mutual distance proportional to (1 + 2e) and the noise on the
/// informative coordinate block has standard deviation proportional to
/// `intra_category_noise * (1.5 - e)`. Coordinates outside that block are
/// category-independent item detail with standard deviation
/// `intra_category_noise * (0.5 + e)`.
struct SynthConfig {
  std::size_t num_items = 2000;
  std::size_t num_users = 1000;
  std::size_t dim = 32;
  std::size_t num_categories = 20;
  double enrichment_level = 1.0;
  double intra_category_noise = 1.0;
  double category_separation = 3.0;
  double informative_fraction = 0.5;
  /// Items of a category come in groups of this many look-alikes whose
  /// noise is correlated; enrichment decorrelates them. 1 disables.
  std::size_t look_alike_group = 4;
  std::size_t min_events = 5;
  std::size_t max_events = 20;
  /// Probability of the dominant category transition.
  double dominant_transition = 0.8;
  /// 0: the dominant transition stays in the category, 1: it advances to
  /// the next category (mod num_categories).
  std::size_t dominant_shift = 1;
  /// Explicit row-stochastic category transition matrix; overrides the
  /// dominant-transition construction when present.
  std::optional<std::vector<std::vector<double>>> transition;
  std::uint64_t seed = 0;

  /// Throws Error when an invariant is violated.
  void validate() const;

  static SynthConfig from_json(std::string_view json);
  std::string to_json() const;
};

struct SynthCatalog {
  ItemCatalog catalog;
  EmbeddingSet embeddings;
  std::vector<std::size_t> labels;  // category index per item, catalog order
  std::vector<std::string> category_names;
};

/// Category-level transition matrix used by generate_interactions.
std::vector<std::vector<double>> transition_matrix(const SynthConfig& config);

SynthCatalog generate_catalog(const SynthConfig& config);

/// Each user walks the category Markov chain from a uniform start
/// category, choosing items uniformly inside the current category.
/// Timestamps increase strictly per user.
InteractionLog generate_interactions(const SynthCatalog& synth, const SynthConfig& config);

}  // namespace sidforge
