#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sidforge/embeddings.hpp"
#include "sidforge/sid.hpp"

namespace sidforge {

struct RqConfig {
  std::vector<std::size_t> codebook_sizes;  // K_h per level; levels = size()
  std::size_t kmeans_max_iters = 50;
  double kmeans_rel_tol = 1e-4;
  std::uint64_t seed = 0;
  bool normalize = false;  // unit-normalize vectors before quantizing

  std::size_t levels() const noexcept { return codebook_sizes.size(); }
  /// Throws Error on an empty level list, a zero size, more than 26 levels
  /// or a negative tolerance.
  void validate() const;
};

/// Centroids of one level, row-major.
struct Codebook {
  std::size_t level = 0;  // 0-based
  std::size_t dim = 0;
  std::vector<float> centroids;

  std::size_t size() const noexcept { return dim == 0 ? 0 : centroids.size() / dim; }
  std::span<const float> centroid(std::size_t k) const {
    return {centroids.data() + k * dim, dim};
  }
};

struct LevelFitStats {
  std::size_t requested_size = 0;
  std::size_t effective_size = 0;  // < requested when residuals ran out
  std::size_t iterations = 0;
  std::vector<double> mse_trace;  // assignment-step MSE per Lloyd iteration
};

/// Residual chain of one encode: residuals[h] is the input to level h, so
/// residuals[0] is the (possibly normalized) input and residuals[H] is what
/// is left after the last level.
struct EncodeTrace {
  SidSequence sid;
  std::vector<std::vector<double>> residuals;
};

/// H-level residual quantizer. Immutable once fitted or loaded.
class RqModel {
 public:
  RqModel(RqConfig config, std::size_t dim, std::vector<Codebook> codebooks,
          std::vector<LevelFitStats> fit_stats);

  const RqConfig& config() const noexcept { return config_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t levels() const noexcept { return codebooks_.size(); }
  const std::vector<Codebook>& codebooks() const noexcept { return codebooks_; }
  const std::vector<LevelFitStats>& fit_stats() const noexcept { return fit_stats_; }
  /// Actual rows per level, used for SID validation.
  const std::vector<std::size_t>& level_sizes() const noexcept { return level_sizes_; }
  /// SHA-256 over the serialized codebooks and configuration.
  const std::string& hash() const noexcept { return hash_; }

  /// Greedy per-level nearest centroid (squared L2, smallest index on ties).
  SidSequence encode(std::span<const float> x) const;
  EncodeTrace encode_trace(std::span<const float> x) const;

  /// Sum of the first `depth` selected centroids; depth defaults to H.
  std::vector<double> decode(const SidSequence& sid) const { return decode(sid, levels()); }
  std::vector<double> decode(const SidSequence& sid, std::size_t depth) const;

  /// Applies the model's preprocessing (normalization) to x.
  std::vector<double> prepare(std::span<const float> x) const;

 private:
  RqConfig config_;
  std::size_t dim_;
  std::vector<Codebook> codebooks_;
  std::vector<LevelFitStats> fit_stats_;
  std::vector<std::size_t> level_sizes_;
  std::string hash_;
};

/// Index of the centroid nearest to `residual` (squared L2, smallest index
/// wins ties). Shared by fitting and encoding.
std::size_t nearest_centroid(const Codebook& codebook, std::span<const double> residual);

/// Greedy residual k-means: level h runs k-means++ seeded Lloyd iterations
/// on the level-h residuals, then subtracts the nearest centroid.
RqModel fit_codebooks(const EmbeddingSet& embeddings, const RqConfig& config,
                      unsigned workers = 0);

/// Mean squared reconstruction error of the full-depth quantization.
double quantization_mse(const RqModel& model, const EmbeddingSet& embeddings);

SidAssignment assign_all(const RqModel& model, const EmbeddingSet& embeddings,
                         unsigned workers = 0);

/// Writes `<stem>.json` (header) and `<stem>.bin` (one SIDEMB01 block per
/// level). `json_path` must end in `.json`.
void save_model(const std::filesystem::path& json_path, const RqModel& model);
RqModel load_model(const std::filesystem::path& json_path);

}  // namespace sidforge
