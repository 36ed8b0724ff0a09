#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sidforge/corpus.hpp"
#include "sidforge/recommender.hpp"
#include "sidforge/rq.hpp"
#include "sidforge/synthgen.hpp"

namespace sidforge {

struct PipelinePaths {
  std::filesystem::path items;
  std::filesystem::path embeddings;
  std::filesystem::path interactions;
  std::filesystem::path output_dir = "sidforge_out";
};

struct PipelineStages {
  bool diagnostics = true;
  bool corpus = true;
  bool evaluate = true;
};

struct PipelineConfig {
  PipelinePaths paths;
  std::optional<SynthConfig> synth;  // when set, stage 1 synthesizes
  int k_core = 5;
  RqConfig rq;
  CorpusOptions corpus;
  EvalOptions eval;
  std::size_t ngram_order = 4;
  double ngram_alpha = 0.01;
  std::uint64_t probe_seed = 0;
  PipelineStages stages;
  unsigned workers = 0;  // never affects outputs or cache keys
  bool force = false;

  /// Reads the JSON document, then applies SIDFORGE_<SECTION>_<KEY>
  /// overrides from `env` (values parsed as JSON, else taken as strings).
  static PipelineConfig from_json(std::string_view json,
                                  const std::map<std::string, std::string>& env = {});
  /// Canonical JSON of every output-affecting setting.
  std::string to_json() const;
};

/// SIDFORGE_* variables from the process environment.
std::map<std::string, std::string> sidforge_environment();

enum class StageStatus { kComputed, kCached, kSkipped, kFailed };

struct StageReport {
  int number = 0;
  std::string name;
  StageStatus status = StageStatus::kSkipped;
  std::string message;
};

struct PipelineResult {
  int exit_code = 0;  // 0, or 10 + number of the failing stage
  std::vector<StageReport> stages;
};

std::string_view to_string(StageStatus status);

/// Stage 1 ingest/synthesize, 2 fit + assign, 3 diagnostics, 4 corpus and
/// baseline evaluation. A stage is skipped when manifest.json records the
/// same content-hash key and its artifacts exist. An input artifact whose
/// hash differs from the one recorded when it was produced makes the stage
/// fail unless `force` is set.
PipelineResult run_pipeline(const PipelineConfig& config, std::ostream& log);

}  // namespace sidforge
