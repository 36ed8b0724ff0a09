#include "sidforge/rq.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

#include <json.hpp>

#include "sidforge/checksum.hpp"
#include "sidforge/error.hpp"
#include "sidforge/parallel.hpp"
#include "sidforge/rng.hpp"

namespace sidforge {

using nlohmann::ordered_json;

void RqConfig::validate() const {
  if (codebook_sizes.empty()) throw Error("RqConfig: at least one level is required");
  if (codebook_sizes.size() > 26) throw Error("RqConfig: at most 26 levels are supported");
  for (std::size_t k : codebook_sizes) {
    if (k == 0) throw Error("RqConfig: codebook sizes must be at least 1");
    if (k > std::numeric_limits<std::uint32_t>::max()) throw Error("RqConfig: codebook too large");
  }
  if (!(kmeans_rel_tol >= 0.0)) throw Error("RqConfig: kmeans_rel_tol must be >= 0");
}

namespace {

template <class T>
double squared_distance(std::span<const double> x, const T* c, std::size_t dim) {
  double d = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double diff = x[j] - static_cast<double>(c[j]);
    d += diff * diff;
  }
  return d;
}

/// Smallest-index argmin of squared distance over `k` row-major rows.
template <class T>
std::pair<std::size_t, double> nearest_row(const T* rows, std::size_t k, std::size_t dim,
                                           std::span<const double> x) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    const double d = squared_distance(x, rows + c * dim, dim);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

std::string header_json(const RqConfig& config, std::size_t dim,
                        const std::vector<std::size_t>& level_sizes) {
  ordered_json j;
  j["codebook_sizes"] = config.codebook_sizes;
  j["level_sizes"] = level_sizes;
  j["dim"] = dim;
  j["seed"] = config.seed;
  j["kmeans_max_iters"] = config.kmeans_max_iters;
  j["kmeans_rel_tol"] = config.kmeans_rel_tol;
  j["normalize"] = config.normalize;
  return j.dump();
}

std::string codebook_blocks(const std::vector<Codebook>& codebooks) {
  std::string out;
  for (const auto& cb : codebooks) {
    append_matrix_block(out, static_cast<std::uint32_t>(cb.size()),
                        static_cast<std::uint32_t>(cb.dim), cb.centroids);
  }
  return out;
}

std::size_t count_distinct_rows(const std::vector<double>& rows, std::size_t n, std::size_t dim,
                                std::size_t cap) {
  std::unordered_set<std::string> seen;
  std::vector<double> canon(dim);
  for (std::size_t i = 0; i < n && seen.size() < cap; ++i) {
    for (std::size_t j = 0; j < dim; ++j) canon[j] = rows[i * dim + j] + 0.0;  // folds -0.0
    seen.emplace(reinterpret_cast<const char*>(canon.data()), dim * sizeof(double));
  }
  return seen.size();
}

/// k-means++ seeding: first center uniform, then D^2 sampling.
std::vector<double> kmeans_plus_plus(const std::vector<double>& points, std::size_t n,
                                     std::size_t dim, std::size_t k, StreamRng& rng,
                                     unsigned workers) {
  std::vector<double> centers(k * dim);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(points.begin() + pick * dim, dim, centers.begin() + c * dim);
    if (c + 1 == k) break;
    const double* center = centers.data() + c * dim;
    parallel_blocks(n, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        const double d = squared_distance(std::span(points.data() + i * dim, dim), center, dim);
        min_d[i] = std::min(min_d[i], d);
      }
    });
    double total = 0.0;
    for (double d : min_d) total += d;
    const double target = rng.uniform() * total;
    double running = 0.0;
    pick = n;
    std::size_t last_positive = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d[i] <= 0.0) continue;
      last_positive = i;
      running += min_d[i];
      if (running > target) {
        pick = i;
        break;
      }
    }
    if (pick == n) pick = last_positive;  // rounding at the upper end
  }
  return centers;
}

std::vector<double> preprocess(std::span<const float> x, bool normalize) {
  std::vector<double> r(x.begin(), x.end());
  if (normalize) {
    double norm = 0.0;
    for (double v : r) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (double& v : r) v /= norm;
    }
  }
  return r;
}

struct LloydResult {
  std::vector<double> centroids;
  LevelFitStats stats;
};

LloydResult run_kmeans(const std::vector<double>& points, std::size_t n, std::size_t dim,
                       std::size_t k, const RqConfig& config, std::size_t level,
                       unsigned workers) {
  StreamRng rng(config.seed, Stream::kKMeansSeeding, level);
  LloydResult result;
  result.centroids = kmeans_plus_plus(points, n, dim, k, rng, workers);
  result.stats.requested_size = config.codebook_sizes[level];
  result.stats.effective_size = k;

  std::vector<std::uint32_t> assignment(n);
  std::vector<double> dist(n);
  std::vector<double> block_sse(block_count(n));
  std::vector<double> previous;
  double prev_mse = std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < config.kmeans_max_iters; ++iter) {
    const double* centroids = result.centroids.data();
    parallel_blocks(n, workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
      double sse = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        auto [best, d] = nearest_row(centroids, k, dim, std::span(points.data() + i * dim, dim));
        assignment[i] = static_cast<std::uint32_t>(best);
        dist[i] = d;
        sse += d;
      }
      block_sse[b] = sse;
    });
    double sse = 0.0;
    for (double s : block_sse) sse += s;
    const double mse = sse / static_cast<double>(n);
    if (mse > prev_mse) {
      result.centroids = std::move(previous);
      break;
    }
    result.stats.mse_trace.push_back(mse);
    result.stats.iterations = iter + 1;
    if (std::isfinite(prev_mse) && prev_mse - mse <= config.kmeans_rel_tol * prev_mse) break;
    if (mse == 0.0) break;
    prev_mse = mse;
    previous = result.centroids;

    // Centroid update in point order, independent of the worker count.
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = assignment[i];
      ++counts[c];
      const double* p = points.data() + i * dim;
      double* s = sums.data() + c * dim;
      for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
    }
    std::vector<std::size_t> by_distance;
    for (std::size_t c = 0; c < k; ++c) {
      double* out = result.centroids.data() + c * dim;
      if (counts[c] > 0) {
        const double inv = 1.0 / static_cast<double>(counts[c]);
        for (std::size_t j = 0; j < dim; ++j) out[j] = sums[c * dim + j] * inv;
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      if (by_distance.empty()) {
        by_distance.resize(n);
        for (std::size_t i = 0; i < n; ++i) by_distance[i] = i;
        std::stable_sort(by_distance.begin(), by_distance.end(),
                         [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
        std::reverse(by_distance.begin(), by_distance.end());
      }
      const std::size_t far = by_distance.back();
      by_distance.pop_back();
      std::copy_n(points.begin() + far * dim, dim, out);
    }
  }
  return result;
}

}  // namespace

std::size_t nearest_centroid(const Codebook& codebook, std::span<const double> residual) {
  return nearest_row(codebook.centroids.data(), codebook.size(), codebook.dim, residual).first;
}

RqModel::RqModel(RqConfig config, std::size_t dim, std::vector<Codebook> codebooks,
                 std::vector<LevelFitStats> fit_stats)
    : config_(std::move(config)),
      dim_(dim),
      codebooks_(std::move(codebooks)),
      fit_stats_(std::move(fit_stats)) {
  config_.validate();
  if (dim_ == 0) throw Error("RqModel: dim must be at least 1");
  if (codebooks_.size() != config_.levels()) {
    throw Error("RqModel: expected " + std::to_string(config_.levels()) + " codebooks, got " +
                std::to_string(codebooks_.size()));
  }
  for (std::size_t h = 0; h < codebooks_.size(); ++h) {
    auto& cb = codebooks_[h];
    if (cb.dim != dim_) throw Error("RqModel: codebook dim differs from model dim");
    if (cb.size() == 0 || cb.centroids.size() != cb.size() * dim_) {
      throw Error("RqModel: codebook " + std::to_string(h) + " is empty or ragged");
    }
    if (cb.size() > config_.codebook_sizes[h]) {
      throw Error("RqModel: codebook " + std::to_string(h) + " exceeds its configured size");
    }
    for (float v : cb.centroids) {
      if (!std::isfinite(v)) throw Error("RqModel: non-finite centroid");
    }
    cb.level = h;
    level_sizes_.push_back(cb.size());
  }
  hash_ = sha256_hex(header_json(config_, dim_, level_sizes_) + codebook_blocks(codebooks_));
}

std::vector<double> RqModel::prepare(std::span<const float> x) const {
  if (x.size() != dim_) {
    throw Error("dimension mismatch: input has " + std::to_string(x.size()) + ", model has " +
                std::to_string(dim_));
  }
  return preprocess(x, config_.normalize);
}

SidSequence RqModel::encode(std::span<const float> x) const {
  std::vector<double> r = prepare(x);
  SidSequence sid;
  sid.tokens.reserve(levels());
  for (const auto& cb : codebooks_) {
    const std::size_t k = nearest_centroid(cb, r);
    sid.tokens.push_back(static_cast<std::uint32_t>(k));
    const auto c = cb.centroid(k);
    for (std::size_t j = 0; j < dim_; ++j) r[j] -= static_cast<double>(c[j]);
  }
  return sid;
}

EncodeTrace RqModel::encode_trace(std::span<const float> x) const {
  EncodeTrace trace;
  trace.residuals.push_back(prepare(x));
  for (const auto& cb : codebooks_) {
    std::vector<double> r = trace.residuals.back();
    const std::size_t k = nearest_centroid(cb, r);
    trace.sid.tokens.push_back(static_cast<std::uint32_t>(k));
    const auto c = cb.centroid(k);
    for (std::size_t j = 0; j < dim_; ++j) r[j] -= static_cast<double>(c[j]);
    trace.residuals.push_back(std::move(r));
  }
  return trace;
}

std::vector<double> RqModel::decode(const SidSequence& sid, std::size_t depth) const {
  if (depth > levels()) {
    throw Error("decode depth " + std::to_string(depth) + " exceeds model levels " +
                std::to_string(levels()));
  }
  if (sid.levels() < depth) throw Error("SID shorter than decode depth");
  std::vector<double> out(dim_, 0.0);
  for (std::size_t h = 0; h < depth; ++h) {
    const std::uint32_t t = sid.tokens[h];
    if (t >= codebooks_[h].size()) {
      throw Error("token " + std::to_string(t) + " out of range for level " + std::to_string(h) +
                  " (size " + std::to_string(codebooks_[h].size()) + ")");
    }
    const auto c = codebooks_[h].centroid(t);
    for (std::size_t j = 0; j < dim_; ++j) out[j] += static_cast<double>(c[j]);
  }
  return out;
}

RqModel fit_codebooks(const EmbeddingSet& embeddings, const RqConfig& config, unsigned workers) {
  config.validate();
  if (embeddings.empty()) throw Error("cannot fit codebooks on an empty embedding set");
  const std::size_t n = embeddings.count();
  const std::size_t dim = embeddings.dim();

  std::vector<double> residuals(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = preprocess(embeddings.row(i), config.normalize);
    std::copy(r.begin(), r.end(), residuals.begin() + i * dim);
  }

  std::vector<Codebook> codebooks;
  std::vector<LevelFitStats> stats;
  for (std::size_t h = 0; h < config.levels(); ++h) {
    const std::size_t k = count_distinct_rows(residuals, n, dim, config.codebook_sizes[h]);
    LloydResult fit = run_kmeans(residuals, n, dim, k, config, h, workers);

    Codebook cb{h, dim, std::vector<float>(fit.centroids.size())};
    std::transform(fit.centroids.begin(), fit.centroids.end(), cb.centroids.begin(),
                   [](double v) { return static_cast<float>(v); });

    parallel_blocks(n, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        std::span<double> r(residuals.data() + i * dim, dim);
        const auto c = cb.centroid(nearest_centroid(cb, r));
        for (std::size_t j = 0; j < dim; ++j) r[j] -= static_cast<double>(c[j]);
      }
    });
    codebooks.push_back(std::move(cb));
    stats.push_back(std::move(fit.stats));
  }
  return RqModel(config, dim, std::move(codebooks), std::move(stats));
}

double quantization_mse(const RqModel& model, const EmbeddingSet& embeddings) {
  if (embeddings.empty()) throw Error("quantization_mse: empty embedding set");
  double total = 0.0;
  for (std::size_t i = 0; i < embeddings.count(); ++i) {
    const auto trace = model.encode_trace(embeddings.row(i));
    for (double v : trace.residuals.back()) total += v * v;
  }
  return total / static_cast<double>(embeddings.count());
}

SidAssignment assign_all(const RqModel& model, const EmbeddingSet& embeddings, unsigned workers) {
  if (embeddings.dim() != model.dim()) {
    throw Error("dimension mismatch: embeddings have " + std::to_string(embeddings.dim()) +
                ", model has " + std::to_string(model.dim()));
  }
  std::vector<SidSequence> sids(embeddings.count());
  parallel_blocks(embeddings.count(), workers,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) sids[i] = model.encode(embeddings.row(i));
                  });
  return SidAssignment(model.hash(), embeddings.item_ids(), std::move(sids));
}

void save_model(const std::filesystem::path& json_path, const RqModel& model) {
  if (json_path.extension() != ".json") throw Error("model path must end in .json");
  auto bin_path = json_path;
  bin_path.replace_extension(".bin");
  const auto& cfg = model.config();
  ordered_json j;
  j["format"] = "sidforge-rq";
  j["version"] = 1;
  j["levels"] = model.levels();
  j["codebook_sizes"] = cfg.codebook_sizes;
  j["level_sizes"] = model.level_sizes();
  j["dim"] = model.dim();
  j["seed"] = cfg.seed;
  j["kmeans_max_iters"] = cfg.kmeans_max_iters;
  j["kmeans_rel_tol"] = cfg.kmeans_rel_tol;
  j["normalize"] = cfg.normalize;
  j["model_hash"] = model.hash();
  j["centroids_file"] = bin_path.filename().string();
  ordered_json stats = ordered_json::array();
  for (const auto& s : model.fit_stats()) {
    stats.push_back({{"requested_size", s.requested_size},
                     {"effective_size", s.effective_size},
                     {"iterations", s.iterations},
                     {"mse_trace", s.mse_trace}});
  }
  j["fit_stats"] = std::move(stats);
  write_file_atomic(bin_path, codebook_blocks(model.codebooks()));
  write_file_atomic(json_path, j.dump(2) + "\n");
}

RqModel load_model(const std::filesystem::path& json_path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(json_path));
  } catch (const ordered_json::exception& e) {
    throw Error(json_path.string() + ": malformed model header: " + e.what());
  }
  try {
    if (j.at("format") != "sidforge-rq" || j.at("version") != 1) {
      throw Error("unsupported model format/version");
    }
    RqConfig cfg;
    cfg.codebook_sizes = j.at("codebook_sizes").get<std::vector<std::size_t>>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.kmeans_max_iters = j.at("kmeans_max_iters").get<std::size_t>();
    cfg.kmeans_rel_tol = j.at("kmeans_rel_tol").get<double>();
    cfg.normalize = j.at("normalize").get<bool>();
    const auto dim = j.at("dim").get<std::size_t>();
    const auto bin_path = json_path.parent_path() / j.at("centroids_file").get<std::string>();
    const std::string bytes = read_file(bin_path);
    std::size_t offset = 0;
    std::vector<Codebook> codebooks;
    for (std::size_t h = 0; h < cfg.levels(); ++h) {
      MatrixBlock block = read_matrix_block(bytes, offset);
      if (block.dim != dim) throw FormatError(offset, "codebook dim differs from header");
      codebooks.push_back(Codebook{h, dim, std::move(block.values)});
    }
    if (offset != bytes.size()) throw FormatError(offset, "trailing bytes after last codebook");
    std::vector<LevelFitStats> stats;
    if (auto it = j.find("fit_stats"); it != j.end()) {
      for (const auto& s : *it) {
        LevelFitStats ls;
        ls.requested_size = s.at("requested_size").get<std::size_t>();
        ls.effective_size = s.at("effective_size").get<std::size_t>();
        ls.iterations = s.at("iterations").get<std::size_t>();
        ls.mse_trace = s.at("mse_trace").get<std::vector<double>>();
        stats.push_back(std::move(ls));
      }
    }
    RqModel model(std::move(cfg), dim, std::move(codebooks), std::move(stats));
    if (model.hash() != j.at("model_hash").get<std::string>()) {
      throw Error("model hash mismatch: header says " + j.at("model_hash").get<std::string>() +
                  ", codebooks hash to " + model.hash());
    }
    return model;
  } catch (const ordered_json::exception& e) {
    throw Error(json_path.string() + ": invalid model header: " + e.what());
  }
}

}  // namespace sidforge
