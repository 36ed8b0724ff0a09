#include "sidforge/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include <json.hpp>

#include "sidforge/error.hpp"
#include "sidforge/parallel.hpp"
#include "sidforge/rng.hpp"

namespace sidforge {

using nlohmann::ordered_json;

CollisionCounts collision_counts(const SidAssignment& assignment) {
  if (assignment.empty()) throw Error("diagnostics require a nonempty assignment");
  std::unordered_map<SidSequence, std::size_t, SidHash> groups;
  for (const auto& sid : assignment.sids()) ++groups[sid];
  CollisionCounts counts;
  counts.items = assignment.size();
  counts.distinct_sids = groups.size();
  for (const auto& [sid, size] : groups) {
    if (size == 1) {
      ++counts.unique_items;
    } else {
      counts.colliding_items += size;
    }
  }
  return counts;
}

double collision_rate(const SidAssignment& assignment) {
  const auto c = collision_counts(assignment);
  return static_cast<double>(c.colliding_items) / static_cast<double>(c.items);
}

double unique_ratio(const SidAssignment& assignment) { return 1.0 - collision_rate(assignment); }

std::vector<std::size_t> active_codes(const SidAssignment& assignment) {
  std::vector<std::unordered_set<std::uint32_t>> used(assignment.levels());
  for (const auto& sid : assignment.sids()) {
    for (std::size_t h = 0; h < sid.levels(); ++h) used[h].insert(sid.tokens[h]);
  }
  std::vector<std::size_t> out;
  for (const auto& s : used) out.push_back(s.size());
  return out;
}

double codebook_utilization(const SidAssignment& assignment, const RqModel& model) {
  if (assignment.empty()) throw Error("diagnostics require a nonempty assignment");
  if (assignment.levels() != model.levels()) throw Error("assignment depth differs from model");
  const auto& sizes = model.level_sizes();
  for (const auto& sid : assignment.sids()) {
    for (std::size_t h = 0; h < sid.levels(); ++h) {
      if (sid.tokens[h] >= sizes[h]) {
        throw Error("token " + std::to_string(sid.tokens[h]) + " out of range at level " +
                    std::to_string(h));
      }
    }
  }
  const auto active = active_codes(assignment);
  double total = 0.0;
  for (std::size_t h = 0; h < active.size(); ++h) {
    total += static_cast<double>(active[h]) / static_cast<double>(sizes[h]);
  }
  return total / static_cast<double>(active.size());
}

std::vector<double> prefix_entropies(const SidAssignment& assignment) {
  if (assignment.empty()) throw Error("diagnostics require a nonempty assignment");
  const double n = static_cast<double>(assignment.size());
  std::vector<double> out;
  for (std::size_t p = 1; p <= assignment.levels(); ++p) {
    std::unordered_map<SidSequence, std::size_t, SidHash> histogram;
    for (const auto& sid : assignment.sids()) {
      ++histogram[SidSequence{{sid.tokens.begin(), sid.tokens.begin() + p}}];
    }
    // Sum in a fixed order so the value does not depend on hash layout.
    std::vector<std::size_t> counts;
    for (const auto& [prefix, count] : histogram) counts.push_back(count);
    std::sort(counts.begin(), counts.end());
    double h = 0.0;
    for (std::size_t c : counts) {
      const double q = static_cast<double>(c) / n;
      h -= q * std::log2(q);
    }
    out.push_back(h + 0.0);
  }
  return out;
}

double prefix_entropy(const SidAssignment& assignment) {
  const auto per_prefix = prefix_entropies(assignment);
  double total = 0.0;
  for (double h : per_prefix) total += h;
  return total / static_cast<double>(per_prefix.size());
}

ReconstructionCurve reconstruction_curve(const RqModel& model, const EmbeddingSet& embeddings,
                                         std::size_t h_max, unsigned workers) {
  if (h_max == 0 || h_max > model.levels()) {
    throw Error("reconstruction depth must lie in [1, " + std::to_string(model.levels()) + "]");
  }
  if (embeddings.dim() != model.dim()) throw Error("embedding dim differs from model dim");
  const std::size_t n = embeddings.count();
  const std::size_t dim = model.dim();
  const std::size_t blocks = block_count(n);
  // Per block: sums[h], used, zero-norm originals, zero-norm reconstructions.
  std::vector<std::vector<double>> block_sums(blocks, std::vector<double>(h_max, 0.0));
  std::vector<std::size_t> block_used(blocks, 0), block_excluded(blocks, 0);
  std::vector<std::size_t> block_zero_recon(blocks, 0);

  parallel_blocks(n, workers, [&](std::size_t b, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = embeddings.row(i);
      double x_norm = 0.0;
      for (float v : row) x_norm += static_cast<double>(v) * v;
      x_norm = std::sqrt(x_norm);
      if (x_norm == 0.0) {
        ++block_excluded[b];
        continue;
      }
      ++block_used[b];
      const SidSequence sid = model.encode(row);
      std::vector<double> recon(dim, 0.0);
      for (std::size_t h = 0; h < h_max; ++h) {
        const auto c = model.codebooks()[h].centroid(sid.tokens[h]);
        double dot = 0.0, r_norm = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          recon[j] += static_cast<double>(c[j]);
          dot += static_cast<double>(row[j]) * recon[j];
          r_norm += recon[j] * recon[j];
        }
        r_norm = std::sqrt(r_norm);
        if (r_norm == 0.0) {
          ++block_zero_recon[b];
          continue;
        }
        block_sums[b][h] += std::clamp(dot / (x_norm * r_norm), -1.0, 1.0);
      }
    }
  });

  ReconstructionCurve curve;
  std::vector<double> sums(h_max, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t h = 0; h < h_max; ++h) sums[h] += block_sums[b][h];
    curve.items_used += block_used[b];
    curve.excluded_zero_norm += block_excluded[b];
    curve.zero_norm_reconstructions += block_zero_recon[b];
  }
  for (std::size_t h = 0; h < h_max; ++h) {
    curve.sim[h + 1] =
        curve.items_used == 0 ? 0.0 : sums[h] / static_cast<double>(curve.items_used);
  }
  return curve;
}

double semantic_probe(const SidAssignment& assignment, const RqModel& model,
                      const std::unordered_map<std::string, std::string>& labels,
                      std::uint64_t split_seed, const ProbeOptions& options) {
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    auto it = labels.find(assignment.item_ids()[i]);
    if (it != labels.end()) by_class[it->second].push_back(i);
  }
  if (by_class.size() < 2) throw Error("semantic probe needs at least two categories");
  for (const auto& [name, members] : by_class) {
    if (members.size() < 10) {
      throw Error("semantic probe needs at least 10 items per category; '" + name + "' has " +
                  std::to_string(members.size()));
    }
  }

  const std::size_t classes = by_class.size();
  const std::size_t dim = model.dim();
  std::vector<std::size_t> train, test;
  std::vector<std::size_t> label_of(assignment.size(), 0);
  std::size_t class_index = 0;
  for (auto& [name, members] : by_class) {
    StreamRng rng(split_seed, Stream::kProbeSplit, class_index);
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[rng.below(i)]);
    }
    auto n_train = static_cast<std::size_t>(
        std::lround(options.train_fraction * static_cast<double>(members.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
    for (std::size_t k = 0; k < members.size(); ++k) {
      label_of[members[k]] = class_index;
      (k < n_train ? train : test).push_back(members[k]);
    }
    ++class_index;
  }
  std::vector<char> seen(classes, 0);
  for (std::size_t i : train) seen[label_of[i]] = 1;
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw Error("semantic probe: a category is absent from the training split");
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());

  // Decoded SID vectors, standardized with training statistics.
  std::vector<std::vector<double>> features(assignment.size());
  for (std::size_t i : train) features[i] = model.decode(assignment.sids()[i]);
  for (std::size_t i : test) features[i] = model.decode(assignment.sids()[i]);
  std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
  for (std::size_t i : train) {
    for (std::size_t j = 0; j < dim; ++j) mean[j] += features[i][j];
  }
  for (double& m : mean) m /= static_cast<double>(train.size());
  for (std::size_t i : train) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = features[i][j] - mean[j];
      sd[j] += d * d;
    }
  }
  for (double& s : sd) {
    s = std::sqrt(s / static_cast<double>(train.size()));
    if (s < 1e-12) s = 1.0;
  }
  for (auto& f : features) {
    if (f.empty()) continue;
    for (std::size_t j = 0; j < dim; ++j) f[j] = (f[j] - mean[j]) / sd[j];
  }

  std::vector<double> weights(classes * dim, 0.0), bias(classes, 0.0);
  std::vector<double> grad_w(classes * dim), grad_b(classes), prob(classes);
  auto logits = [&](const std::vector<double>& x, std::vector<double>& out) {
    for (std::size_t c = 0; c < classes; ++c) {
      double z = bias[c];
      const double* w = weights.data() + c * dim;
      for (std::size_t j = 0; j < dim; ++j) z += w[j] * x[j];
      out[c] = z;
    }
  };
  const double inv_n = 1.0 / static_cast<double>(train.size());
  for (std::size_t step = 0; step < options.steps; ++step) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t i : train) {
      const auto& x = features[i];
      logits(x, prob);
      const double top = *std::max_element(prob.begin(), prob.end());
      double z = 0.0;
      for (double& p : prob) {
        p = std::exp(p - top);
        z += p;
      }
      for (std::size_t c = 0; c < classes; ++c) {
        const double g = prob[c] / z - (c == label_of[i] ? 1.0 : 0.0);
        grad_b[c] += g;
        double* gw = grad_w.data() + c * dim;
        for (std::size_t j = 0; j < dim; ++j) gw[j] += g * x[j];
      }
    }
    for (std::size_t k = 0; k < weights.size(); ++k) {
      weights[k] -= options.learning_rate * (grad_w[k] * inv_n + options.l2 * weights[k]);
    }
    for (std::size_t c = 0; c < classes; ++c) bias[c] -= options.learning_rate * grad_b[c] * inv_n;
  }

  std::size_t correct = 0;
  for (std::size_t i : test) {
    logits(features[i], prob);
    const auto best = static_cast<std::size_t>(
        std::distance(prob.begin(), std::max_element(prob.begin(), prob.end())));
    if (best == label_of[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

DiagnosticsReport diagnose(const SidAssignment& assignment, const RqModel& model) {
  DiagnosticsReport r;
  r.counts = collision_counts(assignment);
  r.collision_rate =
      static_cast<double>(r.counts.colliding_items) / static_cast<double>(r.counts.items);
  r.unique_ratio = 1.0 - r.collision_rate;
  r.utilization = codebook_utilization(assignment, model);
  r.prefix_entropies = prefix_entropies(assignment);
  r.prefix_entropy = prefix_entropy(assignment);
  r.active_codes = active_codes(assignment);
  r.level_sizes = model.level_sizes();
  return r;
}

std::string DiagnosticsReport::to_json() const {
  ordered_json j;
  j["collision_rate"] = collision_rate;
  j["unique_ratio"] = unique_ratio;
  j["utilization"] = utilization;
  j["prefix_entropy"] = prefix_entropy;
  j["prefix_entropy_base"] = 2;
  j["prefix_entropies"] = prefix_entropies;
  j["items"] = counts.items;
  j["distinct_sids"] = counts.distinct_sids;
  j["colliding_items"] = counts.colliding_items;
  j["active_codes"] = active_codes;
  j["level_sizes"] = level_sizes;
  if (reconstruction) {
    ordered_json sim = ordered_json::object();
    for (const auto& [h, v] : reconstruction->sim) sim[std::to_string(h)] = v;
    j["sim_curve"] = std::move(sim);
    j["sim_items"] = reconstruction->items_used;
    j["sim_excluded_zero_norm"] = reconstruction->excluded_zero_norm;
    j["sim_zero_norm_reconstructions"] = reconstruction->zero_norm_reconstructions;
  }
  j["probe_accuracy"] = probe_accuracy ? ordered_json(*probe_accuracy) : ordered_json(nullptr);
  j["probe"] = "logistic regression on decoded SID vectors";
  if (!probe_note.empty()) j["probe_note"] = probe_note;
  return j.dump(2);
}

std::string DiagnosticsReport::to_table() const {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof line, "%10s %10s %10s %10s\n", "Collision", "Unique", "Util.",
                "Entropy");
  out += line;
  std::snprintf(line, sizeof line, "%9.2f%% %9.2f%% %9.2f%% %10.3f\n", 100.0 * collision_rate,
                100.0 * unique_ratio, 100.0 * utilization, prefix_entropy);
  out += line;
  if (reconstruction) {
    out += "\nDepth   Sim\n";
    for (const auto& [h, v] : reconstruction->sim) {
      std::snprintf(line, sizeof line, "%5zu   %.4f\n", h, v);
      out += line;
    }
  }
  if (probe_accuracy) {
    std::snprintf(line, sizeof line, "\nProbe accuracy: %.2f%%\n", 100.0 * *probe_accuracy);
    out += line;
  }
  return out;
}

}  // namespace sidforge
