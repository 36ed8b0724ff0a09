#include "sidforge/pipeline.hpp"

#include <functional>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "sidforge/checksum.hpp"
#include "sidforge/diagnostics.hpp"
#include "sidforge/embeddings.hpp"
#include "sidforge/error.hpp"
#include "sidforge/interactions.hpp"
#include "sidforge/items.hpp"

extern char** environ;

namespace sidforge {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::string_view kEnvPrefix = "SIDFORGE_";

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

template <class T>
void read_opt(const json& section, const char* key, T& into) {
  if (auto it = section.find(key); it != section.end() && !it->is_null()) into = it->get<T>();
}

void check_keys(const json& section, const std::string& name,
                std::initializer_list<std::string_view> allowed) {
  if (!section.is_object()) throw Error("config section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error("unknown config key '" + name + "." + key + "'");
    }
  }
}

}  // namespace

std::map<std::string, std::string> sidforge_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    if (entry.substr(0, kEnvPrefix.size()) != kEnvPrefix) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  return out;
}

PipelineConfig PipelineConfig::from_json(std::string_view text,
                                         const std::map<std::string, std::string>& env) {
  json j;
  try {
    j = text.empty() ? json::object() : json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("pipeline config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("pipeline config must be a JSON object");

  for (const auto& [name, raw] : env) {
    if (name.substr(0, kEnvPrefix.size()) != kEnvPrefix) continue;
    const std::string rest = name.substr(kEnvPrefix.size());
    const std::size_t sep = rest.find('_');
    if (sep == std::string::npos || sep == 0 || sep + 1 == rest.size()) continue;
    const std::string section = lower(rest.substr(0, sep));
    const std::string key = lower(rest.substr(sep + 1));
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    if (!j.contains(section) || j[section].is_null()) j[section] = json::object();
    j[section][key] = std::move(value);
  }

  PipelineConfig cfg;
  try {
    check_keys(j, "<root>",
               {"paths", "synth", "ingest", "rq", "corpus", "eval", "diagnostics", "stages",
                "workers"});
    if (auto it = j.find("paths"); it != j.end()) {
      check_keys(*it, "paths", {"items", "embeddings", "interactions", "output_dir"});
      std::string s;
      if (s.clear(), read_opt(*it, "items", s), !s.empty()) cfg.paths.items = s;
      if (s.clear(), read_opt(*it, "embeddings", s), !s.empty()) cfg.paths.embeddings = s;
      if (s.clear(), read_opt(*it, "interactions", s), !s.empty()) cfg.paths.interactions = s;
      if (s.clear(), read_opt(*it, "output_dir", s), !s.empty()) cfg.paths.output_dir = s;
    }
    if (auto it = j.find("synth"); it != j.end() && !it->is_null()) {
      cfg.synth = SynthConfig::from_json(it->dump());
    }
    if (auto it = j.find("ingest"); it != j.end()) {
      check_keys(*it, "ingest", {"k_core"});
      read_opt(*it, "k_core", cfg.k_core);
    }
    if (auto it = j.find("rq"); it != j.end()) {
      check_keys(*it, "rq",
                 {"codebook_sizes", "kmeans_max_iters", "kmeans_rel_tol", "seed", "normalize"});
      read_opt(*it, "codebook_sizes", cfg.rq.codebook_sizes);
      read_opt(*it, "kmeans_max_iters", cfg.rq.kmeans_max_iters);
      read_opt(*it, "kmeans_rel_tol", cfg.rq.kmeans_rel_tol);
      read_opt(*it, "seed", cfg.rq.seed);
      read_opt(*it, "normalize", cfg.rq.normalize);
    }
    if (auto it = j.find("corpus"); it != j.end()) {
      check_keys(*it, "corpus", {"records", "max_history", "seed"});
      read_opt(*it, "records", cfg.corpus.records);
      read_opt(*it, "max_history", cfg.corpus.max_history);
      read_opt(*it, "seed", cfg.corpus.seed);
    }
    if (auto it = j.find("eval"); it != j.end()) {
      check_keys(*it, "eval",
                 {"ks", "beam_size", "include_validation", "constrained", "ngram_order",
                  "ngram_alpha"});
      read_opt(*it, "ks", cfg.eval.ks);
      read_opt(*it, "beam_size", cfg.eval.beam_size);
      read_opt(*it, "include_validation", cfg.eval.include_validation);
      read_opt(*it, "constrained", cfg.eval.constrained);
      read_opt(*it, "ngram_order", cfg.ngram_order);
      read_opt(*it, "ngram_alpha", cfg.ngram_alpha);
    }
    if (auto it = j.find("diagnostics"); it != j.end()) {
      check_keys(*it, "diagnostics", {"probe_seed"});
      read_opt(*it, "probe_seed", cfg.probe_seed);
    }
    if (auto it = j.find("stages"); it != j.end()) {
      check_keys(*it, "stages", {"diagnostics", "corpus", "evaluate"});
      read_opt(*it, "diagnostics", cfg.stages.diagnostics);
      read_opt(*it, "corpus", cfg.stages.corpus);
      read_opt(*it, "evaluate", cfg.stages.evaluate);
    }
    read_opt(j, "workers", cfg.workers);
  } catch (const json::exception& e) {
    throw Error(std::string("pipeline config: ") + e.what());
  }
  if (cfg.rq.codebook_sizes.empty()) cfg.rq.codebook_sizes = {256, 256, 256};
  cfg.rq.validate();
  if (cfg.k_core < 1) throw Error("pipeline config: ingest.k_core must be >= 1");
  return cfg;
}

namespace {

ordered_json rq_json(const RqConfig& rq) {
  ordered_json j;
  j["codebook_sizes"] = rq.codebook_sizes;
  j["kmeans_max_iters"] = rq.kmeans_max_iters;
  j["kmeans_rel_tol"] = rq.kmeans_rel_tol;
  j["seed"] = rq.seed;
  j["normalize"] = rq.normalize;
  return j;
}

ordered_json corpus_json(const CorpusOptions& c) {
  return {{"records", c.records}, {"max_history", c.max_history}, {"seed", c.seed}};
}

ordered_json eval_json(const PipelineConfig& c) {
  return {{"ks", c.eval.ks},
          {"beam_size", c.eval.beam_size},
          {"include_validation", c.eval.include_validation},
          {"constrained", c.eval.constrained},
          {"ngram_order", c.ngram_order},
          {"ngram_alpha", c.ngram_alpha}};
}

}  // namespace

std::string PipelineConfig::to_json() const {
  ordered_json j;
  j["paths"] = {{"items", paths.items.string()},
                {"embeddings", paths.embeddings.string()},
                {"interactions", paths.interactions.string()},
                {"output_dir", paths.output_dir.string()}};
  j["synth"] = synth ? ordered_json::parse(synth->to_json()) : ordered_json(nullptr);
  j["ingest"] = {{"k_core", k_core}};
  j["rq"] = rq_json(rq);
  j["corpus"] = corpus_json(corpus);
  j["eval"] = eval_json(*this);
  j["diagnostics"] = {{"probe_seed", probe_seed}};
  j["stages"] = {{"diagnostics", stages.diagnostics},
                 {"corpus", stages.corpus},
                 {"evaluate", stages.evaluate}};
  return j.dump(2);
}

std::string_view to_string(StageStatus status) {
  switch (status) {
    case StageStatus::kComputed: return "computed";
    case StageStatus::kCached: return "cached";
    case StageStatus::kSkipped: return "skipped";
    case StageStatus::kFailed: return "failed";
  }
  return "unknown";
}

namespace {

constexpr const char* kManifest = "manifest.json";

struct Stage {
  int number;
  std::string name;
  bool enabled;
  std::vector<std::string> inputs;           // artifacts in the output dir
  std::vector<fs::path> external_inputs;     // files outside it
  std::string config;                        // canonical config subsection
  std::vector<std::string> outputs;
  std::function<void()> compute;
};

class Runner {
 public:
  Runner(const PipelineConfig& config, std::ostream& log)
      : config_(config), dir_(config.paths.output_dir), log_(log) {
    const fs::path manifest = dir_ / kManifest;
    if (fs::exists(manifest)) {
      try {
        manifest_ = ordered_json::parse(read_file(manifest));
      } catch (const std::exception&) {
        log_ << "warning: ignoring unreadable " << manifest.string() << "\n";
      }
    }
    if (!manifest_.is_object() || !manifest_.contains("stages")) {
      manifest_ = {{"format", "sidforge-manifest"}, {"version", 1}};
      manifest_["stages"] = ordered_json::object();
    }
    manifest_["config"] = ordered_json::parse(config.to_json());
  }

  StageReport run(const Stage& stage) {
    StageReport report{stage.number, stage.name, StageStatus::kSkipped, {}};
    if (!stage.enabled) {
      report.message = "disabled";
      log_ << "[stage " << stage.number << "] " << stage.name << ": skipped (disabled)\n";
      return report;
    }
    try {
      std::string key_material = stage.name + "\n" + stage.config + "\n";
      for (const auto& ext : stage.external_inputs) {
        key_material += ext.string() + "=" + sha256_file(ext) + "\n";
      }
      for (const auto& input : stage.inputs) {
        const fs::path path = dir_ / input;
        if (!fs::exists(path)) throw Error("missing input artifact " + path.string());
        const std::string actual = sha256_file(path);
        const auto recorded = recorded_hash(input);
        if (recorded && *recorded != actual && !config_.force) {
          throw Error("hash mismatch for " + input + ": manifest records " +
                      recorded->substr(0, 16) + ", file hashes to " + actual.substr(0, 16) +
                      "; the artifact changed outside the pipeline (rerun with --force)");
        }
        key_material += input + "=" + actual + "\n";
      }
      const std::string key = sha256_hex(key_material);
      const std::string id = std::to_string(stage.number) + ":" + stage.name;
      auto& entry = manifest_["stages"][id];
      bool outputs_present = true;
      for (const auto& out : stage.outputs) outputs_present &= fs::exists(dir_ / out);
      if (!config_.force && entry.is_object() && entry.value("key", "") == key &&
          outputs_present) {
        report.status = StageStatus::kCached;
        log_ << "[stage " << stage.number << "] " << stage.name << ": cache hit\n";
        return report;
      }
      log_ << "[stage " << stage.number << "] " << stage.name << ": computing\n";
      stage.compute();
      ordered_json outputs = ordered_json::object();
      for (const auto& out : stage.outputs) outputs[out] = sha256_file(dir_ / out);
      entry = {{"key", key}, {"outputs", std::move(outputs)}};
      write_file_atomic(dir_ / kManifest, manifest_.dump(2) + "\n");
      report.status = StageStatus::kComputed;
    } catch (const std::exception& e) {
      report.status = StageStatus::kFailed;
      report.message = e.what();
      log_ << "[stage " << stage.number << "] " << stage.name << ": FAILED: " << e.what()
           << "\n";
    }
    return report;
  }

 private:
  std::optional<std::string> recorded_hash(const std::string& artifact) const {
    for (const auto& [id, entry] : manifest_["stages"].items()) {
      if (!entry.is_object() || !entry.contains("outputs")) continue;
      const auto& outputs = entry["outputs"];
      if (auto it = outputs.find(artifact); it != outputs.end()) return it->get<std::string>();
    }
    return std::nullopt;
  }

  const PipelineConfig& config_;
  fs::path dir_;
  std::ostream& log_;
  ordered_json manifest_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, std::ostream& log) {
  PipelineResult result;
  const fs::path dir = config.paths.output_dir;
  try {
    fs::create_directories(dir);
  } catch (const std::exception& e) {
    log << "cannot create output directory " << dir.string() << ": " << e.what() << "\n";
    result.exit_code = 2;
    return result;
  }
  if (!config.synth) {
    for (const auto& p : {config.paths.items, config.paths.embeddings, config.paths.interactions}) {
      if (p.empty() || !fs::exists(p)) {
        log << "input path '" << p.string() << "' does not exist (set paths.* or synth)\n";
        result.exit_code = 2;
        return result;
      }
    }
  }

  Runner runner(config, log);
  const unsigned workers = config.workers;

  Stage ingest{1, config.synth ? "synthesize" : "ingest", true, {}, {}, {},
               {"items.jsonl", "embeddings.bin", "embeddings.ids", "interactions.tsv"}, {}};
  if (config.synth) {
    ingest.config = config.synth->to_json() + "|k=" + std::to_string(config.k_core);
    ingest.compute = [&] {
      const SynthCatalog synth = generate_catalog(*config.synth);
      const InteractionLog raw = generate_interactions(synth, *config.synth);
      const InteractionLog filtered = k_core_filter(raw, config.k_core);
      log << "  synthesized " << synth.catalog.size() << " items, " << raw.events.size()
          << " events (" << filtered.events.size() << " after " << config.k_core << "-core)\n";
      save_items(dir / "items.jsonl", synth.catalog);
      save_embeddings(dir / "embeddings.bin", synth.embeddings);
      save_interactions(dir / "interactions.tsv", filtered);
    };
  } else {
    ingest.config = "k=" + std::to_string(config.k_core);
    ingest.external_inputs = {config.paths.items, config.paths.embeddings,
                              config.paths.interactions};
    if (fs::exists(ids_path_for(config.paths.embeddings))) {
      ingest.external_inputs.push_back(ids_path_for(config.paths.embeddings));
    }
    ingest.compute = [&] {
      const ItemCatalog catalog = load_items(config.paths.items);
      const EmbeddingSet embeddings = load_embeddings(config.paths.embeddings);
      for (const auto& id : embeddings.item_ids()) {
        if (!catalog.find(id)) throw Error("embedding row '" + id + "' has no catalog item");
      }
      InteractionLog raw = load_interactions(config.paths.interactions);
      const std::size_t before = raw.events.size();
      std::erase_if(raw.events, [&](const Interaction& e) { return !catalog.find(e.item_id); });
      if (raw.events.size() != before) {
        log << "  dropped " << before - raw.events.size()
            << " events referencing unknown items\n";
      }
      const InteractionLog filtered = k_core_filter(raw, config.k_core);
      log << "  ingested " << catalog.size() << " items, " << filtered.events.size()
          << " events after " << config.k_core << "-core\n";
      save_items(dir / "items.jsonl", catalog);
      save_embeddings(dir / "embeddings.bin", embeddings);
      save_interactions(dir / "interactions.tsv", filtered);
    };
  }

  Stage quantize{2, "quantize", true, {"embeddings.bin", "embeddings.ids"}, {},
                 rq_json(config.rq).dump(),
                 {"codebook.json", "codebook.bin", "assignment.tsv", "sid_vocab.txt"}, {}};
  quantize.compute = [&] {
    const EmbeddingSet embeddings = load_embeddings(dir / "embeddings.bin");
    const RqModel model = fit_codebooks(embeddings, config.rq, workers);
    const SidAssignment assignment = assign_all(model, embeddings, workers);
    save_model(dir / "codebook.json", model);
    save_assignment(dir / "assignment.tsv", assignment);
    write_file_atomic(dir / "sid_vocab.txt", sid_vocabulary(model));
    log << "  fitted " << model.levels() << " levels, model " << model.hash().substr(0, 16)
        << "\n";
  };

  Stage diagnostics{3, "diagnostics", config.stages.diagnostics,
                    {"codebook.json", "codebook.bin", "assignment.tsv", "embeddings.bin",
                     "embeddings.ids", "items.jsonl"},
                    {}, "probe_seed=" + std::to_string(config.probe_seed),
                    {"diagnostics.json", "diagnostics.txt"}, {}};
  diagnostics.compute = [&] {
    const RqModel model = load_model(dir / "codebook.json");
    const SidAssignment assignment = load_assignment(dir / "assignment.tsv");
    const EmbeddingSet embeddings = load_embeddings(dir / "embeddings.bin");
    const ItemCatalog catalog = load_items(dir / "items.jsonl");
    DiagnosticsReport report = diagnose(assignment, model);
    report.reconstruction = reconstruction_curve(model, embeddings, model.levels(), workers);
    std::unordered_map<std::string, std::string> labels;
    for (const auto& item : catalog) labels.emplace(item.item_id, item.category);
    try {
      report.probe_accuracy = semantic_probe(assignment, model, labels, config.probe_seed);
    } catch (const Error& e) {
      report.probe_note = std::string("probe not run: ") + e.what();
    }
    write_file_atomic(dir / "diagnostics.json", report.to_json() + "\n");
    write_file_atomic(dir / "diagnostics.txt", report.to_table());
    log << report.to_table();
  };

  Stage corpus{4, "corpus", config.stages.corpus,
               {"items.jsonl", "interactions.tsv", "assignment.tsv"}, {},
               corpus_json(config.corpus).dump(), {"corpus.jsonl", "corpus_summary.json"}, {}};
  corpus.compute = [&] {
    const ItemCatalog catalog = load_items(dir / "items.jsonl");
    const SplitDataset split = leave_last_out_split(load_interactions(dir / "interactions.tsv"));
    const SidAssignment assignment = load_assignment(dir / "assignment.tsv");
    const Corpus sampled = sample_corpus(split, catalog, assignment, config.corpus);
    ordered_json summary;
    ordered_json available = ordered_json::object();
    for (TaskId t : kAllTasks) available[std::string(task_code(t))] = sampled.available[task_index(t)];
    summary["available_examples"] = std::move(available);
    summary["excluded_tasks"] = ordered_json::array();
    for (TaskId t : sampled.excluded_tasks) {
      summary["excluded_tasks"].push_back(task_code(t));
      log << "  WARNING: task " << task_code(t) << " (" << task_name(t)
          << ") has no examples and is excluded; sampling renormalized over the rest\n";
    }
    summary["records"] = sampled.records.size();
    write_file_atomic(dir / "corpus.jsonl", corpus_to_jsonl(sampled.records));
    write_file_atomic(dir / "corpus_summary.json", summary.dump(2) + "\n");
  };

  Stage evaluation{4, "evaluate", config.stages.evaluate,
                   {"interactions.tsv", "assignment.tsv", "codebook.json", "codebook.bin"}, {},
                   eval_json(config).dump(),
                   {"ngram.json", "metrics.json", "metrics.csv", "ranks.tsv"}, {}};
  evaluation.compute = [&] {
    const RqModel model = load_model(dir / "codebook.json");
    const SplitDataset split = leave_last_out_split(load_interactions(dir / "interactions.tsv"));
    const SidAssignment assignment = load_assignment(dir / "assignment.tsv");
    const TokenVocabulary vocab(model.level_sizes());
    const NGramModel ngram =
        train_ngram(split, assignment, vocab, config.ngram_order, config.ngram_alpha);
    EvalOptions options = config.eval;
    options.workers = workers;
    const MetricsReport metrics = evaluate(ngram, split, assignment, build_trie(assignment), options);
    write_file_atomic(dir / "ngram.json", ngram.to_json() + "\n");
    write_file_atomic(dir / "metrics.json", metrics.to_json() + "\n");
    write_file_atomic(dir / "metrics.csv", metrics.to_csv());
    write_file_atomic(dir / "ranks.tsv", metrics.ranks_tsv());
    log << metrics.to_csv();
  };

  for (const Stage* stage : {&ingest, &quantize, &diagnostics, &corpus, &evaluation}) {
    StageReport report = runner.run(*stage);
    const bool failed = report.status == StageStatus::kFailed;
    result.stages.push_back(std::move(report));
    if (failed) {
      result.exit_code = 10 + stage->number;
      break;
    }
  }
  return result;
}

}  // namespace sidforge
