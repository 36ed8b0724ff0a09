// sidforge command-line tool. JSON goes to stdout, tables and logs to stderr.

#include <charconv>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sidforge/checksum.hpp"
#include "sidforge/corpus.hpp"
#include "sidforge/diagnostics.hpp"
#include "sidforge/embeddings.hpp"
#include "sidforge/error.hpp"
#include "sidforge/interactions.hpp"
#include "sidforge/items.hpp"
#include "sidforge/pipeline.hpp"
#include "sidforge/recommender.hpp"
#include "sidforge/rq.hpp"
#include "sidforge/sid.hpp"
#include "sidforge/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace sidforge;

namespace {

std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view part(text.data() + start, comma - start);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc{} || ptr != part.data() + part.size() || part.empty()) {
      throw Error(std::string("bad ") + what + " list '" + text + "'");
    }
    out.push_back(value);
    start = comma + 1;
  }
  return out;
}

void print_json(const std::string& json) { std::cout << json << "\n"; }

ordered_json fit_stats_json(const RqModel& model) {
  ordered_json levels = ordered_json::array();
  for (const auto& s : model.fit_stats()) {
    levels.push_back({{"requested_size", s.requested_size},
                      {"effective_size", s.effective_size},
                      {"iterations", s.iterations},
                      {"final_mse", s.mse_trace.empty() ? 0.0 : s.mse_trace.back()}});
  }
  return levels;
}

struct Common {
  unsigned workers = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sidforge: semantic ID construction, diagnostics and corpus tooling"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--workers", common.workers, "Worker threads (0 = hardware)")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic catalog, embeddings and log");
  SynthConfig sc;
  std::string synth_config;
  fs::path synth_out;
  int synth_k = 5;
  std::uint64_t synth_seed = 0;
  synth->add_option("--config", synth_config, "SynthConfig JSON file (flags override it)");
  synth->add_option("--items", sc.num_items);
  synth->add_option("--users", sc.num_users);
  synth->add_option("--dim", sc.dim);
  synth->add_option("--categories", sc.num_categories);
  synth->add_option("--enrichment", sc.enrichment_level);
  synth->add_option("--dominant", sc.dominant_transition, "Dominant transition probability");
  synth->add_option("--k-core", synth_k)->capture_default_str();
  synth->add_option("--seed", synth_seed)->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate external data and k-core filter the log");
  fs::path in_items, in_emb, in_inter, in_out;
  int in_k = 5;
  ingest->add_option("--items", in_items)->required()->check(CLI::ExistingFile);
  ingest->add_option("--embeddings", in_emb)->required()->check(CLI::ExistingFile);
  ingest->add_option("--interactions", in_inter)->required()->check(CLI::ExistingFile);
  ingest->add_option("--k-core", in_k)->capture_default_str();
  ingest->add_option("--out", in_out, "Output directory")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "Fit residual k-means codebooks");
  fs::path fit_emb, fit_out;
  std::string fit_sizes = "256,256,256";
  RqConfig rc;
  fit->add_option("--embeddings", fit_emb)->required()->check(CLI::ExistingFile);
  fit->add_option("--sizes", fit_sizes, "Codebook sizes per level")->capture_default_str();
  fit->add_option("--max-iters", rc.kmeans_max_iters)->capture_default_str();
  fit->add_option("--tol", rc.kmeans_rel_tol)->capture_default_str();
  fit->add_flag("--normalize", rc.normalize, "Unit-normalize embeddings first");
  fit->add_option("--seed", rc.seed)->required();
  fit->add_option("--out", fit_out, "Model header path (.json)")->required();

  // encode
  auto* encode = app.add_subcommand("encode", "Assign a SID to every embedding");
  fs::path enc_model, enc_emb, enc_out;
  encode->add_option("--model", enc_model)->required()->check(CLI::ExistingFile);
  encode->add_option("--embeddings", enc_emb)->required()->check(CLI::ExistingFile);
  encode->add_option("--out", enc_out, "Assignment TSV")->required();

  // decode
  auto* decode = app.add_subcommand("decode", "Reconstruct a vector from a SID");
  fs::path dec_model, dec_out;
  std::string dec_sid;
  std::optional<std::size_t> dec_depth;
  decode->add_option("--model", dec_model)->required()->check(CLI::ExistingFile);
  decode->add_option("--sid", dec_sid)->required();
  decode->add_option("--depth", dec_depth, "Levels to sum (default all)");
  decode->add_option("--out", dec_out, "SIDEMB01 output file")->required();

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "Collision, utilization and entropy report");
  fs::path dg_model, dg_assign, dg_emb, dg_items;
  std::optional<std::uint64_t> dg_seed;
  diag->add_option("--model", dg_model)->required()->check(CLI::ExistingFile);
  diag->add_option("--assignment", dg_assign)->required()->check(CLI::ExistingFile);
  diag->add_option("--embeddings", dg_emb, "Adds the reconstruction curve")->check(CLI::ExistingFile);
  diag->add_option("--items", dg_items, "Adds the category probe (needs --seed)")
      ->check(CLI::ExistingFile);
  diag->add_option("--seed", dg_seed, "Probe split seed");

  // recon-curve
  auto* recon = app.add_subcommand("recon-curve", "Mean cosine similarity per depth");
  fs::path rc_model, rc_emb;
  std::optional<std::size_t> rc_depth;
  recon->add_option("--model", rc_model)->required()->check(CLI::ExistingFile);
  recon->add_option("--embeddings", rc_emb)->required()->check(CLI::ExistingFile);
  recon->add_option("--max-depth", rc_depth);

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Sample the multitask instruction corpus");
  fs::path co_items, co_inter, co_assign, co_out, co_chat;
  CorpusOptions co;
  corpus->add_option("--items", co_items)->required()->check(CLI::ExistingFile);
  corpus->add_option("--interactions", co_inter)->required()->check(CLI::ExistingFile);
  corpus->add_option("--assignment", co_assign)->required()->check(CLI::ExistingFile);
  corpus->add_option("--records", co.records)->capture_default_str();
  corpus->add_option("--max-history", co.max_history)->capture_default_str();
  corpus->add_option("--seed", co.seed)->required();
  corpus->add_option("--out", co_out, "JSONL output")->required();
  corpus->add_option("--chat", co_chat, "Also write rendered chat text");

  // train-baseline
  auto* train = app.add_subcommand("train-baseline", "Train the n-gram SID model");
  fs::path tr_model, tr_inter, tr_assign, tr_out;
  std::size_t tr_order = 4;
  double tr_alpha = 0.01;
  train->add_option("--model", tr_model, "Codebook header")->required()->check(CLI::ExistingFile);
  train->add_option("--interactions", tr_inter)->required()->check(CLI::ExistingFile);
  train->add_option("--assignment", tr_assign)->required()->check(CLI::ExistingFile);
  train->add_option("--order", tr_order)->capture_default_str();
  train->add_option("--alpha", tr_alpha)->capture_default_str();
  train->add_option("--out", tr_out)->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Leave-last-out HR@K / NDCG@K");
  fs::path ev_ngram, ev_inter, ev_assign, ev_csv, ev_ranks;
  bool ev_popularity = false, ev_unconstrained = false, ev_no_val = false;
  EvalOptions eo;
  std::string ev_ks = "5,10";
  auto* ng_opt = eval->add_option("--ngram", ev_ngram, "Trained n-gram model")->check(CLI::ExistingFile);
  auto* pop_opt = eval->add_flag("--popularity", ev_popularity, "Rank by train popularity");
  ng_opt->excludes(pop_opt);
  eval->add_option("--interactions", ev_inter)->required()->check(CLI::ExistingFile);
  eval->add_option("--assignment", ev_assign)->required()->check(CLI::ExistingFile);
  eval->add_option("--beam", eo.beam_size)->capture_default_str();
  eval->add_option("--k", ev_ks)->capture_default_str();
  eval->add_flag("--unconstrained", ev_unconstrained, "Do not restrict beams to catalog SIDs");
  eval->add_flag("--no-validation", ev_no_val, "Exclude the validation item from context");
  eval->add_option("--csv", ev_csv);
  eval->add_option("--ranks", ev_ranks, "Per-user rank dump (TSV)");

  // report
  auto* report = app.add_subcommand("report", "Summarize a pipeline output directory");
  fs::path rp_dir;
  report->add_option("--dir", rp_dir)->required()->check(CLI::ExistingDirectory);

  // run
  auto* run = app.add_subcommand("run", "Run the cached four-stage pipeline");
  fs::path run_config;
  std::optional<fs::path> run_out;
  bool run_force = false;
  run->add_option("--config", run_config)->required()->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "Override paths.output_dir");
  run->add_flag("--force", run_force, "Recompute every stage and ignore hash mismatches");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      if (!synth_config.empty()) {
        SynthConfig base = SynthConfig::from_json(read_file(synth_config));
        // flags given explicitly win over the file
        if (synth->count("--items") == 0) sc.num_items = base.num_items;
        if (synth->count("--users") == 0) sc.num_users = base.num_users;
        if (synth->count("--dim") == 0) sc.dim = base.dim;
        if (synth->count("--categories") == 0) sc.num_categories = base.num_categories;
        if (synth->count("--enrichment") == 0) sc.enrichment_level = base.enrichment_level;
        if (synth->count("--dominant") == 0) sc.dominant_transition = base.dominant_transition;
        sc.intra_category_noise = base.intra_category_noise;
        sc.category_separation = base.category_separation;
        sc.informative_fraction = base.informative_fraction;
        sc.min_events = base.min_events;
        sc.max_events = base.max_events;
        sc.dominant_shift = base.dominant_shift;
        sc.transition = base.transition;
      }
      sc.seed = synth_seed;
      sc.validate();
      const SynthCatalog cat = generate_catalog(sc);
      const InteractionLog raw = generate_interactions(cat, sc);
      const InteractionLog filtered = k_core_filter(raw, synth_k);
      save_items(synth_out / "items.jsonl", cat.catalog);
      save_embeddings(synth_out / "embeddings.bin", cat.embeddings);
      save_interactions(synth_out / "interactions.tsv", filtered);
      ordered_json out;
      out["config"] = ordered_json::parse(sc.to_json());
      out["items"] = cat.catalog.size();
      out["events"] = raw.events.size();
      out["events_after_k_core"] = filtered.events.size();
      print_json(out.dump(2));
    } else if (*ingest) {
      const ItemCatalog catalog = load_items(in_items);
      const EmbeddingSet emb = load_embeddings(in_emb);
      for (const auto& id : emb.item_ids()) {
        if (!catalog.find(id)) throw Error("embedding row '" + id + "' has no catalog item");
      }
      InteractionLog log = load_interactions(in_inter);
      const std::size_t before = log.events.size();
      std::erase_if(log.events, [&](const Interaction& e) { return !catalog.find(e.item_id); });
      const std::size_t unknown = before - log.events.size();
      const InteractionLog filtered = k_core_filter(log, in_k);
      save_items(in_out / "items.jsonl", catalog);
      save_embeddings(in_out / "embeddings.bin", emb);
      save_interactions(in_out / "interactions.tsv", filtered);
      ordered_json out{{"items", catalog.size()},
                       {"embeddings", emb.count()},
                       {"dim", emb.dim()},
                       {"events", before},
                       {"events_unknown_item", unknown},
                       {"events_after_k_core", filtered.events.size()}};
      print_json(out.dump(2));
    } else if (*fit) {
      for (std::size_t k : parse_size_list(fit_sizes, "codebook size")) {
        rc.codebook_sizes.push_back(k);
      }
      const EmbeddingSet emb = load_embeddings(fit_emb);
      const RqModel model = fit_codebooks(emb, rc, common.workers);
      save_model(fit_out, model);
      ordered_json out{{"model_hash", model.hash()},
                       {"levels", model.levels()},
                       {"dim", model.dim()},
                       {"level_sizes", model.level_sizes()},
                       {"fit", fit_stats_json(model)},
                       {"quantization_mse", quantization_mse(model, emb)}};
      print_json(out.dump(2));
    } else if (*encode) {
      const RqModel model = load_model(enc_model);
      const EmbeddingSet emb = load_embeddings(enc_emb);
      const SidAssignment assign = assign_all(model, emb, common.workers);
      save_assignment(enc_out, assign);
      const CollisionCounts counts = collision_counts(assign);
      ordered_json out{{"model_hash", model.hash()},
                       {"items", assign.size()},
                       {"distinct_sids", counts.distinct_sids},
                       {"collision_rate", collision_rate(assign)}};
      print_json(out.dump(2));
    } else if (*decode) {
      const RqModel model = load_model(dec_model);
      const SidSequence sid = parse_sid(dec_sid, model.level_sizes());
      const std::size_t depth = dec_depth.value_or(model.levels());
      if (depth < 1 || depth > sid.levels()) throw Error("--depth must be in [1, levels]");
      const std::vector<double> vec = model.decode(sid, depth);
      std::vector<float> values(vec.begin(), vec.end());
      save_embeddings(dec_out, EmbeddingSet({render_sid(sid)}, vec.size(), std::move(values)));
      ordered_json out{{"sid", render_sid(sid)}, {"depth", depth}, {"values", vec}};
      print_json(out.dump(2));
    } else if (*diag) {
      const RqModel model = load_model(dg_model);
      const SidAssignment assign = load_assignment(dg_assign);
      DiagnosticsReport rep = diagnose(assign, model);
      if (!dg_emb.empty()) {
        const EmbeddingSet emb = load_embeddings(dg_emb);
        rep.reconstruction = reconstruction_curve(model, emb, model.levels(), common.workers);
      }
      if (!dg_items.empty()) {
        if (!dg_seed) throw Error("--items runs the probe, which needs --seed");
        std::unordered_map<std::string, std::string> labels;
        for (const auto& item : load_items(dg_items)) labels.emplace(item.item_id, item.category);
        try {
          rep.probe_accuracy = semantic_probe(assign, model, labels, *dg_seed);
        } catch (const Error& e) {
          rep.probe_note = std::string("probe not run: ") + e.what();
        }
      }
      std::cerr << rep.to_table();
      print_json(rep.to_json());
    } else if (*recon) {
      const RqModel model = load_model(rc_model);
      const EmbeddingSet emb = load_embeddings(rc_emb);
      const ReconstructionCurve curve =
          reconstruction_curve(model, emb, rc_depth.value_or(model.levels()), common.workers);
      ordered_json sim = ordered_json::object();
      for (const auto& [h, s] : curve.sim) {
        sim[std::to_string(h)] = s;
        std::cerr << "Sim(" << h << ") = " << s << "\n";
      }
      ordered_json out{{"sim", sim},
                       {"items_used", curve.items_used},
                       {"excluded_zero_norm", curve.excluded_zero_norm},
                       {"zero_norm_reconstructions", curve.zero_norm_reconstructions}};
      print_json(out.dump(2));
    } else if (*corpus) {
      const ItemCatalog catalog = load_items(co_items);
      const SplitDataset split = leave_last_out_split(load_interactions(co_inter));
      const SidAssignment assign = load_assignment(co_assign);
      const Corpus sampled = sample_corpus(split, catalog, assign, co);
      write_file_atomic(co_out, corpus_to_jsonl(sampled.records));
      if (!co_chat.empty()) write_file_atomic(co_chat, corpus_to_chat_text(sampled.records));
      std::array<std::size_t, 8> drawn{};
      for (const auto& r : sampled.records) ++drawn[task_index(r.task)];
      ordered_json tasks = ordered_json::object();
      for (TaskId t : kAllTasks) {
        tasks[std::string(task_code(t))] = {{"available", sampled.available[task_index(t)]},
                                            {"sampled", drawn[task_index(t)]}};
      }
      ordered_json excluded = ordered_json::array();
      for (TaskId t : sampled.excluded_tasks) {
        excluded.push_back(task_code(t));
        std::cerr << "warning: task " << task_code(t) << " has no examples; excluded\n";
      }
      print_json(ordered_json{{"records", sampled.records.size()},
                              {"tasks", tasks},
                              {"excluded_tasks", excluded}}
                     .dump(2));
    } else if (*train) {
      const RqModel model = load_model(tr_model);
      const SplitDataset split = leave_last_out_split(load_interactions(tr_inter));
      const SidAssignment assign = load_assignment(tr_assign);
      const NGramModel ngram =
          train_ngram(split, assign, TokenVocabulary(model.level_sizes()), tr_order, tr_alpha);
      write_file_atomic(tr_out, ngram.to_json() + "\n");
      print_json(ordered_json{{"order", ngram.order()},
                              {"alpha", ngram.alpha()},
                              {"vocabulary", ngram.vocabulary().size()},
                              {"contexts", ngram.context_count()},
                              {"users", split.users.size()}}
                     .dump(2));
    } else if (*eval) {
      if (ev_ngram.empty() && !ev_popularity) throw Error("eval needs --ngram or --popularity");
      eo.ks = parse_size_list(ev_ks, "K");
      eo.constrained = !ev_unconstrained;
      eo.include_validation = !ev_no_val;
      eo.workers = common.workers;
      const SplitDataset split = leave_last_out_split(load_interactions(ev_inter));
      const SidAssignment assign = load_assignment(ev_assign);
      const SidTrie trie = build_trie(assign);
      MetricsReport rep;
      if (ev_popularity) {
        const auto ranking = popularity_ranking(split, assign);
        rep = evaluate_ranker(
            [&](const UserSplit&, std::span<const std::string>) { return ranking; }, split,
            assign, trie, eo);
      } else {
        const NGramModel ngram = NGramModel::from_json(read_file(ev_ngram));
        rep = evaluate(ngram, split, assign, trie, eo);
      }
      if (!ev_csv.empty()) write_file_atomic(ev_csv, rep.to_csv());
      if (!ev_ranks.empty()) write_file_atomic(ev_ranks, rep.ranks_tsv());
      std::cerr << rep.to_csv();
      print_json(rep.to_json());
    } else if (*report) {
      ordered_json out = ordered_json::object();
      for (const char* name : {"manifest.json", "diagnostics.json", "corpus_summary.json",
                               "metrics.json"}) {
        const fs::path p = rp_dir / name;
        if (!fs::exists(p)) continue;
        const std::string key = fs::path(name).stem().string();
        out[key] = ordered_json::parse(read_file(p));
      }
      if (out.empty()) throw Error("no pipeline artifacts in " + rp_dir.string());
      if (fs::exists(rp_dir / "diagnostics.txt")) std::cerr << read_file(rp_dir / "diagnostics.txt");
      if (fs::exists(rp_dir / "metrics.csv")) std::cerr << read_file(rp_dir / "metrics.csv");
      print_json(out.dump(2));
    } else if (*run) {
      PipelineConfig cfg = PipelineConfig::from_json(read_file(run_config), sidforge_environment());
      if (run_out) cfg.paths.output_dir = *run_out;
      if (app.count("--workers") > 0) cfg.workers = common.workers;
      cfg.force = run_force;
      const PipelineResult result = run_pipeline(cfg, std::cerr);
      ordered_json stages = ordered_json::array();
      for (const auto& s : result.stages) {
        stages.push_back({{"stage", s.number},
                          {"name", s.name},
                          {"status", std::string(to_string(s.status))},
                          {"message", s.message}});
      }
      print_json(ordered_json{{"exit_code", result.exit_code}, {"stages", stages}}.dump(2));
      return result.exit_code;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
