// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// the number of failures. Expected values come from brute-force oracles in
// this file, never from the library under test.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sidforge/checksum.hpp"
#include "sidforge/corpus.hpp"
#include "sidforge/diagnostics.hpp"
#include "sidforge/interactions.hpp"
#include "sidforge/pipeline.hpp"
#include "sidforge/recommender.hpp"
#include "sidforge/rq.hpp"
#include "sidforge/synthgen.hpp"

namespace fs = std::filesystem;
using namespace sidforge;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Random small models shared by the first two checks.

struct Instance {
  RqModel model;
  std::vector<std::vector<float>> inputs;
};

std::vector<Instance> make_instances() {
  std::mt19937_64 gen(20240917);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<Instance> out;
  for (int m = 0; m < 20; ++m) {
    const std::size_t levels = 1 + gen() % 4;
    const std::size_t dim = 2 + gen() % 15;
    RqConfig cfg;
    std::vector<Codebook> books;
    for (std::size_t h = 0; h < levels; ++h) {
      const std::size_t k = 1 + gen() % 32;
      cfg.codebook_sizes.push_back(k);
      Codebook cb{h, dim, {}};
      const float scale = 1.0f / static_cast<float>(h + 1);
      for (std::size_t i = 0; i < k * dim; ++i) cb.centroids.push_back(normal(gen) * scale);
      books.push_back(std::move(cb));
    }
    Instance inst{RqModel(cfg, dim, std::move(books), {}), {}};
    for (int i = 0; i < 1000; ++i) {
      std::vector<float> x(dim);
      for (float& v : x) v = normal(gen) * 1.5f;
      inst.inputs.push_back(std::move(x));
    }
    out.push_back(std::move(inst));
  }
  return out;
}

// Exhaustive greedy scan; returns tokens and the residual after each level.
void oracle_scan(const RqModel& model, const std::vector<float>& x,
                 std::vector<std::uint32_t>& tokens, std::vector<std::vector<double>>& residuals) {
  std::vector<double> r(x.begin(), x.end());
  tokens.clear();
  residuals.clear();
  for (const auto& cb : model.codebooks()) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < cb.size(); ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < r.size(); ++j) {
        const double diff = r[j] - static_cast<double>(cb.centroids[k * cb.dim + j]);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    tokens.push_back(static_cast<std::uint32_t>(best));
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] -= static_cast<double>(cb.centroids[best * cb.dim + j]);
    }
    residuals.push_back(r);
  }
}

Outcome check_encode_oracle(const std::vector<Instance>& instances) {
  const auto start = Clock::now();
  std::size_t mismatches = 0, total = 0;
  std::vector<std::uint32_t> tokens;
  std::vector<std::vector<double>> residuals;
  for (const auto& inst : instances) {
    for (const auto& x : inst.inputs) {
      oracle_scan(inst.model, x, tokens, residuals);
      if (inst.model.encode(x).tokens != tokens) ++mismatches;
      ++total;
    }
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && secs < 10.0,
          fmt("%zu mismatches over %zu encodes, %.2f s", mismatches, total, secs)};
}

Outcome check_telescoping(const std::vector<Instance>& instances) {
  double worst = 0.0;
  std::vector<std::uint32_t> tokens;
  std::vector<std::vector<double>> residuals;
  for (const auto& inst : instances) {
    for (const auto& x : inst.inputs) {
      oracle_scan(inst.model, x, tokens, residuals);
      const SidSequence sid = inst.model.encode(x);
      for (std::size_t h = 1; h <= inst.model.levels(); ++h) {
        const auto recon = inst.model.decode(sid, h);
        for (std::size_t j = 0; j < x.size(); ++j) {
          const double left = static_cast<double>(x[j]) - recon[j];
          worst = std::max(worst, std::abs(left - residuals[h - 1][j]));
        }
      }
    }
  }
  return {worst <= 1e-6, fmt("max |x - decode(h) - R| = %.3g", worst)};
}

// ---------------------------------------------------------------------------

double cosine(std::span<const float> a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    dot += a[j] * b[j];
    na += double(a[j]) * a[j];
    nb += b[j] * b[j];
  }
  return (na == 0 || nb == 0) ? 0.0 : dot / std::sqrt(na * nb);
}

Outcome check_reconstruction_trend() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.num_items = 2000;
    sc.dim = 32;
    sc.seed = seed;
    const SynthCatalog cat = generate_catalog(sc);
    RqConfig rc;
    rc.codebook_sizes.assign(8, 64);
    rc.seed = seed;
    const RqModel model = fit_codebooks(cat.embeddings, rc);
    // independent recomputation of the mean cosine per depth
    std::vector<double> sim(9, 0.0);
    for (std::size_t i = 0; i < cat.embeddings.count(); ++i) {
      const auto x = cat.embeddings.row(i);
      const SidSequence sid = model.encode(x);
      for (std::size_t h = 1; h <= 8; ++h) sim[h] += cosine(x, model.decode(sid, h));
    }
    const ReconstructionCurve curve = reconstruction_curve(model, cat.embeddings, 8);
    for (std::size_t h = 1; h <= 8; ++h) {
      sim[h] /= static_cast<double>(cat.embeddings.count());
      if (std::abs(sim[h] - curve.sim.at(h)) > 1e-9) ok = false;
      if (h > 1 && curve.sim.at(h) < curve.sim.at(h - 1)) ok = false;
    }
    const double gain = curve.sim.at(8) - curve.sim.at(1);
    if (gain < 0.2) ok = false;
    detail += fmt("%sseed %llu: %.3f->%.3f", seed == 1 ? "" : "; ",
                  static_cast<unsigned long long>(seed), curve.sim.at(1), curve.sim.at(8));
  }
  return {ok, detail};
}

// ---------------------------------------------------------------------------

Outcome check_collision_identity() {
  std::mt19937_64 gen(77);
  bool ok = true;
  std::size_t mismatched_oracle = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + gen() % 300;
    const std::size_t levels = 1 + gen() % 3;
    const std::uint32_t range = 1 + gen() % 6;
    std::vector<std::string> ids;
    std::vector<SidSequence> sids;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("x" + std::to_string(i));
      SidSequence s;
      for (std::size_t h = 0; h < levels; ++h) s.tokens.push_back(gen() % range);
      sids.push_back(s);
    }
    // pairwise oracle
    std::size_t colliding = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i != j && sids[i] == sids[j]) {
          ++colliding;
          break;
        }
      }
    }
    const SidAssignment a("m", ids, sids);
    const double c = collision_rate(a);
    if (c + unique_ratio(a) != 1.0) ok = false;
    if (c != static_cast<double>(colliding) / static_cast<double>(n)) ++mismatched_oracle;
  }
  const SidAssignment same("m", {"a", "b", "c"}, {{{1, 2}}, {{1, 2}}, {{1, 2}}});
  const SidAssignment distinct("m", {"a", "b", "c"}, {{{1, 2}}, {{1, 3}}, {{2, 2}}});
  const bool degenerate = collision_rate(same) == 1.0 && unique_ratio(same) == 0.0 &&
                          collision_rate(distinct) == 0.0 && unique_ratio(distinct) == 1.0;
  return {ok && degenerate && mismatched_oracle == 0,
          fmt("100 random assignments, %zu oracle mismatches, degenerate cases %s",
              mismatched_oracle, degenerate ? "ok" : "wrong")};
}

// ---------------------------------------------------------------------------

// Entropy oracle: plain histogram over full prefixes.
double oracle_prefix_entropy(const SidAssignment& a) {
  double sum = 0.0;
  for (std::size_t p = 1; p <= a.levels(); ++p) {
    std::map<std::vector<std::uint32_t>, double> hist;
    for (const auto& s : a.sids()) {
      hist[std::vector<std::uint32_t>(s.tokens.begin(), s.tokens.begin() + p)] += 1.0;
    }
    double h = 0.0;
    for (const auto& [k, c] : hist) {
      const double q = c / static_cast<double>(a.size());
      h -= q * std::log2(q);
    }
    sum += h;
  }
  return sum / static_cast<double>(a.levels());
}

Outcome check_enrichment_direction() {
  const auto start = Clock::now();
  const double levels[3] = {0.0, 0.5, 1.0};
  double col[3] = {}, util[3] = {}, ent[3] = {};
  bool oracle_ok = true;
  for (int l = 0; l < 3; ++l) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SynthConfig sc;
      sc.enrichment_level = levels[l];
      sc.seed = seed;
      const SynthCatalog cat = generate_catalog(sc);
      RqConfig rc;
      rc.codebook_sizes = {64, 64, 64};
      rc.seed = 7;
      const RqModel model = fit_codebooks(cat.embeddings, rc);
      const SidAssignment a = assign_all(model, cat.embeddings);
      col[l] += collision_rate(a) / 5.0;
      util[l] += codebook_utilization(a, model) / 5.0;
      const double e = prefix_entropy(a);
      if (std::abs(e - oracle_prefix_entropy(a)) > 1e-9) oracle_ok = false;
      ent[l] += e / 5.0;
    }
  }
  const double secs = seconds_since(start);
  const bool ok = col[0] >= col[1] && col[1] >= col[2] && util[0] <= util[1] &&
                  util[1] <= util[2] && ent[0] <= ent[1] && ent[1] <= ent[2] && oracle_ok &&
                  secs < 120.0;
  return {ok, fmt("collision %.4f/%.4f/%.4f util %.3f/%.3f/%.3f entropy %.3f/%.3f/%.3f, %.1f s",
                  col[0], col[1], col[2], util[0], util[1], util[2], ent[0], ent[1], ent[2],
                  secs)};
}

// ---------------------------------------------------------------------------

// Baseline: each level's codebook is a random subset of that level's
// residuals, residuals propagated greedily.
double random_subset_mse(const EmbeddingSet& emb, const std::vector<std::size_t>& sizes,
                         std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const std::size_t n = emb.count(), d = emb.dim();
  std::vector<std::vector<double>> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i].assign(emb.row(i).begin(), emb.row(i).end());
  for (std::size_t k : sizes) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), gen);
    std::vector<std::vector<double>> book;
    for (std::size_t j = 0; j < std::min(k, n); ++j) {
      std::vector<double> c(d);
      for (std::size_t t = 0; t < d; ++t) c[t] = static_cast<float>(r[order[j]][t]);
      book.push_back(c);
    }
    for (auto& x : r) {
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < book.size(); ++c) {
        double dist = 0;
        for (std::size_t t = 0; t < d; ++t) dist += (x[t] - book[c][t]) * (x[t] - book[c][t]);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      for (std::size_t t = 0; t < d; ++t) x[t] -= book[best][t];
    }
  }
  double sum = 0;
  for (const auto& x : r) {
    for (double v : x) sum += v * v;
  }
  return sum / static_cast<double>(n);
}

Outcome check_fit_quality() {
  std::size_t wins = 0, trace_violations = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthConfig sc;
    sc.num_items = 1000;
    sc.dim = 16;
    sc.enrichment_level = 0.1 * static_cast<double>(seed - 1);
    sc.seed = seed;
    const SynthCatalog cat = generate_catalog(sc);
    RqConfig rc;
    rc.codebook_sizes = {32, 32, 32};
    rc.seed = seed;
    const RqModel model = fit_codebooks(cat.embeddings, rc);
    if (quantization_mse(model, cat.embeddings) <
        random_subset_mse(cat.embeddings, rc.codebook_sizes, seed)) {
      ++wins;
    }
    for (const auto& st : model.fit_stats()) {
      for (std::size_t i = 1; i < st.mse_trace.size(); ++i) {
        if (st.mse_trace[i] > st.mse_trace[i - 1]) ++trace_violations;
      }
    }
  }
  return {wins == 10 && trace_violations == 0,
          fmt("fitted beats random subset on %zu/10 seeds, %zu MSE trace increases", wins,
              trace_violations)};
}

// ---------------------------------------------------------------------------

// Deterministic pseudo-random next-token distribution keyed by the context.
class RandomModel final : public SequenceModel {
 public:
  RandomModel(TokenVocabulary vocab, std::uint64_t seed) : vocab_(std::move(vocab)), seed_(seed) {}
  const TokenVocabulary& vocabulary() const override { return vocab_; }
  std::vector<double> score_next(std::span<const std::uint32_t> context) const override {
    std::uint64_t h = seed_;
    for (std::uint32_t t : context) h = h * 1000003u ^ (t + 0x9e37u);
    std::mt19937_64 gen(h);
    std::normal_distribution<double> normal(0.0, 2.0);
    std::vector<double> logits(vocab_.size());
    double mx = -INFINITY;
    for (double& v : logits) mx = std::max(mx, v = normal(gen));
    double z = 0;
    for (double v : logits) z += std::exp(v - mx);
    for (double& v : logits) v = v - mx - std::log(z);
    return logits;
  }

 private:
  TokenVocabulary vocab_;
  std::uint64_t seed_;
};

Outcome check_beam_exactness() {
  std::mt19937_64 gen(4242);
  std::size_t matches = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 20 + gen() % 181;
    const std::size_t levels = 2 + gen() % 2;
    std::vector<std::size_t> sizes;
    for (std::size_t h = 0; h < levels; ++h) sizes.push_back(3 + gen() % 6);
    std::vector<std::string> ids;
    std::vector<SidSequence> sids;
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back("it" + std::to_string(i));
      SidSequence s;
      for (std::size_t h = 0; h < levels; ++h) s.tokens.push_back(gen() % sizes[h]);
      sids.push_back(s);
    }
    const SidAssignment assign("m", ids, sids);
    const SidTrie trie = build_trie(assign);
    const TokenVocabulary vocab(sizes);
    const RandomModel model(vocab, gen());
    std::vector<std::uint32_t> context;
    for (int k = 0; k < 3; ++k) vocab.append(sids[gen() % n], context);

    // oracle: score each distinct SID step by step and sort
    std::set<SidSequence> distinct(sids.begin(), sids.end());
    std::vector<std::pair<double, SidSequence>> scored;
    for (const auto& s : distinct) {
      std::vector<std::uint32_t> ctx = context;
      double score = 0;
      for (std::size_t h = 0; h < levels; ++h) {
        const auto lp = model.score_next(ctx);
        const std::uint32_t tok = vocab.index(h, s.tokens[h]);
        score += lp[tok];
        ctx.push_back(tok);
      }
      scored.emplace_back(score, s);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });

    BeamOptions opts;
    opts.beam_size = distinct.size();
    opts.top_k = 10;
    const BeamResult beam = beam_search(model, context, trie, opts);
    bool same = beam.ranked.size() == std::min<std::size_t>(10, scored.size());
    for (std::size_t i = 0; same && i < beam.ranked.size(); ++i) {
      same = beam.ranked[i].sid == scored[i].second;
    }
    if (same) ++matches;
  }
  return {matches == 20, fmt("%zu/20 catalogs reproduce the exhaustive top-10", matches)};
}

// ---------------------------------------------------------------------------

Outcome check_metric_formulas() {
  bool ok = ndcg_at(1, 5) == 1.0 && ndcg_at(3, 5) == 0.5 && ndcg_at(7, 5) == 0.0 &&
            ndcg_at(7, 10) == 1.0 / 3.0 && ndcg_at(std::nullopt, 10) == 0.0;

  // same hand cases through the evaluation loop
  std::vector<std::string> ids;
  std::vector<SidSequence> sids;
  for (std::uint32_t i = 0; i < 12; ++i) {
    ids.push_back("it" + std::to_string(i));
    sids.push_back({{i / 4, i % 4}});
  }
  const SidAssignment assign("m", ids, sids);
  const SidTrie trie = build_trie(assign);
  for (std::size_t rank : {1u, 3u, 7u}) {
    InteractionLog log;
    log.events = {{"u", "it0", 1}, {"u", "it1", 2}, {"u", "it2", 3}};
    const SplitDataset split = leave_last_out_split(log);
    const Ranker ranker = [&](const UserSplit&, std::span<const std::string>) {
      std::vector<SidSequence> out;
      for (std::uint32_t i = 3; out.size() + 1 < rank; ++i) out.push_back(sids[i]);
      out.push_back(sids[2]);
      for (std::uint32_t i = 3 + rank; out.size() < 10; ++i) out.push_back(sids[i]);
      return out;
    };
    EvalOptions opts;
    const MetricsReport rep = evaluate_ranker(ranker, split, assign, trie, opts);
    const double want5 = rank == 1 ? 1.0 : rank == 3 ? 0.5 : 0.0;
    const double want10 = rank == 7 ? 1.0 / 3.0 : want5;
    if (rep.ndcg.at(5) != want5 || rep.ndcg.at(10) != want10) ok = false;
  }

  // random reports: HR@5 <= HR@10 and both agree with a rank oracle
  std::mt19937_64 gen(99);
  std::size_t violations = 0;
  for (int t = 0; t < 50; ++t) {
    InteractionLog log;
    const std::size_t users = 5 + gen() % 40;
    for (std::size_t u = 0; u < users; ++u) {
      const std::size_t len = 3 + gen() % 5;
      for (std::size_t k = 0; k < len; ++k) {
        log.events.push_back({"u" + std::to_string(u), ids[gen() % ids.size()],
                              static_cast<std::int64_t>(k)});
      }
    }
    const SplitDataset split = leave_last_out_split(log);
    const std::uint64_t salt = gen();
    std::map<std::string, std::optional<std::size_t>> expected;
    const Ranker ranker = [&](const UserSplit& user, std::span<const std::string>) {
      std::vector<SidSequence> out = trie.sids();
      std::mt19937_64 g(salt ^ std::hash<std::string>{}(user.user_id));
      std::shuffle(out.begin(), out.end(), g);
      out.resize(10);
      return out;
    };
    EvalOptions opts;
    opts.workers = 1;
    const MetricsReport rep = evaluate_ranker(ranker, split, assign, trie, opts);
    double hr5 = 0, hr10 = 0;
    for (const auto& user : split.users) {
      const auto list = ranker(user, {});
      const SidSequence* target = assign.find(user.test);
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i] == *target) {
          hr5 += i < 5;
          hr10 += 1;
          break;
        }
      }
    }
    hr5 /= static_cast<double>(split.users.size());
    hr10 /= static_cast<double>(split.users.size());
    if (rep.hr.at(5) > rep.hr.at(10) || std::abs(rep.hr.at(5) - hr5) > 1e-12 ||
        std::abs(rep.hr.at(10) - hr10) > 1e-12) {
      ++violations;
    }
  }
  return {ok && violations == 0,
          fmt("hand cases %s, %zu violations over 50 random reports", ok ? "exact" : "WRONG",
              violations)};
}

// ---------------------------------------------------------------------------

Outcome check_planted_lift() {
  std::size_t wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.dominant_transition = 0.9;
    sc.seed = seed;
    const SynthCatalog cat = generate_catalog(sc);
    const InteractionLog log = k_core_filter(generate_interactions(cat, sc), 5);
    const SplitDataset split = leave_last_out_split(log);
    RqConfig rc;
    rc.codebook_sizes = {64, 64, 64};
    rc.seed = seed;
    const RqModel model = fit_codebooks(cat.embeddings, rc);
    const SidAssignment assign = assign_all(model, cat.embeddings);
    const SidTrie trie = build_trie(assign);
    const TokenVocabulary vocab(model.level_sizes());
    const NGramModel ngram = train_ngram(split, assign, vocab, 4, 0.01);
    EvalOptions opts;
    opts.ks = {10};
    const double hr_ngram = evaluate(ngram, split, assign, trie, opts).hr.at(10);
    const auto popular = popularity_ranking(split, assign);
    const double hr_pop =
        evaluate_ranker([&](const UserSplit&, std::span<const std::string>) { return popular; },
                        split, assign, trie, opts)
            .hr.at(10);
    if (hr_ngram > hr_pop) ++wins;
    detail += fmt("%s%.3f vs %.3f", seed == 1 ? "" : ", ", hr_ngram, hr_pop);
  }
  return {wins >= 4, fmt("n-gram beats popularity on %zu/5 seeds (HR@10 %s)", wins, detail.c_str())};
}

// ---------------------------------------------------------------------------

std::string read_asset(const std::string& name) {
  std::ifstream in(fs::path(SIDFORGE_TEMPLATE_DIR) / name, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome check_corpus_fidelity() {
  SynthConfig sc;
  sc.num_items = 600;
  sc.num_users = 400;
  sc.seed = 3;
  const SynthCatalog cat = generate_catalog(sc);
  const SplitDataset split =
      leave_last_out_split(k_core_filter(generate_interactions(cat, sc), 5));
  RqConfig rc;
  rc.codebook_sizes = {32, 32, 32};
  rc.seed = 3;
  const RqModel model = fit_codebooks(cat.embeddings, rc);
  const SidAssignment assign = assign_all(model, cat.embeddings);
  CorpusOptions co;
  co.records = 80000;
  co.seed = 11;
  const Corpus corpus = sample_corpus(split, cat.catalog, assign, co);

  std::array<double, 8> freq{};
  std::size_t unparsable = 0, system_mismatch = 0;
  std::array<std::string, 8> assets;
  for (TaskId t : kAllTasks) {
    assets[task_index(t)] = read_asset("t" + std::to_string(task_index(t) + 1) + "_system.txt");
  }
  for (const auto& r : corpus.records) {
    freq[task_index(r.task)] += 1.0 / static_cast<double>(corpus.records.size());
    if (r.system != assets[task_index(r.task)]) ++system_mismatch;
    if (r.task == TaskId::kTitleToSid || r.task == TaskId::kVisualToSid) {
      try {
        parse_sid(r.assistant, model.level_sizes());
      } catch (const std::exception&) {
        ++unparsable;
      }
    }
  }
  double worst = 0;
  for (double f : freq) worst = std::max(worst, std::abs(f - 0.125));
  for (TaskId t : kAllTasks) {
    if (system_instruction(t) != assets[task_index(t)] || assets[task_index(t)].empty()) {
      ++system_mismatch;
    }
  }

  ItemCatalog ff;
  ff.add({"ff8", "Final Fantasy VIII", "", "Games", std::nullopt, {}});
  const SidAssignment ff_sid("m", {"ff8"}, {{{195, 133}}});
  const auto examples = make_examples(TaskId::kTitleToSid, {}, ff, ff_sid);
  const std::string expected =
      "<|im_start|>system\n" + assets[0] +
      "\n<|im_end|>\n<|im_start|>user\nProduct Title: Final Fantasy VIII\nGenerate the SID "
      "sequence:\n<|im_end|>\n<|im_start|>assistant\n<a_195><b_133>\n<|im_end|>";
  const bool example_ok = examples.examples.size() == 1 &&
                          render_template(examples.examples[0]).text == expected;

  return {corpus.records.size() == 80000 && worst <= 0.02 && unparsable == 0 &&
              system_mismatch == 0 && example_ok,
          fmt("max |freq - 0.125| = %.4f, %zu unparsable SID targets, %zu instruction "
              "mismatches, title example %s",
              worst, unparsable, system_mismatch, example_ok ? "verbatim" : "DIFFERS")};
}

// ---------------------------------------------------------------------------

Outcome check_probe_direction() {
  double acc[2] = {}, shuffled = 0;
  double chance = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int l = 0; l < 2; ++l) {
      SynthConfig sc;
      sc.enrichment_level = l;
      sc.seed = seed;
      const SynthCatalog cat = generate_catalog(sc);
      RqConfig rc;
      rc.codebook_sizes = {64, 64, 64};
      rc.seed = seed;
      const RqModel model = fit_codebooks(cat.embeddings, rc);
      const SidAssignment assign = assign_all(model, cat.embeddings);
      std::unordered_map<std::string, std::string> labels;
      for (const auto& item : cat.catalog) labels.emplace(item.item_id, item.category);
      acc[l] += semantic_probe(assign, model, labels, seed) / 5.0;
      if (l == 1) {
        std::vector<std::string> names;
        for (const auto& item : cat.catalog) names.push_back(item.category);
        std::mt19937_64 gen(seed * 31);
        std::shuffle(names.begin(), names.end(), gen);
        std::unordered_map<std::string, std::size_t> counts;
        std::size_t i = 0;
        for (const auto& item : cat.catalog) {
          labels[item.item_id] = names[i++];
          ++counts[names[i - 1]];
        }
        std::size_t majority = 0;
        for (const auto& [k, c] : counts) majority = std::max(majority, c);
        chance += static_cast<double>(majority) / static_cast<double>(cat.catalog.size()) / 5.0;
        shuffled += semantic_probe(assign, model, labels, seed) / 5.0;
      }
    }
  }
  const bool ok = acc[1] - acc[0] >= 0.05 && std::abs(shuffled - chance) <= 0.05;
  return {ok, fmt("accuracy %.3f (level 0) vs %.3f (level 1); shuffled %.3f, chance %.3f",
                  acc[0], acc[1], shuffled, chance)};
}

// ---------------------------------------------------------------------------

Outcome check_determinism() {
  const fs::path root = fs::temp_directory_path() / "sidforge_acceptance_determinism";
  fs::remove_all(root);
  const std::string base = R"({
    "synth": {"num_items": 1500, "num_users": 800, "seed": 5},
    "rq": {"codebook_sizes": [64, 64, 64], "seed": 5},
    "corpus": {"records": 3000, "seed": 5}
  })";
  std::ostringstream log;
  std::vector<fs::path> dirs;
  for (unsigned workers : {1u, 4u}) {
    PipelineConfig cfg = PipelineConfig::from_json(base);
    cfg.paths.output_dir = root / ("w" + std::to_string(workers));
    cfg.workers = workers;
    if (run_pipeline(cfg, log).exit_code != 0) return {false, "pipeline failed: " + log.str()};
    dirs.push_back(cfg.paths.output_dir);
  }
  std::size_t compared = 0, differing = 0;
  std::string which;
  for (const char* name : {"codebook.json", "codebook.bin", "assignment.tsv", "corpus.jsonl",
                           "diagnostics.json", "diagnostics.txt", "metrics.json", "metrics.csv",
                           "ranks.tsv", "ngram.json", "embeddings.bin", "interactions.tsv"}) {
    ++compared;
    if (sha256_file(dirs[0] / name) != sha256_file(dirs[1] / name)) {
      ++differing;
      which += std::string(" ") + name;
    }
  }
  fs::remove_all(root);
  return {differing == 0, fmt("%zu/%zu artifacts byte-identical across 1 and 4 workers%s",
                              compared - differing, compared, which.c_str())};
}

}  // namespace

int main() {
  const auto instances = make_instances();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks = {
      {"encode matches exhaustive per-level scan", [&] { return check_encode_oracle(instances); }},
      {"residual telescoping", [&] { return check_telescoping(instances); }},
      {"reconstruction similarity grows with depth", check_reconstruction_trend},
      {"collision + unique identity", check_collision_identity},
      {"enrichment directionality", check_enrichment_direction},
      {"fitted codebooks beat random subsets", check_fit_quality},
      {"full-width beam equals exhaustive ranking", check_beam_exactness},
      {"HR/NDCG formulas", check_metric_formulas},
      {"planted transitions lift n-gram over popularity", check_planted_lift},
      {"corpus fidelity", check_corpus_fidelity},
      {"probe directionality", check_probe_direction},
      {"determinism across worker counts", check_determinism},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, fn] : checks) {
    ++index;
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    failures += out.pass ? 0 : 1;
    std::printf("%s %02d %s: %s\n", out.pass ? "PASS" : "FAIL", index, name, out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", index - failures, index);
  return failures;
}
