#include <benchmark/benchmark.h>

#include "sidforge/recommender.hpp"
#include "sidforge/rq.hpp"
#include "sidforge/synthgen.hpp"

namespace {

using namespace sidforge;

const SynthCatalog& catalog() {
  static const SynthCatalog cat = [] {
    SynthConfig sc;
    sc.seed = 1;
    return generate_catalog(sc);
  }();
  return cat;
}

RqConfig rq_config(std::size_t k, std::size_t levels) {
  RqConfig rc;
  rc.codebook_sizes.assign(levels, k);
  rc.seed = 1;
  return rc;
}

void BM_Fit(benchmark::State& state) {
  const auto rc = rq_config(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_codebooks(catalog().embeddings, rc, 1));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(catalog().embeddings.count()));
}
BENCHMARK(BM_Fit)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Encode(benchmark::State& state) {
  const RqModel model =
      fit_codebooks(catalog().embeddings, rq_config(static_cast<std::size_t>(state.range(0)), 3), 1);
  const auto& emb = catalog().embeddings;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.encode(emb.row(i)));
    i = (i + 1) % emb.count();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Encode)->Arg(64)->Arg(256);

void BM_AssignAll(benchmark::State& state) {
  const RqModel model = fit_codebooks(catalog().embeddings, rq_config(256, 3), 1);
  const auto workers = static_cast<unsigned>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(assign_all(model, catalog().embeddings, workers));
  }
}
BENCHMARK(BM_AssignAll)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_BeamSearch(benchmark::State& state) {
  SynthConfig sc;
  sc.seed = 1;
  const SynthCatalog& cat = catalog();
  const RqModel model = fit_codebooks(cat.embeddings, rq_config(64, 3), 1);
  const SidAssignment assign = assign_all(model, cat.embeddings, 1);
  const SidTrie trie = build_trie(assign);
  const SplitDataset split = leave_last_out_split(generate_interactions(cat, sc));
  const TokenVocabulary vocab(model.level_sizes());
  const NGramModel ngram = train_ngram(split, assign, vocab, 4, 0.01);
  std::vector<std::uint32_t> context;
  for (std::size_t i = 0; i < 5; ++i) vocab.append(assign.sids()[i], context);
  BeamOptions opts;
  opts.beam_size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(beam_search(ngram, context, trie, opts));
  }
}
BENCHMARK(BM_BeamSearch)->Arg(20)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
