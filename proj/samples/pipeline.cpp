// Walks the training pipeline by hand on a small synthetic corpus and prints
// retrieval quality after each stage.
//
//   vtc_sample_pipeline [seed]

#include <cstdio>
#include <cstdlib>
#include <string>

#include "vtc/harness/experiment.hpp"
#include "vtc/profiler/profiler.hpp"

using namespace vtc;

namespace {

void show(const char* stage, const std::vector<RankedResult>& results, const Qrels& qrels) {
  const RetrievalMetrics m = score_results(results, qrels);
  std::printf("%-12s P@1 %.3f  NDCG@5 %.3f\n", stage, m.precision_at_1, m.ndcg_at_5);
}

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
  const ExperimentConfig c = seeded(experiment_preset("smoke"), seed);

  // Visual tokens per candidate image at each compression factor.
  for (std::size_t s : {1u, 2u, 4u}) {
    ModelConfig m = c.model;
    m.compression = s;
    std::printf("s=%zu: %zu visual tokens\n", s, token_budget(m, 1, true));
  }

  const SyntheticDataset ds = generate_corpus(c.data, c.model);
  RetrievalData data{&ds.train_queries, &ds.candidates, {}};
  for (const auto& [q, p] : ds.train_positive) data.pairs.push_back({q, p});
  std::printf("%zu candidates, %zu training queries, %zu eval queries\n", ds.candidates.size(),
              ds.train_queries.size(), ds.eval_queries.size());

  auto retrieve = [&](const Model& model) {
    return retrieve_all(model, ds.eval_queries, build_index(model, ds.candidates), c.eval_depth);
  };

  Checkpoint ck{Model(c.model), TrainingStage::initial};
  run_stage1(c.stage1, ck, ds.instruction_corpus());
  show("restore", retrieve(ck.model), ds.qrels);

  run_warmup(c.warmup, ck, data);
  show("warmup", retrieve(ck.model), ds.qrels);

  const auto mined = mine_stage2_negatives(ck.model, data, c.global_hnm);
  run_global_hnm(c.global_hnm, ck, data, mined);
  show("global_hnm", retrieve(ck.model), ds.qrels);

  ClassOracleJudge judge(ds.labels);
  const auto curated = curate_training_set(ck.model, data, judge, c.judge_depth);
  std::size_t found = 0;
  for (const auto& s : curated) found += s.judge_positive_ids.size();
  std::printf("judge found %zu extra positives across %zu queries\n", found, curated.size());

  run_stage3(c.judge_ft, ck, data, curated);
  const auto results = retrieve(ck.model);
  show("judge_ft", results, ds.qrels);

  QrelsScorer oracle(ds.qrels);
  show("reranked", rerank_all(results, ds.eval_queries, ds.candidates, oracle, c.rerank_depth), ds.qrels);

  const RankedResult& first = results.front();
  std::printf("\ntop 5 for %s:\n", first.query_id.c_str());
  for (std::size_t i = 0; i < 5 && i < first.ids.size(); ++i) {
    const auto& judged = ds.qrels.at(first.query_id);
    std::printf("  %zu. %-10s %.4f %s\n", i + 1, first.ids[i].c_str(), first.scores[i],
                judged.count(first.ids[i]) ? "relevant" : "");
  }
  return 0;
}
