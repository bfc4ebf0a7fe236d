// Whole-network throughput on a small synthetic task.

#include <benchmark/benchmark.h>

#include <numeric>

#include "mail/experiment.hpp"
#include "mail/optim.hpp"
#include "mail/robust.hpp"

using namespace mail;

namespace {

struct Fixture {
  RunConfig cfg;
  Dataset ds;
  Model model;
  Batch batch;

  explicit Fixture(bool robust) {
    for (const char* kv : {"synth.size=32", "synth.train=16", "synth.test=16", "model.widths=16,32",
                           "model.depths=1,1"}) {
      cfg.assign(kv);
    }
    if (robust) cfg.assign("robust.enabled=true");
    ds = load_data(cfg);
    model = build_model(cfg, ds);
    std::vector<std::size_t> idx(8);
    std::iota(idx.begin(), idx.end(), 0);
    batch = ds.batch(idx);
  }
};

void BM_Forward(benchmark::State& state) {
  Fixture f(state.range(0) != 0);
  ForwardContext ctx;
  if (f.model.runtime) ctx.noise = &f.model.runtime->noise_inference;
  for (auto _ : state) benchmark::DoNotOptimize(f.model.net->forward(f.batch.xs, ctx));
  state.SetItemsProcessed(state.iterations() * std::int64_t(f.batch.size()));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  Fixture f(false);
  Sgd opt(f.model.net->parameters(), SgdConfig{0.01, 0.9});
  ForwardContext ctx;
  ctx.training = true;
  for (auto _ : state) benchmark::DoNotOptimize(train_step(*f.model.net, f.batch.xs, f.batch.labels, opt, ctx));
  state.SetItemsProcessed(state.iterations() * std::int64_t(f.batch.size()));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_Pgd(benchmark::State& state) {
  Fixture f(false);
  AttackConfig a = f.cfg.attack();
  a.iters = std::size_t(state.range(0));
  const AttackTarget target = network_target(*f.model.net, f.batch.labels, Phase::Attack, nullptr);
  Rng rng(3);
  FrozenParams frozen(*f.model.net);
  for (auto _ : state) benchmark::DoNotOptimize(attack(target, f.batch.xs, a, rng));
}
BENCHMARK(BM_Pgd)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
