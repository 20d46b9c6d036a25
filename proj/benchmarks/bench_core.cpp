#include <benchmark/benchmark.h>

#include "mva/cmi.hpp"
#include "mva/config.hpp"
#include "mva/init.hpp"
#include "mva/ops.hpp"
#include "mva/trainer.hpp"

namespace {

mva::Tensor randn(std::vector<int> shape, std::uint64_t seed) {
  mva::Rng rng(seed);
  mva::Tensor t = mva::Tensor::zeros(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.ptr()[i] = rng.next_normal();
  return t;
}

void bm_matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  mva::Tensor a = randn({n, n}, 1);
  mva::Tensor b = randn({n, n}, 2);
  for (auto _ : state) {
    mva::Tensor c = mva::matmul(a, b);
    benchmark::DoNotOptimize(c.ptr());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) * n * n);
}
BENCHMARK(bm_matmul)->Arg(48)->Arg(192);

void bm_kron_full_scale(benchmark::State& state) {
  mva::Tensor mc = randn({16, 8}, 3);
  mva::Tensor md = randn({48, 8}, 4);
  for (auto _ : state) {
    mva::Tensor w = mva::kron(mc, md);
    benchmark::DoNotOptimize(w.ptr());
  }
}
BENCHMARK(bm_kron_full_scale);

void bm_encode_video(benchmark::State& state) {
  mva::RunConfig cfg = mva::RunConfig::defaults();
  mva::ModelState model = mva::build_model(cfg.encoder(), cfg.adapter(), 0);
  mva::Dataset data = mva::generate_dataset(cfg.dataset(), cfg.encoder().vocab_size);
  const mva::VideoTextSample& sample = data.samples[0];
  for (auto _ : state) {
    mva::Tensor e = mva::video_embedding(model, sample.frames, true);
    benchmark::DoNotOptimize(e.ptr());
  }
}
BENCHMARK(bm_encode_video);

void bm_train_step(benchmark::State& state) {
  mva::RunConfig cfg = mva::RunConfig::defaults();
  cfg.set("data.n_pairs", "64");
  cfg.set("train.batch", "8");
  mva::Dataset data = mva::generate_dataset(cfg.dataset(), cfg.encoder().vocab_size);
  std::vector<int> train_idx, test_idx;
  mva::split_dataset(data, train_idx, test_idx);
  mva::TrainSettings ts = cfg.train();
  ts.epochs = 1;
  ts.max_steps = 1;
  for (auto _ : state) {
    mva::ModelState model = mva::build_model(cfg.encoder(), cfg.adapter(), ts.seed, ts.tau_init);
    mva::TrainResult r = mva::train(model, data, train_idx, ts);
    benchmark::DoNotOptimize(r.log.data());
  }
}
BENCHMARK(bm_train_step);

}  // namespace

BENCHMARK_MAIN();
