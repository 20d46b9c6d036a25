#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mva/init.hpp"
#include "mva/ops.hpp"
#include "mva/retrieval.hpp"

using namespace mva;

namespace {

/// Brute-force ranking: full stable sort by (-score, index), then look the
/// ground truth up.
MetricsReport recall_oracle(const std::vector<double>& sim, int q, int g, const std::vector<int>& gt) {
  const int ks[3] = {1, 5, 10};
  double hits[3] = {0, 0, 0};
  for (int query = 0; query < q; ++query) {
    std::vector<int> order(static_cast<std::size_t>(g));
    std::iota(order.begin(), order.end(), 0);
    const double* row = sim.data() + static_cast<std::size_t>(query) * g;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return row[a] > row[b]; });
    int rank = 0;
    for (int i = 0; i < g; ++i) {
      if (order[static_cast<std::size_t>(i)] == gt[static_cast<std::size_t>(query)]) {
        rank = i + 1;
        break;
      }
    }
    for (int k = 0; k < 3; ++k) {
      if (rank <= ks[k]) hits[k] += 1;
    }
  }
  MetricsReport r;
  r.direction = "T2V";
  r.r1 = 100.0 * hits[0] / q;
  r.r5 = g < 5 ? 100.0 : 100.0 * hits[1] / q;
  r.r10 = g < 10 ? 100.0 : 100.0 * hits[2] / q;
  r.mean = (r.r1 + r.r5 + r.r10) / 3.0;
  return r;
}

}  // namespace

TEST_SUITE("retrieval") {

TEST_CASE("pooling is the exact coordinate-wise mean") {
  Tensor one = Tensor::from({1, 3}, {1.0, 2.0, 3.0});
  Tensor pooled = pool_video(one);
  for (int i = 0; i < 3; ++i) CHECK(pooled.ptr()[i] == one.ptr()[i]);

  Tensor pm = Tensor::from({2, 3}, {1.0, -2.0, 0.5, -1.0, 2.0, -0.5});
  Tensor zero = pool_video(pm);
  for (int i = 0; i < 3; ++i) CHECK(zero.ptr()[i] == 0.0);

  Rng rng(3);
  Tensor three = Tensor::zeros({3, 4});
  for (std::int64_t i = 0; i < three.size(); ++i) three.ptr()[i] = rng.next_normal();
  Tensor m = pool_video(three);
  for (int c = 0; c < 4; ++c) {
    double acc = 0.0;
    for (int r = 0; r < 3; ++r) acc += three.ptr()[r * 4 + c];
    CHECK(m.ptr()[c] == acc * (1.0 / 3));
  }
}

TEST_CASE("similarity closed forms") {
  Tensor a = Tensor::from({2}, {1.0, 0.0});
  Tensor b = Tensor::from({2}, {1.0, 1.0});
  CHECK(similarity(a, a, 1.0).item() == doctest::Approx(1.0).epsilon(1e-15));
  Tensor c = Tensor::from({2}, {0.0, 1.0});
  CHECK(similarity(a, c, 1.0).item() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(similarity(a, b, 20.0).item() == doctest::Approx(20.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(similarity(a, b, 5.0).item() == doctest::Approx(similarity(b, a, 5.0).item()).epsilon(1e-15));
  CHECK_THROWS_AS(similarity(Tensor::zeros({2}), b, 1.0), std::invalid_argument);
}

TEST_CASE("temperature cap endpoints and shape") {
  TauSchedule s;
  s.total_steps = 100;
  CHECK(tau_cap(0, s) == 100.0);
  CHECK(tau_cap(100, s) == 20.0);
  CHECK(tau_cap(50, s) == doctest::Approx(60.0).epsilon(1e-12));
  CHECK(tau_cap(250, s) == 20.0);
  for (int step = 1; step <= 100; ++step) CHECK(tau_cap(step, s) <= tau_cap(step - 1, s));

  TauSchedule zero;
  zero.total_steps = 0;
  CHECK(tau_cap(0, zero) == 20.0);
  CHECK(tau_cap(7, zero) == 20.0);

  TauSchedule constant;
  constant.shape = TauSchedule::Shape::Constant;
  constant.total_steps = 100;
  CHECK(tau_cap(0, constant) == 100.0);
  CHECK(tau_cap(100, constant) == 100.0);

  CHECK_THROWS_AS(tau_cap(-1, s), std::invalid_argument);
}

TEST_CASE("contrastive loss of a constant matrix is ln B") {
  for (int b : {2, 4, 8}) {
    Tensor sim = Tensor::zeros({b, b});
    CHECK(std::abs(contrastive_loss(sim).item() - std::log(static_cast<double>(b))) < 1e-12);
    Tensor ones = Tensor::full({b, b}, 3.25);
    CHECK(std::abs(contrastive_loss(ones).item() - std::log(static_cast<double>(b))) < 1e-12);
  }
}

TEST_CASE("a dominant diagonal drives the loss to zero") {
  Tensor sim = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) sim.ptr()[i * 4 + i] = 1e4;
  CHECK(contrastive_loss(sim).item() < 1e-10);
}

TEST_CASE("contrastive loss matches a straight-line softmax NLL") {
  Rng rng(9);
  Tensor sim = Tensor::zeros({3, 3});
  for (std::int64_t i = 0; i < sim.size(); ++i) sim.ptr()[i] = rng.next_normal();
  double expect = 0.0;
  for (int dir = 0; dir < 2; ++dir) {
    for (int q = 0; q < 3; ++q) {
      double mx = -1e300, sum = 0.0;
      for (int g = 0; g < 3; ++g) mx = std::max(mx, dir == 0 ? sim.ptr()[q * 3 + g] : sim.ptr()[g * 3 + q]);
      for (int g = 0; g < 3; ++g) sum += std::exp((dir == 0 ? sim.ptr()[q * 3 + g] : sim.ptr()[g * 3 + q]) - mx);
      expect += (mx + std::log(sum) - sim.ptr()[q * 3 + q]) / 3.0;
    }
  }
  expect *= 0.5;
  CHECK(std::abs(contrastive_loss(sim).item() - expect) < 1e-12);
  CHECK_THROWS_AS(contrastive_loss(Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("recall on identity and reversed matrices") {
  std::vector<double> eye = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::vector<int> gt = {0, 1, 2};
  MetricsReport r = recall_at_k(eye, 3, 3, gt, "T2V");
  CHECK(r.r1 == 100.0);
  CHECK(r.mean == 100.0);

  // Every query scores its own ground truth dead last.
  std::vector<double> rev = {5, 3, 0, 5, 0, 3, 0, 5, 3};
  std::vector<int> anti = {2, 1, 0};
  MetricsReport r2 = recall_at_k(rev, 3, 3, anti, "T2V");
  CHECK(r2.r1 == 0.0);
  CHECK(r2.r5 == 100.0);
}

TEST_CASE("recall equals brute-force ranking on random matrices with ties") {
  Rng rng(17);
  for (int round = 0; round < 200; ++round) {
    std::vector<double> sim(64);
    for (double& v : sim) v = static_cast<double>(rng.next_int(5));  // heavy ties
    std::vector<int> gt(8);
    std::vector<int> pool(8);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 7; i > 0; --i) std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(rng.next_int(i + 1))]);
    for (int i = 0; i < 8; ++i) gt[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
    MetricsReport fast = recall_at_k(sim, 8, 8, gt, "T2V");
    MetricsReport slow = recall_oracle(sim, 8, 8, gt);
    CHECK(fast.r1 == slow.r1);
    CHECK(fast.r5 == slow.r5);
    CHECK(fast.r10 == slow.r10);
  }
}

TEST_CASE("ranking is invariant to strictly monotone transforms") {
  Rng rng(19);
  std::vector<double> sim(64);
  for (double& v : sim) v = rng.next_normal();
  std::vector<int> gt(8);
  std::iota(gt.begin(), gt.end(), 0);
  MetricsReport base = recall_at_k(sim, 8, 8, gt, "T2V");
  std::vector<double> warped(64);
  for (std::size_t i = 0; i < 64; ++i) warped[i] = std::tanh(sim[i]) * 50.0 + 3.0;
  MetricsReport after = recall_at_k(warped, 8, 8, gt, "T2V");
  CHECK(base.r1 == after.r1);
  CHECK(base.r5 == after.r5);
  CHECK(base.r10 == after.r10);
}

TEST_CASE("gallery smaller than K reports 100 by definition") {
  std::vector<double> sim = {1.0};
  MetricsReport r = recall_at_k(sim, 1, 1, {0}, "V2T");
  CHECK(r.r1 == 100.0);
  CHECK(r.r5 == 100.0);
  CHECK(r.r10 == 100.0);
}

TEST_CASE("metric invariants and formatting") {
  Rng rng(23);
  std::vector<double> sim(16 * 16);
  for (double& v : sim) v = rng.next_normal();
  std::vector<int> gt(16);
  std::iota(gt.begin(), gt.end(), 0);
  MetricsReport r = recall_at_k(sim, 16, 16, gt, "T2V");
  CHECK(r.r1 <= r.r5);
  CHECK(r.r5 <= r.r10);
  CHECK(r.r10 <= 100.0);
  MetricsReport fixed{"T2V", 12.5, 43.75, 68.75, 41.666666};
  CHECK(format_metrics(fixed) == "T2V 12.50 43.75 68.75 41.67");
}

TEST_CASE("ground truth must be injective and in range") {
  std::vector<double> sim(9, 0.0);
  CHECK_THROWS_AS(recall_at_k(sim, 3, 3, {0, 0, 1}, "T2V"), std::invalid_argument);
  CHECK_THROWS_AS(recall_at_k(sim, 3, 3, {0, 1, 3}, "T2V"), std::invalid_argument);
  CHECK_THROWS_AS(recall_at_k(sim, 3, 3, {0, 1}, "T2V"), std::invalid_argument);
}

}  // TEST_SUITE
