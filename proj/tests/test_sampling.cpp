#include <algorithm>
#include <map>
#include <set>

#include <catch2/catch.hpp>

#include "groupdp/sampling.hpp"

using namespace groupdp;

TEST_CASE("sample_without_replacement basics") {
  Rng rng(7);
  auto full = sample_without_replacement(5, 5, rng);
  std::sort(full.begin(), full.end());
  CHECK(full == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(sample_without_replacement(5, 0, rng).empty());
  CHECK_THROWS_AS(sample_without_replacement(3, 4, rng), std::invalid_argument);
}

TEST_CASE("samples are sets for all n <= 6") {
  Rng rng(11);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t m = 0; m <= n; ++m) {
      for (int rep = 0; rep < 50; ++rep) {
        const auto idx = sample_without_replacement(n, m, rng);
        std::set<std::size_t> s(idx.begin(), idx.end());
        CHECK(s.size() == m);
        for (std::size_t i : idx) CHECK(i < n);
      }
    }
  }
}

TEST_CASE("subset frequencies are uniform for n=4, m=2") {
  Rng rng(23);
  std::map<std::pair<std::size_t, std::size_t>, int> counts;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    auto idx = sample_without_replacement(4, 2, rng);
    std::sort(idx.begin(), idx.end());
    counts[{idx[0], idx[1]}] += 1;
  }
  CHECK(counts.size() == 6);
  const double p = 1.0 / 6.0;
  const double se = std::sqrt(p * (1.0 - p) * trials);
  for (const auto& [subset, c] : counts)
    CHECK(std::abs(c - trials * p) <= 3.0 * se);
}

TEST_CASE("round_to_total pinned examples") {
  Rng rng(3);
  const auto exact = round_to_total({2.0, 3.0, 5.0}, 10, rng);
  CHECK(exact.m == std::vector<std::uint64_t>{2, 3, 5});

  const auto thirds = round_to_total({10.0 / 3, 10.0 / 3, 10.0 / 3}, 10, rng);
  CHECK(thirds.sum() == 10);
  for (auto v : thirds.m) CHECK((v == 3 || v == 4));

  const auto with_zero = round_to_total({0.0, 6.6, 3.4}, 10, rng);
  CHECK(with_zero.m == std::vector<std::uint64_t>{0, 7, 3});

  CHECK_THROWS_AS(round_to_total({0.0, 0.0}, 10, rng), std::invalid_argument);
  CHECK_THROWS_AS(round_to_total({1.0, -0.5}, 10, rng), std::invalid_argument);
}

TEST_CASE("round_to_total contract over random inputs") {
  Rng rng(17);
  for (int rep = 0; rep < 2000; ++rep) {
    const std::size_t g = 1 + uniform_below(rng, 6);
    Vec w(g);
    bool all_zero = true;
    for (double& x : w) {
      x = uniform_below(rng, 4) == 0 ? 0.0 : 10.0 * uniform01(rng);
      all_zero = all_zero && x == 0.0;
    }
    if (all_zero) w[0] = 1.0;
    const std::uint64_t total = 1 + uniform_below(rng, 40);
    const auto alloc = round_to_total(w, total, rng);
    CHECK(alloc.sum() == total);
    CHECK(alloc.m.size() == g);
  }
}

TEST_CASE("reweight_allocation tilts and renormalizes") {
  Rng rng(5);
  BatchAllocation even{{5, 5}, 10};

  const auto same = reweight_allocation(even, {1.0, 1.0}, 2.0, rng);
  CHECK(same.m == std::vector<std::uint64_t>{5, 5});
  const auto cold = reweight_allocation(even, {3.0, -1.0}, 0.0, rng);
  CHECK(cold.m == std::vector<std::uint64_t>{5, 5});

  // Tilt (5,5) by exp(ln 2 * (1,0)) -> (10,5) -> normalized (20/3, 10/3).
  const auto tilted = reweight_allocation(even, {1.0, 0.0}, std::log(2.0), rng);
  CHECK(tilted.sum() == 10);
  CHECK((tilted.m[0] == 6 || tilted.m[0] == 7));
}

TEST_CASE("reweight_lambda simplex behavior") {
  GroupWeights half{{0.5, 0.5}};

  const auto same = reweight_lambda(half, {2.0, 2.0}, 1.5);
  CHECK(same.lambda[0] == Approx(0.5));
  CHECK(same.lambda[1] == Approx(0.5));

  const auto tilted = reweight_lambda(half, {1.0, 0.0}, 1.0);
  const double e = std::exp(1.0);
  CHECK(tilted.lambda[0] == Approx(e / (e + 1.0)));
  CHECK(tilted.lambda[1] == Approx(1.0 / (e + 1.0)));

  // Dominant loss concentrates the weights as the temperature grows.
  const auto hot = reweight_lambda({{0.2, 0.3, 0.5}}, {5.0, 1.0, 0.0}, 40.0);
  CHECK(hot.lambda[0] > 0.999);

  // Simplex to 1e-12 and tilted argmax matches log lambda + eta L.
  Rng rng(29);
  for (int rep = 0; rep < 200; ++rep) {
    GroupWeights w{{0.1, 0.2, 0.3, 0.4}};
    Vec losses(4);
    for (double& l : losses) l = 4.0 * uniform01(rng);
    const double eta = 3.0 * uniform01(rng);
    const auto out = reweight_lambda(w, losses, eta);
    double s = 0.0;
    for (double l : out.lambda) s += l;
    CHECK(std::abs(s - 1.0) <= 1e-12);
    std::size_t best = 0, out_best = 0;
    for (std::size_t i = 1; i < 4; ++i) {
      if (std::log(w.lambda[i]) + eta * losses[i] >
          std::log(w.lambda[best]) + eta * losses[best])
        best = i;
      if (out.lambda[i] > out.lambda[out_best]) out_best = i;
    }
    CHECK(out_best == best);
  }
}
