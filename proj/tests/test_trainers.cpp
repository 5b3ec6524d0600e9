#include <catch2/catch.hpp>

#include "groupdp/trainer.hpp"

using namespace groupdp;

namespace {

GroupDataset small_dataset(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  SynthSpec spec;
  spec.d = 2;
  spec.c = 2;
  for (std::size_t n : sizes)
    spec.groups.push_back({n, {{-1.0, 0.3}, {1.0, -0.3}}, 0.8});
  Rng rng(seed);
  return generate_synthetic(spec, rng);
}

}  // namespace

TEST_CASE("clip operators") {
  const Vec clipped = clip_vector({3.0, 0.0}, 1.0);
  CHECK(clipped[0] == Approx(1.0));
  CHECK(clipped[1] == 0.0);
  const Vec under = clip_vector({0.3, 0.4}, 1.0);
  CHECK(under == Vec{0.3, 0.4});
  const Vec zero = clip_vector({0.0, 0.0}, 1.0);
  CHECK(zero == Vec{0.0, 0.0});
  CHECK(norm(clip_vector({5.0, -12.0}, 2.0)) == Approx(2.0));

  CHECK(clip_scalar_loss(0.3, 1.0) == 0.3);
  CHECK(clip_scalar_loss(5.0, 1.0) == 1.0);
  CHECK(clip_scalar_loss(clip_scalar_loss(5.0, 1.0), 1.0) == 1.0);
}

TEST_CASE("noisy_group_losses noiseless full batch is the exact group mean") {
  const GroupDataset ds = small_dataset({12, 7}, 1);
  Rng rng(2);
  const ModelParams p = init_params(Arch::kSoftmaxRegression, 2, 2, rng);
  const Vec released = noisy_group_losses(ds, p, 1.0, 1e9, 0.0, rng);
  for (std::size_t g = 0; g < 2; ++g) {
    double mean = 0.0;
    for (const auto& ex : ds.groups[g]) mean += loss(p, ex);
    mean /= static_cast<double>(ds.groups[g].size());
    CHECK(released[g] == Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("noisy_group_losses variance matches the analytic decomposition") {
  const GroupDataset ds = small_dataset({20}, 3);
  Rng rng(4);
  const ModelParams p = init_params(Arch::kSoftmaxRegression, 2, 2, rng);
  const double tau = 0.5, zeta = 10.0, gamma = 0.5;
  const std::size_t b = 10;

  // Population stats of the clipped losses.
  Vec losses;
  for (const auto& ex : ds.groups[0])
    losses.push_back(clip_scalar_loss(loss(p, ex), zeta));
  double mean = 0.0;
  for (double l : losses) mean += l;
  mean /= losses.size();
  double var = 0.0;
  for (double l : losses) var += (l - mean) * (l - mean);
  var /= losses.size();
  // Mean of b draws without replacement plus noise tau/b on the mean.
  const double expected =
      var / b * (losses.size() - b) / (losses.size() - 1.0) + tau * tau / (b * b);

  const int trials = 10000;
  double m1 = 0.0, m2 = 0.0;
  for (int t = 0; t < trials; ++t) {
    const double l = noisy_group_losses(ds, p, gamma, zeta, tau, rng)[0];
    m1 += l;
    m2 += l * l;
  }
  m1 /= trials;
  const double got = m2 / trials - m1 * m1;
  // Generous 3-standard-error band for a variance of a near-Gaussian sum.
  const double se = expected * std::sqrt(2.0 / (trials - 1.0)) * 3.0;
  CHECK(std::abs(got - expected) < 3.0 * se + 1e-6);
}

TEST_CASE("dpsgd noiseless full-batch step is gradient descent") {
  const GroupDataset ds = small_dataset({10, 10}, 5);
  TrainConfig cfg;
  cfg.algo = Algo::kDpsgd;
  cfg.steps = 1;
  cfg.batch = 20;
  cfg.lr = 0.25;
  cfg.sigma = 0.0;
  cfg.xi = 1e9;
  cfg.k = 100;
  cfg.seed = 6;
  Rng rng(cfg.seed);
  const TrainReport report = train_dpsgd(cfg, ds, rng);

  Rng rng2(cfg.seed);
  ModelParams manual = init_params(Arch::kSoftmaxRegression, 2, 2, rng2);
  Vec mean_grad(manual.theta.size(), 0.0);
  const auto pooled = ds.pooled();
  for (const auto& ex : pooled) {
    const Vec g = per_example_grad(manual, ex);
    for (std::size_t i = 0; i < g.size(); ++i) mean_grad[i] += g[i] / pooled.size();
  }
  for (std::size_t i = 0; i < manual.theta.size(); ++i)
    manual.theta[i] -= cfg.lr * mean_grad[i];
  for (std::size_t i = 0; i < manual.theta.size(); ++i)
    CHECK(report.params.theta[i] == Approx(manual.theta[i]).margin(1e-10));
}

TEST_CASE("dpsgd ledger equals the closed form") {
  const GroupDataset ds = small_dataset({30, 20}, 7);
  TrainConfig cfg;
  cfg.algo = Algo::kDpsgd;
  cfg.steps = 25;
  cfg.batch = 10;
  cfg.lr = 0.1;
  cfg.sigma = 2.0;
  cfg.xi = 0.5;
  cfg.seed = 8;
  cfg.k = 5;
  Rng rng(cfg.seed);
  const TrainReport report = train_dpsgd(cfg, ds, rng);
  const RdpOrderGrid grid = RdpOrderGrid::standard();
  const double gamma = 10.0 / 50.0;
  for (const auto& curve : report.ledger.per_group) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double expected =
          25.0 * subsampled_gaussian_rdp_tight(grid.orders[i], {gamma, 4.0});
      CHECK(curve.eps[i] == Approx(expected).epsilon(1e-10));
    }
  }
  CHECK(report.ledger.step_count == 25);
}

TEST_CASE("asc single group degenerates to dpsgd") {
  const GroupDataset ds = small_dataset({40}, 9);
  const int alpha = 8;
  const double sigma = 1.5, eps_step = 0.02;
  const double gamma = 10.0 / 40.0;
  const double kappa = invert_noise_multiplier(gamma, alpha, eps_step);

  TrainConfig asc;
  asc.algo = Algo::kAsc;
  asc.steps = 6;
  asc.batch = 10;
  asc.lr = 0.3;
  asc.sigma = sigma;
  asc.eps_step = eps_step;
  asc.working_alpha = alpha;
  asc.k = 100;  // no reweights inside the run
  asc.seed = 10;
  Rng r1(asc.seed);
  const TrainReport a = train_asc(asc, ds, r1);

  TrainConfig dpsgd = asc;
  dpsgd.algo = Algo::kDpsgd;
  dpsgd.xi = sigma / kappa;
  Rng r2(dpsgd.seed);
  const TrainReport b = train_dpsgd(dpsgd, ds, r2);

  REQUIRE(a.params.theta.size() == b.params.theta.size());
  for (std::size_t i = 0; i < a.params.theta.size(); ++i)
    CHECK(a.params.theta[i] == b.params.theta[i]);
}

TEST_CASE("asc ledger and balanced clipping invariant") {
  const GroupDataset ds = small_dataset({60, 40, 15}, 11);
  TrainConfig cfg;
  cfg.algo = Algo::kAsc;
  cfg.steps = 10;
  cfg.batch = 12;
  cfg.lr = 0.2;
  cfg.sigma = 1.0;
  cfg.eps_step = 0.05;
  cfg.working_alpha = 6;
  cfg.k = 5;
  cfg.gamma_loss = 0.5;
  cfg.tau = 2.0;
  cfg.zeta = 1.0;
  cfg.temperature = 1.0;
  cfg.seed = 12;
  Rng rng(cfg.seed);
  const TrainReport report = train_asc(cfg, ds, rng);

  CHECK(report.max_step_cost_ratio <= 1.0 + 1e-9);
  const double loss_eps =
      subsampled_gaussian_rdp_tight(cfg.working_alpha, {0.5, 2.0});
  const double expected = 10.0 * cfg.eps_step + 2.0 * loss_eps;
  for (const auto& curve : report.ledger.per_group) {
    REQUIRE(curve.eps.size() == 1);
    CHECK(curve.eps[0] == Approx(expected).epsilon(1e-10));
  }
  CHECK(report.ledger.reweight_count == 2);
  // Per-group guarantees are uniform across groups of different sizes.
  for (std::size_t g = 1; g < report.per_group_dp.size(); ++g)
    CHECK(report.per_group_dp[g].epsilon == report.per_group_dp[0].epsilon);
}

TEST_CASE("asc noiseless full-population step is the uniform DRO gradient") {
  const GroupDataset ds = small_dataset({20, 20, 20}, 13);
  TrainConfig cfg;
  cfg.algo = Algo::kAsc;
  cfg.steps = 1;
  cfg.batch = 60;
  cfg.lr = 0.5;
  cfg.sigma = 0.0;
  cfg.tau = 0.0;
  cfg.zeta = 1e9;
  cfg.k = 100;
  cfg.seed = 14;
  Rng rng(cfg.seed);
  const TrainReport report = train_asc(cfg, ds, rng);

  Rng rng2(cfg.seed);
  ModelParams manual = init_params(Arch::kSoftmaxRegression, 2, 2, rng2);
  // Uniform-weight DRO gradient: mean over groups of the group-mean gradient.
  Vec dro(manual.theta.size(), 0.0);
  for (const auto& group : ds.groups) {
    Vec gm(manual.theta.size(), 0.0);
    for (const auto& ex : group) {
      const Vec g = per_example_grad(manual, ex);
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i] / group.size();
    }
    for (std::size_t i = 0; i < gm.size(); ++i) dro[i] += gm[i] / ds.num_groups();
  }
  for (std::size_t i = 0; i < manual.theta.size(); ++i) {
    const double stepped = manual.theta[i] - cfg.lr * dro[i];
    CHECK(report.params.theta[i] == Approx(stepped).margin(1e-8));
  }
}

TEST_CASE("azb ledgers match the closed forms per variant") {
  const GroupDataset ds = small_dataset({50, 30, 20}, 15);
  TrainConfig cfg;
  cfg.algo = Algo::kAzb;
  cfg.steps = 12;
  cfg.batch = 10;
  cfg.lr = 0.1;
  cfg.sigma = 3.0;
  cfg.xi = 1.0;
  cfg.k = 4;
  cfg.gamma_loss = 0.5;
  cfg.tau = 1.5;
  cfg.zeta = 0.75;
  cfg.seed = 16;
  const RdpOrderGrid grid = RdpOrderGrid::standard();
  const MechanismSpec loss_spec{0.5, 2.0};

  for (ZhouVariant variant :
       {ZhouVariant::kBase, ZhouVariant::kWeak, ZhouVariant::kProp}) {
    Rng rng(cfg.seed);
    const TrainReport report = train_azb(cfg, ds, variant, rng);
    const auto expected = total_epsilon_zhou(variant, 12, 4, 10, ds.group_sizes(),
                                             3.0, loss_spec, grid);
    for (std::size_t g = 0; g < ds.num_groups(); ++g)
      for (std::size_t i = 0; i < grid.size(); ++i)
        CHECK(report.ledger.per_group[g].eps[i] ==
              Approx(expected[g].eps[i]).epsilon(1e-10));
    if (variant == ZhouVariant::kProp) {
      for (std::size_t g = 1; g < ds.num_groups(); ++g)
        CHECK(report.per_group_dp[g].epsilon ==
              Approx(report.per_group_dp[0].epsilon));
    } else {
      // Smaller groups pay more.
      CHECK(report.per_group_dp[2].epsilon > report.per_group_dp[1].epsilon);
      CHECK(report.per_group_dp[1].epsilon > report.per_group_dp[0].epsilon);
    }
  }

  TrainConfig toobig = cfg;
  toobig.batch = 25;
  Rng rng(1);
  CHECK_THROWS_AS(train_azb(toobig, ds, ZhouVariant::kBase, rng),
                  std::invalid_argument);
}

TEST_CASE("training is deterministic given the seed") {
  const GroupDataset ds = small_dataset({25, 15}, 17);
  TrainConfig cfg;
  cfg.algo = Algo::kAsc;
  cfg.steps = 8;
  cfg.batch = 8;
  cfg.lr = 0.2;
  cfg.sigma = 1.0;
  cfg.eps_step = 0.05;
  cfg.working_alpha = 5;
  cfg.k = 3;
  cfg.gamma_loss = 0.5;
  cfg.tau = 1.0;
  cfg.zeta = 1.0;
  cfg.seed = 18;
  Rng r1(cfg.seed), r2(cfg.seed);
  const TrainReport a = train_asc(cfg, ds, r1);
  const TrainReport b = train_asc(cfg, ds, r2);
  CHECK(a.params.theta == b.params.theta);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].wga == b.history[i].wga);
    CHECK(a.history[i].allocation == b.history[i].allocation);
  }
}
