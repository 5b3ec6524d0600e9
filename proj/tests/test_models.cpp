#include <catch2/catch.hpp>

#include "groupdp/model.hpp"

using namespace groupdp;

namespace {

Example random_example(std::size_t d, std::size_t c, Rng& rng) {
  Example ex;
  ex.features.resize(d);
  for (double& f : ex.features) f = 2.0 * uniform01(rng) - 1.0;
  ex.label = static_cast<int>(uniform_below(rng, c));
  return ex;
}

}  // namespace

TEST_CASE("loss of zero parameters is log c") {
  Rng rng(1);
  const ModelParams p = make_params(Arch::kSoftmaxRegression, 3, 2);
  const Example ex = random_example(3, 2, rng);
  CHECK(loss(p, ex) == Approx(std::log(2.0)));

  const ModelParams p5 = make_params(Arch::kSoftmaxRegression, 3, 5);
  Example ex5 = random_example(3, 5, rng);
  CHECK(loss(p5, ex5) == Approx(std::log(5.0)));
}

TEST_CASE("large correct-class logit drives loss to zero") {
  ModelParams p = make_params(Arch::kSoftmaxRegression, 2, 2);
  Example ex;
  ex.features = {1.0, 0.0};
  ex.label = 1;
  p.theta[1 * 2 + 0] = 50.0;  // W[1][0]
  CHECK(loss(p, ex) < 1e-20);
}

TEST_CASE("softmax shift invariance via bias") {
  Rng rng(2);
  ModelParams p = init_params(Arch::kSoftmaxRegression, 4, 3, rng);
  const Example ex = random_example(4, 3, rng);
  const double base = loss(p, ex);
  for (std::size_t k = 0; k < 3; ++k) p.theta[3 * 4 + k] += 17.5;
  CHECK(loss(p, ex) == Approx(base));
}

TEST_CASE("zero-parameter gradient bias block is softmax minus onehot") {
  Rng rng(3);
  const ModelParams p = make_params(Arch::kSoftmaxRegression, 3, 4);
  Example ex = random_example(3, 4, rng);
  ex.label = 2;
  const Vec g = per_example_grad(p, ex);
  for (std::size_t k = 0; k < 4; ++k) {
    const double expected = 0.25 - (k == 2 ? 1.0 : 0.0);
    CHECK(g[4 * 3 + k] == Approx(expected));
  }
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(4);
  for (int rep = 0; rep < 100; ++rep) {
    const bool mlp = rep % 2 == 1;
    const ModelParams p = mlp ? init_params(Arch::kMlp1Hidden, 3, 3, rng, 5)
                              : init_params(Arch::kSoftmaxRegression, 3, 3, rng);
    const Example ex = random_example(3, 3, rng);
    const Vec g = per_example_grad(p, ex);
    const Vec fd = finite_diff_grad(p, ex, 1e-5);
    const double scale = std::max(norm(g), 1e-8);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(std::abs(g[i] - fd[i]) / scale < 1e-4);
  }
}

TEST_CASE("finite difference error shrinks quadratically") {
  Rng rng(5);
  const ModelParams p = init_params(Arch::kSoftmaxRegression, 2, 2, rng);
  const Example ex = random_example(2, 2, rng);
  const Vec g = per_example_grad(p, ex);
  auto err = [&](double h) {
    const Vec fd = finite_diff_grad(p, ex, h);
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) m = std::max(m, std::abs(fd[i] - g[i]));
    return m;
  };
  const double e1 = err(1e-2);
  const double e2 = err(5e-3);
  CHECK(e2 < e1 / 2.5);  // roughly quartered, slack for noise
}

TEST_CASE("gradient evaluation is deterministic") {
  Rng rng(6);
  const ModelParams p = init_params(Arch::kMlp1Hidden, 3, 2, rng, 4);
  const Example ex = random_example(3, 2, rng);
  CHECK(per_example_grad(p, ex) == per_example_grad(p, ex));
}

TEST_CASE("batch-mean gradient linearity") {
  Rng rng(7);
  const ModelParams p = init_params(Arch::kSoftmaxRegression, 3, 3, rng);
  std::vector<Example> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(random_example(3, 3, rng));

  Vec mean_grad(p.theta.size(), 0.0);
  for (const auto& ex : batch) {
    const Vec g = per_example_grad(p, ex);
    for (std::size_t i = 0; i < g.size(); ++i) mean_grad[i] += g[i] / batch.size();
  }
  // Finite difference of the batch-mean loss against the averaged gradient.
  ModelParams q = p;
  for (std::size_t i = 0; i < p.theta.size(); ++i) {
    const double h = 1e-6;
    q.theta[i] = p.theta[i] + h;
    double lp = 0.0;
    for (const auto& ex : batch) lp += loss(q, ex) / batch.size();
    q.theta[i] = p.theta[i] - h;
    double lm = 0.0;
    for (const auto& ex : batch) lm += loss(q, ex) / batch.size();
    q.theta[i] = p.theta[i];
    CHECK(std::abs((lp - lm) / (2 * h) - mean_grad[i]) < 1e-6);
  }
}

TEST_CASE("shape validation") {
  const ModelParams p = make_params(Arch::kSoftmaxRegression, 3, 2);
  Example bad;
  bad.features = {1.0, 2.0};
  bad.label = 0;
  CHECK_THROWS_AS(loss(p, bad), std::invalid_argument);
  Example bad_label;
  bad_label.features = {1.0, 2.0, 3.0};
  bad_label.label = 5;
  CHECK_THROWS_AS(per_example_grad(p, bad_label), std::invalid_argument);
}
