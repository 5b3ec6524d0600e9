#pragma once

#include <bit>
#include <cstddef>
#include <vector>

#include "groupdp/data.hpp"
#include "groupdp/model.hpp"
#include "groupdp/sampling.hpp"

namespace groupdp {

enum class VarianceMethod { kAsc, kAzb, kAzbProp };

// Full-data per-group gradient means and scalar within-group variances,
// population convention (divide by n_g).
struct GroupGradientStats {
  std::vector<Vec> mean;    // U(D_g)
  Vec var;                  // E_z ||grad - U(D_g)||^2
  std::vector<std::size_t> n;

  // lambda-weighted mean of the group means.
  Vec dro_mean(const Vec& lambda) const {
    Vec u(mean[0].size(), 0.0);
    for (std::size_t g = 0; g < mean.size(); ++g)
      for (std::size_t j = 0; j < u.size(); ++j) u[j] += lambda[g] * mean[g][j];
    return u;
  }
};

inline GroupGradientStats group_gradient_stats(const GroupDataset& ds,
                                               const ModelParams& params) {
  GroupGradientStats stats;
  for (const auto& group : ds.groups) {
    if (group.empty()) throw std::invalid_argument("empty group");
    std::vector<Vec> grads;
    grads.reserve(group.size());
    for (const auto& ex : group) grads.push_back(per_example_grad(params, ex));
    Vec mean(grads[0].size(), 0.0);
    for (const auto& g : grads)
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += g[j];
    for (double& m : mean) m /= static_cast<double>(grads.size());
    double var = 0.0;
    for (const auto& g : grads) {
      double s = 0.0;
      for (std::size_t j = 0; j < mean.size(); ++j) {
        const double d = g[j] - mean[j];
        s += d * d;
      }
      var += s;
    }
    var /= static_cast<double>(grads.size());
    stats.mean.push_back(std::move(mean));
    stats.var.push_back(var);
    stats.n.push_back(group.size());
  }
  return stats;
}

// Half the lambda-weighted sum of pairwise squared mean distances; equals the
// lambda-weighted spread of the group means around the DRO mean.
inline double between_group_term(const GroupGradientStats& stats, const Vec& lambda) {
  double s = 0.0;
  for (std::size_t g = 0; g < stats.mean.size(); ++g) {
    for (std::size_t h = 0; h < stats.mean.size(); ++h) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < stats.mean[g].size(); ++j) {
        const double d = stats.mean[g][j] - stats.mean[h][j];
        d2 += d * d;
      }
      s += lambda[g] * lambda[h] * d2;
    }
  }
  return 0.5 * s;
}

// Closed-form sampling variance E||U - U_DRO||^2 of the three batch
// construction schemes. ASC: (1/M) sum_g lambda_g (n_g - m_g)/(n_g - 1) Var_g.
// aZB adds the between-group spread of the means; the proportional variant
// additionally replaces the 1/M prefactor with 1/m_g per group.
inline double analytic_variance(VarianceMethod method, const GroupGradientStats& stats,
                                const Vec& lambda, std::uint64_t M,
                                const std::vector<std::uint64_t>& allocation) {
  const std::size_t G = stats.mean.size();
  if (lambda.size() != G || allocation.size() != G)
    throw std::invalid_argument("group count mismatch");
  double within = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    const auto ng = static_cast<double>(stats.n[g]);
    const std::uint64_t mg = allocation[g];
    if (mg > stats.n[g]) throw std::invalid_argument("batch entry exceeds group size");
    if (method == VarianceMethod::kAzb && M > stats.n[g])
      throw std::invalid_argument("batch size exceeds a group size");
    const double fpc = stats.n[g] > 1
                           ? (ng - static_cast<double>(mg)) / (ng - 1.0)
                           : 0.0;
    const double denom = method == VarianceMethod::kAzbProp
                             ? static_cast<double>(mg)
                             : static_cast<double>(M);
    if (mg > 0) within += lambda[g] * fpc * stats.var[g] / denom;
  }
  if (method == VarianceMethod::kAsc) return within;
  return within + between_group_term(stats, lambda);
}

// Batch-sum covariance under without-replacement sampling: exhaustive
// enumeration of all C(n, m) subsets next to the closed form
// m (n - m)/(n - 1) cov(population).
struct WorCovResult {
  std::vector<Vec> enumerated;
  std::vector<Vec> closed_form;
};

inline WorCovResult wor_cov_oracle(const std::vector<Vec>& population, std::size_t m) {
  const std::size_t n = population.size();
  if (n == 0 || n > 10) throw std::invalid_argument("population size must be in [1,10]");
  if (m < 1 || m > n) throw std::invalid_argument("sample size must be in [1,n]");
  const std::size_t d = population[0].size();

  Vec pop_mean(d, 0.0);
  for (const auto& v : population)
    for (std::size_t j = 0; j < d; ++j) pop_mean[j] += v[j];
  for (double& x : pop_mean) x /= static_cast<double>(n);
  std::vector<Vec> pop_cov(d, Vec(d, 0.0));
  for (const auto& v : population)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j)
        pop_cov[i][j] += (v[i] - pop_mean[i]) * (v[j] - pop_mean[j]);
  for (auto& row : pop_cov)
    for (double& x : row) x /= static_cast<double>(n);

  WorCovResult out;
  out.closed_form.assign(d, Vec(d, 0.0));
  const double factor = n > 1
                            ? static_cast<double>(m) * static_cast<double>(n - m) /
                                  static_cast<double>(n - 1)
                            : 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.closed_form[i][j] = factor * pop_cov[i][j];

  // Enumerate subsets via bitmask, accumulate the first and second moments of
  // the batch sum.
  Vec sum_mean(d, 0.0);
  std::vector<Vec> sum_outer(d, Vec(d, 0.0));
  std::size_t count = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != m) continue;
    Vec s(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (std::size_t{1} << i))
        for (std::size_t j = 0; j < d; ++j) s[j] += population[i][j];
    for (std::size_t j = 0; j < d; ++j) sum_mean[j] += s[j];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) sum_outer[i][j] += s[i] * s[j];
    ++count;
  }
  for (double& x : sum_mean) x /= static_cast<double>(count);
  out.enumerated.assign(d, Vec(d, 0.0));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out.enumerated[i][j] =
          sum_outer[i][j] / static_cast<double>(count) - sum_mean[i] * sum_mean[j];
  return out;
}

struct EmpiricalVariance {
  Vec mean_update;       // Monte Carlo mean of U
  double variance = 0.0; // Monte Carlo mean of ||U - U_DRO||^2
  double std_error = 0.0;
};

// Monte Carlo over the method's batch construction at fixed params. Standard
// error of the variance estimate comes from 10 equal shards.
inline EmpiricalVariance empirical_variance(VarianceMethod method,
                                            const GroupDataset& ds,
                                            const ModelParams& params, const Vec& lambda,
                                            std::uint64_t M, std::size_t trials,
                                            Rng& rng) {
  const std::size_t G = ds.num_groups();
  if (lambda.size() != G) throw std::invalid_argument("group count mismatch");
  if (trials < 10) throw std::invalid_argument("need at least 10 trials");

  // Precompute per-example gradients once; trials only resample indices.
  std::vector<std::vector<Vec>> grads(G);
  for (std::size_t g = 0; g < G; ++g) {
    grads[g].reserve(ds.groups[g].size());
    for (const auto& ex : ds.groups[g]) grads[g].push_back(per_example_grad(params, ex));
  }
  const GroupGradientStats stats = group_gradient_stats(ds, params);
  const Vec u_dro = stats.dro_mean(lambda);
  const std::size_t dim = u_dro.size();

  // Integer batch sizes per group.
  std::vector<std::uint64_t> alloc(G, 0);
  if (method == VarianceMethod::kAsc || method == VarianceMethod::kAzbProp) {
    const Vec weights = method == VarianceMethod::kAsc
                            ? lambda
                            : [&] {
                                Vec w(G);
                                for (std::size_t g = 0; g < G; ++g)
                                  w[g] = static_cast<double>(ds.groups[g].size());
                                return w;
                              }();
    alloc = round_to_total(weights, M, rng).m;
    for (std::size_t g = 0; g < G; ++g)
      if (alloc[g] > ds.groups[g].size())
        throw std::invalid_argument("allocation exceeds a group size");
  } else {
    for (std::size_t g = 0; g < G; ++g) {
      if (M > ds.groups[g].size())
        throw std::invalid_argument("batch size exceeds a group size");
      alloc[g] = M;
    }
  }

  auto draw_update = [&](Rng& r) {
    Vec u(dim, 0.0);
    if (method == VarianceMethod::kAsc) {
      // Stratified: all groups contribute, scaled by 1/M overall.
      for (std::size_t g = 0; g < G; ++g) {
        if (alloc[g] == 0) continue;
        const auto idx = sample_without_replacement(grads[g].size(), alloc[g], r);
        for (std::size_t i : idx)
          for (std::size_t j = 0; j < dim; ++j) u[j] += grads[g][i][j];
      }
      for (double& x : u) x /= static_cast<double>(M);
      return u;
    }
    // aZB family: one group drawn from Categorical(lambda), its batch mean.
    const double p = uniform01(r);
    std::size_t g = G - 1;
    double cum = 0.0;
    for (std::size_t j = 0; j < G; ++j) {
      cum += lambda[j];
      if (p <= cum) {
        g = j;
        break;
      }
    }
    const std::uint64_t m = alloc[g];
    const auto idx = sample_without_replacement(grads[g].size(), m, r);
    for (std::size_t i : idx)
      for (std::size_t j = 0; j < dim; ++j) u[j] += grads[g][i][j];
    for (double& x : u) x /= static_cast<double>(m);
    return u;
  };

  constexpr std::size_t kShards = 10;
  const std::size_t per_shard = trials / kShards;
  Vec shard_var(kShards, 0.0);
  EmpiricalVariance out;
  out.mean_update.assign(dim, 0.0);
  std::size_t total = 0;
  for (std::size_t s = 0; s < kShards; ++s) {
    Rng shard_rng(rng());
    double acc = 0.0;
    for (std::size_t t = 0; t < per_shard; ++t) {
      const Vec u = draw_update(shard_rng);
      double d2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = u[j] - u_dro[j];
        d2 += d * d;
        out.mean_update[j] += u[j];
      }
      acc += d2;
      ++total;
    }
    shard_var[s] = acc / static_cast<double>(per_shard);
  }
  for (double& x : out.mean_update) x /= static_cast<double>(total);
  out.variance = std::accumulate(shard_var.begin(), shard_var.end(), 0.0) / kShards;
  double sq = 0.0;
  for (double v : shard_var) {
    const double d = v - out.variance;
    sq += d * d;
  }
  out.std_error = std::sqrt(sq / (kShards * (kShards - 1.0)));
  return out;
}

}  // namespace groupdp
