#pragma once

#include <cfenv>
#include <cstdint>
#include <vector>

#include "groupdp/common.hpp"

namespace groupdp {

// Per-group integer batch sizes summing to the total batch size M.
struct BatchAllocation {
  std::vector<std::uint64_t> m;
  std::uint64_t total = 0;

  std::uint64_t sum() const {
    std::uint64_t s = 0;
    for (auto v : m) s += v;
    return s;
  }
};

// Point on the probability simplex over groups.
struct GroupWeights {
  Vec lambda;

  void validate() const {
    double s = 0.0;
    for (double l : lambda) {
      if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("lambda outside [0,1]");
      s += l;
    }
    if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("lambda does not sum to 1");
  }

  static GroupWeights uniform(std::size_t g) {
    return {Vec(g, 1.0 / static_cast<double>(g))};
  }
};

// m distinct indices in [0, n), uniform over all size-m subsets.
// Partial Fisher-Yates; deterministic under a seeded generator.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t m, Rng& rng) {
  if (m > n) throw std::invalid_argument("sample size exceeds population");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

// Rescale nonnegative weights to sum M, apply round-half-even, then distribute
// the leftover discrepancy one unit at a time uniformly at random; decrements
// only ever target strictly positive entries.
inline BatchAllocation round_to_total(const Vec& weights, std::uint64_t total, Rng& rng) {
  if (total < 1) throw std::invalid_argument("total must be >= 1");
  double sum_w = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and nonnegative");
    sum_w += w;
  }
  if (!(sum_w > 0.0)) throw std::invalid_argument("weights must not all be zero");

  BatchAllocation alloc;
  alloc.total = total;
  alloc.m.resize(weights.size());
  std::int64_t diff = static_cast<std::int64_t>(total);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double scaled = weights[i] * static_cast<double>(total) / sum_w;
    const auto r = static_cast<std::uint64_t>(std::nearbyint(scaled));  // ties to even
    alloc.m[i] = r;
    diff -= static_cast<std::int64_t>(r);
  }
  while (diff > 0) {
    alloc.m[uniform_below(rng, alloc.m.size())] += 1;
    --diff;
  }
  while (diff < 0) {
    std::vector<std::size_t> positive;
    for (std::size_t i = 0; i < alloc.m.size(); ++i)
      if (alloc.m[i] > 0) positive.push_back(i);
    alloc.m[positive[uniform_below(rng, positive.size())]] -= 1;
    ++diff;
  }
  return alloc;
}

// Exponential tilt of batch sizes by per-group losses, renormalized to the
// total and re-rounded.
inline BatchAllocation reweight_allocation(const BatchAllocation& alloc,
                                           const Vec& losses, double temperature,
                                           Rng& rng) {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be nonnegative");
  if (losses.size() != alloc.m.size()) throw std::invalid_argument("loss count mismatch");
  Vec tilted(alloc.m.size());
  double max_exp = -kInf;
  for (double l : losses) {
    if (!std::isfinite(l)) throw std::invalid_argument("losses must be finite");
    max_exp = std::max(max_exp, temperature * l);
  }
  for (std::size_t g = 0; g < tilted.size(); ++g)
    tilted[g] = static_cast<double>(alloc.m[g]) * std::exp(temperature * losses[g] - max_exp);
  return round_to_total(tilted, alloc.total, rng);
}

// Exponential tilt of simplex weights; analogous to reweight_allocation
// without rounding.
inline GroupWeights reweight_lambda(const GroupWeights& weights, const Vec& losses,
                                    double temperature) {
  if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be nonnegative");
  if (losses.size() != weights.lambda.size())
    throw std::invalid_argument("loss count mismatch");
  GroupWeights out;
  out.lambda.resize(losses.size());
  double max_exp = -kInf;
  for (double l : losses) {
    if (!std::isfinite(l)) throw std::invalid_argument("losses must be finite");
    max_exp = std::max(max_exp, temperature * l);
  }
  double s = 0.0;
  for (std::size_t g = 0; g < losses.size(); ++g) {
    out.lambda[g] = weights.lambda[g] * std::exp(temperature * losses[g] - max_exp);
    s += out.lambda[g];
  }
  if (!(s > 0.0)) throw std::invalid_argument("tilted weights vanished");
  for (double& l : out.lambda) l /= s;
  return out;
}

}  // namespace groupdp
