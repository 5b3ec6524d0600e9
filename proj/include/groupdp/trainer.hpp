#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "groupdp/accountant.hpp"
#include "groupdp/data.hpp"
#include "groupdp/metrics.hpp"
#include "groupdp/model.hpp"
#include "groupdp/sampling.hpp"

namespace groupdp {

enum class Algo { kDpsgd, kAsc, kAzb, kAzbWeak, kAzbProp };

inline const char* algo_name(Algo a) {
  switch (a) {
    case Algo::kDpsgd: return "dpsgd";
    case Algo::kAsc: return "asc";
    case Algo::kAzb: return "azb";
    case Algo::kAzbWeak: return "azb-weak";
    case Algo::kAzbProp: return "azb-prop";
  }
  return "?";
}

struct TrainConfig {
  Algo algo = Algo::kDpsgd;
  Arch arch = Arch::kSoftmaxRegression;
  std::size_t hidden = 32;
  std::uint64_t steps = 1;       // T
  std::uint64_t batch = 1;       // M
  double lr = 0.1;
  double momentum = 0.0;
  double temperature = 1.0;      // loss reweighting scale
  double sigma = 0.0;            // model noise stddev (absolute)
  double gamma_loss = 1.0;       // loss sampling rate
  double tau = 0.0;              // loss noise stddev
  double zeta = 1.0;             // loss clip threshold
  std::uint64_t k = 1;           // reweight period
  double xi = 1.0;               // fixed clip threshold (DP-SGD / aZB)
  double eps_step = 0.0;         // per-step RDP budget (ASC)
  int working_alpha = 2;
  double delta = 1e-5;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 1 || batch < 1 || k < 1)
      throw std::invalid_argument("steps, batch, and reweight period must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw std::invalid_argument("momentum must be in [0,1)");
    if (!(sigma >= 0.0 && tau >= 0.0)) throw std::invalid_argument("noise must be nonnegative");
    if (!(gamma_loss > 0.0 && gamma_loss <= 1.0))
      throw std::invalid_argument("gamma_loss must be in (0,1]");
    if (!(zeta > 0.0)) throw std::invalid_argument("zeta must be positive");
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be nonnegative");
    if (working_alpha < 2) throw std::invalid_argument("working order must be >= 2");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must be in (0,1)");
  }
};

struct EvalRecord {
  std::uint64_t step = 0;
  Vec group_acc;
  double wga = 0.0;
  double avg = 0.0;
  std::vector<std::uint64_t> allocation;  // ASC: m snapshot; others empty
  Vec lambda;                             // aZB: weight snapshot; others empty
};

struct GroupGuarantee {
  double epsilon = 0.0;
  double delta = 0.0;
  int alpha = 0;
};

struct TrainReport {
  TrainConfig config;
  ModelParams params;
  std::vector<EvalRecord> history;
  PrivacyLedger ledger;
  std::vector<GroupGuarantee> per_group_dp;
  // Largest observed per-step model RDP cost over the per-step budget; ASC's
  // balanced-clipping invariant requires this to stay <= 1.
  double max_step_cost_ratio = 0.0;
};

// clip(x; xi) = x * min(xi / ||x||, 1); zero maps to zero.
inline Vec clip_vector(Vec v, double xi) {
  if (!(xi > 0.0)) throw std::invalid_argument("clip threshold must be positive");
  const double n = norm(v);
  if (n > xi) {
    const double scale = xi / n;
    for (double& x : v) x *= scale;
  }
  return v;
}

inline double clip_scalar_loss(double l, double zeta) {
  if (!(zeta > 0.0)) throw std::invalid_argument("clip threshold must be positive");
  if (!(l >= 0.0)) throw std::invalid_argument("loss must be nonnegative");
  return std::min(l, zeta);
}

// One clipped-and-noised loss mean per group: sample floor(gamma * n_g)
// without replacement, sum clipped losses, add one Gaussian draw of stddev
// tau, divide by the batch size.
inline Vec noisy_group_losses(const GroupDataset& ds, const ModelParams& params,
                              double gamma_loss, double zeta, double tau, Rng& rng) {
  if (!(gamma_loss > 0.0 && gamma_loss <= 1.0))
    throw std::invalid_argument("gamma_loss must be in (0,1]");
  Vec out;
  out.reserve(ds.num_groups());
  for (const auto& group : ds.groups) {
    const auto b = static_cast<std::size_t>(
        std::floor(gamma_loss * static_cast<double>(group.size())));
    if (b < 1) throw std::invalid_argument("loss batch empty for a group");
    const auto idx = sample_without_replacement(group.size(), b, rng);
    double s = 0.0;
    for (std::size_t i : idx) s += clip_scalar_loss(loss(params, group[i]), zeta);
    s += tau * gaussian(rng);
    out.push_back(s / static_cast<double>(b));
  }
  return out;
}

namespace detail {

inline void record_eval(TrainReport& report, std::uint64_t step,
                        const GroupDataset& eval_ds,
                        const std::vector<std::uint64_t>* alloc, const Vec* lambda) {
  EvalRecord rec;
  rec.step = step;
  rec.group_acc = group_accuracies(report.params, eval_ds);
  rec.wga = *std::min_element(rec.group_acc.begin(), rec.group_acc.end());
  rec.avg = std::accumulate(rec.group_acc.begin(), rec.group_acc.end(), 0.0) /
            static_cast<double>(rec.group_acc.size());
  if (alloc) rec.allocation = *alloc;
  if (lambda) rec.lambda = *lambda;
  report.history.push_back(std::move(rec));
}

// Sum of clipped per-example gradients over the given indices of one group.
inline void add_clipped_grads(Vec& sum, const ModelParams& params,
                              const std::vector<Example>& group,
                              const std::vector<std::size_t>& idx, double xi) {
  for (std::size_t i : idx) {
    const Vec g = clip_vector(per_example_grad(params, group[i]), xi);
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g[j];
  }
}

// SGD step on the noised batch sum; momentum applies to the noised update.
inline void apply_update(ModelParams& params, Vec& velocity, const Vec& noisy_sum,
                         double lr, double momentum, std::uint64_t batch) {
  const double scale = lr / static_cast<double>(batch);
  for (std::size_t j = 0; j < params.theta.size(); ++j) {
    velocity[j] = momentum * velocity[j] + scale * noisy_sum[j];
    params.theta[j] -= velocity[j];
  }
}

inline void finalize_guarantees(TrainReport& report) {
  report.per_group_dp.clear();
  for (const auto& curve : report.ledger.per_group) {
    const DpGuarantee g = rdp_to_dp(report.ledger.grid, curve, report.config.delta);
    report.per_group_dp.push_back({g.epsilon, report.config.delta, g.alpha});
  }
}

// Clamp allocation entries to their group sizes, redistributing the surplus
// proportionally among unclamped groups.
inline BatchAllocation clamp_allocation(BatchAllocation alloc,
                                        const std::vector<std::size_t>& sizes,
                                        Rng& rng) {
  std::size_t capacity = 0;
  for (std::size_t ng : sizes) capacity += ng;
  if (alloc.total > capacity)
    throw std::invalid_argument("batch size exceeds dataset size");
  for (int pass = 0; pass < 64; ++pass) {
    std::uint64_t surplus = 0;
    for (std::size_t g = 0; g < alloc.m.size(); ++g) {
      if (alloc.m[g] > sizes[g]) {
        surplus += alloc.m[g] - sizes[g];
        alloc.m[g] = sizes[g];
      }
    }
    if (surplus == 0) return alloc;
    Vec weights(alloc.m.size(), 0.0);
    bool any = false;
    for (std::size_t g = 0; g < alloc.m.size(); ++g) {
      if (alloc.m[g] < sizes[g]) {
        weights[g] = std::max(static_cast<double>(alloc.m[g]), 1.0);
        any = true;
      }
    }
    if (!any) throw std::logic_error("allocation clamp failed to converge");
    const BatchAllocation extra = round_to_total(weights, surplus, rng);
    for (std::size_t g = 0; g < alloc.m.size(); ++g) alloc.m[g] += extra.m[g];
  }
  throw std::logic_error("allocation clamp failed to converge");
}

}  // namespace detail

// Alg. 1: uniform batches from the pooled data, fixed clip threshold, one
// Gaussian noise draw per step.
inline TrainReport train_dpsgd(const TrainConfig& config, const GroupDataset& data,
                               Rng& rng, const GroupDataset* eval_ds = nullptr) {
  config.validate();
  if (!(config.xi > 0.0)) throw std::invalid_argument("xi must be positive");
  const std::vector<Example> pooled = data.pooled();
  if (config.batch > pooled.size()) throw std::invalid_argument("batch exceeds dataset");
  if (!eval_ds) eval_ds = &data;

  TrainReport report;
  report.config = config;
  report.params = init_params(config.arch, data.d, data.c, rng, config.hidden);
  const RdpOrderGrid grid = RdpOrderGrid::standard();
  report.ledger = PrivacyLedger(grid, data.num_groups());
  const double gamma = static_cast<double>(config.batch) / static_cast<double>(pooled.size());
  const double kappa = config.sigma > 0.0 ? config.sigma / config.xi : kInf;
  RdpCurve step_cost(grid.size(), 0.0);
  if (std::isfinite(kappa)) step_cost = mechanism_curve(grid, {gamma, kappa});
  const std::vector<RdpCurve> costs(data.num_groups(), step_cost);

  Vec velocity(report.params.theta.size(), 0.0);
  detail::record_eval(report, 0, *eval_ds, nullptr, nullptr);
  for (std::uint64_t t = 1; t <= config.steps; ++t) {
    const auto idx = sample_without_replacement(pooled.size(), config.batch, rng);
    Vec sum(report.params.theta.size(), 0.0);
    for (std::size_t i : idx) {
      const Vec g = clip_vector(per_example_grad(report.params, pooled[i]), config.xi);
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g[j];
    }
    for (double& s : sum) s += config.sigma * gaussian(rng);
    detail::apply_update(report.params, velocity, sum, config.lr, config.momentum,
                         config.batch);
    report.ledger = compose_ledger(std::move(report.ledger), costs, StepKind::kModelUpdate);
    if (t % config.k == 0 || t == config.steps)
      detail::record_eval(report, t, *eval_ds, nullptr, nullptr);
  }
  detail::finalize_guarantees(report);
  return report;
}

// Alg. 2: stratified batches with adaptive per-group sizes and balanced
// clipping. Every group's per-step model cost is held at eps_step by setting
// xi_g = sigma / kappa_alpha(m_g / n_g, eps_step); the ledger runs on the
// single working order.
inline TrainReport train_asc(const TrainConfig& config, const GroupDataset& data,
                             Rng& rng, const GroupDataset* eval_ds = nullptr) {
  config.validate();
  // sigma = 0 is the noiseless debug mode: thresholds become infinite and no
  // privacy cost accrues.
  const bool private_run = config.sigma > 0.0;
  if (private_run && !(config.eps_step > 0.0))
    throw std::invalid_argument("eps_step must be positive");
  if (!eval_ds) eval_ds = &data;
  const std::vector<std::size_t> sizes = data.group_sizes();
  const std::size_t G = data.num_groups();

  TrainReport report;
  report.config = config;
  report.params = init_params(config.arch, data.d, data.c, rng, config.hidden);
  const RdpOrderGrid grid({config.working_alpha});
  report.ledger = PrivacyLedger(grid, G);

  BatchAllocation alloc = detail::clamp_allocation(
      round_to_total(Vec(G, 1.0), config.batch, rng), sizes, rng);

  Vec thresholds(G, 0.0);
  auto recompute_thresholds = [&] {
    for (std::size_t g = 0; g < G; ++g) {
      if (!private_run) {
        thresholds[g] = kInf;
        continue;
      }
      if (alloc.m[g] == 0) {
        thresholds[g] = 0.0;
        continue;
      }
      const double rate =
          static_cast<double>(alloc.m[g]) / static_cast<double>(sizes[g]);
      thresholds[g] =
          config.sigma / invert_noise_multiplier(rate, config.working_alpha,
                                                 config.eps_step);
      const double cost = subsampled_gaussian_rdp_tight(
          config.working_alpha, {rate, config.sigma / thresholds[g]});
      report.max_step_cost_ratio =
          std::max(report.max_step_cost_ratio, cost / config.eps_step);
      if (cost > config.eps_step * (1.0 + 1e-9))
        throw std::logic_error("balanced clipping budget exceeded");
    }
  };
  recompute_thresholds();

  const double loss_cost =
      config.tau > 0.0 ? subsampled_gaussian_rdp_tight(
                             config.working_alpha,
                             {config.gamma_loss, config.tau / config.zeta})
                       : 0.0;
  const std::vector<RdpCurve> model_costs(
      G, RdpCurve(1, private_run ? config.eps_step : 0.0));
  const std::vector<RdpCurve> reweight_costs(G, RdpCurve(1, loss_cost));

  Vec velocity(report.params.theta.size(), 0.0);
  detail::record_eval(report, 0, *eval_ds, &alloc.m, nullptr);
  for (std::uint64_t t = 1; t <= config.steps; ++t) {
    Vec sum(report.params.theta.size(), 0.0);
    for (std::size_t g = 0; g < G; ++g) {
      if (alloc.m[g] == 0) continue;
      const auto idx = sample_without_replacement(sizes[g], alloc.m[g], rng);
      detail::add_clipped_grads(sum, report.params, data.groups[g], idx, thresholds[g]);
    }
    for (double& s : sum) s += config.sigma * gaussian(rng);
    detail::apply_update(report.params, velocity, sum, config.lr, config.momentum,
                         config.batch);
    report.ledger =
        compose_ledger(std::move(report.ledger), model_costs, StepKind::kModelUpdate);
    if (t % config.k == 0) {
      const Vec losses = noisy_group_losses(data, report.params, config.gamma_loss,
                                            config.zeta, config.tau, rng);
      alloc = detail::clamp_allocation(
          reweight_allocation(alloc, losses, config.temperature, rng), sizes, rng);
      recompute_thresholds();
      report.ledger =
          compose_ledger(std::move(report.ledger), reweight_costs, StepKind::kReweight);
    }
    if (t % config.k == 0 || t == config.steps)
      detail::record_eval(report, t, *eval_ds, &alloc.m, nullptr);
  }
  detail::finalize_guarantees(report);
  return report;
}

// Alg. 3 family: one group per step drawn from Categorical(lambda), fixed clip
// threshold, exponential reweighting of lambda. Ledger accrues the closed-form
// per-group curves: rate M/n_g for base/weak, M/n for prop.
inline TrainReport train_azb(const TrainConfig& config, const GroupDataset& data,
                             ZhouVariant variant, Rng& rng,
                             const GroupDataset* eval_ds = nullptr) {
  config.validate();
  if (!(config.xi > 0.0)) throw std::invalid_argument("xi must be positive");
  if (!(config.sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  if (!eval_ds) eval_ds = &data;
  const std::vector<std::size_t> sizes = data.group_sizes();
  const std::size_t G = data.num_groups();
  const std::size_t n = data.total_size();

  // Per-step batch size per group: fixed M for base/weak, proportional for prop.
  std::vector<std::uint64_t> batch_of(G, config.batch);
  if (variant == ZhouVariant::kProp) {
    Vec props(G);
    for (std::size_t g = 0; g < G; ++g) props[g] = static_cast<double>(sizes[g]);
    BatchAllocation prop_alloc = detail::clamp_allocation(
        round_to_total(props, config.batch, rng), sizes, rng);
    batch_of = prop_alloc.m;
  } else {
    for (std::size_t g = 0; g < G; ++g)
      if (config.batch > sizes[g])
        throw std::invalid_argument("batch size exceeds a group size");
  }

  TrainReport report;
  report.config = config;
  report.params = init_params(config.arch, data.d, data.c, rng, config.hidden);
  const RdpOrderGrid grid = RdpOrderGrid::standard();
  report.ledger = PrivacyLedger(grid, G);

  const double kappa = config.sigma > 0.0 ? config.sigma / config.xi : kInf;
  std::vector<RdpCurve> model_costs(G, RdpCurve(grid.size(), 0.0));
  if (std::isfinite(kappa)) {
    for (std::size_t g = 0; g < G; ++g) {
      const double rate = variant == ZhouVariant::kProp
                              ? static_cast<double>(config.batch) / static_cast<double>(n)
                              : static_cast<double>(config.batch) /
                                    static_cast<double>(sizes[g]);
      model_costs[g] = mechanism_curve(grid, {rate, kappa});
    }
  }
  const RdpCurve loss_curve =
      config.tau > 0.0
          ? mechanism_curve(grid, {config.gamma_loss, config.tau / config.zeta})
          : RdpCurve(grid.size(), 0.0);
  const std::vector<RdpCurve> reweight_costs(G, loss_curve);

  GroupWeights lambda = GroupWeights::uniform(G);
  Vec velocity(report.params.theta.size(), 0.0);
  detail::record_eval(report, 0, *eval_ds, nullptr, &lambda.lambda);
  for (std::uint64_t t = 1; t <= config.steps; ++t) {
    // Categorical draw by CDF inversion on a single uniform.
    const double u = uniform01(rng);
    std::size_t g = G - 1;
    double cum = 0.0;
    for (std::size_t j = 0; j < G; ++j) {
      cum += lambda.lambda[j];
      if (u <= cum) {
        g = j;
        break;
      }
    }
    const std::uint64_t m = batch_of[g];
    Vec sum(report.params.theta.size(), 0.0);
    if (m > 0) {
      const auto idx = sample_without_replacement(sizes[g], m, rng);
      detail::add_clipped_grads(sum, report.params, data.groups[g], idx, config.xi);
    }
    for (double& s : sum) s += config.sigma * gaussian(rng);
    detail::apply_update(report.params, velocity, sum, config.lr, config.momentum,
                         std::max<std::uint64_t>(m, 1));
    report.ledger =
        compose_ledger(std::move(report.ledger), model_costs, StepKind::kModelUpdate);
    if (t % config.k == 0) {
      const Vec losses = noisy_group_losses(data, report.params, config.gamma_loss,
                                            config.zeta, config.tau, rng);
      lambda = reweight_lambda(lambda, losses, config.temperature);
      report.ledger =
          compose_ledger(std::move(report.ledger), reweight_costs, StepKind::kReweight);
    }
    if (t % config.k == 0 || t == config.steps)
      detail::record_eval(report, t, *eval_ds, nullptr, &lambda.lambda);
  }
  detail::finalize_guarantees(report);
  return report;
}

}  // namespace groupdp
