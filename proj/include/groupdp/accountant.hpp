#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "groupdp/common.hpp"

namespace groupdp {

// Ascending integer Renyi orders, all >= 2.
struct RdpOrderGrid {
  std::vector<int> orders;

  RdpOrderGrid() = default;
  explicit RdpOrderGrid(std::vector<int> o) : orders(std::move(o)) {
    if (orders.empty()) throw std::invalid_argument("order grid must be nonempty");
    for (std::size_t i = 0; i < orders.size(); ++i) {
      if (orders[i] < 2) throw std::invalid_argument("orders must be >= 2");
      if (i > 0 && orders[i] <= orders[i - 1])
        throw std::invalid_argument("orders must be strictly increasing");
    }
  }

  // Integers {2..64} plus a sparse high-order tail.
  static RdpOrderGrid standard() {
    std::vector<int> o;
    for (int a = 2; a <= 64; ++a) o.push_back(a);
    for (int a : {80, 96, 128, 192, 256}) o.push_back(a);
    return RdpOrderGrid(std::move(o));
  }

  bool operator==(const RdpOrderGrid& other) const { return orders == other.orders; }
  std::size_t size() const { return orders.size(); }
};

// Divergence bound per order, parallel to the owning grid. Entries are >= 0;
// +inf is an explicit "no guarantee at this order" sentinel.
struct RdpCurve {
  Vec eps;

  RdpCurve() = default;
  explicit RdpCurve(std::size_t n, double v = 0.0) : eps(n, v) {}

  RdpCurve& operator+=(const RdpCurve& o) {
    if (eps.size() != o.eps.size()) throw std::invalid_argument("curve size mismatch");
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] += o.eps[i];
    return *this;
  }
};

// Subsampled Gaussian mechanism parameters: sampling rate and noise multiplier.
struct MechanismSpec {
  double gamma = 0.0;  // m/n in [0,1]
  double kappa = 1.0;  // sigma/xi > 0

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0))
      throw std::invalid_argument("sampling rate must be in [0,1]");
    if (!(kappa > 0.0)) throw std::invalid_argument("noise multiplier must be positive");
  }
};

// Gaussian mechanism on a clipped sum, replace-one neighbors (sensitivity 2C):
// eps = alpha / (2 (kappa/2)^2) = 2 alpha / kappa^2.
inline double gaussian_rdp(int alpha, double kappa) {
  if (alpha < 2) throw std::invalid_argument("alpha must be >= 2");
  if (!(kappa > 0.0)) throw std::invalid_argument("noise multiplier must be positive");
  return 2.0 * alpha / (kappa * kappa);
}

// Series upper bound for the without-replacement subsampled Gaussian mechanism
// at integer order alpha >= 2:
//   (1/(alpha-1)) log(1 + g^2 C(a,2) min{4(e^{e2}-1), 2 e^{e2}}
//                       + sum_{j=3}^{a} g^j C(a,j) 2 e^{(j-1) e_j}),
// with e_j = gaussian_rdp(j, kappa). The interior sum is evaluated in the log
// domain. Caution: the j>=3 terms do not vanish as kappa grows, so this bound
// has a kappa-independent floor for alpha >= 3; use the tight variant below
// wherever an invertible bound is required.
inline double subsampled_gaussian_rdp(int alpha, const MechanismSpec& spec) {
  if (alpha < 2) throw std::invalid_argument("alpha must be >= 2");
  spec.validate();
  const double g = spec.gamma;
  if (g == 0.0) return 0.0;
  const double log_g = std::log(g);
  std::vector<double> log_terms;
  log_terms.reserve(static_cast<std::size_t>(alpha));
  const double e2 = gaussian_rdp(2, spec.kappa);
  // min{4(e^{e2}-1), 2 e^{e2}} in the log domain: the first branch wins iff
  // e2 < ln 2.
  const double log_min = e2 < M_LN2 ? std::log(4.0) + std::log(std::expm1(e2))
                                    : M_LN2 + e2;
  log_terms.push_back(2.0 * log_g + log_binomial(alpha, 2) + log_min);
  for (int j = 3; j <= alpha; ++j) {
    log_terms.push_back(j * log_g + log_binomial(alpha, j) + M_LN2 +
                        (j - 1) * gaussian_rdp(j, spec.kappa));
  }
  return log1p_exp(log_sum_exp(log_terms)) / (alpha - 1);
}

// Tight integer-order bound for the subsampled Gaussian mechanism under
// replace-one neighbors (shift 2C, noise sigma = kappa C):
//   (1/(alpha-1)) log sum_{j=0}^{alpha} C(a,j) (1-g)^{a-j} g^j e^{2 j(j-1)/kappa^2}.
// Vanishes as kappa -> inf for every gamma, reduces to gaussian_rdp at gamma=1,
// and is monotone in both parameters; this is the accountant used operationally.
inline double subsampled_gaussian_rdp_tight(int alpha, const MechanismSpec& spec) {
  if (alpha < 2) throw std::invalid_argument("alpha must be >= 2");
  spec.validate();
  const double g = spec.gamma;
  if (g == 0.0) return 0.0;
  const double inv_k2 = 2.0 / (spec.kappa * spec.kappa);
  if (g == 1.0) return gaussian_rdp(alpha, spec.kappa);
  const double log_g = std::log(g);
  const double log_1mg = std::log1p(-g);
  std::vector<double> log_terms;
  log_terms.reserve(static_cast<std::size_t>(alpha) + 1);
  for (int j = 0; j <= alpha; ++j) {
    log_terms.push_back(log_binomial(alpha, j) + (alpha - j) * log_1mg +
                        j * log_g + j * (j - 1.0) * inv_k2);
  }
  return log_sum_exp(log_terms) / (alpha - 1);
}

inline RdpCurve mechanism_curve(const RdpOrderGrid& grid, const MechanismSpec& spec) {
  RdpCurve c(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    c.eps[i] = subsampled_gaussian_rdp_tight(grid.orders[i], spec);
  return c;
}

struct DpGuarantee {
  double epsilon = kInf;
  int alpha = 0;  // minimizing order
};

// (eps, delta)-DP from an RDP curve: min over orders of eps(a) + log(1/d)/(a-1).
inline DpGuarantee rdp_to_dp(const RdpOrderGrid& grid, const RdpCurve& curve,
                             double delta) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("delta must be in (0,1)");
  if (grid.size() != curve.eps.size() || grid.size() == 0)
    throw std::invalid_argument("curve does not match grid");
  const double log_inv_delta = std::log(1.0 / delta);
  DpGuarantee best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(curve.eps[i])) continue;
    const double e = curve.eps[i] + log_inv_delta / (grid.orders[i] - 1);
    if (e < best.epsilon) best = {e, grid.orders[i]};
  }
  if (best.alpha == 0) throw std::invalid_argument("curve has no finite entry");
  return best;
}

// Smallest kappa with eps_alpha(gamma, kappa) <= eps_target, to relative 1e-6,
// always returning the safe (larger-noise) bracket endpoint. Bracket search
// doubles/halves from kappa=1 up to 200 times.
inline double invert_noise_multiplier(double gamma, int alpha, double eps_target) {
  if (!(eps_target > 0.0)) throw std::invalid_argument("eps_target must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("sampling rate must be in (0,1]");
  auto cost = [&](double k) {
    return subsampled_gaussian_rdp_tight(alpha, {gamma, k});
  };
  double lo = 1.0, hi = 1.0;
  if (cost(1.0) > eps_target) {
    int i = 0;
    while (cost(hi) > eps_target) {
      hi *= 2.0;
      if (++i > 200) throw std::runtime_error("noise multiplier bracket not found");
    }
    lo = hi / 2.0;
  } else {
    int i = 0;
    while (cost(lo) <= eps_target) {
      lo /= 2.0;
      if (++i > 200) return 2.0 * lo;  // target loose beyond bracket range
    }
    hi = 2.0 * lo;
  }
  while ((hi - lo) / hi > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    (cost(mid) > eps_target ? lo : hi) = mid;
  }
  return hi;
}

// Accumulated per-group RDP cost over a training run. Single writer by contract.
struct PrivacyLedger {
  RdpOrderGrid grid;
  std::vector<RdpCurve> per_group;
  std::uint64_t step_count = 0;
  std::uint64_t reweight_count = 0;

  PrivacyLedger() = default;
  PrivacyLedger(RdpOrderGrid g, std::size_t num_groups)
      : grid(std::move(g)), per_group(num_groups, RdpCurve(grid.size())) {}

  // Entrywise max over groups: the uniform guarantee.
  RdpCurve uniform_curve() const {
    if (per_group.empty()) throw std::invalid_argument("ledger has no groups");
    RdpCurve u(grid.size(), 0.0);
    for (const auto& c : per_group)
      for (std::size_t i = 0; i < u.eps.size(); ++i)
        u.eps[i] = std::max(u.eps[i], c.eps[i]);
    return u;
  }
};

enum class StepKind { kModelUpdate, kReweight };

// Entrywise composition of per-group costs onto the ledger.
inline PrivacyLedger compose_ledger(PrivacyLedger ledger,
                                    const std::vector<RdpCurve>& group_costs,
                                    StepKind kind) {
  if (group_costs.size() != ledger.per_group.size())
    throw std::invalid_argument("group count mismatch");
  for (const auto& c : group_costs)
    if (c.eps.size() != ledger.grid.size())
      throw std::invalid_argument("cost curve does not match ledger grid");
  for (std::size_t g = 0; g < group_costs.size(); ++g) ledger.per_group[g] += group_costs[g];
  (kind == StepKind::kModelUpdate ? ledger.step_count : ledger.reweight_count) += 1;
  return ledger;
}

enum class ZhouVariant { kBase, kWeak, kProp };

// Closed-form per-group RDP curves for the aZB family after T steps and
// floor(T/k) loss releases. base/weak: group rate M/n_g; prop: rate M/n for
// every group.
inline std::vector<RdpCurve> total_epsilon_zhou(
    ZhouVariant variant, std::uint64_t steps, std::uint64_t reweight_period,
    std::uint64_t batch_size, const std::vector<std::size_t>& group_sizes,
    double kappa_model, const MechanismSpec& loss_spec,
    const RdpOrderGrid& grid = RdpOrderGrid::standard()) {
  if (steps < 1 || reweight_period < 1)
    throw std::invalid_argument("steps and reweight period must be >= 1");
  if (group_sizes.empty()) throw std::invalid_argument("no groups");
  std::size_t n = 0;
  for (std::size_t ng : group_sizes) n += ng;
  const double reweights = static_cast<double>(steps / reweight_period);
  RdpCurve loss_curve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    loss_curve.eps[i] = subsampled_gaussian_rdp_tight(grid.orders[i], loss_spec);

  std::vector<RdpCurve> out;
  out.reserve(group_sizes.size());
  for (std::size_t ng : group_sizes) {
    double rate;
    if (variant == ZhouVariant::kProp) {
      rate = static_cast<double>(batch_size) / static_cast<double>(n);
    } else {
      if (batch_size > ng)
        throw std::invalid_argument("batch size exceeds a group size");
      rate = static_cast<double>(batch_size) / static_cast<double>(ng);
    }
    RdpCurve c(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      c.eps[i] = static_cast<double>(steps) *
                     subsampled_gaussian_rdp_tight(grid.orders[i], {rate, kappa_model}) +
                 reweights * loss_curve.eps[i];
    }
    out.push_back(std::move(c));
  }
  return out;
}

struct PrivacyTarget {
  double epsilon = 1.0;
  double delta = 1e-5;
};

// Training-run shape for calibration: T model steps at rate gamma_model plus
// floor(T/k) loss releases at rate gamma_loss with the loss noise multiplier
// slaved as dro_scale * kappa_model. reweight_period = 0 means no releases.
struct CalibrationSchedule {
  std::uint64_t steps = 1;
  std::uint64_t reweight_period = 0;
  double gamma_model = 0.0;
  double gamma_loss = 1.0;
  double dro_scale = 25.0;
};

struct CalibrationResult {
  double kappa_model = 0.0;
  double kappa_loss = 0.0;
  int working_alpha = 0;
  double achieved_epsilon = 0.0;
};

// Smallest base noise multiplier (within [0.1, 1e6]) whose composed run meets
// the (eps, delta) target, never exceeding it; the minimizing order of the
// final conversion is reported as the working order.
inline CalibrationResult calibrate_base_noise(
    const PrivacyTarget& target, const CalibrationSchedule& sched,
    const RdpOrderGrid& grid = RdpOrderGrid::standard()) {
  if (!(target.epsilon > 0.0)) throw std::invalid_argument("target epsilon must be positive");
  if (!(target.delta > 0.0 && target.delta < 1.0))
    throw std::invalid_argument("delta must be in (0,1)");
  if (!(sched.dro_scale > 0.0)) throw std::invalid_argument("dro_scale must be positive");
  const double reweights =
      sched.reweight_period >= 1
          ? static_cast<double>(sched.steps / sched.reweight_period)
          : 0.0;
  auto total = [&](double kappa) {
    RdpCurve c(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const int a = grid.orders[i];
      double v = static_cast<double>(sched.steps) *
                 subsampled_gaussian_rdp_tight(a, {sched.gamma_model, kappa});
      if (reweights > 0.0)
        v += reweights * subsampled_gaussian_rdp_tight(
                             a, {sched.gamma_loss, sched.dro_scale * kappa});
      c.eps[i] = v;
    }
    return rdp_to_dp(grid, c, target.delta);
  };
  double lo = 0.1, hi = 1e6;
  if (total(hi).epsilon > target.epsilon)
    throw std::runtime_error("privacy target unreachable within kappa <= 1e6");
  if (total(lo).epsilon <= target.epsilon) hi = lo;
  for (int i = 0; i < 200 && (hi - lo) / hi > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    (total(mid).epsilon > target.epsilon ? lo : hi) = mid;
  }
  const DpGuarantee got = total(hi);
  return {hi, sched.dro_scale * hi, got.alpha, got.epsilon};
}

}  // namespace groupdp
