#pragma once

#include "groupdp/data.hpp"
#include "groupdp/model.hpp"

namespace groupdp {

// Fraction of correct argmax predictions per group.
inline Vec group_accuracies(const ModelParams& params, const GroupDataset& ds) {
  Vec acc;
  acc.reserve(ds.num_groups());
  for (const auto& group : ds.groups) {
    if (group.empty()) throw std::invalid_argument("empty group");
    std::size_t correct = 0;
    for (const auto& ex : group)
      if (predict(params, ex.features) == ex.label) ++correct;
    acc.push_back(static_cast<double>(correct) / static_cast<double>(group.size()));
  }
  return acc;
}

inline double wga(const ModelParams& params, const GroupDataset& ds) {
  const Vec acc = group_accuracies(params, ds);
  return *std::min_element(acc.begin(), acc.end());
}

// Unweighted mean over groups.
inline double avg_group_accuracy(const ModelParams& params, const GroupDataset& ds) {
  const Vec acc = group_accuracies(params, ds);
  return std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
}

}  // namespace groupdp
