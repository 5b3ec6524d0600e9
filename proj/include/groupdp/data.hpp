#pragma once

#include <array>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "groupdp/common.hpp"
#include "groupdp/model.hpp"

namespace groupdp {

// Examples partitioned by group. Group g's examples live in groups[g].
struct GroupDataset {
  std::vector<std::vector<Example>> groups;
  std::size_t d = 0;
  std::size_t c = 0;

  std::size_t num_groups() const { return groups.size(); }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
  }

  std::vector<std::size_t> group_sizes() const {
    std::vector<std::size_t> sizes;
    sizes.reserve(groups.size());
    for (const auto& g : groups) sizes.push_back(g.size());
    return sizes;
  }

  // Flattened view, group-major order.
  std::vector<Example> pooled() const {
    std::vector<Example> all;
    all.reserve(total_size());
    for (const auto& g : groups) all.insert(all.end(), g.begin(), g.end());
    return all;
  }

  double default_delta() const { return 1.0 / (2.0 * static_cast<double>(total_size())); }
};

// Class-conditional isotropic Gaussians per group.
struct SynthGroupSpec {
  std::size_t size = 0;
  std::vector<Vec> class_means;  // one d-vector per class
  double spread = 1.0;
};

struct SynthSpec {
  std::size_t d = 0;
  std::size_t c = 0;
  std::vector<SynthGroupSpec> groups;

  void validate() const {
    if (d == 0 || c < 2 || groups.empty()) throw std::invalid_argument("invalid synth spec");
    for (const auto& g : groups) {
      if (g.size < 1) throw std::invalid_argument("group size must be >= 1");
      if (!(g.spread > 0.0)) throw std::invalid_argument("spread must be positive");
      if (g.class_means.size() != c) throw std::invalid_argument("class mean count mismatch");
      for (const auto& m : g.class_means)
        if (m.size() != d) throw std::invalid_argument("class mean dimension mismatch");
    }
  }
};

// Desk-scale unbalanced dataset: two easy majority groups with well-separated
// classes, one 10x-smaller minority group whose classes sit closer together
// and shifted right, so the pooled decision boundary (near x = 0) mislabels
// roughly half the minority while a boundary near x = 1.3 serves every group.
// All groups share the second coordinate's distribution, so no linear model
// can give the minority its own boundary.
inline SynthSpec default_synth_spec() {
  SynthSpec s;
  s.d = 2;
  s.c = 2;
  s.groups = {
      {1000, {{-2.0, 0.0}, {2.0, 0.0}}, 0.5},
      {1000, {{-2.0, 0.0}, {2.0, 0.0}}, 0.5},
      {100, {{0.6, 0.0}, {2.8, 0.0}}, 0.5},
  };
  return s;
}

inline GroupDataset generate_synthetic(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  GroupDataset ds;
  ds.d = spec.d;
  ds.c = spec.c;
  ds.groups.resize(spec.groups.size());
  for (std::size_t g = 0; g < spec.groups.size(); ++g) {
    const auto& gs = spec.groups[g];
    ds.groups[g].reserve(gs.size);
    for (std::size_t i = 0; i < gs.size; ++i) {
      Example ex;
      ex.group = static_cast<int>(g);
      ex.label = static_cast<int>(i % spec.c);  // balanced classes within each group
      ex.features.resize(spec.d);
      const Vec& mean = gs.class_means[static_cast<std::size_t>(ex.label)];
      for (std::size_t j = 0; j < spec.d; ++j)
        ex.features[j] = mean[j] + gs.spread * gaussian(rng);
      ds.groups[g].push_back(std::move(ex));
    }
  }
  return ds;
}

namespace detail {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline long parse_int(const std::string& tok, std::size_t row, const char* what) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size())
    throw ParseError("row " + std::to_string(row) + ": non-integer " + what + " '" + tok + "'");
  return v;
}

inline double parse_double(const std::string& tok, std::size_t row) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || !std::isfinite(v))
    throw ParseError("row " + std::to_string(row) + ": non-numeric feature '" + tok + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

// Schema: header `group,label,f0,...,f{d-1}`; integer group and label columns,
// decimal features. Group and class counts are inferred; row order is
// preserved within each group. Errors carry the 1-based row number.
inline GroupDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw detail::ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw detail::ParseError("row 1: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "group" || header[1] != "label")
    throw detail::ParseError("row 1: header must start with group,label,f0,...");
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j + 2] != "f" + std::to_string(j))
      throw detail::ParseError("row 1: unexpected feature column '" + header[j + 2] + "'");

  GroupDataset ds;
  ds.d = d;
  std::size_t row = 1;
  long max_label = -1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto toks = detail::split_csv_line(line);
    if (toks.size() != d + 2)
      throw detail::ParseError("row " + std::to_string(row) + ": expected " +
                               std::to_string(d + 2) + " columns, got " +
                               std::to_string(toks.size()));
    Example ex;
    const long g = detail::parse_int(toks[0], row, "group");
    const long y = detail::parse_int(toks[1], row, "label");
    if (g < 0) throw detail::ParseError("row " + std::to_string(row) + ": negative group");
    if (y < 0) throw detail::ParseError("row " + std::to_string(row) + ": negative label");
    ex.group = static_cast<int>(g);
    ex.label = static_cast<int>(y);
    max_label = std::max(max_label, y);
    ex.features.resize(d);
    for (std::size_t j = 0; j < d; ++j) ex.features[j] = detail::parse_double(toks[j + 2], row);
    if (static_cast<std::size_t>(g) >= ds.groups.size()) ds.groups.resize(g + 1);
    ds.groups[static_cast<std::size_t>(g)].push_back(std::move(ex));
  }
  if (ds.groups.empty()) throw detail::ParseError("row 1: no data rows");
  for (std::size_t g = 0; g < ds.groups.size(); ++g)
    if (ds.groups[g].empty())
      throw detail::ParseError("group " + std::to_string(g) + " has no rows");
  ds.c = static_cast<std::size_t>(max_label) + 1;
  if (ds.c < 2) ds.c = 2;
  return ds;
}

inline void save_csv(const GroupDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "group,label";
  for (std::size_t j = 0; j < ds.d; ++j) out << ",f" << j;
  out << "\n";
  out.precision(17);
  for (const auto& group : ds.groups) {
    for (const auto& ex : group) {
      out << ex.group << ',' << ex.label;
      for (double f : ex.features) out << ',' << f;
      out << "\n";
    }
  }
}

// Full random permutation of [0, n); helper for split.
inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

// Per-group stratified split into train/validation/test.
inline std::array<GroupDataset, 3> split(const GroupDataset& ds,
                                         const std::array<double, 3>& fractions,
                                         Rng& rng) {
  double s = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("fractions must be positive");
    s += f;
  }
  if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("fractions must sum to 1");
  std::array<GroupDataset, 3> parts;
  for (auto& p : parts) {
    p.d = ds.d;
    p.c = ds.c;
    p.groups.resize(ds.num_groups());
  }
  for (std::size_t g = 0; g < ds.num_groups(); ++g) {
    const std::size_t n = ds.groups[g].size();
    std::size_t n0 = static_cast<std::size_t>(std::nearbyint(fractions[0] * n));
    std::size_t n1 = static_cast<std::size_t>(std::nearbyint(fractions[1] * n));
    if (n0 + n1 > n) n1 = n - n0;
    const std::size_t n2 = n - n0 - n1;
    if (n0 == 0 || n1 == 0 || n2 == 0)
      throw std::invalid_argument("group " + std::to_string(g) +
                                  " too small to populate all parts");
    auto perm = random_permutation(n, rng);
    std::size_t i = 0;
    for (; i < n0; ++i) parts[0].groups[g].push_back(ds.groups[g][perm[i]]);
    for (; i < n0 + n1; ++i) parts[1].groups[g].push_back(ds.groups[g][perm[i]]);
    for (; i < n; ++i) parts[2].groups[g].push_back(ds.groups[g][perm[i]]);
  }
  return parts;
}

}  // namespace groupdp
