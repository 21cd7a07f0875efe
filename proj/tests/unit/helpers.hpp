#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "p2o/env.hpp"
#include "p2o/policy.hpp"
#include "p2o/rng.hpp"

namespace testing_helpers {

// Policy whose logit for (pos, v) is gain * features[pos * V + v]. Needs d >= L * V.
inline p2o::PolicyParams readout_policy(int V, int L, int d, double gain = 1.0) {
  p2o::PolicyParams p(V, L, d);
  for (int l = 0; l < L; ++l)
    for (int v = 0; v < V; ++v) p.weight(l, v, l * V + v) = gain;
  return p;
}

// Genome length L over alphabet V + 1: symbol s > 0 at position l adds
// `strength` to feature l * V + (s - 1), so genome (t_l + 1) forces target t
// under readout_policy.
inline p2o::TemplateSpace forcing_space(int V, int L, int d, double strength = 50.0) {
  std::vector<p2o::Vector> table;
  for (int l = 0; l < L; ++l) {
    for (int s = 0; s <= V; ++s) {
      p2o::Vector v(static_cast<std::size_t>(d), 0.0);
      if (s > 0) v[static_cast<std::size_t>(l * V + s - 1)] = strength;
      table.push_back(std::move(v));
    }
  }
  return p2o::TemplateSpace(L, V + 1, d, std::move(table));
}

inline p2o::Tokens forcing_genome(const p2o::Tokens& target) {
  p2o::Tokens g;
  for (int t : target) g.push_back(t + 1);
  return g;
}

inline p2o::PolicyParams random_policy(int V, int L, int d, std::uint64_t seed, double scale = 0.5) {
  p2o::PolicyParams p(V, L, d);
  p2o::Rng rng(seed);
  for (std::size_t i = 0; i < p.size(); ++i) p.at(i) = scale * rng.normal();
  return p;
}

inline p2o::Vector random_vector(int d, p2o::Rng& rng, double scale = 1.0) {
  p2o::Vector v(static_cast<std::size_t>(d));
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline std::string temp_dir(const std::string& name) {
  const std::filesystem::path p = std::filesystem::path(P2O_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline bool bit_equal(const p2o::PolicyParams& a, const p2o::PolicyParams& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.at(i), y = b.at(i);
    if (std::memcmp(&x, &y, sizeof x) != 0) return false;
  }
  return true;
}

}  // namespace testing_helpers
