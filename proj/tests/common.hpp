#ifndef RULELEARN_TESTS_COMMON_HPP
#define RULELEARN_TESTS_COMMON_HPP

#include <random>
#include <string>
#include <vector>

#include "rulelearn/kb.hpp"
#include "rulelearn/rulespace.hpp"

namespace rulelearn::testing {

// entities e0,e1,e2 with Succ(e0,e1), Succ(e1,e2) and Even = {e0, e2}
inline KnowledgeBase toy3() {
  return parse_facts({"e0\tSucc\te1", "e1\tSucc\te2", "e0\tEven", "e2\tEven"},
                     {"Succ\t2", "Even\t1"});
}

// a seeded random KB: n entities, the given unary/binary predicate counts,
// each binary matrix with ~density*n^2 edges
inline KnowledgeBase random_kb(int n, int n_unary, int n_binary, double density,
                               std::uint64_t seed) {
  std::vector<std::string> meta, facts;
  for (int u = 0; u < n_unary; ++u) meta.push_back("U" + std::to_string(u) + "\t1");
  for (int b = 0; b < n_binary; ++b) meta.push_back("B" + std::to_string(b) + "\t2");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> ent(0, n - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  // every entity appears so the table is dense in first-appearance order
  for (int i = 0; i + 1 < n; ++i)
    facts.push_back("e" + std::to_string(i) + "\tB0\te" + std::to_string(i + 1));
  int binary_edges = std::max(1, static_cast<int>(density * n * n));
  for (int b = 0; b < n_binary; ++b)
    for (int k = 0; k < binary_edges; ++k)
      facts.push_back("e" + std::to_string(ent(rng)) + "\tB" + std::to_string(b) + "\te" +
                      std::to_string(ent(rng)));
  for (int u = 0; u < n_unary; ++u)
    for (int i = 0; i < n; ++i)
      if (coin(rng) < 0.4) facts.push_back("e" + std::to_string(i) + "\tU" + std::to_string(u));
  return parse_facts(facts, meta);
}

inline Tensor64 random_stochastic(int rows, int cols, std::mt19937_64& rng) {
  Tensor64 t = Tensor64::zeros({rows, cols});
  std::normal_distribution<double> dist(0.0, 1.5);
  for (int i = 0; i < rows; ++i) {
    double denom = 0;
    for (int j = 0; j < cols; ++j) {
      t.at(i, j) = std::exp(dist(rng));
      denom += t.at(i, j);
    }
    for (int j = 0; j < cols; ++j) t.at(i, j) /= denom;
  }
  return t;
}

inline AttentionBundle random_bundle(const RuleSpaceConfig& cfg, std::mt19937_64& rng) {
  AttentionBundle b;
  b.s_phi = random_stochastic(cfg.T, cfg.K, rng);
  b.s_psi = random_stochastic(cfg.K, cfg.T, rng);
  b.s_psi_p = random_stochastic(cfg.K, cfg.T, rng);
  for (int l = 1; l <= cfg.attention_levels(); ++l) {
    b.s_f.push_back(random_stochastic(cfg.C, cfg.level_input_size(l), rng));
    b.s_f_p.push_back(random_stochastic(cfg.C, cfg.level_input_size(l), rng));
  }
  b.s_o = random_stochastic(1, cfg.pool_size(), rng);
  return b;
}

// one-hot row helper for hand-built bundles
inline void set_hot(Tensor64& t, int row, int idx) {
  for (int j = 0; j < t.shape[1]; ++j) t.at(row, j) = 0.0;
  t.at(row, idx) = 1.0;
}

}  // namespace rulelearn::testing

#endif
