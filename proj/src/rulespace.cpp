#include "rulelearn/rulespace.hpp"

namespace rulelearn {

namespace {

double sigma(double x, double temperature) {
  double z = x / temperature;
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// formula levels over per-candidate statement value vectors; returns the
// pooled outputs of levels 0..L-1
std::vector<std::vector<double>> build_pool(const RuleSpaceConfig& cfg,
                                            const AttentionBundle& bundle,
                                            std::vector<std::vector<double>> stmts) {
  std::size_t n = stmts[0].size();
  std::vector<std::vector<double>> pool = stmts;
  std::vector<std::vector<double>> prev = std::move(stmts);
  for (int l = 1; l <= cfg.attention_levels(); ++l) {
    std::vector<std::vector<double>> aug = prev;
    for (const auto& row : prev) {
      std::vector<double> negated(n);
      for (std::size_t i = 0; i < n; ++i) negated[i] = 1.0 - row[i];
      aug.push_back(std::move(negated));
    }
    const auto& sf = bundle.s_f[static_cast<std::size_t>(l - 1)];
    const auto& sfp = bundle.s_f_p[static_cast<std::size_t>(l - 1)];
    std::vector<std::vector<double>> cur;
    for (int c = 0; c < cfg.C; ++c) {
      std::vector<double> lhs(n, 0.0), rhs(n, 0.0);
      for (int i = 0; i < static_cast<int>(aug.size()); ++i) {
        double wl = sf.at(c, i), wr = sfp.at(c, i);
        if (wl != 0.0)
          for (std::size_t e = 0; e < n; ++e) lhs[e] += wl * aug[static_cast<std::size_t>(i)][e];
        if (wr != 0.0)
          for (std::size_t e = 0; e < n; ++e) rhs[e] += wr * aug[static_cast<std::size_t>(i)][e];
      }
      std::vector<double> prod(n);
      for (std::size_t e = 0; e < n; ++e) prod[e] = lhs[e] * rhs[e];
      cur.push_back(std::move(prod));
    }
    for (auto& row : cur) pool.push_back(row);
    prev = std::move(cur);
  }
  return pool;
}

std::vector<double> pool_mix(const RuleSpaceConfig& cfg, const AttentionBundle& bundle,
                             std::vector<std::vector<double>> stmts) {
  std::size_t n = stmts[0].size();
  auto pool = build_pool(cfg, bundle, std::move(stmts));
  std::vector<double> out(n, 0.0);
  for (int j = 0; j < cfg.pool_size(); ++j) {
    double w = bundle.s_o.at(0, j);
    if (w == 0.0) continue;
    for (std::size_t e = 0; e < n; ++e) out[e] += w * pool[static_cast<std::size_t>(j)][e];
  }
  return out;
}

}  // namespace

std::vector<double> eval_formula_levels(const RuleSpaceConfig& cfg,
                                        const AttentionBundleT<double>& bundle,
                                        const std::vector<double>& statement_values) {
  require(static_cast<int>(statement_values.size()) == cfg.K, Errc::ShapeMismatch,
          "statement value count != K");
  std::vector<std::vector<double>> stmts;
  for (double v : statement_values) stmts.push_back({v});
  auto pool = build_pool(cfg, bundle, std::move(stmts));
  std::vector<double> out;
  out.reserve(pool.size());
  for (const auto& row : pool) out.push_back(row[0]);
  return out;
}

std::vector<double> score_candidates(const AdjacencyStore& store, const RuleSpaceConfig& cfg,
                                     const AttentionBundle& bundle, int target, int fixed_entity,
                                     RankSide side, const EvalOptions& opts) {
  require(!store.vocab.is_unary(target), Errc::ShapeMismatch,
          "score_candidates: use the unary variant for unary targets");
  int n = store.num_entities;
  require(fixed_entity >= 0 && fixed_entity < n, Errc::IndexOutOfRange, "fixed entity");
  auto us = detail::forward_path_features(store, bundle.s_phi, fixed_entity);

  std::vector<std::vector<double>> stmts;
  stmts.reserve(static_cast<std::size_t>(cfg.K));
  for (int k = 0; k < cfg.K; ++k) {
    std::vector<double> raw;
    if (side == RankSide::Tail) {
      std::vector<double> seed;
      if (store.vocab.is_unary(k)) {
        seed = detail::membership(store.matrix(k));
      } else {
        auto kap1 = detail::kappa_mix(us, bundle.s_psi, k);
        seed.assign(static_cast<std::size_t>(n), 0.0);
        store.matrix(k).accumulate(kap1.data(), seed.data(), true);
      }
      raw = detail::reverse_path_mix(store, bundle.s_phi, bundle.s_psi_p, k, seed);
    } else {
      auto kap2 = detail::kappa_mix(us, bundle.s_psi_p, k);
      if (store.vocab.is_unary(k)) {
        auto memb = detail::membership(store.matrix(k));
        double v = 0;
        for (int i = 0; i < n; ++i) v += memb[static_cast<std::size_t>(i)] * kap2[static_cast<std::size_t>(i)];
        raw.assign(static_cast<std::size_t>(n), v);
      } else {
        std::vector<double> seed(static_cast<std::size_t>(n), 0.0);
        store.matrix(k).accumulate(kap2.data(), seed.data(), false);
        raw = detail::reverse_path_mix(store, bundle.s_phi, bundle.s_psi, k, seed);
      }
    }
    for (auto& x : raw) x = sigma(x, opts.temperature);
    stmts.push_back(std::move(raw));
  }
  return pool_mix(cfg, bundle, std::move(stmts));
}

std::vector<double> score_candidates_unary(const AdjacencyStore& store, const RuleSpaceConfig& cfg,
                                           const AttentionBundle& bundle, int target,
                                           const EvalOptions& opts) {
  require(store.vocab.is_unary(target), Errc::ShapeMismatch,
          "score_candidates_unary: binary target");
  int n = store.num_entities;
  std::vector<std::vector<double>> membs(static_cast<std::size_t>(cfg.K));
  for (int k = 0; k < cfg.K; ++k)
    if (store.vocab.is_unary(k)) membs[static_cast<std::size_t>(k)] = detail::membership(store.matrix(k));

  std::vector<std::vector<double>> stmts(static_cast<std::size_t>(cfg.K),
                                         std::vector<double>(static_cast<std::size_t>(n), 0.0));
  std::vector<double> applied(static_cast<std::size_t>(n));
  for (int w = 0; w < n; ++w) {
    auto us = detail::forward_path_features(store, bundle.s_phi, w);
    for (int k = 0; k < cfg.K; ++k) {
      double raw = 0;
      auto kap2 = detail::kappa_mix(us, bundle.s_psi_p, k);
      if (store.vocab.is_unary(k)) {
        const auto& memb = membs[static_cast<std::size_t>(k)];
        for (int i = 0; i < n; ++i) raw += memb[static_cast<std::size_t>(i)] * kap2[static_cast<std::size_t>(i)];
      } else {
        auto kap1 = detail::kappa_mix(us, bundle.s_psi, k);
        std::fill(applied.begin(), applied.end(), 0.0);
        store.matrix(k).accumulate(kap1.data(), applied.data(), true);
        for (int i = 0; i < n; ++i) raw += applied[static_cast<std::size_t>(i)] * kap2[static_cast<std::size_t>(i)];
      }
      stmts[static_cast<std::size_t>(k)][static_cast<std::size_t>(w)] = sigma(raw, opts.temperature);
    }
  }
  return pool_mix(cfg, bundle, std::move(stmts));
}

}  // namespace rulelearn
