#ifndef RULELEARN_RULESPACE_HPP
#define RULELEARN_RULESPACE_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rulelearn/kb.hpp"
#include "rulelearn/tape.hpp"
#include "rulelearn/tensor.hpp"

namespace rulelearn {

// Shape of the relaxed rule space: K operators (after inverse/identity
// augmentation), paths up to length T, L formula levels with C formulas
// kept per level, embedding width d.
struct RuleSpaceConfig {
  int K = 0;
  int T = 2;
  int L = 0;
  int C = 2;
  int d = 32;
  int heads = 4;
  double temperature = 1.0;

  void validate() const {
    require(K >= 1, Errc::ShapeMismatch, "K must be >= 1");
    require(T >= 1, Errc::ShapeMismatch, "T must be >= 1");
    require(L >= 0, Errc::ShapeMismatch, "L must be >= 0");
    require(C >= 1, Errc::ShapeMismatch, "C must be >= 1");
    require(d >= heads && d % heads == 0, Errc::HeadDivisibility, "d must be divisible by heads");
    require(temperature > 0, Errc::ShapeMismatch, "temperature must be positive");
  }

  // levels that carry formula attentions: 1 .. L-1
  int attention_levels() const { return std::max(0, L - 1); }

  // width of the augmented input to level l (2K at level 1, 2C above)
  int level_input_size(int l) const { return 2 * (l == 1 ? K : C); }

  // the output pool is the union of levels 0..L-1 (level 0 alone for L<=1)
  int pool_size() const { return K + attention_levels() * C; }

  bool operator==(const RuleSpaceConfig& o) const {
    return K == o.K && T == o.T && L == o.L && C == o.C && d == o.d && heads == o.heads &&
           temperature == o.temperature;
  }
};

// All attention values for one target predicate.
template <class Real>
struct AttentionBundleT {
  TensorT<Real> s_phi;               // T x K: operator picked at each step
  TensorT<Real> s_psi, s_psi_p;      // K x T: path length per statement argument
  std::vector<TensorT<Real>> s_f;    // level l in [1, L-1]: C x (2 * prev)
  std::vector<TensorT<Real>> s_f_p;
  TensorT<Real> s_o;                 // pool_size

  void validate(const RuleSpaceConfig& cfg, double tol = 1e-6) const {
    auto check = [&](const TensorT<Real>& t, int rows, int cols, const char* name) {
      require(t.rank() == 2 && t.shape[0] == rows && t.shape[1] == cols, Errc::ShapeMismatch,
              std::string("bundle.") + name + " shape");
      for (int i = 0; i < rows; ++i) {
        double s = 0;
        for (int j = 0; j < cols; ++j) {
          double x = t.at(i, j);
          require(x >= -tol, Errc::ShapeMismatch, std::string("bundle.") + name + " negative entry");
          s += x;
        }
        require(std::abs(s - 1.0) <= tol, Errc::ShapeMismatch,
                std::string("bundle.") + name + " row not stochastic");
      }
    };
    check(s_phi, cfg.T, cfg.K, "s_phi");
    check(s_psi, cfg.K, cfg.T, "s_psi");
    check(s_psi_p, cfg.K, cfg.T, "s_psi_p");
    require(static_cast<int>(s_f.size()) == cfg.attention_levels(), Errc::ShapeMismatch,
            "bundle.s_f level count");
    require(s_f_p.size() == s_f.size(), Errc::ShapeMismatch, "bundle.s_f_p level count");
    for (int l = 1; l <= cfg.attention_levels(); ++l) {
      check(s_f[static_cast<std::size_t>(l - 1)], cfg.C, cfg.level_input_size(l), "s_f");
      check(s_f_p[static_cast<std::size_t>(l - 1)], cfg.C, cfg.level_input_size(l), "s_f_p");
    }
    check(s_o, 1, cfg.pool_size(), "s_o");
  }

  bool is_one_hot(double tol = 0.0) const {
    auto row_hot = [&](const TensorT<Real>& t) {
      int rows = t.rank() == 2 ? t.shape[0] : 1;
      int cols = t.rank() == 2 ? t.shape[1] : t.shape[0];
      for (int i = 0; i < rows; ++i) {
        int ones = 0;
        for (int j = 0; j < cols; ++j) {
          double x = t.v[static_cast<std::size_t>(i) * cols + j];
          if (std::abs(x - 1.0) <= tol)
            ++ones;
          else if (std::abs(x) > tol)
            return false;
        }
        if (ones != 1) return false;
      }
      return true;
    };
    if (!row_hot(s_phi) || !row_hot(s_psi) || !row_hot(s_psi_p) || !row_hot(s_o)) return false;
    for (const auto& t : s_f)
      if (!row_hot(t)) return false;
    for (const auto& t : s_f_p)
      if (!row_hot(t)) return false;
    return true;
  }

  template <class Other>
  AttentionBundleT<Other> cast() const {
    AttentionBundleT<Other> o;
    o.s_phi = s_phi.template cast<Other>();
    o.s_psi = s_psi.template cast<Other>();
    o.s_psi_p = s_psi_p.template cast<Other>();
    for (const auto& t : s_f) o.s_f.push_back(t.template cast<Other>());
    for (const auto& t : s_f_p) o.s_f_p.push_back(t.template cast<Other>());
    o.s_o = s_o.template cast<Other>();
    return o;
  }
};

using AttentionBundle = AttentionBundleT<double>;

// Replaces every attention row with the one-hot of its largest entry,
// ties toward the lowest index. Idempotent.
template <class Real>
AttentionBundleT<Real> harden(const AttentionBundleT<Real>& b) {
  AttentionBundleT<Real> out = b;
  auto hot = [](TensorT<Real>& t) {
    int rows = t.rank() == 2 ? t.shape[0] : 1;
    int cols = t.rank() == 2 ? t.shape[1] : t.shape[0];
    for (int i = 0; i < rows; ++i) {
      Real* row = t.v.data() + static_cast<std::ptrdiff_t>(i) * cols;
      int best = 0;
      for (int j = 1; j < cols; ++j)
        if (row[j] > row[best]) best = j;
      for (int j = 0; j < cols; ++j) row[j] = (j == best) ? Real(1) : Real(0);
    }
  };
  hot(out.s_phi);
  hot(out.s_psi);
  hot(out.s_psi_p);
  for (auto& t : out.s_f) hot(t);
  for (auto& t : out.s_f_p) hot(t);
  hot(out.s_o);
  return out;
}

// Attention node ids on a tape (same layout as AttentionBundleT).
struct BundleNodes {
  int s_phi = -1;
  int s_psi = -1, s_psi_p = -1;
  std::vector<int> s_f, s_f_p;
  int s_o = -1;
};

template <class Real>
AttentionBundleT<Real> bundle_values(const TapeT<Real>& tape, const BundleNodes& b) {
  AttentionBundleT<Real> out;
  out.s_phi = tape.value(b.s_phi);
  out.s_psi = tape.value(b.s_psi);
  out.s_psi_p = tape.value(b.s_psi_p);
  for (int id : b.s_f) out.s_f.push_back(tape.value(id));
  for (int id : b.s_f_p) out.s_f_p.push_back(tape.value(id));
  out.s_o = tape.value(b.s_o);
  return out;
}

template <class Real>
BundleNodes bundle_constants(TapeT<Real>& tape, const AttentionBundleT<Real>& b) {
  BundleNodes out;
  out.s_phi = tape.constant(b.s_phi);
  out.s_psi = tape.constant(b.s_psi);
  out.s_psi_p = tape.constant(b.s_psi_p);
  for (const auto& t : b.s_f) out.s_f.push_back(tape.constant(t));
  for (const auto& t : b.s_f_p) out.s_f_p.push_back(tape.constant(t));
  out.s_o = tape.constant(b.s_o);
  return out;
}

struct EvalOptions {
  double temperature = 1.0;
  // leave-one-out: exclude the query's own fact from the target matrix
  // while scoring it (training only; keeps "score = sigma(1) iff present"
  // for plain evaluation)
  bool mask_query_fact = false;
};

// Per-bundle attention entries pre-extracted as scalar nodes, shared by all
// queries scored against the same bundle.
namespace detail {

template <class Real>
struct BundleElems {
  std::vector<std::vector<int>> phi;    // [t][k]
  std::vector<std::vector<int>> psi;    // [k][t]
  std::vector<std::vector<int>> psi_p;  // [k][t]
  std::vector<std::vector<std::vector<int>>> f, f_p;  // [level][c][i]
  std::vector<int> o;                   // [pool]

  BundleElems(TapeT<Real>& tape, const BundleNodes& b, const RuleSpaceConfig& cfg) {
    phi.assign(static_cast<std::size_t>(cfg.T), {});
    for (int t = 0; t < cfg.T; ++t)
      for (int k = 0; k < cfg.K; ++k) phi[static_cast<std::size_t>(t)].push_back(tape.elem(b.s_phi, t, k));
    psi.assign(static_cast<std::size_t>(cfg.K), {});
    psi_p.assign(static_cast<std::size_t>(cfg.K), {});
    for (int k = 0; k < cfg.K; ++k)
      for (int t = 0; t < cfg.T; ++t) {
        psi[static_cast<std::size_t>(k)].push_back(tape.elem(b.s_psi, k, t));
        psi_p[static_cast<std::size_t>(k)].push_back(tape.elem(b.s_psi_p, k, t));
      }
    for (int l = 1; l <= cfg.attention_levels(); ++l) {
      std::vector<std::vector<int>> fl, flp;
      int width = cfg.level_input_size(l);
      for (int c = 0; c < cfg.C; ++c) {
        std::vector<int> row, rowp;
        for (int i = 0; i < width; ++i) {
          row.push_back(tape.elem(b.s_f[static_cast<std::size_t>(l - 1)], c, i));
          rowp.push_back(tape.elem(b.s_f_p[static_cast<std::size_t>(l - 1)], c, i));
        }
        fl.push_back(std::move(row));
        flp.push_back(std::move(rowp));
      }
      f.push_back(std::move(fl));
      f_p.push_back(std::move(flp));
    }
    for (int j = 0; j < cfg.pool_size(); ++j) o.push_back(tape.elem(b.s_o, 0, j));
  }
};

// membership column of a (unary) operator: M 1
inline std::vector<double> membership(const SparseBool& m) {
  std::vector<double> out(static_cast<std::size_t>(m.dim()), 0.0);
  for (auto [i, j] : m.coords()) out[static_cast<std::size_t>(i)] += 1.0;
  return out;
}

}  // namespace detail

// Evaluates the relaxed rule space for one query against attention nodes on
// the tape; returns the scalar score node. Gradients flow into the bundle.
template <class Real>
class RuleSpaceEvaluator {
 public:
  RuleSpaceEvaluator(TapeT<Real>& tape, const AdjacencyStore& store, const RuleSpaceConfig& cfg,
                     const BundleNodes& bundle, const EvalOptions& opts = {})
      : tape_(tape), store_(store), cfg_(cfg), opts_(opts), elems_(tape, bundle, cfg) {
    require(cfg.K == store.vocab_size(), Errc::ShapeMismatch,
            "config K does not match operator vocabulary");
    memb_nodes_.assign(static_cast<std::size_t>(cfg.K), -1);
  }

  int score_node(const Query& q) {
    int n = store_.num_entities;
    require(q.subj >= 0 && q.subj < n && q.obj >= 0 && q.obj < n, Errc::IndexOutOfRange,
            "query entity out of range");
    bool unary_target = store_.vocab.is_unary(q.pred);
    int mask_s = -1, mask_o = -1;
    if (opts_.mask_query_fact) {
      mask_s = q.subj;
      mask_o = q.obj;
    }

    int vx = tape_.constant(TensorT<Real>::one_hot(q.subj, n));
    std::vector<int> u1 = path_features(vx, q.pred, mask_s, mask_o);
    std::vector<int> u2 = u1;
    if (!unary_target || q.obj != q.subj) {
      int vxp = tape_.constant(TensorT<Real>::one_hot(q.obj, n));
      u2 = path_features(vxp, q.pred, mask_s, mask_o);
    }

    // statement values
    std::vector<int> stmts;
    stmts.reserve(static_cast<std::size_t>(cfg_.K));
    for (int k = 0; k < cfg_.K; ++k) {
      int kap2 = mix_path(elems_.psi_p[static_cast<std::size_t>(k)], u2);
      int raw;
      if (store_.vocab.is_unary(k)) {
        int mnode = membership_node(k);
        raw = tape_.dot(mnode, kap2);
        if (opts_.mask_query_fact && k == q.pred &&
            store_.matrix(k).contains(q.subj, q.obj)) {
          raw = tape_.sub(raw, tape_.elem(kap2, q.subj));
        }
      } else {
        int kap1 = mix_path(elems_.psi[static_cast<std::size_t>(k)], u1);
        auto [si, sj] = head_skip(k, q.pred, mask_s, mask_o);
        int applied = tape_.spmv(&store_.matrix(k), kap1, true, si, sj);
        raw = tape_.dot(applied, kap2);
      }
      if (opts_.temperature != 1.0) raw = tape_.scale(raw, 1.0 / opts_.temperature);
      stmts.push_back(tape_.sigmoid(raw));
    }

    // formula levels; the pool is the union of levels 0..L-1
    std::vector<int> pool = stmts;
    std::vector<int> prev = stmts;
    for (int l = 1; l <= cfg_.attention_levels(); ++l) {
      std::vector<int> aug = prev;
      for (int id : prev) aug.push_back(tape_.one_minus(id));
      std::vector<int> cur;
      for (int c = 0; c < cfg_.C; ++c) {
        int lhs = mix_scalars(elems_.f[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(c)], aug);
        int rhs = mix_scalars(elems_.f_p[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(c)], aug);
        cur.push_back(tape_.mul(lhs, rhs));
      }
      pool.insert(pool.end(), cur.begin(), cur.end());
      prev = std::move(cur);
    }
    return mix_scalars(elems_.o, pool);
  }

 private:
  TapeT<Real>& tape_;
  const AdjacencyStore& store_;
  RuleSpaceConfig cfg_;
  EvalOptions opts_;
  detail::BundleElems<Real> elems_;
  std::vector<int> memb_nodes_;

  int membership_node(int k) {
    int& cached = memb_nodes_[static_cast<std::size_t>(k)];
    if (cached < 0) {
      auto m = detail::membership(store_.matrix(k));
      TensorT<Real> t = TensorT<Real>::zeros({store_.num_entities});
      for (std::size_t i = 0; i < m.size(); ++i) t.v[i] = static_cast<Real>(m[i]);
      cached = tape_.constant(std::move(t));
    }
    return cached;
  }

  // which coordinate to skip when applying matrix k during a masked query on
  // target tau: the target matrix skips (s,o), its inverse skips (o,s)
  std::pair<int, int> head_skip(int k, int tau, int mask_s, int mask_o) const {
    if (mask_s < 0) return {-1, -1};
    if (k == tau) return {mask_s, mask_o};
    const Predicate& p = store_.vocab.at(k);
    if (p.is_inverse && p.base_id == tau) return {mask_o, mask_s};
    return {-1, -1};
  }

  // u^(t) for t = 1..T: u^(t) = sum_k s_phi[t,k] * M_k^T u^(t-1)
  std::vector<int> path_features(int v, int tau, int mask_s, int mask_o) {
    std::vector<int> us;
    int cur = v;
    for (int t = 0; t < cfg_.T; ++t) {
      int acc = -1;
      for (int k = 0; k < cfg_.K; ++k) {
        auto [si, sj] = head_skip(k, tau, mask_s, mask_o);
        int stepped = tape_.spmv(&store_.matrix(k), cur, true, si, sj);
        int term = tape_.scale_t(stepped, elems_.phi[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]);
        acc = acc < 0 ? term : tape_.add(acc, term);
      }
      us.push_back(acc);
      cur = acc;
    }
    return us;
  }

  // kappa: sum_t s[t] * u^(t)
  int mix_path(const std::vector<int>& s_elems, const std::vector<int>& us) {
    int acc = -1;
    for (std::size_t t = 0; t < us.size(); ++t) {
      int term = tape_.scale_t(us[t], s_elems[t]);
      acc = acc < 0 ? term : tape_.add(acc, term);
    }
    return acc;
  }

  int mix_scalars(const std::vector<int>& weights, const std::vector<int>& values) {
    require(weights.size() == values.size(), Errc::ShapeMismatch, "attention/pool width mismatch");
    int acc = -1;
    for (std::size_t i = 0; i < values.size(); ++i) {
      int term = tape_.mul(weights[i], values[i]);
      acc = acc < 0 ? term : tape_.add(acc, term);
    }
    return acc;
  }
};

struct ScoreBatch {
  std::vector<double> scores;
};

// Plain-value scoring of a query batch (no gradients). Scores are in [0,1].
template <class Real>
ScoreBatch score_queries(const AdjacencyStore& store, const RuleSpaceConfig& cfg,
                         const AttentionBundleT<Real>& bundle, const QueryBatch& batch,
                         const EvalOptions& opts = {}) {
  require(!batch.empty(), Errc::EmptyBatch, "score_queries on empty batch");
  bundle.validate(cfg);
  TapeT<Real> tape;
  BundleNodes nodes = bundle_constants(tape, bundle);
  RuleSpaceEvaluator<Real> eval(tape, store, cfg, nodes, opts);
  ScoreBatch out;
  out.scores.reserve(batch.size());
  for (const Query& q : batch) out.scores.push_back(static_cast<double>(tape.value(eval.score_node(q)).v[0]));
  return out;
}

// --- candidate sweep for ranking -------------------------------------------

enum class RankSide { Tail, Head };

namespace detail {

// applies sum_k s_phi[step,k] M_k (transpose=false) to x
inline std::vector<double> mixed_apply_fwd(const AdjacencyStore& store, const Tensor64& s_phi,
                                           int step, const std::vector<double>& x) {
  std::vector<double> out(x.size(), 0.0);
  std::vector<double> tmp(x.size());
  for (int k = 0; k < s_phi.shape[1]; ++k) {
    double w = s_phi.at(step, k);
    if (w == 0.0) continue;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    store.matrix(k).accumulate(x.data(), tmp.data(), false);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * tmp[i];
  }
  return out;
}

inline std::vector<double> mixed_apply_bwd(const AdjacencyStore& store, const Tensor64& s_phi,
                                           int step, const std::vector<double>& x) {
  std::vector<double> out(x.size(), 0.0);
  std::vector<double> tmp(x.size());
  for (int k = 0; k < s_phi.shape[1]; ++k) {
    double w = s_phi.at(step, k);
    if (w == 0.0) continue;
    std::fill(tmp.begin(), tmp.end(), 0.0);
    store.matrix(k).accumulate(x.data(), tmp.data(), true);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * tmp[i];
  }
  return out;
}

// kappa^T seed = sum_t s_len[t] (A_1^T ... A_t^T) seed, where A_t is the
// mixed forward operator of step t; used to score all candidates at once
inline std::vector<double> reverse_path_mix(const AdjacencyStore& store, const Tensor64& s_phi,
                                            const Tensor64& s_len, int stmt_row,
                                            const std::vector<double>& seed) {
  int T = s_phi.shape[0];
  std::vector<double> acc(seed.size(), 0.0);
  for (int t = 1; t <= T; ++t) {
    double w = s_len.at(stmt_row, t - 1);
    if (w == 0.0) continue;
    std::vector<double> cur = seed;
    for (int step = t - 1; step >= 0; --step) cur = mixed_apply_fwd(store, s_phi, step, cur);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * cur[i];
  }
  return acc;
}

// kappa applied to a one-hot: path features then the per-statement mix
inline std::vector<std::vector<double>> forward_path_features(const AdjacencyStore& store,
                                                              const Tensor64& s_phi, int entity) {
  int n = store.num_entities;
  int T = s_phi.shape[0];
  std::vector<std::vector<double>> us;
  std::vector<double> cur(static_cast<std::size_t>(n), 0.0);
  cur[static_cast<std::size_t>(entity)] = 1.0;
  for (int t = 0; t < T; ++t) {
    cur = mixed_apply_bwd(store, s_phi, t, cur);
    us.push_back(cur);
  }
  return us;
}

inline std::vector<double> kappa_mix(const std::vector<std::vector<double>>& us,
                                     const Tensor64& s_len, int stmt_row) {
  std::vector<double> acc(us[0].size(), 0.0);
  for (std::size_t t = 0; t < us.size(); ++t) {
    double w = s_len.at(stmt_row, static_cast<int>(t));
    if (w == 0.0) continue;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * us[t][i];
  }
  return acc;
}

}  // namespace detail

// Scores of all |X| candidate groundings of one open query position: tail
// sweeps score(x, w) over w for fixed subject x, head sweeps score(w, x')
// over w. Used for filtered ranking; no gradients, no masking.
std::vector<double> score_candidates(const AdjacencyStore& store, const RuleSpaceConfig& cfg,
                                     const AttentionBundle& bundle, int target, int fixed_entity,
                                     RankSide side, const EvalOptions& opts = {});

// unary targets rank over entities w with queries (w, target, w)
std::vector<double> score_candidates_unary(const AdjacencyStore& store, const RuleSpaceConfig& cfg,
                                           const AttentionBundle& bundle, int target,
                                           const EvalOptions& opts = {});

// --- the relaxed operations, value-level ------------------------------------

// soft path selection: sum_t s_path[t] * u^(t), u^(t) the mixed multi-hop
// features of the given entity; evaluated right-to-left as matvecs
inline std::vector<double> kappa_apply(const AdjacencyStore& store,
                                       const std::vector<double>& s_path, const Tensor64& s_phi,
                                       int entity) {
  require(static_cast<int>(s_path.size()) == s_phi.shape[0], Errc::ShapeMismatch,
          "kappa: path attention length != T");
  auto us = detail::forward_path_features(store, s_phi, entity);
  std::vector<double> acc(static_cast<std::size_t>(store.num_entities), 0.0);
  for (std::size_t t = 0; t < us.size(); ++t)
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s_path[t] * us[t][i];
  return acc;
}

// one primitive statement: sigma of the membership/path inner product
inline double eval_statement(const AdjacencyStore& store, const AttentionBundleT<double>& bundle,
                             int k, int subj, int obj, double temperature = 1.0) {
  int T = bundle.s_phi.shape[0];
  std::vector<double> s2(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) s2[static_cast<std::size_t>(t)] = bundle.s_psi_p.at(k, t);
  auto kap2 = kappa_apply(store, s2, bundle.s_phi, obj);
  double raw = 0;
  if (store.vocab.is_unary(k)) {
    auto memb = detail::membership(store.matrix(k));
    for (std::size_t i = 0; i < kap2.size(); ++i) raw += memb[i] * kap2[i];
  } else {
    std::vector<double> s1(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) s1[static_cast<std::size_t>(t)] = bundle.s_psi.at(k, t);
    auto kap1 = kappa_apply(store, s1, bundle.s_phi, subj);
    std::vector<double> applied(kap1.size(), 0.0);
    store.matrix(k).accumulate(kap1.data(), applied.data(), true);
    for (std::size_t i = 0; i < kap2.size(); ++i) raw += applied[i] * kap2[i];
  }
  double z = raw / temperature;
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// all formula-level outputs pooled (levels 0..L-1 concatenated)
std::vector<double> eval_formula_levels(const RuleSpaceConfig& cfg,
                                        const AttentionBundleT<double>& bundle,
                                        const std::vector<double>& statement_values);

}  // namespace rulelearn

#endif
