#ifndef RULELEARN_RULEGEN_HPP
#define RULELEARN_RULEGEN_HPP

#include <string>
#include <vector>

#include "rulelearn/attention.hpp"
#include "rulelearn/rng.hpp"
#include "rulelearn/rulespace.hpp"

namespace rulelearn {

// All learnable parameters of the attention generator: predicate and role
// embeddings, step/formula/output queries, the conditioning and aggregation
// FCs, and seven attention modules (two per transformer stage, one output).
template <class Real>
struct ModelParamsT {
  RuleSpaceConfig cfg;

  Param<Real> H;            // K x d predicate embeddings
  Param<Real> e_x, e_xp;    // d: dummy argument embeddings
  Param<Real> cond_w;       // d x 2d conditioning FC
  Param<Real> cond_b;       // d
  Param<Real> e_phi, e_psi, e_psi_p, e_plus, e_neg;  // d role encodings
  Param<Real> q_phi;        // T x d step queries
  std::vector<Param<Real>> q_f, q_f_p;  // per level 1..L-1: C x d
  Param<Real> q_o;          // d output query
  Param<Real> st_w, st_b;   // d x 2d, d: statement aggregation FC
  Param<Real> f_w, f_b;     // d x 2d, d: formula aggregation FC (shared across levels)

  AttnBlockP<Real> op_step, op_agg;     // operator transformer
  AttnBlockP<Real> st_arg1, st_arg2;    // statement transformer
  AttnBlockP<Real> f_arg1, f_arg2;      // formula transformer
  AttnBlockP<Real> out_attn;            // final output attention

  template <class Other>
  ModelParamsT<Other> cast() const;
};

template <class Real, class Fn>
void visit_params(ModelParamsT<Real>& p, Fn&& fn) {
  fn("H", p.H);
  fn("e_x", p.e_x);
  fn("e_xp", p.e_xp);
  fn("cond_w", p.cond_w);
  fn("cond_b", p.cond_b);
  fn("e_phi", p.e_phi);
  fn("e_psi", p.e_psi);
  fn("e_psi_p", p.e_psi_p);
  fn("e_plus", p.e_plus);
  fn("e_neg", p.e_neg);
  fn("q_phi", p.q_phi);
  for (std::size_t l = 0; l < p.q_f.size(); ++l) {
    fn("q_f." + std::to_string(l + 1), p.q_f[l]);
    fn("q_f_p." + std::to_string(l + 1), p.q_f_p[l]);
  }
  fn("q_o", p.q_o);
  fn("st_w", p.st_w);
  fn("st_b", p.st_b);
  fn("f_w", p.f_w);
  fn("f_b", p.f_b);
  visit_params(p.op_step, "op_step", fn);
  visit_params(p.op_agg, "op_agg", fn);
  visit_params(p.st_arg1, "st_arg1", fn);
  visit_params(p.st_arg2, "st_arg2", fn);
  visit_params(p.f_arg1, "f_arg1", fn);
  visit_params(p.f_arg2, "f_arg2", fn);
  visit_params(p.out_attn, "out_attn", fn);
}

template <class Real>
template <class Other>
ModelParamsT<Other> ModelParamsT<Real>::cast() const {
  ModelParamsT<Other> out;
  out.cfg = cfg;
  out.q_f.resize(q_f.size());
  out.q_f_p.resize(q_f_p.size());
  ModelParamsT<Real> tmp = *this;
  std::vector<TensorT<Real>*> src;
  visit_params(tmp, [&](const std::string&, Param<Real>& p) { src.push_back(&p.t); });
  std::size_t i = 0;
  visit_params(out, [&](const std::string&, Param<Other>& p) {
    p.t = src[i++]->template cast<Other>();
  });
  return out;
}

inline std::uint64_t splitmix64_seed(std::uint64_t seed) {
  std::uint64_t s = seed;
  return splitmix64(s);
}

// embeddings ~ N(0, emb_std), projections fan-in uniform, layer norms
// identity; emb_std trades determinate starts for basin diversity across
// restart seeds
template <class Real>
ModelParamsT<Real> init_params(const RuleSpaceConfig& cfg, std::uint64_t seed,
                               double embedding_std = 0.02) {
  cfg.validate();
  ModelParamsT<Real> p;
  p.cfg = cfg;
  std::mt19937_64 rng(splitmix64_seed(seed));

  const Real emb_std = static_cast<Real>(embedding_std);
  int d = cfg.d;
  p.H.t = random_normal<Real>({cfg.K, d}, emb_std, rng);
  p.e_x.t = random_normal<Real>({d}, emb_std, rng);
  p.e_xp.t = random_normal<Real>({d}, emb_std, rng);
  p.cond_w.t = init_projection<Real>(d, 2 * d, rng);
  p.cond_b.t = TensorT<Real>::zeros({d});
  for (Param<Real>* e : {&p.e_phi, &p.e_psi, &p.e_psi_p, &p.e_plus, &p.e_neg})
    e->t = random_normal<Real>({d}, emb_std, rng);
  p.q_phi.t = random_normal<Real>({cfg.T, d}, emb_std, rng);
  for (int l = 1; l <= cfg.attention_levels(); ++l) {
    Param<Real> q, qp;
    q.t = random_normal<Real>({cfg.C, d}, emb_std, rng);
    qp.t = random_normal<Real>({cfg.C, d}, emb_std, rng);
    p.q_f.push_back(std::move(q));
    p.q_f_p.push_back(std::move(qp));
  }
  p.q_o.t = random_normal<Real>({d}, emb_std, rng);
  p.st_w.t = init_projection<Real>(d, 2 * d, rng);
  p.st_b.t = TensorT<Real>::zeros({d});
  p.f_w.t = init_projection<Real>(d, 2 * d, rng);
  p.f_b.t = TensorT<Real>::zeros({d});
  for (AttnBlockP<Real>* b :
       {&p.op_step, &p.op_agg, &p.st_arg1, &p.st_arg2, &p.f_arg1, &p.f_arg2, &p.out_attn})
    init_attn_block(*b, d, rng);
  return p;
}

template <class Real>
void register_params(TapeT<Real>& tape, ModelParamsT<Real>& p) {
  visit_params(p, [&](const std::string&, Param<Real>& q) { q.register_on(tape); });
}

struct GeneratorNodes {
  BundleNodes bundle;
  int H_hat = -1;    // K x d conditioned embeddings
  int V_phi = -1;    // T x d aggregated operator outputs
  int V_psi = -1;    // K x d statement embeddings
  std::vector<int> V_f;  // per level
  int v_o = -1;      // 1 x d
};

// condition the predicate embeddings on the target: rows FC([h_k ; h*])
template <class Real>
int condition_embeddings(TapeT<Real>& tape, const ModelParamsT<Real>& p, int target) {
  require(target >= 0 && target < p.cfg.K, Errc::UnknownPredicate,
          "target id " + std::to_string(target) + " outside vocabulary");
  int h_star = tape.slice_rows(p.H.node, target, 1);
  int tiled = tape.tile_rows(h_star, p.cfg.K);
  int cat = tape.concat(p.H.node, tiled, 1);
  return tape.softplus(tape.affine(cat, p.cond_w.node, p.cond_b.node));
}

// The full generator: operator search, statement search, formula search.
// Depends only on (params, target); never sees query entities.
template <class Real>
GeneratorNodes generate(TapeT<Real>& tape, const ModelParamsT<Real>& p, int target) {
  const RuleSpaceConfig& cfg = p.cfg;
  GeneratorNodes out;
  int d = cfg.d;

  out.H_hat = condition_embeddings(tape, p, target);

  // operator search: step t attends over the previous step's value set,
  // then a single query aggregates it into s_phi^(t)
  int q_hat = tape.add_rowvec(out.H_hat, p.e_phi.node);
  int ex_row = tape.reshape(p.e_x.node, {1, d});
  int exp_row = tape.reshape(p.e_xp.node, {1, d});
  int v_hat = tape.concat(ex_row, exp_row, 0);
  int s_phi = -1, v_phi = -1;
  for (int t = 0; t < cfg.T; ++t) {
    MhaOut step = attn_block(tape, p.op_step, q_hat, v_hat, cfg.heads);
    v_hat = step.O;  // S-hat of this call is produced but never consumed
    int qt = tape.slice_rows(p.q_phi.node, t, 1);
    MhaOut agg = attn_block(tape, p.op_agg, qt, v_hat, cfg.heads);
    s_phi = s_phi < 0 ? agg.S : tape.concat(s_phi, agg.S, 0);
    v_phi = v_phi < 0 ? agg.O : tape.concat(v_phi, agg.O, 0);
  }
  out.bundle.s_phi = s_phi;
  out.V_phi = v_phi;

  // statement search: one attention per argument over the T path outputs
  int q_psi = tape.add_rowvec(out.H_hat, p.e_psi.node);
  int q_psi_p = tape.add_rowvec(out.H_hat, p.e_psi_p.node);
  MhaOut a1 = attn_block(tape, p.st_arg1, q_psi, v_phi, cfg.heads);
  MhaOut a2 = attn_block(tape, p.st_arg2, q_psi_p, v_phi, cfg.heads);
  out.bundle.s_psi = a1.S;
  out.bundle.s_psi_p = a2.S;
  out.V_psi = tape.softplus(tape.affine(tape.concat(a1.O, a2.O, 1), p.st_w.node, p.st_b.node));

  // formula search: augment the previous level with its negation states,
  // two attentions pick conjunction arguments, an FC aggregates
  int v_prev = out.V_psi;
  int v_pool = out.V_psi;
  for (int l = 1; l <= cfg.attention_levels(); ++l) {
    int pos = tape.add_rowvec(v_prev, p.e_plus.node);
    int neg = tape.add_rowvec(v_prev, p.e_neg.node);
    int v_aug = tape.concat(pos, neg, 0);
    MhaOut f1 = attn_block(tape, p.f_arg1, p.q_f[static_cast<std::size_t>(l - 1)].node, v_aug, cfg.heads);
    MhaOut f2 = attn_block(tape, p.f_arg2, p.q_f_p[static_cast<std::size_t>(l - 1)].node, v_aug, cfg.heads);
    out.bundle.s_f.push_back(f1.S);
    out.bundle.s_f_p.push_back(f2.S);
    int v_l = tape.softplus(tape.affine(tape.concat(f1.O, f2.O, 1), p.f_w.node, p.f_b.node));
    out.V_f.push_back(v_l);
    v_pool = tape.concat(v_pool, v_l, 0);
    v_prev = v_l;
  }

  int q_o_row = tape.reshape(p.q_o.node, {1, d});
  MhaOut o = attn_block(tape, p.out_attn, q_o_row, v_pool, cfg.heads);
  out.bundle.s_o = o.S;
  out.v_o = o.O;
  return out;
}

// value-level convenience: generate and pull attention values off the tape
template <class Real>
AttentionBundleT<Real> generate_bundle(ModelParamsT<Real>& params, int target) {
  TapeT<Real> tape;
  register_params(tape, params);
  GeneratorNodes g = generate(tape, params, target);
  return bundle_values(tape, g.bundle);
}

}  // namespace rulelearn

#endif
