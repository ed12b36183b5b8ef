#ifndef RULELEARN_ATTENTION_HPP
#define RULELEARN_ATTENTION_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rulelearn/tape.hpp"
#include "rulelearn/tensor.hpp"

namespace rulelearn {

// A tensor parameter together with its node id on the current tape.
template <class Real>
struct Param {
  TensorT<Real> t;
  int node = -1;

  void register_on(TapeT<Real>& tape) { node = tape.leaf(t); }
};

template <class Real>
struct MhaWeights {
  Param<Real> wq, wk, wv, wo;  // d x d each
};

struct MhaOut {
  int O = -1;  // q x d
  int S = -1;  // q x v, rows sum to 1
};

// Scaled dot-product attention with internal projections. Returns the output
// values and the head-averaged (renormalized) attention matrix.
template <class Real>
MhaOut mha(TapeT<Real>& tape, int Q, int V, const MhaWeights<Real>& w, int heads) {
  int d = tape.value(Q).shape[1];
  require(tape.value(V).shape[1] == d, Errc::ShapeMismatch, "mha: query/value width differ");
  require(heads >= 1 && d % heads == 0, Errc::HeadDivisibility,
          "mha: d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(heads));
  int dh = d / heads;

  int qp = tape.matmul(Q, w.wq.node);
  int kp = tape.matmul(V, w.wk.node);
  int vp = tape.matmul(V, w.wv.node);

  int concat_o = -1;
  int s_sum = -1;
  for (int h = 0; h < heads; ++h) {
    int qh = heads == 1 ? qp : tape.slice_cols(qp, h * dh, dh);
    int kh = heads == 1 ? kp : tape.slice_cols(kp, h * dh, dh);
    int vh = heads == 1 ? vp : tape.slice_cols(vp, h * dh, dh);
    int scores = tape.scale(tape.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    int s = tape.softmax_rows(scores);
    int oh = tape.matmul(s, vh);
    concat_o = concat_o < 0 ? oh : tape.concat(concat_o, oh, 1);
    s_sum = s_sum < 0 ? s : tape.add(s_sum, s);
  }
  MhaOut out;
  out.O = tape.matmul(concat_o, w.wo.node);
  // mean of per-head attentions, renormalized row-wise to absorb rounding
  int s_mean = heads == 1 ? s_sum : tape.scale(s_sum, 1.0 / heads);
  out.S = renormalize_rows(tape, s_mean);
  return out;
}

// divides each row by its sum; the input rows are already near-stochastic
template <class Real>
int renormalize_rows(TapeT<Real>& tape, int s) {
  const auto& val = tape.value(s);
  int rows = val.shape[0];
  int out = -1;
  for (int i = 0; i < rows; ++i) {
    int row = tape.slice_rows(s, i, 1);
    int denom = tape.sum(row);
    // row / denom = row * (1/denom); use elementwise trick via scale_t of reciprocal
    int inv = tape.reciprocal(denom);
    int norm = tape.scale_t(row, inv);
    out = out < 0 ? norm : tape.concat(out, norm, 0);
  }
  return out;
}

template <class Real>
struct LayerNormP {
  Param<Real> gain, bias;  // d
};

template <class Real>
struct FfnP {
  Param<Real> w1, b1, w2, b2;  // 2d x d, 2d, d x 2d, d
};

// One pre-norm transformer layer: cross-attention residual + feed-forward
// residual.
template <class Real>
struct AttnLayerP {
  LayerNormP<Real> ln_q, ln_kv, ln_f;
  MhaWeights<Real> mha;
  FfnP<Real> ffn;
};

// A full attention module: two 4-head processing layers followed by the
// single-head layer that emits the attention matrix consumed downstream.
template <class Real>
struct AttnBlockP {
  AttnLayerP<Real> l1, l2;
  LayerNormP<Real> ln_q3, ln_kv3;
  MhaWeights<Real> mha3;

  static constexpr int kAttentionLayers = 3;
  static constexpr int kFinalHeads = 1;
};

template <class Real>
int layer_norm(TapeT<Real>& tape, const LayerNormP<Real>& p, int x) {
  return tape.layer_norm_rows(x, p.gain.node, p.bias.node);
}

template <class Real>
int ffn(TapeT<Real>& tape, const FfnP<Real>& p, int x) {
  int h = tape.softplus(tape.affine(x, p.w1.node, p.b1.node));
  return tape.affine(h, p.w2.node, p.b2.node);
}

template <class Real>
int attn_layer(TapeT<Real>& tape, const AttnLayerP<Real>& p, int x, int kv, int heads) {
  MhaOut a = mha(tape, layer_norm(tape, p.ln_q, x), layer_norm(tape, p.ln_kv, kv), p.mha, heads);
  x = tape.add(x, a.O);
  x = tape.add(x, ffn(tape, p.ln_f, p.ffn, x));
  return x;
}

template <class Real>
int ffn(TapeT<Real>& tape, const LayerNormP<Real>& ln, const FfnP<Real>& p, int x) {
  return ffn(tape, p, layer_norm(tape, ln, x));
}

// Attn(Q, V) -> (O, S) per the module contract: queries q x d, values v x d,
// output q x d plus a row-stochastic q x v attention matrix.
template <class Real>
MhaOut attn_block(TapeT<Real>& tape, const AttnBlockP<Real>& p, int Q, int V, int heads = 4) {
  int x = attn_layer(tape, p.l1, Q, V, heads);
  x = attn_layer(tape, p.l2, x, V, heads);
  MhaOut fin = mha(tape, layer_norm(tape, p.ln_q3, x), layer_norm(tape, p.ln_kv3, V), p.mha3,
                   AttnBlockP<Real>::kFinalHeads);
  MhaOut out;
  out.O = tape.add(x, fin.O);
  out.S = fin.S;
  return out;
}

// --- parameter plumbing ----------------------------------------------------

template <class Real, class Fn>
void visit_params(MhaWeights<Real>& w, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".wq", w.wq);
  fn(prefix + ".wk", w.wk);
  fn(prefix + ".wv", w.wv);
  fn(prefix + ".wo", w.wo);
}

template <class Real, class Fn>
void visit_params(LayerNormP<Real>& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".gain", p.gain);
  fn(prefix + ".bias", p.bias);
}

template <class Real, class Fn>
void visit_params(FfnP<Real>& p, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".w1", p.w1);
  fn(prefix + ".b1", p.b1);
  fn(prefix + ".w2", p.w2);
  fn(prefix + ".b2", p.b2);
}

template <class Real, class Fn>
void visit_params(AttnLayerP<Real>& p, const std::string& prefix, Fn&& fn) {
  visit_params(p.ln_q, prefix + ".ln_q", fn);
  visit_params(p.ln_kv, prefix + ".ln_kv", fn);
  visit_params(p.ln_f, prefix + ".ln_f", fn);
  visit_params(p.mha, prefix + ".mha", fn);
  visit_params(p.ffn, prefix + ".ffn", fn);
}

template <class Real, class Fn>
void visit_params(AttnBlockP<Real>& p, const std::string& prefix, Fn&& fn) {
  visit_params(p.l1, prefix + ".l1", fn);
  visit_params(p.l2, prefix + ".l2", fn);
  visit_params(p.ln_q3, prefix + ".ln_q3", fn);
  visit_params(p.ln_kv3, prefix + ".ln_kv3", fn);
  visit_params(p.mha3, prefix + ".mha3", fn);
}

// fan-in scaled uniform init for projection matrices
template <class Real>
TensorT<Real> init_projection(int out_dim, int in_dim, std::mt19937_64& rng) {
  Real bound = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(in_dim)));
  return random_uniform<Real>({out_dim, in_dim}, -bound, bound, rng);
}

template <class Real>
void init_mha(MhaWeights<Real>& w, int d, std::mt19937_64& rng) {
  w.wq.t = init_projection<Real>(d, d, rng);
  w.wk.t = init_projection<Real>(d, d, rng);
  w.wv.t = init_projection<Real>(d, d, rng);
  w.wo.t = init_projection<Real>(d, d, rng);
}

template <class Real>
void init_layer_norm(LayerNormP<Real>& p, int d) {
  p.gain.t = TensorT<Real>::zeros({d});
  for (auto& x : p.gain.t.v) x = Real(1);
  p.bias.t = TensorT<Real>::zeros({d});
}

template <class Real>
void init_ffn(FfnP<Real>& p, int d, std::mt19937_64& rng) {
  p.w1.t = init_projection<Real>(2 * d, d, rng);
  p.b1.t = TensorT<Real>::zeros({2 * d});
  p.w2.t = init_projection<Real>(d, 2 * d, rng);
  p.b2.t = TensorT<Real>::zeros({d});
}

template <class Real>
void init_attn_block(AttnBlockP<Real>& p, int d, std::mt19937_64& rng) {
  for (AttnLayerP<Real>* l : {&p.l1, &p.l2}) {
    init_layer_norm(l->ln_q, d);
    init_layer_norm(l->ln_kv, d);
    init_layer_norm(l->ln_f, d);
    init_mha(l->mha, d, rng);
    init_ffn(l->ffn, d, rng);
  }
  init_layer_norm(p.ln_q3, d);
  init_layer_norm(p.ln_kv3, d);
  init_mha(p.mha3, d, rng);
}

}  // namespace rulelearn

#endif
