#ifndef RULELEARN_TRAINER_HPP
#define RULELEARN_TRAINER_HPP

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "rulelearn/extractor.hpp"
#include "rulelearn/metrics.hpp"
#include "rulelearn/rng.hpp"
#include "rulelearn/rulegen.hpp"

namespace rulelearn {

struct TrainConfig {
  int batch = 64;
  double neg_ratio = 1.0;          // negatives per positive
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 200;
  std::uint64_t seed = 0;
  int patience = 20;               // early stop on validation MRR
  int precision = 32;              // 32 or 64
  double temperature = 1.0;
  bool mask_train_queries = true;  // leave-one-out on the target matrix
  int workers = 1;                 // >1 currently behaves as 1 (deterministic mode)
  bool hard_valid_metrics = true;
  double init_emb_std = 0.02;
  int restarts = 1;                // independent inits; lowest final train loss wins
  // Anchored restarts: restart r > 0 pretrains the generator (no data, MSE
  // on the bundle alone) toward the homogeneous operator chain of operator
  // (r-1) mod K before normal training. Enumerating chain prototypes this
  // way crosses the plateau between rule basins that plain gradient descent
  // cannot leave; the final-loss selection keeps whichever basin fits best.
  bool anchored_restarts = false;
  // anchored runs keep an auxiliary MSE pull toward the anchored chain,
  // linearly annealed to zero over this fraction of the epochs, so the
  // statement/output attentions assemble on the anchored chain before the
  // chain itself is free to move
  double anchor_anneal_frac = 0.5;
  double anchor_weight = 4.0;

  void validate() const {
    require(batch >= 1, Errc::InvalidSize, "batch must be >= 1");
    require(neg_ratio >= 0, Errc::InvalidSize, "neg_ratio must be >= 0");
    require(lr >= 0, Errc::InvalidSize, "learning rate must be >= 0");
    require(precision == 32 || precision == 64, Errc::InvalidSize, "precision must be 32 or 64");
  }
};

struct EpochStats {
  double loss = 0.0;
  double valid_mrr = -1.0;
  double valid_hits10 = -1.0;
  double valid_mrr_hard = -1.0;
  double valid_hits10_hard = -1.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double total_seconds = 0.0;
};

template <class Real>
struct TrainResult {
  ModelParamsT<Real> params;
  TrainReport report;
};

// --- optimizer -------------------------------------------------------------

template <class Real>
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  // params whose name starts with a frozen prefix are skipped this step
  void step(ModelParamsT<Real>& params, TapeT<Real>& tape,
            const std::vector<std::string>* frozen_prefixes = nullptr) {
    ++t_;
    std::size_t i = 0;
    visit_params(params, [&](const std::string& name, Param<Real>& p) {
      if (m_.size() <= i) {
        m_.push_back(TensorT<Real>::zeros(p.t.shape));
        v_.push_back(TensorT<Real>::zeros(p.t.shape));
      }
      bool frozen = false;
      if (frozen_prefixes)
        for (const auto& prefix : *frozen_prefixes)
          if (name.rfind(prefix, 0) == 0) frozen = true;
      if (!frozen) {
        TensorT<Real> g = tape.grad(p.node);
        double c1 = 1.0 - std::pow(b1_, t_);
        double c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t e = 0; e < p.t.numel(); ++e) {
          double gd = g.v[e];
          double m = b1_ * m_[i].v[e] + (1.0 - b1_) * gd;
          double v = b2_ * v_[i].v[e] + (1.0 - b2_) * gd * gd;
          m_[i].v[e] = static_cast<Real>(m);
          v_[i].v[e] = static_cast<Real>(v);
          p.t.v[e] -= static_cast<Real>(lr_ * (m / c1) / (std::sqrt(v / c2) + eps_));
        }
      }
      ++i;
    });
  }

 private:
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<TensorT<Real>> m_, v_;
};

// --- evaluation helpers ------------------------------------------------------

struct RankMetrics {
  double mrr = -1.0;
  double hits10 = -1.0;
  int n = 0;
};

// filtered ranking of positive queries under per-target bundles
inline RankMetrics rank_positive_queries(const AdjacencyStore& store, const RuleSpaceConfig& cfg,
                                         const std::vector<std::pair<int, AttentionBundle>>& bundles,
                                         const std::vector<Fact>& positives,
                                         const KnownTrueIndex& known, double temperature) {
  EvalOptions opts;
  opts.temperature = temperature;
  std::vector<double> ranks;
  for (const Fact& f : positives) {
    const AttentionBundle* b = nullptr;
    for (const auto& [target, bundle] : bundles)
      if (target == f.pred) b = &bundle;
    if (!b) continue;
    if (store.vocab.is_unary(f.pred)) {
      auto sc = score_candidates_unary(store, cfg, *b, f.pred, opts);
      ranks.push_back(filtered_rank(sc, f.subj, known.filter_unary(f.pred, f.subj)));
    } else {
      auto tail = score_candidates(store, cfg, *b, f.pred, f.subj, RankSide::Tail, opts);
      ranks.push_back(filtered_rank(tail, f.obj, known.filter_tail(f.pred, f.subj, f.obj)));
      auto head = score_candidates(store, cfg, *b, f.pred, f.obj, RankSide::Head, opts);
      ranks.push_back(filtered_rank(head, f.subj, known.filter_head(f.pred, f.obj, f.subj)));
    }
  }
  RankMetrics out;
  if (!ranks.empty()) {
    out.mrr = mrr(ranks);
    out.hits10 = hits_at_k(ranks, 10);
    out.n = static_cast<int>(ranks.size());
  }
  return out;
}

// Soft ranking metrics for a positive query set (training diagnostics).
template <class Real>
RankMetrics evaluate_soft(ModelParamsT<Real>& params, const AdjacencyStore& store,
                          const std::vector<Fact>& queries, const KnownTrueIndex& known) {
  require(!queries.empty(), Errc::EmptyBatch, "evaluate_soft on empty query set");
  std::vector<std::pair<int, AttentionBundle>> bundles;
  for (const Fact& f : queries) {
    bool seen = false;
    for (const auto& [t, b] : bundles) seen = seen || t == f.pred;
    if (!seen)
      bundles.emplace_back(f.pred, generate_bundle(params, f.pred).template cast<double>());
  }
  return rank_positive_queries(store, params.cfg, bundles, queries, known,
                               params.cfg.temperature);
}

// --- training loop ------------------------------------------------------------

struct ChainAnchor {
  int op = -1;
  double weight = 0.0;
  int anneal_epochs = 0;
};

template <class Real>
TrainResult<Real> train_one(const AdjacencyStore& store, const SplitDataset& splits,
                            const RuleSpaceConfig& cfg, const TrainConfig& tc,
                            const std::vector<int>& targets,
                            const ModelParamsT<Real>* warm_start = nullptr,
                            const ChainAnchor* anchor = nullptr) {
  cfg.validate();
  tc.validate();
  require(!targets.empty(), Errc::NoTargets, "no target predicates designated");
  for (int t : targets)
    require(t >= 0 && t < store.vocab.size(), Errc::UnknownPredicate, "target outside vocabulary");

  SeedSequencer seeds(tc.seed);
  TrainResult<Real> out;
  out.params = warm_start ? *warm_start
                          : init_params<Real>(cfg, seeds.derive("init"), tc.init_emb_std);

  std::vector<std::vector<Query>> positives(targets.size());
  for (std::size_t ti = 0; ti < targets.size(); ++ti)
    for (const Fact& f : splits.train)
      if (f.pred == targets[ti]) positives[ti].push_back(Query{f.subj, f.pred, f.obj, 1});

  KnownTrueIndex known(store.num_entities);
  for (const auto* fs : {&splits.train, &splits.valid, &splits.test})
    for (const Fact& f : *fs) known.add(f.pred, f.subj, f.obj);

  Adam<Real> adam(tc.lr, tc.beta1, tc.beta2, tc.adam_eps);
  EvalOptions eval_opts;
  eval_opts.temperature = tc.temperature;
  eval_opts.mask_query_fact = tc.mask_train_queries;

  double best_mrr = -1.0;
  ModelParamsT<Real> best_params = out.params;
  int since_best = 0;
  std::uint64_t global_step = 0;
  auto t_start = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    auto e_start = std::chrono::steady_clock::now();
    int steps = 0;
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
      auto rng = seeds.engine("shuffle", static_cast<std::uint64_t>(epoch) * targets.size() + ti);
      std::shuffle(positives[ti].begin(), positives[ti].end(), rng);
      int mine = positives[ti].empty()
                     ? 0
                     : (static_cast<int>(positives[ti].size()) + tc.batch - 1) / tc.batch;
      steps = std::max(steps, mine);
    }

    double anchor_lambda = 0.0;
    if (anchor && anchor->anneal_epochs > 0 && epoch < anchor->anneal_epochs)
      anchor_lambda = anchor->weight *
                      (1.0 - static_cast<double>(epoch) / static_cast<double>(anchor->anneal_epochs));

    double loss_sum = 0.0;
    std::uint64_t loss_count = 0;
    for (int s = 0; s < steps; ++s) {
      TapeT<Real> tape;
      register_params(tape, out.params);
      std::vector<int> query_losses;
      int anchor_loss = -1;
      // rotate the target order so no target always leads the batch
      for (std::size_t r = 0; r < targets.size(); ++r) {
        std::size_t ti = (r + static_cast<std::size_t>(epoch + s)) % targets.size();
        int lo = s * tc.batch;
        if (lo >= static_cast<int>(positives[ti].size())) continue;
        int hi = std::min(lo + tc.batch, static_cast<int>(positives[ti].size()));
        QueryBatch batch(positives[ti].begin() + lo, positives[ti].begin() + hi);
        int n_neg = static_cast<int>(std::ceil(tc.neg_ratio * static_cast<double>(hi - lo)));
        if (n_neg > 0) {
          QueryBatch negs = sample_negative_queries(store, targets[ti], n_neg,
                                                    seeds.derive("negatives", global_step * 131 + ti));
          batch.insert(batch.end(), negs.begin(), negs.end());
        }
        // generation phase: the bundle never sees the queries
        GeneratorNodes gen = generate(tape, out.params, targets[ti]);
        if (anchor_lambda > 0.0) {
          TensorT<Real> rows = TensorT<Real>::zeros({cfg.T, cfg.K});
          for (int t = 0; t < cfg.T; ++t) rows.at(t, anchor->op) = Real(1);
          int diff = tape.sub(gen.bundle.s_phi, tape.constant(std::move(rows)));
          int mse = tape.mean(tape.mul(diff, diff));
          anchor_loss = anchor_loss < 0 ? mse : tape.add(anchor_loss, mse);
        }
        RuleSpaceEvaluator<Real> eval(tape, store, cfg, gen.bundle, eval_opts);
        for (const Query& q : batch)
          query_losses.push_back(tape.cross_entropy(q.label, eval.score_node(q)));
      }
      if (query_losses.empty()) continue;
      int loss = query_losses[0];
      for (std::size_t i = 1; i < query_losses.size(); ++i) loss = tape.add(loss, query_losses[i]);
      loss = tape.scale(loss, 1.0 / static_cast<double>(query_losses.size()));
      double loss_val = static_cast<double>(tape.value(loss).v[0]);
      if (anchor_loss >= 0) loss = tape.add(loss, tape.scale(anchor_loss, anchor_lambda));
      require(std::isfinite(loss_val), Errc::Divergence, "non-finite training loss");
      tape.backward(loss);
      adam.step(out.params, tape);
      loss_sum += loss_val * static_cast<double>(query_losses.size());
      loss_count += query_losses.size();
      ++global_step;
    }

    EpochStats st;
    st.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    require(std::isfinite(st.loss), Errc::Divergence, "non-finite epoch loss");

    if (!splits.valid.empty()) {
      std::vector<std::pair<int, AttentionBundle>> bundles;
      for (int t : targets)
        bundles.emplace_back(t, generate_bundle(out.params, t).template cast<double>());
      RankMetrics soft = rank_positive_queries(store, cfg, bundles, splits.valid, known,
                                               tc.temperature);
      st.valid_mrr = soft.mrr;
      st.valid_hits10 = soft.hits10;
      if (tc.hard_valid_metrics) {
        std::vector<std::pair<int, AttentionBundle>> hard;
        for (auto& [t, b] : bundles) {
          RuleAst rule = extract(harden(b), cfg, store.vocab, t);
          hard.emplace_back(t, encode_bundle(rule, cfg, store.vocab));
        }
        RankMetrics hm = rank_positive_queries(store, cfg, hard, splits.valid, known,
                                               tc.temperature);
        st.valid_mrr_hard = hm.mrr;
        st.valid_hits10_hard = hm.hits10;
      }
      if (st.valid_mrr > best_mrr) {
        best_mrr = st.valid_mrr;
        best_params = out.params;
        out.report.best_epoch = epoch;
        since_best = 0;
      } else {
        ++since_best;
      }
    }

    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e_start).count();
    out.report.epochs.push_back(st);
    if (!splits.valid.empty() && since_best > tc.patience) break;
  }

  if (!splits.valid.empty() && out.report.best_epoch >= 0) out.params = best_params;
  out.report.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

// Runs tc.restarts independent trainings (seed, seed+1, ...) and keeps the
// one with the lowest final training loss (validation MRR when a validation
// split exists). Restarts trade away the plateau sensitivity of the shared
// operator chain: distinct basins differ visibly in final loss.
// Filtered MRR of the extracted hard rules over (a sample of) the train
// positives, with the query's own fact masked out while scoring each
// candidate (leave-one-out). Ranking-based restart selection: rules that
// derive facts from other facts rank them first; self-reproducing,
// always-true and membership-only rules cannot, even where plain
// cross-entropy prefers them on a tiny corrupted split.
template <class Real>
double hard_train_mrr(const AdjacencyStore& store, const RuleSpaceConfig& cfg,
                      ModelParamsT<Real>& params, const std::vector<int>& targets,
                      const std::vector<Fact>& train, const KnownTrueIndex& known,
                      double temperature, std::uint64_t seed, std::size_t sample_cap = 200,
                      int candidate_cap = 64) {
  std::vector<std::pair<int, AttentionBundle>> bundles;
  for (int t : targets) {
    AttentionBundle b = generate_bundle(params, t).template cast<double>();
    RuleAst rule = extract(harden(b), cfg, store.vocab, t);
    bundles.emplace_back(t, encode_bundle(rule, cfg, store.vocab));
  }
  std::vector<Fact> positives;
  for (const Fact& f : train)
    for (int t : targets)
      if (f.pred == t) positives.push_back(f);
  if (positives.empty()) return 0.0;
  std::mt19937_64 rng(splitmix64_seed(seed ^ 0x5e1ec7ULL));
  if (positives.size() > sample_cap) {
    std::shuffle(positives.begin(), positives.end(), rng);
    positives.resize(sample_cap);
  }

  EvalOptions opts;
  opts.temperature = temperature;
  opts.mask_query_fact = true;
  int n = store.num_entities;
  std::uniform_int_distribution<int> ent(0, n - 1);
  std::vector<double> ranks;
  for (const Fact& f : positives) {
    const AttentionBundle* b = nullptr;
    for (const auto& [t, bundle] : bundles)
      if (t == f.pred) b = &bundle;
    if (!b) continue;
    bool unary = store.vocab.is_unary(f.pred);
    auto rank_side = [&](bool tail) {
      // candidate pool: the true grounding plus sampled non-true ones
      std::vector<int> cands{tail ? f.obj : f.subj};
      int want = std::min(candidate_cap, n - 1);
      std::unordered_set<int> seen{cands[0]};
      int guard = 0;
      while (static_cast<int>(cands.size()) < want + 1 && ++guard < 50 * candidate_cap) {
        int w = ent(rng);
        if (seen.count(w)) continue;
        int s = unary ? w : (tail ? f.subj : w);
        int o = unary ? w : (tail ? w : f.obj);
        if (known.contains(f.pred, s, o)) continue;
        seen.insert(w);
        cands.push_back(w);
      }
      QueryBatch qs;
      for (int w : cands) {
        int s = unary ? w : (tail ? f.subj : w);
        int o = unary ? w : (tail ? w : f.obj);
        qs.push_back({s, f.pred, o, 1});
      }
      auto scores = score_queries<double>(store, cfg, *b, qs, opts).scores;
      double truth = scores[0];
      int better = 0, tied = 0;
      for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > truth) ++better;
        else if (scores[i] == truth) ++tied;
      }
      ranks.push_back(better + 1 + tied / 2.0);
    };
    rank_side(true);
    if (!unary) rank_side(false);
  }
  return ranks.empty() ? 0.0 : mrr(ranks);
}

template <class Real>
TrainResult<Real> train(const AdjacencyStore& store, const SplitDataset& splits,
                        const RuleSpaceConfig& cfg, const TrainConfig& tc,
                        const std::vector<int>& targets) {
  int restarts = std::max(1, tc.restarts);
  TrainResult<Real> best;
  double best_key = 0.0;
  KnownTrueIndex known(store.num_entities);
  for (const auto* fs : {&splits.train, &splits.valid, &splits.test})
    for (const Fact& f : *fs) known.add(f.pred, f.subj, f.obj);
  for (int r = 0; r < restarts; ++r) {
    TrainConfig tc_r = tc;
    tc_r.seed = tc.seed + static_cast<std::uint64_t>(r);
    TrainResult<Real> got;
    if (tc.anchored_restarts && r > 0) {
      SeedSequencer seeds(tc_r.seed);
      ModelParamsT<Real> params =
          init_params<Real>(cfg, seeds.derive("init"), tc.init_emb_std);
      ChainAnchor anchor;
      // the identity prototype goes first: it is the one that admits
      // bare-argument statements, which heterogeneous chains build on
      int pick = (r - 1) % cfg.K;
      if (store.identity_id >= 0) {
        if (pick == 0)
          anchor.op = store.identity_id;
        else
          anchor.op = pick - 1 >= store.identity_id ? pick : pick - 1;
      } else {
        anchor.op = pick;
      }
      anchor.weight = tc.anchor_weight;
      anchor.anneal_epochs = static_cast<int>(tc.anchor_anneal_frac * tc.epochs);
      got = train_one<Real>(store, splits, cfg, tc_r, targets, &params, &anchor);
    } else {
      got = train_one<Real>(store, splits, cfg, tc_r, targets);
    }
    double key;
    if (!splits.valid.empty() && got.report.best_epoch >= 0) {
      key = -got.report.epochs[static_cast<std::size_t>(got.report.best_epoch)].valid_mrr;
    } else if (restarts > 1) {
      key = -hard_train_mrr(store, cfg, got.params, targets, splits.train, known,
                            tc.temperature, tc.seed);
    } else {
      key = got.report.epochs.empty() ? 0.0 : got.report.epochs.back().loss;
    }
    if (r == 0 || key < best_key) {
      best_key = key;
      best = std::move(got);
    }
  }
  return best;
}

// --- checkpointing -------------------------------------------------------------

struct Checkpoint {
  RuleSpaceConfig cfg;
  PredicateTable vocab;
  int precision = 32;
  std::vector<std::pair<std::string, Tensor64>> tensors;
};

std::uint64_t config_digest(const RuleSpaceConfig& cfg, const PredicateTable& vocab);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
// expected_cfg, when given, must match the stored config (DigestMismatch)
Checkpoint load_checkpoint(const std::string& path, const RuleSpaceConfig* expected_cfg = nullptr);

template <class Real>
Checkpoint make_checkpoint(ModelParamsT<Real>& params, const PredicateTable& vocab,
                           int precision) {
  Checkpoint ck;
  ck.cfg = params.cfg;
  ck.vocab = vocab;
  ck.precision = precision;
  visit_params(params, [&](const std::string& name, Param<Real>& p) {
    ck.tensors.emplace_back(name, p.t.template cast<double>());
  });
  return ck;
}

template <class Real>
ModelParamsT<Real> params_from_checkpoint(const Checkpoint& ck) {
  ModelParamsT<Real> params = init_params<Real>(ck.cfg, 0);
  std::size_t used = 0;
  visit_params(params, [&](const std::string& name, Param<Real>& p) {
    for (const auto& [n, t] : ck.tensors) {
      if (n != name) continue;
      require(t.shape == p.t.shape, Errc::DigestMismatch, "checkpoint tensor shape for " + name);
      p.t = t.template cast<Real>();
      ++used;
      return;
    }
    fail(Errc::DigestMismatch, "checkpoint is missing tensor " + name);
  });
  require(used == ck.tensors.size(), Errc::DigestMismatch, "checkpoint has extra tensors");
  return params;
}

}  // namespace rulelearn

#endif
