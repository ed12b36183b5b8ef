#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <set>
#include <sstream>

#include "common.hpp"
#include "doctest.h"
#include "rulelearn/extractor.hpp"

using namespace rulelearn;
using namespace rulelearn::testing;

namespace {

const double kSig1 = 1.0 / (1.0 + std::exp(-1.0));

struct Toy {
  KnowledgeBase kb;
  AdjacencyStore store;
  RuleSpaceConfig cfg;
  int succ, even, id, succ_inv;

  explicit Toy(int T = 2, int L = 1, int C = 2) {
    kb = toy3();
    store = build_matrices(kb, true, true);
    cfg = RuleSpaceConfig{store.vocab_size(), T, L, C, 8};
    succ = store.vocab.get("Succ");
    even = store.vocab.get("Even");
    succ_inv = store.vocab.get("Succ^-1");
    id = store.identity_id;
  }

  // hardened bundle whose rule is Even(X) <- Even(phi_Succ(phi_Succ(X)))
  AttentionBundle even_distance2_bundle() const {
    AttentionBundle b;
    b.s_phi = Tensor64::zeros({cfg.T, cfg.K});
    set_hot(b.s_phi, 0, succ);
    set_hot(b.s_phi, 1, succ);
    b.s_psi = Tensor64::zeros({cfg.K, cfg.T});
    b.s_psi_p = Tensor64::zeros({cfg.K, cfg.T});
    for (int k = 0; k < cfg.K; ++k) {
      set_hot(b.s_psi, k, 0);
      set_hot(b.s_psi_p, k, k == even ? 1 : 0);
    }
    for (int l = 1; l <= cfg.attention_levels(); ++l) {
      Tensor64 m = Tensor64::zeros({cfg.C, cfg.level_input_size(l)});
      for (int c = 0; c < cfg.C; ++c) set_hot(m, c, 0);
      b.s_f.push_back(m);
      b.s_f_p.push_back(m);
    }
    b.s_o = Tensor64::zeros({1, cfg.pool_size()});
    set_hot(b.s_o, 0, even);
    return b;
  }
};

// atoms of a rendered variable-form body (atoms never nest parentheses)
std::set<std::string> atom_set(const std::string& rendered) {
  std::string body = rendered.substr(rendered.find("\xE2\x86\x90") + 4);
  std::set<std::string> out;
  std::size_t i = 0;
  auto ident_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '^' || c == '-';
  };
  while (i < body.size()) {
    if (!std::isalnum(static_cast<unsigned char>(body[i]))) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < body.size() && ident_char(body[i])) ++i;
    if (i < body.size() && body[i] == '(') {
      while (i < body.size() && body[i] != ')') ++i;
      ++i;
      out.insert(body.substr(start, i - start));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("extract: distance-2 Even rule") {
  Toy t;
  RuleAst rule = extract(t.even_distance2_bundle(), t.cfg, t.store.vocab, t.even);
  CHECK(rule.head_pred == t.even);
  REQUIRE(rule.root != nullptr);
  CHECK(rule.root->kind == FormulaNode::Kind::Stmt);
  REQUIRE(rule.statements.size() == 1);
  const StatementAst& st = rule.statements[0];
  CHECK(st.pred == t.even);
  CHECK(st.arity == 1);
  CHECK(st.arg2.root == PathRoot::XPrime);
  CHECK(st.arg2.path.ops == std::vector<int>{t.succ, t.succ});
  CHECK(render_operator_form(rule, t.store.vocab) ==
        "Even(X) \xE2\x86\x90 Even(\xCF\x86_Succ(\xCF\x86_Succ(X)))");
  CHECK(render_variable_form(rule, t.store.vocab) ==
        "Even(X) \xE2\x86\x90 Succ(X, Y1) \xE2\x88\xA7 Succ(Y1, Y2) \xE2\x88\xA7 Even(Y2)");
}

TEST_CASE("extract: L=0 yields a single-leaf tree") {
  Toy t(2, 0, 1);
  AttentionBundle b = t.even_distance2_bundle();
  RuleAst rule = extract(b, t.cfg, t.store.vocab, t.even);
  CHECK(rule.root->kind == FormulaNode::Kind::Stmt);
  CHECK(rule.statements.size() == 1);
}

TEST_CASE("extract requires a hardened bundle") {
  Toy t;
  AttentionBundle soft = t.even_distance2_bundle();
  soft.s_phi.at(0, t.succ) = 0.6;
  soft.s_phi.at(0, t.id) = 0.4;
  try {
    extract(soft, t.cfg, t.store.vocab, t.even);
    FAIL("expected NotHardened");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotHardened);
  }
}

TEST_CASE("extract: a formula conjoining a statement with its own negation") {
  Toy t(2, 2, 2);
  AttentionBundle b = t.even_distance2_bundle();
  // level-1 formula 0 = psi_even AND NOT psi_even; select it in s_o
  set_hot(b.s_f[0], 0, t.even);
  set_hot(b.s_f_p[0], 0, t.cfg.K + t.even);
  set_hot(b.s_o, 0, t.cfg.K + 0);
  RuleAst rule = extract(b, t.cfg, t.store.vocab, t.even);
  REQUIRE(rule.root->kind == FormulaNode::Kind::And);
  CHECK(rule.root->a->kind == FormulaNode::Kind::Stmt);
  REQUIRE(rule.root->b->kind == FormulaNode::Kind::Neg);
  CHECK(rule.root->b->a->kind == FormulaNode::Kind::Stmt);
  CHECK(rule.root->a->stmt == rule.root->b->a->stmt);
  // oracle value p(1-p) never exceeds 1/4
  for (int e = 0; e < 3; ++e) {
    double v = grounding_oracle(rule, t.kb, t.store.vocab, Query{e, t.even, e, 1});
    CHECK(v <= 0.25);
    CHECK(v >= 0.0);
  }
}

TEST_CASE("identity hops are canonicalized away and re-encoded") {
  Toy t;
  AttentionBundle b = t.even_distance2_bundle();
  set_hot(b.s_phi, 0, t.id);
  set_hot(b.s_phi, 1, t.succ);
  // statement Even with path length 2 -> [Identity, Succ] -> canonical [Succ]
  RuleAst rule = extract(b, t.cfg, t.store.vocab, t.even);
  CHECK(rule.statements[0].arg2.path.ops == std::vector<int>{t.succ});
  // a bare-variable statement: path length 1 over the identity hop
  AttentionBundle b2 = t.even_distance2_bundle();
  set_hot(b2.s_phi, 0, t.id);
  set_hot(b2.s_psi_p, t.even, 0);
  RuleAst rule2 = extract(b2, t.cfg, t.store.vocab, t.even);
  CHECK(rule2.statements[0].arg2.path.ops.empty());
  CHECK(render_operator_form(rule2, t.store.vocab) == "Even(X) \xE2\x86\x90 Even(X)");
  // re-encoding restores a valid one-hot bundle with the same hard scores
  AttentionBundle enc = encode_bundle(rule2, t.cfg, t.store.vocab);
  enc.validate(t.cfg);
  CHECK(enc.is_one_hot());
  for (int e = 0; e < 3; ++e) {
    QueryBatch q{{e, t.even, e, 1}};
    CHECK(score_queries<double>(t.store, t.cfg, b2, q).scores[0] ==
          doctest::Approx(score_queries<double>(t.store, t.cfg, enc, q).scores[0]).epsilon(1e-12));
  }
}

TEST_CASE("round-trip: extract, re-encode, identical hard scores (random bundles)") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    int T = 1 + static_cast<int>(rng() % 3);
    int L = static_cast<int>(rng() % 3);
    int C = 1 + static_cast<int>(rng() % 4);
    Toy t(T, L, C);
    AttentionBundle b = harden(random_bundle(t.cfg, rng));
    for (int target : {t.even, t.succ}) {
      RuleAst rule = extract(b, t.cfg, t.store.vocab, target);
      AttentionBundle enc = encode_bundle(rule, t.cfg, t.store.vocab);
      enc.validate(t.cfg);
      QueryBatch qs;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          qs.push_back({i, target, t.store.vocab.is_unary(target) ? i : j, 1});
      auto s1 = score_queries<double>(t.store, t.cfg, b, qs).scores;
      auto s2 = score_queries<double>(t.store, t.cfg, enc, qs).scores;
      for (std::size_t i = 0; i < qs.size(); ++i)
        CHECK(s1[i] == doctest::Approx(s2[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("rendering round-trip: parse(render(rule)) == rule, both forms") {
  std::mt19937_64 rng(13);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    int T = 1 + static_cast<int>(rng() % 3);
    int L = static_cast<int>(rng() % 4);
    int C = 1 + static_cast<int>(rng() % 4);
    Toy t(T, L, C);
    AttentionBundle b = harden(random_bundle(t.cfg, rng));
    for (int target : {t.even, t.succ}) {
      RuleAst rule = extract(b, t.cfg, t.store.vocab, target);
      std::string op = render_operator_form(rule, t.store.vocab);
      RuleAst back = parse_operator_form(op, t.store.vocab);
      CHECK(rules_equal(rule, back));
      if (!rules_equal(rule, back)) MESSAGE(op);
      // The variable form round-trips exactly except for one degenerate
      // class: under a unary head, leading unary hops shared between both
      // argument roots (the same variable X) cannot be attributed from the
      // text alone. Those readings are provably score-identical, so the
      // property falls back to a fixed-point render plus oracle equality.
      std::string var = render_variable_form(rule, t.store.vocab);
      RuleAst back2 = parse_variable_form(var, t.store.vocab);
      if (rules_equal(rule, back2)) {
        CHECK(true);
      } else {
        CHECK(render_variable_form(back2, t.store.vocab) == var);
        bool unary_target = t.store.vocab.is_unary(target);
        for (int e = 0; e < 3; ++e) {
          Query q{e, target, unary_target ? e : (e + 1) % 3, 1};
          CHECK(grounding_oracle(rule, t.kb, t.store.vocab, q) ==
                doctest::Approx(grounding_oracle(back2, t.kb, t.store.vocab, q)).epsilon(1e-9));
        }
      }
      ++checked;
    }
  }
  CHECK(checked == 120);
}

TEST_CASE("variable form matches the flat-conjunction shape with inverse flips") {
  Toy t;
  RuleAst rule;
  rule.head_pred = t.succ;
  StatementAst st;
  st.pred = t.succ_inv;
  st.arity = 2;
  st.arg1 = {PathRoot::X, -1, {{t.succ}}};
  st.arg2 = {PathRoot::XPrime, -1, {{t.succ_inv}}};
  rule.statements.push_back(st);
  auto leaf = std::make_unique<FormulaNode>();
  leaf->kind = FormulaNode::Kind::Stmt;
  leaf->stmt = 0;
  rule.root = std::move(leaf);
  std::string var = render_variable_form(rule, t.store.vocab);
  // inverse hops and the inverse head render through the base predicate
  CHECK(var ==
        "Succ(X, X') \xE2\x86\x90 Succ(X, Y1) \xE2\x88\xA7 Succ(Y2, X') \xE2\x88\xA7 Succ(Y2, Y1)");
  RuleAst back = parse_variable_form(var, t.store.vocab);
  CHECK(rules_equal(rule, back));
}

TEST_CASE("paper example: operator form and variable form agree on the atom set") {
  KnowledgeBase kb = parse_facts({"a\tInside\tb", "a\tOn\tb", "a\tPerson", "a\tCar", "a\tClothing"},
                                 {"Person\t1", "Car\t1", "Clothing\t1", "Inside\t2", "On\t2"});
  AdjacencyStore store = build_matrices(kb, true, true);
  const PredicateTable& vocab = store.vocab;

  RuleAst rule;
  rule.head_pred = vocab.get("Person");
  StatementAst s1;  // Car(phi_Inside(X))
  s1.pred = vocab.get("Car");
  s1.arity = 1;
  s1.arg2 = {PathRoot::XPrime, -1, {{vocab.get("Inside")}}};
  StatementAst s2;  // On(phi_Clothing(), X)
  s2.pred = vocab.get("On");
  s2.arity = 2;
  s2.arg1 = {PathRoot::UnaryRoot, vocab.get("Clothing"), {}};
  s2.arg2 = {PathRoot::XPrime, -1, {}};
  rule.statements = {s1, s2};
  auto a = std::make_unique<FormulaNode>();
  a->kind = FormulaNode::Kind::Stmt;
  a->stmt = 0;
  auto b = std::make_unique<FormulaNode>();
  b->kind = FormulaNode::Kind::Stmt;
  b->stmt = 1;
  auto root = std::make_unique<FormulaNode>();
  root->kind = FormulaNode::Kind::And;
  root->a = std::move(a);
  root->b = std::move(b);
  rule.root = std::move(root);

  CHECK(render_operator_form(rule, vocab) ==
        "Person(X) \xE2\x86\x90 (Car(\xCF\x86_Inside(X)) \xE2\x88\xA7 On(\xCF\x86_Clothing(), X))");
  std::string var = render_variable_form(rule, vocab);
  CHECK(atom_set(var) ==
        std::set<std::string>{"Inside(X, Y1)", "Car(Y1)", "Clothing(Y2)", "On(Y2, X)"});
  // operator-form parse round-trips the unary-root too
  RuleAst back = parse_operator_form(render_operator_form(rule, vocab), vocab);
  CHECK(rules_equal(rule, back));
}

TEST_CASE("grounding oracle: toy-3 distance-2 rules") {
  Toy t;
  // forward chain: e0 -> e1 -> e2, Even(e2) holds
  RuleAst fwd = extract(t.even_distance2_bundle(), t.cfg, t.store.vocab, t.even);
  CHECK(grounding_oracle(fwd, t.kb, t.store.vocab, {0, t.even, 0, 1}) ==
        doctest::Approx(kSig1).epsilon(1e-6));
  CHECK(grounding_oracle(fwd, t.kb, t.store.vocab, {1, t.even, 1, 1}) ==
        doctest::Approx(0.5).epsilon(1e-9));
  // along the chain from e2 the walk runs backward through the inverses
  AttentionBundle back_b = t.even_distance2_bundle();
  set_hot(back_b.s_phi, 0, t.succ_inv);
  set_hot(back_b.s_phi, 1, t.succ_inv);
  RuleAst back = extract(back_b, t.cfg, t.store.vocab, t.even);
  CHECK(grounding_oracle(back, t.kb, t.store.vocab, {2, t.even, 2, 1}) ==
        doctest::Approx(kSig1).epsilon(1e-6));
  CHECK(grounding_oracle(back, t.kb, t.store.vocab, {1, t.even, 1, 1}) ==
        doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("grounding oracle rejects large KBs") {
  Toy t;
  RuleAst rule = extract(t.even_distance2_bundle(), t.cfg, t.store.vocab, t.even);
  OracleOptions opts;
  opts.entity_limit = 2;
  try {
    grounding_oracle(rule, t.kb, t.store.vocab, {0, t.even, 0, 1}, opts);
    FAIL("expected KbTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::KbTooLarge);
  }
}

TEST_CASE("oracle equivalence: hard scores match the grounding oracle") {
  std::mt19937_64 rng(29);
  std::vector<KnowledgeBase> kbs;
  kbs.push_back(toy3());
  kbs.push_back(random_kb(20, 2, 2, 0.05, 100));
  kbs.push_back(random_kb(50, 1, 3, 0.01, 200));
  int done = 0;
  for (const auto& kb : kbs) {
    AdjacencyStore store = build_matrices(kb, true, true);
    for (int trial = 0; trial < 17; ++trial) {
      RuleSpaceConfig cfg{store.vocab_size(), 1 + static_cast<int>(rng() % 3),
                          static_cast<int>(rng() % 3), 1 + static_cast<int>(rng() % 4), 8};
      AttentionBundle b = harden(random_bundle(cfg, rng));
      int target = static_cast<int>(rng() % static_cast<unsigned>(kb.predicates.size()));
      RuleAst rule = extract(b, cfg, store.vocab, target);
      AttentionBundle enc = encode_bundle(rule, cfg, store.vocab);
      bool unary = store.vocab.is_unary(target);
      QueryBatch qs;
      std::uniform_int_distribution<int> ent(0, store.num_entities - 1);
      for (int i = 0; i < 6; ++i) {
        int s = ent(rng);
        qs.push_back({s, target, unary ? s : ent(rng), 1});
      }
      auto direct = score_queries<double>(store, cfg, b, qs).scores;
      auto encoded = score_queries<double>(store, cfg, enc, qs).scores;
      for (std::size_t i = 0; i < qs.size(); ++i) {
        double oracle = grounding_oracle(rule, kb, store.vocab, qs[i]);
        CHECK(direct[i] == doctest::Approx(oracle).epsilon(1e-6));
        CHECK(encoded[i] == doctest::Approx(oracle).epsilon(1e-6));
      }
      ++done;
    }
  }
  CHECK(done == 51);
}

TEST_CASE("sigma(count) monotonicity: adding a fact never lowers a statement oracle") {
  std::mt19937_64 rng(31);
  KnowledgeBase kb = random_kb(15, 1, 2, 0.05, 300);
  AdjacencyStore store = build_matrices(kb, true, true);
  for (int trial = 0; trial < 15; ++trial) {
    RuleSpaceConfig cfg{store.vocab_size(), 2, 0, 1, 8};
    AttentionBundle b = harden(random_bundle(cfg, rng));
    int target = static_cast<int>(rng() % static_cast<unsigned>(kb.predicates.size()));
    RuleAst rule = extract(b, cfg, store.vocab, target);
    // single-statement rules only (negation breaks monotonicity by design)
    if (rule.root->kind != FormulaNode::Kind::Stmt) continue;
    std::uniform_int_distribution<int> ent(0, 14);
    Query q{ent(rng), target, 0, 1};
    q.obj = store.vocab.is_unary(target) ? q.subj : ent(rng);
    double before = grounding_oracle(rule, kb, store.vocab, q);
    KnowledgeBase bigger = kb;
    int p = static_cast<int>(rng() % static_cast<unsigned>(kb.predicates.size()));
    int s = ent(rng);
    Fact extra{s, p, kb.predicates.is_unary(p) ? s : ent(rng)};
    bigger.facts.push_back(extra);
    double after = grounding_oracle(rule, bigger, store.vocab, q);
    CHECK(after >= before - 1e-12);
  }
}

TEST_CASE("evaluate_hard: errors and threshold behavior") {
  Toy t;
  QueryBatch qs{{0, t.even, 0, 1}, {1, t.even, 1, 0}};
  try {
    evaluate_hard({}, t.store, t.cfg, qs);
    FAIL("expected NoRules");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoRules);
  }

  RuleAst rule = extract(t.even_distance2_bundle(), t.cfg, t.store.vocab, t.even);
  HardEvalResult r = evaluate_hard({rule}, t.store, t.cfg, qs, 0.6);
  CHECK(r.accuracy == doctest::Approx(1.0));  // sigma(1) > 0.6 for e2 via e0...

  // a very high threshold classifies everything negative
  HardEvalResult r2 = evaluate_hard({rule}, t.store, t.cfg, qs, 0.999);
  CHECK(r2.accuracy == doctest::Approx(0.5));  // only the negative row is right
}

TEST_CASE("hard scores of queries with no covering rule are zero") {
  Toy t;
  RuleAst rule = extract(t.even_distance2_bundle(), t.cfg, t.store.vocab, t.even);
  QueryBatch qs{{0, t.succ, 1, 1}};
  auto scores = hard_scores({rule}, t.store, t.cfg, qs);
  CHECK(scores[0] == 0.0);
}

TEST_CASE("encode_bundle rejects non-encodable rules") {
  Toy t(2, 1, 2);
  // prefix-inconsistent paths
  RuleAst bad;
  bad.head_pred = t.even;
  StatementAst s1;
  s1.pred = t.even;
  s1.arity = 1;
  s1.arg2 = {PathRoot::XPrime, -1, {{t.succ, t.succ}}};
  StatementAst s2;
  s2.pred = t.succ;
  s2.arity = 2;
  s2.arg1 = {PathRoot::X, -1, {{t.succ_inv}}};
  s2.arg2 = {PathRoot::XPrime, -1, {}};
  bad.statements = {s1, s2};
  auto a = std::make_unique<FormulaNode>();
  a->kind = FormulaNode::Kind::Stmt;
  a->stmt = 0;
  auto b = std::make_unique<FormulaNode>();
  b->kind = FormulaNode::Kind::Stmt;
  b->stmt = 1;
  auto root = std::make_unique<FormulaNode>();
  root->kind = FormulaNode::Kind::And;
  root->a = std::move(a);
  root->b = std::move(b);
  bad.root = std::move(root);
  try {
    encode_bundle(bad, t.cfg, t.store.vocab);
    FAIL("expected EncodeError");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EncodeError);
  }
}

TEST_CASE("ast form is emitted for machine reading") {
  Toy t;
  RuleAst rule = extract(t.even_distance2_bundle(), t.cfg, t.store.vocab, t.even);
  std::string ast = render_ast_form(rule, t.store.vocab);
  CHECK(ast == "(rule Even (stmt Even (X' Succ Succ)))");
}
