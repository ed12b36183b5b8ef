#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <set>

#include "common.hpp"
#include "doctest.h"
#include "rulelearn/kb.hpp"

using namespace rulelearn;

TEST_CASE("load_facts parses binary facts with dense first-appearance ids") {
  KnowledgeBase kb = parse_facts({"e0\tSucc\te1", "e1\tSucc\te2"}, {"Succ\t2"});
  CHECK(kb.num_entities() == 3);
  CHECK(kb.predicates.size() == 1);
  CHECK(kb.facts.size() == 2);
  CHECK(kb.entities.get("e0") == 0);
  CHECK(kb.entities.get("e1") == 1);
  CHECK(kb.entities.get("e2") == 2);
}

TEST_CASE("unary facts live on the diagonal") {
  KnowledgeBase kb = parse_facts({"e0\tEven"}, {"Even\t1"});
  REQUIRE(kb.facts.size() == 1);
  CHECK(kb.facts[0].subj == 0);
  CHECK(kb.facts[0].obj == 0);
  AdjacencyStore store = build_matrices(kb, false, false);
  CHECK(store.matrix(0).contains(0, 0));
  CHECK(store.matrix(0).nnz() == 1);
}

TEST_CASE("load errors") {
  CHECK_THROWS_WITH_AS(parse_facts({}, {"Succ\t2"}), doctest::Contains("EmptyKB"), Error);
  CHECK_THROWS_AS(parse_facts({"e0\tNope\te1"}, {"Succ\t2"}), Error);
  try {
    parse_facts({"e0\tNope\te1"}, {"Succ\t2"});
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownPredicate);
  }
  try {
    parse_facts({"e0\tSucc"}, {"Succ\t2"});
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ArityMismatch);
  }
  try {
    parse_facts({"e0\tEven\te1"}, {"Even\t1"});
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ArityMismatch);
  }
}

TEST_CASE("duplicate facts are dropped") {
  KnowledgeBase kb = parse_facts({"e0\tSucc\te1", "e0\tSucc\te1"}, {"Succ\t2"});
  CHECK(kb.facts.size() == 1);
}

TEST_CASE("split loading rejects unknown entities (transductive)") {
  KnowledgeBase kb = testing::toy3();
  auto split = parse_split(kb, {"e0\tEven"});
  CHECK(split.size() == 1);
  CHECK_THROWS_AS(parse_split(kb, {"e9\tEven"}), Error);
}

TEST_CASE("build_matrices: toy-3 adjacency, inverses, identity") {
  KnowledgeBase kb = testing::toy3();
  AdjacencyStore store = build_matrices(kb, true, true);
  int succ = store.vocab.get("Succ");
  int even = store.vocab.get("Even");
  int inv = store.vocab.get("Succ^-1");
  int id = store.identity_id;

  CHECK(store.matrix(succ).nnz() == 2);
  CHECK(store.matrix(succ).contains(0, 1));
  CHECK(store.matrix(succ).contains(1, 2));
  CHECK_FALSE(store.matrix(succ).contains(0, 2));

  CHECK(store.matrix(even).contains(0, 0));
  CHECK(store.matrix(even).contains(2, 2));
  CHECK(store.matrix(even).nnz() == 2);

  // inverse is the transpose
  for (auto [i, j] : store.matrix(succ).coords()) CHECK(store.matrix(inv).contains(j, i));
  CHECK(store.matrix(inv).nnz() == store.matrix(succ).nnz());

  CHECK(store.matrix(id).nnz() == 3);
  for (int i = 0; i < 3; ++i) CHECK(store.matrix(id).contains(i, i));
}

TEST_CASE("declared predicate with zero facts gives an all-zero matrix") {
  KnowledgeBase kb = parse_facts({"e0\tSucc\te1"}, {"Succ\t2", "Ghost\t2"});
  AdjacencyStore store = build_matrices(kb, true, true);
  CHECK(store.matrix(store.vocab.get("Ghost")).nnz() == 0);
  CHECK(store.matrix(store.vocab.get("Ghost^-1")).nnz() == 0);
}

TEST_CASE("nonzeros across non-derived matrices equal the dedup'd fact count") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    KnowledgeBase kb = testing::random_kb(20, 1, 2, 0.05, seed);
    AdjacencyStore store = build_matrices(kb, true, true);
    std::size_t nnz = 0;
    for (int k = 0; k < kb.predicates.size(); ++k) nnz += store.matrix(k).nnz();
    CHECK(nnz == kb.facts.size());
  }
}

TEST_CASE("inverse-matrix property on random KBs") {
  KnowledgeBase kb = testing::random_kb(30, 0, 3, 0.03, 7);
  AdjacencyStore store = build_matrices(kb, true, false);
  for (int k = 0; k < store.vocab.size(); ++k) {
    const Predicate& p = store.vocab.at(k);
    if (!p.is_inverse) continue;
    const SparseBool& base = store.matrix(p.base_id);
    const SparseBool& inv = store.matrix(k);
    REQUIRE(base.nnz() == inv.nnz());
    for (int i = 0; i < store.num_entities; ++i)
      for (int j = 0; j < store.num_entities; ++j) CHECK(inv.contains(i, j) == base.contains(j, i));
  }
}

TEST_CASE("negative sampling: membership, determinism, errors") {
  KnowledgeBase kb = testing::toy3();
  AdjacencyStore store = build_matrices(kb, false, false);
  int succ = store.vocab.get("Succ");

  // oracle: the 7 zero entries of M_Succ
  std::set<std::pair<int, int>> zeros;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (!store.matrix(succ).contains(i, j)) zeros.insert({i, j});
  REQUIRE(zeros.size() == 7);

  QueryBatch one = sample_negative_queries(store, succ, 1, 42);
  REQUIRE(one.size() == 1);
  CHECK(zeros.count({one[0].subj, one[0].obj}) == 1);
  CHECK(one[0].label == 0);

  QueryBatch again = sample_negative_queries(store, succ, 1, 42);
  CHECK(again[0].subj == one[0].subj);
  CHECK(again[0].obj == one[0].obj);

  CHECK(sample_negative_queries(store, succ, 0, 0).empty());

  QueryBatch all = sample_negative_queries(store, succ, 7, 5);
  std::set<std::pair<int, int>> got;
  for (const Query& q : all) got.insert({q.subj, q.obj});
  CHECK(got == zeros);  // without replacement

  try {
    sample_negative_queries(store, succ, 8, 0);
    FAIL("expected NotEnoughNegatives");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotEnoughNegatives);
  }
}

TEST_CASE("negative sampling on a full matrix reports NoNegatives") {
  KnowledgeBase kb = parse_facts({"a\tR\ta", "a\tR\tb", "b\tR\ta", "b\tR\tb"}, {"R\t2"});
  AdjacencyStore store = build_matrices(kb, false, false);
  try {
    sample_negative_queries(store, 0, 1, 0);
    FAIL("expected NoNegatives");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoNegatives);
  }
}

TEST_CASE("negative sampling never returns a present fact (exhaustive small KBs)") {
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    KnowledgeBase kb = testing::random_kb(25, 1, 2, 0.08, seed);
    AdjacencyStore store = build_matrices(kb, true, true);
    for (int target = 0; target < kb.predicates.size(); ++target) {
      bool unary = store.vocab.is_unary(target);
      std::uint64_t total = unary ? 25u : 25u * 25u;
      std::uint64_t zeros = total - store.matrix(target).nnz();
      int n = static_cast<int>(std::min<std::uint64_t>(zeros, 40));
      if (zeros == 0) continue;
      QueryBatch negs = sample_negative_queries(store, target, n, seed * 91 + target);
      for (const Query& q : negs) {
        CHECK_FALSE(store.matrix(target).contains(q.subj, q.obj));
        if (unary) CHECK(q.subj == q.obj);
      }
    }
  }
}

TEST_CASE("unary negative sampling stays on the diagonal") {
  KnowledgeBase kb = testing::toy3();
  AdjacencyStore store = build_matrices(kb, false, false);
  int even = store.vocab.get("Even");
  QueryBatch negs = sample_negative_queries(store, even, 1, 3);
  REQUIRE(negs.size() == 1);
  CHECK(negs[0].subj == negs[0].obj);
  CHECK(negs[0].subj == 1);  // e1 is the only non-even entity
}

TEST_CASE("gen_even_successor: n=3 fact set") {
  GeneratedKb g = gen_even_successor(3, 0.0);
  CHECK(g.total_facts() == 5);  // Zero(0), Even(0), Even(2), Succ(0,1), Succ(1,2)
  CHECK(g.kb.num_entities() == 3);
  CHECK(g.kb.predicates.size() == 3);
  CHECK(g.splits.test.empty());
}

TEST_CASE("gen_even_successor: fact count formula and sizes") {
  for (int n : {2, 3, 10, 50, 137, 1000}) {
    GeneratedKb g = gen_even_successor(n, 0.2);
    std::size_t expected = 1 + static_cast<std::size_t>((n + 1) / 2) + static_cast<std::size_t>(n - 1);
    CHECK(g.total_facts() == expected);
    CHECK(g.kb.num_entities() == n);
  }
  // the paper's table lists 17 facts for ES-10; the generator's count is
  // documented as the formula above (15 for n=10)
  CHECK(gen_even_successor(10, 0.2).total_facts() == 15);
}

TEST_CASE("gen_even_successor: invalid size") {
  try {
    gen_even_successor(1, 0.2);
    FAIL("expected InvalidSize");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InvalidSize);
  }
}

TEST_CASE("gen_even_successor: holdout is interior, spread, disjoint") {
  GeneratedKb g = gen_even_successor(50, 0.2);
  int even_id = g.kb.predicates.get("Even");
  std::set<int> held;
  for (const Fact& f : g.splits.test) {
    CHECK(f.pred == even_id);
    held.insert(f.subj);
  }
  CHECK(held.size() == 5);  // 20% of 25 evens
  CHECK(held.count(0) == 0);
  CHECK(held.count(48) == 0);
  // neighbors of every held-out even stay in train
  std::set<int> train_evens;
  for (const Fact& f : g.splits.train)
    if (f.pred == even_id) train_evens.insert(f.subj);
  for (int h : held) {
    CHECK(train_evens.count(h - 2));
    CHECK(train_evens.count(h + 2));
  }
  // splits are disjoint
  std::set<std::tuple<int, int, int>> seen;
  for (const auto* fs : {&g.splits.train, &g.splits.valid, &g.splits.test})
    for (const Fact& f : *fs) CHECK(seen.insert({f.subj, f.pred, f.obj}).second);
}

TEST_CASE("gen_even_successor: n=1000 generates quickly") {
  auto start = std::chrono::steady_clock::now();
  GeneratedKb g = gen_even_successor(1000, 0.2);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(g.total_facts() == 1 + 500 + 999);
  CHECK(secs < 1.0);
}

TEST_CASE("one_hot") {
  auto v = one_hot(1, 3);
  CHECK(v == std::vector<double>{0.0, 1.0, 0.0});
  CHECK(one_hot(0, 1) == std::vector<double>{1.0});
  try {
    one_hot(3, 3);
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IndexOutOfRange);
  }
}
