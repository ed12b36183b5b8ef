#ifndef RULELEARN_KB_HPP
#define RULELEARN_KB_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rulelearn/errors.hpp"

namespace rulelearn {

struct EntityTable {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> index;

  int add_or_get(const std::string& name) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(names.size());
    names.push_back(name);
    index.emplace(name, id);
    return id;
  }

  int get(const std::string& name) const {
    auto it = index.find(name);
    require(it != index.end(), Errc::UnknownEntity, "unknown entity '" + name + "'");
    return it->second;
  }

  int size() const { return static_cast<int>(names.size()); }
};

struct Predicate {
  std::string name;
  int arity = 2;  // 1 or 2
  int id = -1;
  bool is_inverse = false;
  bool is_identity = false;
  int base_id = -1;  // set for inverses
};

struct PredicateTable {
  std::vector<Predicate> entries;
  std::unordered_map<std::string, int> index;

  int add(Predicate p) {
    require(index.find(p.name) == index.end(), Errc::ParseError,
            "duplicate predicate '" + p.name + "'");
    p.id = static_cast<int>(entries.size());
    index.emplace(p.name, p.id);
    entries.push_back(std::move(p));
    return entries.back().id;
  }

  int get(const std::string& name) const {
    auto it = index.find(name);
    require(it != index.end(), Errc::UnknownPredicate, "unknown predicate '" + name + "'");
    return it->second;
  }

  const Predicate& at(int id) const { return entries[static_cast<std::size_t>(id)]; }
  int size() const { return static_cast<int>(entries.size()); }
  bool is_unary(int id) const { return at(id).arity == 1; }
};

// A fact <subj, pred, obj>; unary facts store subj == obj.
struct Fact {
  int subj = -1;
  int pred = -1;
  int obj = -1;

  bool operator==(const Fact& o) const {
    return subj == o.subj && pred == o.pred && obj == o.obj;
  }
  bool operator<(const Fact& o) const {
    if (pred != o.pred) return pred < o.pred;
    if (subj != o.subj) return subj < o.subj;
    return obj < o.obj;
  }
};

struct KnowledgeBase {
  EntityTable entities;
  PredicateTable predicates;
  std::vector<Fact> facts;  // deduplicated, matrices are built from these

  int num_entities() const { return entities.size(); }
};

// Sparse boolean |X| x |X| matrix with both orientations indexed for matvec.
// M[i,j] = 1 iff <x_i, P, x_j> is a fact.
class SparseBool {
 public:
  SparseBool() = default;
  SparseBool(int n, std::vector<std::pair<int, int>> coords);

  int dim() const { return n_; }
  std::size_t nnz() const { return coords_.size(); }
  const std::vector<std::pair<int, int>>& coords() const { return coords_; }
  bool contains(int i, int j) const;

  // y += M x (transpose=false) or y += M^T x (transpose=true), optionally
  // skipping one coordinate (i,j) of M. x and y are length-n arrays.
  template <class Real>
  void accumulate(const Real* x, Real* y, bool transpose, int skip_i = -1, int skip_j = -1) const {
    const auto& ptr = transpose ? row_ptr_ : col_ptr_;
    const auto& idx = transpose ? row_idx_ : col_idx_;
    // transpose=true: y_j = sum_i M[i,j] x_i, iterate source rows
    for (int s = 0; s < n_; ++s) {
      Real xs = x[s];
      if (xs == Real(0)) continue;
      for (std::size_t k = ptr[static_cast<std::size_t>(s)]; k < ptr[static_cast<std::size_t>(s) + 1]; ++k) {
        int d = idx[k];
        if (transpose) {
          if (s == skip_i && d == skip_j) continue;
          y[d] += xs;
        } else {
          if (d == skip_i && s == skip_j) continue;
          y[d] += xs;
        }
      }
    }
  }

  static SparseBool identity(int n);

 private:
  int n_ = 0;
  std::vector<std::pair<int, int>> coords_;  // sorted (i,j), unique
  // CSR over i (row_ptr_[i]..row_ptr_[i+1] lists j's) and CSC over j.
  std::vector<std::size_t> row_ptr_, col_ptr_;
  std::vector<int> row_idx_, col_idx_;
};

// Operator vocabulary + one matrix per operator. Base predicates keep their
// KB ids; inverses and the identity operator are appended.
struct AdjacencyStore {
  PredicateTable vocab;
  std::vector<SparseBool> mats;
  int num_entities = 0;
  int identity_id = -1;

  const SparseBool& matrix(int pred) const { return mats[static_cast<std::size_t>(pred)]; }
  int vocab_size() const { return vocab.size(); }
};

struct SplitDataset {
  std::vector<Fact> train, valid, test;
};

struct Query {
  int subj = -1;
  int pred = -1;
  int obj = -1;
  int label = 0;  // 1 = fact present in split, 0 = sampled negative
};

using QueryBatch = std::vector<Query>;

// --- loading -------------------------------------------------------------

// Parses a metadata file ("name<TAB>arity" per line) and a facts file
// (binary: "subj<TAB>pred<TAB>obj", unary: "entity<TAB>pred"). Entity ids
// are dense in first-appearance order; duplicate facts are dropped.
KnowledgeBase load_facts(const std::string& facts_path, const std::string& meta_path);

// Parses one split file against an existing KB; unknown entities or
// predicates are errors (transductive setting).
std::vector<Fact> load_split(const KnowledgeBase& kb, const std::string& path);

// In-memory variants used by the loaders and the tests.
KnowledgeBase parse_facts(const std::vector<std::string>& fact_lines,
                          const std::vector<std::string>& meta_lines);
std::vector<Fact> parse_split(const KnowledgeBase& kb, const std::vector<std::string>& lines);

// --- matrices ------------------------------------------------------------

AdjacencyStore build_matrices(const KnowledgeBase& kb, bool add_inverses = true,
                              bool add_identity = true);

// --- sampling ------------------------------------------------------------

// n label-0 queries drawn uniformly without replacement from the zero
// entries of the target matrix (diagonal only for unary targets).
QueryBatch sample_negative_queries(const AdjacencyStore& store, int target, int n,
                                   std::uint64_t seed);

// --- synthetic benchmark -------------------------------------------------

struct GeneratedKb {
  KnowledgeBase kb;  // facts = train facts (matrices must not see held-out data)
  SplitDataset splits;

  std::size_t total_facts() const {
    return splits.train.size() + splits.valid.size() + splits.test.size();
  }
};

// Entities 0..n-1 with Zero(0), Even(2i), Succ(i,i+1). holdout_frac of the
// Even facts (interior ones, evenly spread) go to the test split.
GeneratedKb gen_even_successor(int n, double holdout_frac = 0.2);

// --- misc ----------------------------------------------------------------

std::vector<double> one_hot(int id, int dim);

std::uint64_t kb_digest(const KnowledgeBase& kb);

}  // namespace rulelearn

#endif
