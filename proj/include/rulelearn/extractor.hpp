#ifndef RULELEARN_EXTRACTOR_HPP
#define RULELEARN_EXTRACTOR_HPP

#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "rulelearn/kb.hpp"
#include "rulelearn/rulespace.hpp"

namespace rulelearn {

// Operator-call chain, earliest hop first. Identity hops are stripped at
// extraction time; an empty chain means the bare root variable.
struct OperatorPath {
  std::vector<int> ops;

  bool operator==(const OperatorPath& o) const { return ops == o.ops; }
};

enum class PathRoot { X, XPrime, UnaryRoot };

struct ArgPath {
  PathRoot root = PathRoot::X;
  int root_pred = -1;  // UnaryRoot only: the membership set the chain starts at
  OperatorPath path;

  bool operator==(const ArgPath& o) const {
    return root == o.root && root_pred == o.root_pred && path == o.path;
  }
};

// A predicate applied to operator chains. Unary statements carry only the
// second-argument path; binary carry both.
struct StatementAst {
  int pred = -1;
  int arity = 2;
  ArgPath arg1;
  ArgPath arg2;

  bool operator==(const StatementAst& o) const {
    if (pred != o.pred || arity != o.arity) return false;
    if (arity == 2 && !(arg1 == o.arg1)) return false;
    return arg2 == o.arg2;
  }
};

struct FormulaNode {
  enum class Kind { Stmt, Neg, And };
  Kind kind = Kind::Stmt;
  int stmt = -1;                      // Stmt: index into RuleAst::statements
  std::unique_ptr<FormulaNode> a, b;  // Neg: a; And: a, b
  int level = -1, index = -1;         // pool slot this node came from (if extracted)

  std::unique_ptr<FormulaNode> clone() const {
    auto n = std::make_unique<FormulaNode>();
    n->kind = kind;
    n->stmt = stmt;
    n->level = level;
    n->index = index;
    if (a) n->a = a->clone();
    if (b) n->b = b->clone();
    return n;
  }
};

struct RuleAst {
  int head_pred = -1;
  std::vector<StatementAst> statements;
  std::unique_ptr<FormulaNode> root;

  RuleAst() = default;
  RuleAst(const RuleAst& o) : head_pred(o.head_pred), statements(o.statements) {
    if (o.root) root = o.root->clone();
  }
  RuleAst& operator=(const RuleAst& o) {
    head_pred = o.head_pred;
    statements = o.statements;
    root = o.root ? o.root->clone() : nullptr;
    return *this;
  }
  RuleAst(RuleAst&&) = default;
  RuleAst& operator=(RuleAst&&) = default;
};

// structural equality ignoring provenance slots
bool rules_equal(const RuleAst& a, const RuleAst& b);

// Reads the hard rule out of a one-hot bundle: s_o picks the output formula,
// formula attentions unwind to statement leaves, path attentions fix each
// argument chain. Throws NotHardened unless the bundle is exactly one-hot.
RuleAst extract(const AttentionBundle& bundle, const RuleSpaceConfig& cfg,
                const PredicateTable& vocab, int target);

// Inverse of extract: a one-hot bundle whose hard scores equal the rule's.
AttentionBundle encode_bundle(const RuleAst& rule, const RuleSpaceConfig& cfg,
                              const PredicateTable& vocab);

// --- rendering / parsing ---------------------------------------------------

std::string render_operator_form(const RuleAst& rule, const PredicateTable& vocab);
std::string render_variable_form(const RuleAst& rule, const PredicateTable& vocab);
std::string render_ast_form(const RuleAst& rule, const PredicateTable& vocab);

RuleAst parse_operator_form(const std::string& text, const PredicateTable& vocab);
RuleAst parse_variable_form(const std::string& text, const PredicateTable& vocab);

// --- oracle ------------------------------------------------------------------

struct OracleOptions {
  double temperature = 1.0;
  int entity_limit = 200;
};

// Brute-force grounding: enumerates operator-chain path counts by walking
// the fact list (no adjacency matrices), applies the statement sigmoids and
// the soft-logic formula tree. The independent check for everything else.
double grounding_oracle(const RuleAst& rule, const KnowledgeBase& kb, const PredicateTable& vocab,
                        const Query& query, const OracleOptions& opts = {});

// --- hard evaluation --------------------------------------------------------

struct HardEvalResult {
  double accuracy = 0.0;
  int n_classified = 0;
  double mrr = 0.0;
  double hits10 = 0.0;
  int n_ranked = 0;
};

// Classification accuracy of a rule set at the given threshold, plus
// filtered ranking metrics over the label-1 queries. Queries are scored by
// the max over rules with a matching head (0 when no rule matches).
HardEvalResult evaluate_hard(const std::vector<RuleAst>& rules, const AdjacencyStore& store,
                             const RuleSpaceConfig& cfg, const QueryBatch& queries,
                             double threshold = 0.6,
                             const std::vector<Fact>* known_true = nullptr);

// hard scores per query (max over matching rules)
std::vector<double> hard_scores(const std::vector<RuleAst>& rules, const AdjacencyStore& store,
                                const RuleSpaceConfig& cfg, const QueryBatch& queries);

}  // namespace rulelearn

#endif
