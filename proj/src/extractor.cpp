#include "rulelearn/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "rulelearn/metrics.hpp"

namespace rulelearn {

namespace {

constexpr const char* kArrow = "\xE2\x86\x90";  // left arrow
constexpr const char* kAnd = "\xE2\x88\xA7";    // logical and
constexpr const char* kNeg = "\xC2\xAC";        // logical not
constexpr const char* kPhi = "\xCF\x86";        // phi

int argmax_row(const Tensor64& t, int row) {
  int cols = t.rank() == 2 ? t.shape[1] : t.shape[0];
  const double* r = t.v.data() + static_cast<std::ptrdiff_t>(row) * cols;
  int best = 0;
  for (int j = 1; j < cols; ++j)
    if (r[j] > r[best]) best = j;
  return best;
}

bool subtree_equal(const FormulaNode* x, const FormulaNode* y) {
  if (x == y) return x != nullptr;
  if (!x || !y || x->kind != y->kind) return false;
  switch (x->kind) {
    case FormulaNode::Kind::Stmt:
      return x->stmt == y->stmt;
    case FormulaNode::Kind::Neg:
      return subtree_equal(x->a.get(), y->a.get());
    case FormulaNode::Kind::And:
      return subtree_equal(x->a.get(), y->a.get()) && subtree_equal(x->b.get(), y->b.get());
  }
  return false;
}

OperatorPath strip_identities(const std::vector<int>& ops, const PredicateTable& vocab) {
  OperatorPath p;
  for (int op : ops)
    if (!vocab.at(op).is_identity) p.ops.push_back(op);
  return p;
}

}  // namespace

bool rules_equal(const RuleAst& a, const RuleAst& b) {
  if (a.head_pred != b.head_pred) return false;
  if (!(a.statements == b.statements)) return false;
  return subtree_equal(a.root.get(), b.root.get());
}

// --- extraction --------------------------------------------------------------

RuleAst extract(const AttentionBundle& bundle, const RuleSpaceConfig& cfg,
                const PredicateTable& vocab, int target) {
  bundle.validate(cfg);
  require(bundle.is_one_hot(), Errc::NotHardened, "extract needs a hardened bundle");
  require(target >= 0 && target < vocab.size(), Errc::UnknownPredicate, "bad target id");

  RuleAst rule;
  rule.head_pred = target;

  // the single global operator chain shared by all statements
  std::vector<int> chain;
  for (int t = 0; t < cfg.T; ++t) chain.push_back(argmax_row(bundle.s_phi, t));

  std::map<int, int> stmt_index;  // predicate k -> position in rule.statements
  auto statement_leaf = [&](int k) {
    auto it = stmt_index.find(k);
    if (it == stmt_index.end()) {
      StatementAst st;
      st.pred = k;
      st.arity = vocab.at(k).arity;
      int t2 = argmax_row(bundle.s_psi_p, k) + 1;
      st.arg2.root = PathRoot::XPrime;
      st.arg2.path = strip_identities({chain.begin(), chain.begin() + t2}, vocab);
      if (st.arity == 2) {
        int t1 = argmax_row(bundle.s_psi, k) + 1;
        st.arg1.root = PathRoot::X;
        st.arg1.path = strip_identities({chain.begin(), chain.begin() + t1}, vocab);
      }
      it = stmt_index.emplace(k, static_cast<int>(rule.statements.size())).first;
      rule.statements.push_back(std::move(st));
    }
    auto node = std::make_unique<FormulaNode>();
    node->kind = FormulaNode::Kind::Stmt;
    node->stmt = it->second;
    node->level = 0;
    node->index = k;
    return node;
  };

  // unwind a pool slot at (level, index) down to statement leaves
  std::function<std::unique_ptr<FormulaNode>(int, int)> unwind = [&](int level, int index) {
    if (level == 0) return statement_leaf(index);
    int prev = level == 1 ? cfg.K : cfg.C;
    auto pick = [&](const Tensor64& s) {
      int i = argmax_row(s, index);
      bool negated = i >= prev;
      auto child = unwind(level - 1, i % prev);
      if (negated) {
        auto neg = std::make_unique<FormulaNode>();
        neg->kind = FormulaNode::Kind::Neg;
        neg->a = std::move(child);
        return neg;
      }
      return child;
    };
    auto node = std::make_unique<FormulaNode>();
    node->kind = FormulaNode::Kind::And;
    node->a = pick(bundle.s_f[static_cast<std::size_t>(level - 1)]);
    node->b = pick(bundle.s_f_p[static_cast<std::size_t>(level - 1)]);
    node->level = level;
    node->index = index;
    return node;
  };

  int slot = argmax_row(bundle.s_o, 0);
  int root_level = slot < cfg.K ? 0 : 1 + (slot - cfg.K) / cfg.C;
  int root_index = slot < cfg.K ? slot : (slot - cfg.K) % cfg.C;
  rule.root = unwind(root_level, root_index);
  return rule;
}

// --- re-encoding ---------------------------------------------------------------

namespace {

Tensor64 one_hot_rows(int rows, int cols) {
  Tensor64 t = Tensor64::zeros({rows, cols});
  for (int i = 0; i < rows; ++i) t.at(i, 0) = 1.0;
  return t;
}

void set_row(Tensor64& t, int row, int idx) {
  for (int j = 0; j < t.shape[1]; ++j) t.at(row, j) = 0.0;
  t.at(row, idx) = 1.0;
}

// strips an even number of negations; reports whether one remains
const FormulaNode* strip_negs(const FormulaNode* n, bool& negated) {
  negated = false;
  while (n && n->kind == FormulaNode::Kind::Neg) {
    negated = !negated;
    n = n->a.get();
  }
  return n;
}

int tree_depth(const FormulaNode* n) {
  if (!n) return 0;
  switch (n->kind) {
    case FormulaNode::Kind::Stmt:
      return 0;
    case FormulaNode::Kind::Neg:
      return tree_depth(n->a.get());
    case FormulaNode::Kind::And:
      return 1 + std::max(tree_depth(n->a.get()), tree_depth(n->b.get()));
  }
  return 0;
}

}  // namespace

AttentionBundle encode_bundle(const RuleAst& rule, const RuleSpaceConfig& cfg,
                              const PredicateTable& vocab) {
  AttentionBundle b;
  b.s_phi = one_hot_rows(cfg.T, cfg.K);
  b.s_psi = one_hot_rows(cfg.K, cfg.T);
  b.s_psi_p = one_hot_rows(cfg.K, cfg.T);
  for (int l = 1; l <= cfg.attention_levels(); ++l) {
    b.s_f.push_back(one_hot_rows(cfg.C, cfg.level_input_size(l)));
    b.s_f_p.push_back(one_hot_rows(cfg.C, cfg.level_input_size(l)));
  }
  b.s_o = one_hot_rows(1, cfg.pool_size());

  // rebuild the global chain: all statement paths must be prefixes of the
  // longest one; an empty path forces an Identity first hop
  const std::vector<int>* longest = nullptr;
  bool has_empty = false;
  auto scan = [&](const ArgPath& ap) {
    require(ap.root != PathRoot::UnaryRoot, Errc::EncodeError,
            "unary-root paths are not expressible as attention bundles");
    if (ap.path.ops.empty()) has_empty = true;
    if (!longest || ap.path.ops.size() > longest->size()) longest = &ap.path.ops;
  };
  for (const auto& st : rule.statements) {
    if (st.arity == 2) scan(st.arg1);
    scan(st.arg2);
  }
  require(longest != nullptr, Errc::EncodeError, "rule has no statements");

  std::vector<int> chain;
  int identity = -1;
  for (int k = 0; k < vocab.size(); ++k)
    if (vocab.at(k).is_identity) identity = k;
  if (has_empty) {
    require(identity >= 0, Errc::EncodeError, "empty path needs an Identity operator");
    chain.push_back(identity);
  }
  chain.insert(chain.end(), longest->begin(), longest->end());
  require(static_cast<int>(chain.size()) <= cfg.T, Errc::EncodeError,
          "rule path longer than T");
  while (static_cast<int>(chain.size()) < cfg.T)
    chain.push_back(identity >= 0 ? identity : chain.empty() ? 0 : chain.back());
  for (int t = 0; t < cfg.T; ++t) set_row(b.s_phi, t, chain[static_cast<std::size_t>(t)]);

  auto path_len = [&](const ArgPath& ap) {
    const auto& ops = ap.path.ops;
    require(std::equal(ops.begin(), ops.end(), longest->begin()), Errc::EncodeError,
            "statement paths are not prefix-consistent");
    int t2 = static_cast<int>(ops.size()) + (has_empty ? 1 : 0);
    if (t2 == 0) t2 = 1;
    require(t2 <= cfg.T, Errc::EncodeError, "path length exceeds T");
    return t2;
  };
  for (const auto& st : rule.statements) {
    require(st.pred >= 0 && st.pred < cfg.K, Errc::EncodeError, "statement predicate id");
    if (st.arity == 2) set_row(b.s_psi, st.pred, path_len(st.arg1) - 1);
    set_row(b.s_psi_p, st.pred, path_len(st.arg2) - 1);
  }

  // place formula nodes into level slots; provenance is honored when present,
  // otherwise slots are allocated and shallow branches padded by
  // self-conjunction (hard scores unchanged)
  std::vector<int> next_free(static_cast<std::size_t>(cfg.attention_levels()) + 1, 0);
  std::vector<std::vector<std::pair<const FormulaNode*, int>>> placed(
      static_cast<std::size_t>(cfg.attention_levels()) + 1);

  std::function<int(const FormulaNode*, int)> place = [&](const FormulaNode* n, int level) -> int {
    if (level == 0) {
      require(n->kind == FormulaNode::Kind::Stmt, Errc::EncodeError,
              "conjunction deeper than the level budget");
      return rule.statements[static_cast<std::size_t>(n->stmt)].pred;
    }
    for (auto& [node, idx] : placed[static_cast<std::size_t>(level)])
      if (subtree_equal(node, n)) return idx;
    int prev = level == 1 ? cfg.K : cfg.C;
    int ia, ib;
    bool na = false, nb = false;
    if (n->kind == FormulaNode::Kind::And) {
      const FormulaNode* ca = strip_negs(n->a.get(), na);
      const FormulaNode* cb = strip_negs(n->b.get(), nb);
      ia = place(ca, level - 1);
      ib = place(cb, level - 1);
    } else {
      // pass a shallow node upward as a self-conjunction
      ia = ib = place(n, level - 1);
    }
    int c;
    if (n->level == level && n->index >= 0) {
      c = n->index;
    } else {
      c = next_free[static_cast<std::size_t>(level)]++;
      // skip slots pinned by provenance elsewhere in the tree
      while (true) {
        bool clash = false;
        for (auto& [node, idx] : placed[static_cast<std::size_t>(level)])
          if (idx == c) clash = true;
        if (!clash) break;
        c = next_free[static_cast<std::size_t>(level)]++;
      }
    }
    require(c < cfg.C, Errc::EncodeError, "level slot budget C exceeded");
    set_row(b.s_f[static_cast<std::size_t>(level - 1)], c, ia + (na ? prev : 0));
    set_row(b.s_f_p[static_cast<std::size_t>(level - 1)], c, ib + (nb ? prev : 0));
    placed[static_cast<std::size_t>(level)].emplace_back(n, c);
    return c;
  };

  bool root_neg = false;
  const FormulaNode* root = strip_negs(rule.root.get(), root_neg);
  require(!root_neg, Errc::EncodeError, "negation at the output slot is not representable");
  int root_level = root->level >= 0 && root->kind != FormulaNode::Kind::Stmt
                       ? root->level
                       : tree_depth(root);
  require(root_level <= cfg.attention_levels(), Errc::EncodeError,
          "rule depth exceeds the level budget L");
  int root_index = place(root, root_level);
  int slot = root_level == 0 ? root_index : cfg.K + (root_level - 1) * cfg.C + root_index;
  set_row(b.s_o, 0, slot);
  return b;
}

// --- rendering -----------------------------------------------------------------

namespace {

std::string phi_chain(const ArgPath& ap, const PredicateTable& vocab, bool unary_head) {
  std::string cur;
  switch (ap.root) {
    case PathRoot::X:
      cur = "X";
      break;
    case PathRoot::XPrime:
      cur = unary_head ? "X" : "X'";
      break;
    case PathRoot::UnaryRoot:
      cur = std::string(kPhi) + "_" + vocab.at(ap.root_pred).name + "()";
      break;
  }
  for (int op : ap.path.ops) {
    if (vocab.at(op).is_identity) continue;
    cur = std::string(kPhi) + "_" + vocab.at(op).name + "(" + cur + ")";
  }
  return cur;
}

std::string statement_operator_text(const StatementAst& st, const PredicateTable& vocab,
                                    bool unary_head) {
  const std::string name = vocab.at(st.pred).name;
  if (st.arity == 1) return name + "(" + phi_chain(st.arg2, vocab, unary_head) + ")";
  return name + "(" + phi_chain(st.arg1, vocab, unary_head) + ", " +
         phi_chain(st.arg2, vocab, unary_head) + ")";
}

struct VarForm {
  const RuleAst* rule;
  const PredicateTable* vocab;
  bool unary_head;
  int next_var = 1;

  std::string fresh() { return "Y" + std::to_string(next_var++); }

  // emits the atoms of one path; returns the end variable
  std::string walk(const ArgPath& ap, std::vector<std::string>& atoms) {
    std::string cur;
    switch (ap.root) {
      case PathRoot::X:
        cur = "X";
        break;
      case PathRoot::XPrime:
        cur = unary_head ? "X" : "X'";
        break;
      case PathRoot::UnaryRoot: {
        cur = fresh();
        atoms.push_back(vocab->at(ap.root_pred).name + "(" + cur + ")");
        break;
      }
    }
    for (int op : ap.path.ops) {
      const Predicate& p = vocab->at(op);
      if (p.is_identity) continue;
      if (p.arity == 1) {
        atoms.push_back(p.name + "(" + cur + ")");
        continue;
      }
      std::string next = fresh();
      if (p.is_inverse) {
        atoms.push_back(vocab->at(p.base_id).name + "(" + next + ", " + cur + ")");
      } else {
        atoms.push_back(p.name + "(" + cur + ", " + next + ")");
      }
      cur = next;
    }
    return cur;
  }

  std::string statement_text(const StatementAst& st) {
    std::vector<std::string> atoms;
    std::string v1, v2;
    if (st.arity == 2) v1 = walk(st.arg1, atoms);
    v2 = walk(st.arg2, atoms);
    const Predicate& head = vocab->at(st.pred);
    if (st.arity == 1)
      atoms.push_back(head.name + "(" + v2 + ")");
    else if (head.is_inverse)
      atoms.push_back(vocab->at(head.base_id).name + "(" + v2 + ", " + v1 + ")");
    else
      atoms.push_back(head.name + "(" + v1 + ", " + v2 + ")");
    std::string out;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (i) out += std::string(" ") + kAnd + " ";
      out += atoms[i];
    }
    return out;
  }
};

// stmt_parens: parenthesize statements below the root so that a flat atom
// run is always exactly one statement (the variable form needs this to stay
// unambiguous; operator-form statements are single atoms already)
template <class StmtText>
std::string render_formula(const FormulaNode* n, StmtText&& stmt_text, bool stmt_parens,
                           bool at_root) {
  switch (n->kind) {
    case FormulaNode::Kind::Stmt: {
      std::string s = stmt_text(n->stmt);
      if (stmt_parens && !at_root) return "(" + s + ")";
      return s;
    }
    case FormulaNode::Kind::Neg:
      return std::string(kNeg) + render_formula(n->a.get(), stmt_text, stmt_parens, false);
    case FormulaNode::Kind::And: {
      if (subtree_equal(n->a.get(), n->b.get())) {
        // duplicate conjuncts collapse in print with a multiplicity mark
        std::string inner = render_formula(n->a.get(), stmt_text, stmt_parens, false);
        bool wrapped = n->a->kind == FormulaNode::Kind::Stmt;
        return (wrapped ? inner : "(" + inner + ")") + "^2";
      }
      std::string lhs = render_formula(n->a.get(), stmt_text, stmt_parens, false);
      std::string rhs = render_formula(n->b.get(), stmt_text, stmt_parens, false);
      return "(" + lhs + " " + kAnd + " " + rhs + ")";
    }
  }
  return "";
}

std::string head_text(const RuleAst& rule, const PredicateTable& vocab) {
  const Predicate& head = vocab.at(rule.head_pred);
  return head.name + (head.arity == 1 ? "(X)" : "(X, X')");
}

}  // namespace

std::string render_operator_form(const RuleAst& rule, const PredicateTable& vocab) {
  bool unary_head = vocab.at(rule.head_pred).arity == 1;
  std::string body = render_formula(
      rule.root.get(),
      [&](int si) {
        return statement_operator_text(rule.statements[static_cast<std::size_t>(si)], vocab,
                                       unary_head);
      },
      false, true);
  return head_text(rule, vocab) + " " + kArrow + " " + body;
}

std::string render_variable_form(const RuleAst& rule, const PredicateTable& vocab) {
  VarForm vf{&rule, &vocab, vocab.at(rule.head_pred).arity == 1};
  std::string body = render_formula(
      rule.root.get(),
      [&](int si) { return vf.statement_text(rule.statements[static_cast<std::size_t>(si)]); },
      true, true);
  return head_text(rule, vocab) + " " + kArrow + " " + body;
}

std::string render_ast_form(const RuleAst& rule, const PredicateTable& vocab) {
  std::ostringstream os;
  auto path_text = [&](const ArgPath& ap) {
    std::string s = "(";
    switch (ap.root) {
      case PathRoot::X: s += "X"; break;
      case PathRoot::XPrime: s += "X'"; break;
      case PathRoot::UnaryRoot: s += "(unary-root " + vocab.at(ap.root_pred).name + ")"; break;
    }
    for (int op : ap.path.ops) s += " " + vocab.at(op).name;
    return s + ")";
  };
  std::function<void(const FormulaNode*)> emit = [&](const FormulaNode* n) {
    switch (n->kind) {
      case FormulaNode::Kind::Stmt: {
        const auto& st = rule.statements[static_cast<std::size_t>(n->stmt)];
        os << "(stmt " << vocab.at(st.pred).name;
        if (st.arity == 2) os << " " << path_text(st.arg1);
        os << " " << path_text(st.arg2) << ")";
        break;
      }
      case FormulaNode::Kind::Neg:
        os << "(not ";
        emit(n->a.get());
        os << ")";
        break;
      case FormulaNode::Kind::And:
        os << "(and ";
        emit(n->a.get());
        os << " ";
        emit(n->b.get());
        os << ")";
        break;
    }
  };
  os << "(rule " << vocab.at(rule.head_pred).name << " ";
  emit(rule.root.get());
  os << ")";
  return os.str();
}

// --- parsing -------------------------------------------------------------------

namespace {

enum class Tok { Ident, LParen, RParen, Comma, Arrow, And, Neg, Phi, Sq2, VarX, VarXP, End };

struct Lexer {
  std::string s;
  std::size_t pos = 0;
  Tok tok = Tok::End;
  std::string text;

  explicit Lexer(std::string in) : s(std::move(in)) { next(); }

  bool starts(const char* lit) const {
    std::size_t n = std::strlen(lit);
    return s.compare(pos, n, lit) == 0;
  }

  void next() {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    text.clear();
    if (pos >= s.size()) {
      tok = Tok::End;
      return;
    }
    auto take = [&](Tok t, std::size_t n) {
      tok = t;
      pos += n;
    };
    if (starts(kArrow)) return take(Tok::Arrow, 3);
    if (starts("<-")) return take(Tok::Arrow, 2);
    if (starts(kAnd)) return take(Tok::And, 3);
    if (starts(kNeg)) return take(Tok::Neg, 2);
    if (starts("^2")) return take(Tok::Sq2, 2);
    char c = s[pos];
    if (c == '(') return take(Tok::LParen, 1);
    if (c == ')') return take(Tok::RParen, 1);
    if (c == ',') return take(Tok::Comma, 1);
    if (starts(kPhi) && pos + 2 < s.size() && s[pos + 2] == '_') return take(Tok::Phi, 3);
    if (c == 'X') {
      if (pos + 1 < s.size() && s[pos + 1] == '\'') return take(Tok::VarXP, 2);
      // 'X' only stands alone; identifiers starting with X continue below
      if (pos + 1 >= s.size() || !(std::isalnum(static_cast<unsigned char>(s[pos + 1])) ||
                                   s[pos + 1] == '_'))
        return take(Tok::VarX, 1);
    }
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
        ++pos;
      if (s.compare(pos, 3, "^-1") == 0) pos += 3;
      tok = Tok::Ident;
      text = s.substr(start, pos - start);
      return;
    }
    fail(Errc::ParseError, "unexpected character at position " + std::to_string(pos) + " in '" + s + "'");
  }

  void expect(Tok t, const char* what) {
    require(tok == t, Errc::ParseError, std::string("expected ") + what + " in '" + s + "'");
    next();
  }
};

struct OperatorFormParser {
  Lexer lex;
  const PredicateTable& vocab;
  RuleAst rule;
  bool unary_head = false;
  std::map<int, int> stmt_index;

  OperatorFormParser(const std::string& text, const PredicateTable& v) : lex(text), vocab(v) {}

  RuleAst parse() {
    require(lex.tok == Tok::Ident, Errc::ParseError, "rule must start with the head predicate");
    rule.head_pred = vocab.get(lex.text);
    unary_head = vocab.at(rule.head_pred).arity == 1;
    lex.next();
    lex.expect(Tok::LParen, "(");
    lex.expect(Tok::VarX, "X");
    if (!unary_head) {
      lex.expect(Tok::Comma, ",");
      lex.expect(Tok::VarXP, "X'");
    }
    lex.expect(Tok::RParen, ")");
    lex.expect(Tok::Arrow, "<-");
    rule.root = parse_formula();
    require(lex.tok == Tok::End, Errc::ParseError, "trailing input after rule");
    return std::move(rule);
  }

  std::unique_ptr<FormulaNode> parse_formula() {
    auto first = parse_primary();
    while (lex.tok == Tok::And) {
      lex.next();
      auto rhs = parse_primary();
      auto n = std::make_unique<FormulaNode>();
      n->kind = FormulaNode::Kind::And;
      n->a = std::move(first);
      n->b = std::move(rhs);
      first = std::move(n);
    }
    return first;
  }

  std::unique_ptr<FormulaNode> parse_primary() {
    if (lex.tok == Tok::Neg) {
      lex.next();
      auto n = std::make_unique<FormulaNode>();
      n->kind = FormulaNode::Kind::Neg;
      n->a = parse_primary();
      return n;
    }
    std::unique_ptr<FormulaNode> node;
    if (lex.tok == Tok::LParen) {
      lex.next();
      node = parse_formula();
      lex.expect(Tok::RParen, ")");
    } else {
      node = parse_statement();
    }
    if (lex.tok == Tok::Sq2) {
      lex.next();
      auto n = std::make_unique<FormulaNode>();
      n->kind = FormulaNode::Kind::And;
      n->b = node->clone();
      n->a = std::move(node);
      return n;
    }
    return node;
  }

  std::unique_ptr<FormulaNode> parse_statement() {
    require(lex.tok == Tok::Ident, Errc::ParseError, "expected a statement");
    int pred = vocab.get(lex.text);
    lex.next();
    lex.expect(Tok::LParen, "(");
    StatementAst st;
    st.pred = pred;
    st.arity = vocab.at(pred).arity;
    if (st.arity == 1) {
      st.arg2 = parse_term(/*second=*/true);
    } else {
      st.arg1 = parse_term(false);
      lex.expect(Tok::Comma, ",");
      st.arg2 = parse_term(true);
    }
    lex.expect(Tok::RParen, ")");

    int key = static_cast<int>(rule.statements.size());
    for (std::size_t i = 0; i < rule.statements.size(); ++i)
      if (rule.statements[i] == st) key = static_cast<int>(i);
    if (key == static_cast<int>(rule.statements.size())) rule.statements.push_back(st);

    auto n = std::make_unique<FormulaNode>();
    n->kind = FormulaNode::Kind::Stmt;
    n->stmt = key;
    return n;
  }

  // phi chains parse outside-in; ops apply inside-out
  ArgPath parse_term(bool second) {
    std::vector<int> outer;  // outermost first
    while (lex.tok == Tok::Phi) {
      lex.next();
      require(lex.tok == Tok::Ident, Errc::ParseError, "operator name after phi_");
      outer.push_back(vocab.get(lex.text));
      lex.next();
      lex.expect(Tok::LParen, "(");
      if (lex.tok == Tok::RParen) {
        // nullary phi: a unary membership root
        lex.next();
        ArgPath ap;
        ap.root = PathRoot::UnaryRoot;
        ap.root_pred = outer.back();
        outer.pop_back();
        for (std::size_t i = 0; i < outer.size(); ++i) lex.expect(Tok::RParen, ")");
        ap.path.ops.assign(outer.rbegin(), outer.rend());
        return ap;
      }
    }
    ArgPath ap;
    if (lex.tok == Tok::VarX) {
      ap.root = (second && unary_head) ? PathRoot::XPrime : PathRoot::X;
      lex.next();
    } else if (lex.tok == Tok::VarXP) {
      ap.root = PathRoot::XPrime;
      lex.next();
    } else {
      fail(Errc::ParseError, "expected X, X' or a phi chain");
    }
    for (std::size_t i = 0; i < outer.size(); ++i) lex.expect(Tok::RParen, ")");
    ap.path.ops.assign(outer.rbegin(), outer.rend());
    return ap;
  }
};

// --- variable form parsing ---

struct Atom {
  int pred = -1;
  std::string v1, v2;  // v2 empty for unary atoms
};

struct VariableFormParser {
  Lexer lex;
  const PredicateTable& vocab;
  RuleAst rule;
  bool unary_head = false;

  VariableFormParser(const std::string& text, const PredicateTable& v) : lex(text), vocab(v) {}

  RuleAst parse() {
    require(lex.tok == Tok::Ident, Errc::ParseError, "rule must start with the head predicate");
    rule.head_pred = vocab.get(lex.text);
    unary_head = vocab.at(rule.head_pred).arity == 1;
    lex.next();
    lex.expect(Tok::LParen, "(");
    lex.expect(Tok::VarX, "X");
    if (!unary_head) {
      lex.expect(Tok::Comma, ",");
      lex.expect(Tok::VarXP, "X'");
    }
    lex.expect(Tok::RParen, ")");
    lex.expect(Tok::Arrow, "<-");
    rule.root = parse_formula();
    require(lex.tok == Tok::End, Errc::ParseError, "trailing input after rule");
    return std::move(rule);
  }

  // Grammar note: an all-atom conjunction is exactly one statement; formula
  // structure always arrives through parentheses, negation or ^2. The
  // renderer guarantees this by parenthesizing statements under connectives.
  std::unique_ptr<FormulaNode> parse_formula() {
    std::vector<Atom> atom_run;
    std::vector<std::unique_ptr<FormulaNode>> elems;
    bool saw_structure = false;
    while (true) {
      if (lex.tok == Tok::Neg) {
        saw_structure = true;
        lex.next();
        auto n = std::make_unique<FormulaNode>();
        n->kind = FormulaNode::Kind::Neg;
        n->a = parse_unit();
        elems.push_back(maybe_square(std::move(n)));
      } else if (lex.tok == Tok::LParen) {
        saw_structure = true;
        lex.next();
        auto inner = parse_formula();
        lex.expect(Tok::RParen, ")");
        elems.push_back(maybe_square(std::move(inner)));
      } else if (lex.tok == Tok::Ident) {
        Atom a = parse_atom();
        if (lex.tok == Tok::Sq2) {
          saw_structure = true;
          lex.next();
          auto stmt = build_statement({a});
          auto n = std::make_unique<FormulaNode>();
          n->kind = FormulaNode::Kind::And;
          n->b = stmt->clone();
          n->a = std::move(stmt);
          elems.push_back(std::move(n));
        } else {
          atom_run.push_back(a);
        }
      } else {
        break;
      }
      if (lex.tok == Tok::And) {
        lex.next();
        continue;
      }
      break;
    }
    if (!atom_run.empty()) {
      require(!saw_structure, Errc::ParseError,
              "bare atoms cannot mix with parenthesized formulas");
      return build_statement(atom_run);
    }
    require(!elems.empty(), Errc::ParseError, "empty rule body");
    auto out = std::move(elems[0]);
    for (std::size_t i = 1; i < elems.size(); ++i) {
      auto n = std::make_unique<FormulaNode>();
      n->kind = FormulaNode::Kind::And;
      n->a = std::move(out);
      n->b = std::move(elems[i]);
      out = std::move(n);
    }
    return out;
  }

  std::unique_ptr<FormulaNode> parse_unit() {
    if (lex.tok == Tok::Neg) {
      lex.next();
      auto n = std::make_unique<FormulaNode>();
      n->kind = FormulaNode::Kind::Neg;
      n->a = parse_unit();
      return n;
    }
    if (lex.tok == Tok::LParen) {
      lex.next();
      auto inner = parse_formula();
      lex.expect(Tok::RParen, ")");
      return maybe_square(std::move(inner));
    }
    Atom a = parse_atom();
    return maybe_square(build_statement({a}));
  }

  std::unique_ptr<FormulaNode> maybe_square(std::unique_ptr<FormulaNode> n) {
    if (lex.tok == Tok::Sq2) {
      lex.next();
      auto sq = std::make_unique<FormulaNode>();
      sq->kind = FormulaNode::Kind::And;
      sq->b = n->clone();
      sq->a = std::move(n);
      return sq;
    }
    return n;
  }

  Atom parse_atom() {
    Atom a;
    a.pred = vocab.get(lex.text);
    lex.next();
    lex.expect(Tok::LParen, "(");
    a.v1 = parse_var();
    if (lex.tok == Tok::Comma) {
      lex.next();
      a.v2 = parse_var();
    }
    lex.expect(Tok::RParen, ")");
    return a;
  }

  std::string parse_var() {
    std::string v;
    if (lex.tok == Tok::VarX)
      v = "X";
    else if (lex.tok == Tok::VarXP)
      v = "X'";
    else if (lex.tok == Tok::Ident)
      v = lex.text;
    else
      fail(Errc::ParseError, "expected a variable");
    lex.next();
    return v;
  }

  // rebuilds a StatementAst from one atom run; the head atom is last
  std::unique_ptr<FormulaNode> build_statement(const std::vector<Atom>& atoms) {
    require(!atoms.empty(), Errc::ParseError, "empty statement");
    const Atom& head = atoms.back();
    std::vector<Atom> body(atoms.begin(), atoms.end() - 1);

    StatementAst st;
    const Predicate& hp = vocab.at(head.pred);
    if (hp.arity == 1) {
      st.pred = head.pred;
      st.arity = 1;
      auto got = interpret_run(body, /*second=*/true, head.v1);
      require(got.has_value(), Errc::ParseError, "cannot reconstruct unary statement path");
      st.arg2 = *got;
    } else {
      st.arity = 2;
      bool built = false;
      for (std::size_t s = 0; s <= body.size() && !built; ++s) {
        std::vector<Atom> run1(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(s));
        std::vector<Atom> run2(body.begin() + static_cast<std::ptrdiff_t>(s), body.end());
        // the head atom may be written flipped (inverse statements render
        // via their base name), so try both orientations
        for (int flip = 0; flip < 2 && !built; ++flip) {
          const std::string& hv1 = flip ? head.v2 : head.v1;
          const std::string& hv2 = flip ? head.v1 : head.v2;
          auto a1 = interpret_run(run1, false, hv1);
          auto a2 = interpret_run(run2, true, hv2);
          if (!a1 || !a2) continue;
          int pred = head.pred;
          if (flip) {
            pred = lookup_inverse(head.pred);
            if (pred < 0) continue;
          }
          st.pred = pred;
          st.arg1 = *a1;
          st.arg2 = *a2;
          built = true;
        }
      }
      require(built, Errc::ParseError, "cannot reconstruct binary statement paths");
    }

    int key = static_cast<int>(rule.statements.size());
    for (std::size_t i = 0; i < rule.statements.size(); ++i)
      if (rule.statements[i] == st) key = static_cast<int>(i);
    if (key == static_cast<int>(rule.statements.size())) rule.statements.push_back(st);
    auto n = std::make_unique<FormulaNode>();
    n->kind = FormulaNode::Kind::Stmt;
    n->stmt = key;
    return n;
  }

  int lookup_inverse(int pred) const {
    for (int k = 0; k < vocab.size(); ++k)
      if (vocab.at(k).is_inverse && vocab.at(k).base_id == pred) return k;
    return -1;
  }

  std::optional<ArgPath> interpret_run(const std::vector<Atom>& run, bool second,
                                       const std::string& end_var) {
    ArgPath ap;
    std::string cur = second ? (unary_head ? "X" : "X'") : "X";
    ap.root = second ? PathRoot::XPrime : PathRoot::X;
    std::size_t i = 0;
    if (!run.empty() && vocab.at(run[0].pred).arity == 1 && run[0].v1 != cur) {
      ap.root = PathRoot::UnaryRoot;
      ap.root_pred = run[0].pred;
      cur = run[0].v1;
      i = 1;
    }
    for (; i < run.size(); ++i) {
      const Atom& a = run[i];
      const Predicate& p = vocab.at(a.pred);
      if (p.arity == 1) {
        if (a.v1 != cur) return std::nullopt;
        ap.path.ops.push_back(a.pred);
      } else if (a.v1 == cur) {
        ap.path.ops.push_back(a.pred);
        cur = a.v2;
      } else if (a.v2 == cur) {
        int inv = lookup_inverse(a.pred);
        if (inv < 0) return std::nullopt;
        ap.path.ops.push_back(inv);
        cur = a.v1;
      } else {
        return std::nullopt;
      }
    }
    if (cur != end_var) return std::nullopt;
    return ap;
  }
};

}  // namespace

RuleAst parse_operator_form(const std::string& text, const PredicateTable& vocab) {
  return OperatorFormParser(text, vocab).parse();
}

RuleAst parse_variable_form(const std::string& text, const PredicateTable& vocab) {
  return VariableFormParser(text, vocab).parse();
}

// --- grounding oracle ------------------------------------------------------------

namespace {

struct FactIndex {
  std::vector<std::vector<Fact>> by_pred;   // base predicate id -> facts
  std::vector<std::vector<double>> memb;    // membership counts per predicate
  int n = 0;

  FactIndex(const KnowledgeBase& kb, int vocab_size) : n(kb.num_entities()) {
    by_pred.assign(static_cast<std::size_t>(vocab_size), {});
    memb.assign(static_cast<std::size_t>(vocab_size),
                std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (const Fact& f : kb.facts) {
      by_pred[static_cast<std::size_t>(f.pred)].push_back(f);
      memb[static_cast<std::size_t>(f.pred)][static_cast<std::size_t>(f.subj)] += 1.0;
    }
  }
};

// one operator hop on a path-count vector, by fact enumeration
std::vector<double> hop(const FactIndex& idx, const PredicateTable& vocab, int op,
                        const std::vector<double>& cur) {
  const Predicate& p = vocab.at(op);
  if (p.is_identity) return cur;
  std::vector<double> out(cur.size(), 0.0);
  if (p.arity == 1) {
    const auto& memb = idx.memb[static_cast<std::size_t>(op)];
    for (std::size_t i = 0; i < cur.size(); ++i) out[i] = cur[i] * memb[i];
    return out;
  }
  int base = p.is_inverse ? p.base_id : op;
  for (const Fact& f : idx.by_pred[static_cast<std::size_t>(base)]) {
    if (p.is_inverse)
      out[static_cast<std::size_t>(f.subj)] += cur[static_cast<std::size_t>(f.obj)];
    else
      out[static_cast<std::size_t>(f.obj)] += cur[static_cast<std::size_t>(f.subj)];
  }
  return out;
}

std::vector<double> path_counts(const FactIndex& idx, const PredicateTable& vocab,
                                const ArgPath& ap, int subj, int obj) {
  std::vector<double> cur(static_cast<std::size_t>(idx.n), 0.0);
  switch (ap.root) {
    case PathRoot::X:
      cur[static_cast<std::size_t>(subj)] = 1.0;
      break;
    case PathRoot::XPrime:
      cur[static_cast<std::size_t>(obj)] = 1.0;
      break;
    case PathRoot::UnaryRoot:
      cur = idx.memb[static_cast<std::size_t>(ap.root_pred)];
      break;
  }
  for (int op : ap.path.ops) cur = hop(idx, vocab, op, cur);
  return cur;
}

double statement_oracle(const FactIndex& idx, const PredicateTable& vocab, const StatementAst& st,
                        int subj, int obj, double temperature) {
  auto c2 = path_counts(idx, vocab, st.arg2, subj, obj);
  double raw = 0;
  const Predicate& p = vocab.at(st.pred);
  if (st.arity == 1) {
    const auto& memb = idx.memb[static_cast<std::size_t>(st.pred)];
    for (std::size_t i = 0; i < c2.size(); ++i) raw += memb[i] * c2[i];
  } else {
    auto c1 = path_counts(idx, vocab, st.arg1, subj, obj);
    if (p.is_identity) {
      for (std::size_t i = 0; i < c1.size(); ++i) raw += c1[i] * c2[i];
    } else {
      int base = p.is_inverse ? p.base_id : st.pred;
      for (const Fact& f : idx.by_pred[static_cast<std::size_t>(base)]) {
        int u = p.is_inverse ? f.obj : f.subj;
        int w = p.is_inverse ? f.subj : f.obj;
        raw += c1[static_cast<std::size_t>(u)] * c2[static_cast<std::size_t>(w)];
      }
    }
  }
  double z = raw / temperature;
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double formula_oracle(const FormulaNode* n, const std::vector<double>& stmt_vals) {
  switch (n->kind) {
    case FormulaNode::Kind::Stmt:
      return stmt_vals[static_cast<std::size_t>(n->stmt)];
    case FormulaNode::Kind::Neg:
      return 1.0 - formula_oracle(n->a.get(), stmt_vals);
    case FormulaNode::Kind::And:
      return formula_oracle(n->a.get(), stmt_vals) * formula_oracle(n->b.get(), stmt_vals);
  }
  return 0.0;
}

}  // namespace

double grounding_oracle(const RuleAst& rule, const KnowledgeBase& kb, const PredicateTable& vocab,
                        const Query& query, const OracleOptions& opts) {
  require(kb.num_entities() <= opts.entity_limit, Errc::KbTooLarge,
          "grounding oracle limited to " + std::to_string(opts.entity_limit) + " entities");
  FactIndex idx(kb, vocab.size());
  std::vector<double> stmt_vals;
  stmt_vals.reserve(rule.statements.size());
  for (const auto& st : rule.statements)
    stmt_vals.push_back(statement_oracle(idx, vocab, st, query.subj, query.obj, opts.temperature));
  return formula_oracle(rule.root.get(), stmt_vals);
}

// --- hard evaluation ---------------------------------------------------------------

std::vector<double> hard_scores(const std::vector<RuleAst>& rules, const AdjacencyStore& store,
                                const RuleSpaceConfig& cfg, const QueryBatch& queries) {
  std::vector<double> best(queries.size(), 0.0);
  std::vector<char> matched(queries.size(), 0);
  for (const RuleAst& rule : rules) {
    AttentionBundle b = encode_bundle(rule, cfg, store.vocab);
    QueryBatch mine;
    std::vector<std::size_t> where;
    for (std::size_t i = 0; i < queries.size(); ++i)
      if (queries[i].pred == rule.head_pred) {
        mine.push_back(queries[i]);
        where.push_back(i);
      }
    if (mine.empty()) continue;
    EvalOptions opts;
    opts.temperature = cfg.temperature;
    ScoreBatch sb = score_queries<double>(store, cfg, b, mine, opts);
    for (std::size_t j = 0; j < where.size(); ++j) {
      if (!matched[where[j]] || sb.scores[j] > best[where[j]]) best[where[j]] = sb.scores[j];
      matched[where[j]] = 1;
    }
  }
  return best;
}

HardEvalResult evaluate_hard(const std::vector<RuleAst>& rules, const AdjacencyStore& store,
                             const RuleSpaceConfig& cfg, const QueryBatch& queries,
                             double threshold, const std::vector<Fact>* known_true) {
  require(!rules.empty(), Errc::NoRules, "empty rule set");
  HardEvalResult out;
  if (queries.empty()) return out;

  std::vector<double> scores = hard_scores(rules, store, cfg, queries);
  int correct = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    int pred = scores[i] > threshold ? 1 : 0;
    if (pred == queries[i].label) ++correct;
  }
  out.n_classified = static_cast<int>(queries.size());
  out.accuracy = static_cast<double>(correct) / out.n_classified;

  // filtered ranking over the positive queries, per-head rule bundles
  std::map<int, AttentionBundle> bundle_by_head;
  for (const RuleAst& r : rules)
    if (!bundle_by_head.count(r.head_pred))
      bundle_by_head.emplace(r.head_pred, encode_bundle(r, cfg, store.vocab));

  KnownTrueIndex kt(store.num_entities);
  if (known_true)
    for (const Fact& f : *known_true) kt.add(f.pred, f.subj, f.obj);
  for (std::size_t i = 0; i < queries.size(); ++i)
    if (queries[i].label == 1) kt.add(queries[i].pred, queries[i].subj, queries[i].obj);

  EvalOptions opts;
  opts.temperature = cfg.temperature;
  std::vector<double> ranks;
  for (const Query& q : queries) {
    if (q.label != 1) continue;
    auto it = bundle_by_head.find(q.pred);
    if (it == bundle_by_head.end()) continue;
    if (store.vocab.is_unary(q.pred)) {
      auto sc = score_candidates_unary(store, cfg, it->second, q.pred, opts);
      ranks.push_back(filtered_rank(sc, q.subj, kt.filter_unary(q.pred, q.subj)));
    } else {
      auto tail = score_candidates(store, cfg, it->second, q.pred, q.subj, RankSide::Tail, opts);
      ranks.push_back(filtered_rank(tail, q.obj, kt.filter_tail(q.pred, q.subj, q.obj)));
      auto head = score_candidates(store, cfg, it->second, q.pred, q.obj, RankSide::Head, opts);
      ranks.push_back(filtered_rank(head, q.subj, kt.filter_head(q.pred, q.obj, q.subj)));
    }
  }
  if (!ranks.empty()) {
    out.mrr = mrr(ranks);
    out.hits10 = hits_at_k(ranks, 10);
    out.n_ranked = static_cast<int>(ranks.size());
  }
  return out;
}

}  // namespace rulelearn
