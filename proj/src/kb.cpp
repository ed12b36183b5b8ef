#include "rulelearn/kb.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "rulelearn/rng.hpp"

namespace rulelearn {

SparseBool::SparseBool(int n, std::vector<std::pair<int, int>> coords)
    : n_(n), coords_(std::move(coords)) {
  std::sort(coords_.begin(), coords_.end());
  coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
  for (auto [i, j] : coords_) {
    require(i >= 0 && i < n_ && j >= 0 && j < n_, Errc::IndexOutOfRange,
            "matrix coordinate out of range");
  }
  row_ptr_.assign(static_cast<std::size_t>(n_) + 1, 0);
  col_ptr_.assign(static_cast<std::size_t>(n_) + 1, 0);
  for (auto [i, j] : coords_) {
    ++row_ptr_[static_cast<std::size_t>(i) + 1];
    ++col_ptr_[static_cast<std::size_t>(j) + 1];
  }
  for (int k = 0; k < n_; ++k) {
    row_ptr_[static_cast<std::size_t>(k) + 1] += row_ptr_[static_cast<std::size_t>(k)];
    col_ptr_[static_cast<std::size_t>(k) + 1] += col_ptr_[static_cast<std::size_t>(k)];
  }
  row_idx_.resize(coords_.size());
  col_idx_.resize(coords_.size());
  std::vector<std::size_t> rfill(row_ptr_.begin(), row_ptr_.end() - 1);
  std::vector<std::size_t> cfill(col_ptr_.begin(), col_ptr_.end() - 1);
  for (auto [i, j] : coords_) {
    row_idx_[rfill[static_cast<std::size_t>(i)]++] = j;
    col_idx_[cfill[static_cast<std::size_t>(j)]++] = i;
  }
}

bool SparseBool::contains(int i, int j) const {
  if (i < 0 || i >= n_ || j < 0 || j >= n_) return false;
  auto lo = row_ptr_[static_cast<std::size_t>(i)];
  auto hi = row_ptr_[static_cast<std::size_t>(i) + 1];
  return std::binary_search(row_idx_.begin() + static_cast<std::ptrdiff_t>(lo),
                            row_idx_.begin() + static_cast<std::ptrdiff_t>(hi), j);
}

SparseBool SparseBool::identity(int n) {
  std::vector<std::pair<int, int>> c;
  c.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) c.emplace_back(i, i);
  return SparseBool(n, std::move(c));
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::IoFailure, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(strip_cr(line));
  return lines;
}

template <class EntityIdFn>
Fact parse_fact_line(const PredicateTable& preds, EntityIdFn&& entity_id,
                     const std::string& line) {
  auto fields = split_tabs(line);
  Fact f;
  if (fields.size() == 3) {
    int pid = preds.get(fields[1]);
    require(preds.at(pid).arity == 2, Errc::ArityMismatch,
            "predicate '" + fields[1] + "' declared unary but used with 3 fields");
    f.subj = entity_id(fields[0]);
    f.pred = pid;
    f.obj = entity_id(fields[2]);
  } else if (fields.size() == 2) {
    int pid = preds.get(fields[1]);
    require(preds.at(pid).arity == 1, Errc::ArityMismatch,
            "predicate '" + fields[1] + "' declared binary but used with 2 fields");
    f.subj = entity_id(fields[0]);
    f.pred = pid;
    f.obj = f.subj;
  } else {
    fail(Errc::ParseError, "fact line needs 2 or 3 tab-separated fields: '" + line + "'");
  }
  return f;
}

void dedup_facts(std::vector<Fact>& facts) {
  std::vector<Fact> seen;
  std::unordered_set<std::uint64_t> keys;
  seen.reserve(facts.size());
  for (const Fact& f : facts) {
    std::uint64_t key = (static_cast<std::uint64_t>(f.pred) << 42) ^
                        (static_cast<std::uint64_t>(f.subj) << 21) ^
                        static_cast<std::uint64_t>(f.obj);
    if (keys.insert(key).second) seen.push_back(f);
  }
  facts = std::move(seen);
}

}  // namespace

KnowledgeBase parse_facts(const std::vector<std::string>& fact_lines,
                          const std::vector<std::string>& meta_lines) {
  KnowledgeBase kb;
  for (const auto& raw : meta_lines) {
    std::string line = strip_cr(raw);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    require(fields.size() == 2, Errc::ParseError, "meta line needs 'name<TAB>arity': '" + line + "'");
    Predicate p;
    p.name = fields[0];
    p.arity = std::stoi(fields[1]);
    require(p.arity == 1 || p.arity == 2, Errc::ArityMismatch,
            "arity must be 1 or 2 for '" + p.name + "'");
    kb.predicates.add(std::move(p));
  }
  for (const auto& raw : fact_lines) {
    std::string line = strip_cr(raw);
    if (line.empty()) continue;
    kb.facts.push_back(parse_fact_line(
        kb.predicates, [&](const std::string& name) { return kb.entities.add_or_get(name); },
        line));
  }
  require(!kb.facts.empty(), Errc::EmptyKB, "no facts loaded");
  dedup_facts(kb.facts);
  return kb;
}

KnowledgeBase load_facts(const std::string& facts_path, const std::string& meta_path) {
  return parse_facts(read_lines(facts_path), read_lines(meta_path));
}

std::vector<Fact> parse_split(const KnowledgeBase& kb, const std::vector<std::string>& lines) {
  std::vector<Fact> facts;
  for (const auto& raw : lines) {
    std::string line = strip_cr(raw);
    if (line.empty()) continue;
    facts.push_back(parse_fact_line(
        kb.predicates, [&](const std::string& name) { return kb.entities.get(name); }, line));
  }
  dedup_facts(facts);
  return facts;
}

std::vector<Fact> load_split(const KnowledgeBase& kb, const std::string& path) {
  return parse_split(kb, read_lines(path));
}

AdjacencyStore build_matrices(const KnowledgeBase& kb, bool add_inverses, bool add_identity) {
  AdjacencyStore store;
  store.num_entities = kb.num_entities();
  store.vocab = kb.predicates;

  int base_count = store.vocab.size();
  std::vector<int> inverse_of(static_cast<std::size_t>(base_count), -1);
  if (add_inverses) {
    for (int k = 0; k < base_count; ++k) {
      const Predicate& p = store.vocab.at(k);
      if (p.arity != 2) continue;
      Predicate inv;
      inv.name = p.name + "^-1";
      inv.arity = 2;
      inv.is_inverse = true;
      inv.base_id = k;
      inverse_of[static_cast<std::size_t>(k)] = store.vocab.add(std::move(inv));
    }
  }
  if (add_identity) {
    Predicate ident;
    ident.name = "Identity";
    ident.arity = 2;
    ident.is_identity = true;
    store.identity_id = store.vocab.add(std::move(ident));
  }

  int n = store.num_entities;
  std::vector<std::vector<std::pair<int, int>>> coords(static_cast<std::size_t>(store.vocab.size()));
  for (const Fact& f : kb.facts) {
    coords[static_cast<std::size_t>(f.pred)].emplace_back(f.subj, f.obj);
    int inv = f.pred < base_count ? inverse_of[static_cast<std::size_t>(f.pred)] : -1;
    if (inv >= 0) coords[static_cast<std::size_t>(inv)].emplace_back(f.obj, f.subj);
  }
  store.mats.reserve(coords.size());
  for (int k = 0; k < store.vocab.size(); ++k) {
    if (k == store.identity_id) {
      store.mats.push_back(SparseBool::identity(n));
    } else {
      store.mats.emplace_back(n, std::move(coords[static_cast<std::size_t>(k)]));
    }
  }
  return store;
}

QueryBatch sample_negative_queries(const AdjacencyStore& store, int target, int n,
                                   std::uint64_t seed) {
  require(target >= 0 && target < store.vocab.size(), Errc::UnknownPredicate,
          "target id out of range");
  const SparseBool& m = store.matrix(target);
  bool unary = store.vocab.is_unary(target);
  int dim = store.num_entities;
  std::uint64_t total = unary ? static_cast<std::uint64_t>(dim)
                              : static_cast<std::uint64_t>(dim) * static_cast<std::uint64_t>(dim);
  std::uint64_t zeros = total - m.nnz();
  require(zeros > 0, Errc::NoNegatives, "target matrix has no zero entries");
  require(static_cast<std::uint64_t>(n) <= zeros, Errc::NotEnoughNegatives,
          "requested " + std::to_string(n) + " negatives, only " + std::to_string(zeros) +
              " zero entries");

  QueryBatch batch;
  if (n == 0) return batch;
  std::mt19937_64 rng(seed);
  std::unordered_set<std::uint64_t> taken;
  std::uniform_int_distribution<int> pick(0, dim - 1);
  // rejection sampling; falls back to exhaustive enumeration when the zero
  // set is small relative to the matrix
  std::uint64_t attempts = 0, max_attempts = 64 * static_cast<std::uint64_t>(n) + 1024;
  while (static_cast<int>(batch.size()) < n && attempts < max_attempts) {
    ++attempts;
    int i = pick(rng);
    int j = unary ? i : pick(rng);
    if (m.contains(i, j)) continue;
    std::uint64_t key = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(dim) + j;
    if (!taken.insert(key).second) continue;
    batch.push_back(Query{i, target, j, 0});
  }
  if (static_cast<int>(batch.size()) < n) {
    // dense fallback: enumerate all zero entries, then a seeded shuffle
    std::vector<std::pair<int, int>> zs;
    for (int i = 0; i < dim; ++i) {
      if (unary) {
        if (!m.contains(i, i)) zs.emplace_back(i, i);
      } else {
        for (int j = 0; j < dim; ++j)
          if (!m.contains(i, j)) zs.emplace_back(i, j);
      }
    }
    std::shuffle(zs.begin(), zs.end(), rng);
    batch.clear();
    for (int k = 0; k < n; ++k) batch.push_back(Query{zs[static_cast<std::size_t>(k)].first,
                                                      target,
                                                      zs[static_cast<std::size_t>(k)].second, 0});
  }
  return batch;
}

GeneratedKb gen_even_successor(int n, double holdout_frac) {
  require(n >= 2, Errc::InvalidSize, "need n >= 2, got " + std::to_string(n));
  GeneratedKb out;
  KnowledgeBase& kb = out.kb;

  Predicate zero, even, succ;
  zero.name = "Zero";
  zero.arity = 1;
  even.name = "Even";
  even.arity = 1;
  succ.name = "Succ";
  succ.arity = 2;
  int zero_id = kb.predicates.add(std::move(zero));
  int even_id = kb.predicates.add(std::move(even));
  int succ_id = kb.predicates.add(std::move(succ));

  for (int i = 0; i < n; ++i) kb.entities.add_or_get(std::to_string(i));

  std::vector<Fact> even_facts;
  for (int i = 0; 2 * i < n; ++i) even_facts.push_back(Fact{2 * i, even_id, 2 * i});

  // hold out interior evens, evenly spread, so that a +/-2 chain rule can be
  // checked on every held-out fact against retained neighbors
  int m = static_cast<int>(even_facts.size());
  int held = static_cast<int>(holdout_frac * m);
  if (held > std::max(0, m - 2)) held = std::max(0, m - 2);
  std::vector<bool> is_held(static_cast<std::size_t>(m), false);
  for (int j = 0; j < held; ++j) {
    int idx = 1 + static_cast<int>((static_cast<long long>(j) * (m - 2)) / held);
    is_held[static_cast<std::size_t>(idx)] = true;
  }

  out.splits.train.push_back(Fact{0, zero_id, 0});
  for (int i = 0; i < m; ++i) {
    if (is_held[static_cast<std::size_t>(i)])
      out.splits.test.push_back(even_facts[static_cast<std::size_t>(i)]);
    else
      out.splits.train.push_back(even_facts[static_cast<std::size_t>(i)]);
  }
  for (int i = 0; i + 1 < n; ++i) out.splits.train.push_back(Fact{i, succ_id, i + 1});

  kb.facts = out.splits.train;
  return out;
}

std::vector<double> one_hot(int id, int dim) {
  require(id >= 0 && id < dim, Errc::IndexOutOfRange,
          "one_hot id " + std::to_string(id) + " not in [0," + std::to_string(dim) + ")");
  std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
  v[static_cast<std::size_t>(id)] = 1.0;
  return v;
}

std::uint64_t kb_digest(const KnowledgeBase& kb) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : kb.predicates.entries) {
    h = fnv1a64(p.name, h);
    h = fnv1a64(&p.arity, sizeof(p.arity), h);
  }
  for (const auto& e : kb.entities.names) h = fnv1a64(e, h);
  std::vector<Fact> sorted = kb.facts;
  std::sort(sorted.begin(), sorted.end());
  for (const Fact& f : sorted) h = fnv1a64(&f, sizeof(Fact), h);
  return h;
}

}  // namespace rulelearn
