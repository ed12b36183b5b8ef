#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rulelearn/extractor.hpp"
#include "rulelearn/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rulelearn;

namespace {

std::string iso_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct Manifest {
  json j;
  std::string out_path;

  Manifest(const std::string& command, std::uint64_t seed) {
    j["command"] = command;
    j["seed"] = seed;
    j["started"] = iso_now();
    j["artifacts"] = json::array();
  }

  void artifact(const std::string& path) { j["artifacts"].push_back(path); }

  void write(const std::string& path) {
    j["finished"] = iso_now();
    std::ofstream f(path);
    require(f.good(), Errc::IoFailure, "cannot write manifest '" + path + "'");
    f << j.dump(2) << "\n";
  }
};

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), Errc::IoFailure, "cannot write '" + path + "'");
  for (const auto& l : lines) f << l << "\n";
}

std::string fact_line(const KnowledgeBase& kb, const Fact& f) {
  const Predicate& p = kb.predicates.at(f.pred);
  if (p.arity == 1) return kb.entities.names[static_cast<std::size_t>(f.subj)] + "\t" + p.name;
  return kb.entities.names[static_cast<std::size_t>(f.subj)] + "\t" + p.name + "\t" +
         kb.entities.names[static_cast<std::size_t>(f.obj)];
}

// flat key=value config file; '#' comments
std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::map<std::string, std::string> kv;
  if (path.empty()) return kv;
  std::ifstream f(path);
  require(f.good(), Errc::IoFailure, "cannot open config '" + path + "'");
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
      return s;
    };
    std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = val;
  }
  return kv;
}

struct KbPaths {
  std::string meta, train, valid, test;

  explicit KbPaths(const std::string& dir) {
    meta = dir + "/meta.tsv";
    train = dir + "/train.txt";
    valid = dir + "/valid.txt";
    test = dir + "/test.txt";
  }
};

struct LoadedKb {
  KnowledgeBase kb;
  SplitDataset splits;
};

LoadedKb load_kb_dir(const std::string& dir) {
  KbPaths paths(dir);
  LoadedKb out;
  out.kb = load_facts(paths.train, paths.meta);
  out.splits.train = out.kb.facts;
  if (fs::exists(paths.valid)) out.splits.valid = load_split(out.kb, paths.valid);
  if (fs::exists(paths.test)) out.splits.test = load_split(out.kb, paths.test);
  return out;
}

struct TrainSettings {
  RuleSpaceConfig cfg;  // K filled after the store is built
  TrainConfig tc;
  bool add_inverses = true;
  bool add_identity = true;
  double threshold = 0.6;
};

// config file first, then CLI flags override
void apply_config_file(TrainSettings& s, const std::map<std::string, std::string>& kv) {
  auto geti = [&](const char* k, int& slot) {
    if (kv.count(k)) slot = std::stoi(kv.at(k));
  };
  auto getd = [&](const char* k, double& slot) {
    if (kv.count(k)) slot = std::stod(kv.at(k));
  };
  auto getb = [&](const char* k, bool& slot) {
    if (kv.count(k)) slot = kv.at(k) == "1" || kv.at(k) == "true" || kv.at(k) == "on";
  };
  geti("T", s.cfg.T);
  geti("L", s.cfg.L);
  geti("C", s.cfg.C);
  geti("d", s.cfg.d);
  geti("heads", s.cfg.heads);
  getd("temperature", s.cfg.temperature);
  geti("epochs", s.tc.epochs);
  geti("batch", s.tc.batch);
  getd("lr", s.tc.lr);
  getd("neg_ratio", s.tc.neg_ratio);
  getd("beta1", s.tc.beta1);
  getd("beta2", s.tc.beta2);
  getd("adam_eps", s.tc.adam_eps);
  geti("patience", s.tc.patience);
  geti("precision", s.tc.precision);
  geti("restarts", s.tc.restarts);
  geti("workers", s.tc.workers);
  getd("init_emb_std", s.tc.init_emb_std);
  getb("mask_train_queries", s.tc.mask_train_queries);
  getb("anchored_restarts", s.tc.anchored_restarts);
  getd("anchor_weight", s.tc.anchor_weight);
  getd("anchor_anneal_frac", s.tc.anchor_anneal_frac);
  getb("add_inverses", s.add_inverses);
  getb("add_identity", s.add_identity);
  getd("threshold", s.threshold);
  if (kv.count("seed")) s.tc.seed = std::stoull(kv.at("seed"));
}

std::vector<int> resolve_targets(const KnowledgeBase& kb, const std::string& csv) {
  std::vector<int> targets;
  if (csv.empty()) {
    for (int k = 0; k < kb.predicates.size(); ++k) targets.push_back(k);
    return targets;
  }
  std::stringstream ss(csv);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (!name.empty()) targets.push_back(kb.predicates.get(name));
  }
  require(!targets.empty(), Errc::NoTargets, "empty --targets list");
  return targets;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// metrics block: line-oriented, machine-readable, deterministic
void print_metrics_block(std::ostream& os, const std::vector<std::pair<std::string, std::string>>& rows) {
  os << "== metrics ==\n";
  for (const auto& [k, v] : rows) os << k << "=" << v << "\n";
}

QueryBatch eval_queries(const AdjacencyStore& store, const std::vector<Fact>& split,
                        double neg_ratio, std::uint64_t seed) {
  QueryBatch qs;
  std::map<int, int> per_target;
  for (const Fact& f : split) {
    qs.push_back({f.subj, f.pred, f.obj, 1});
    ++per_target[f.pred];
  }
  SeedSequencer seeds(seed);
  for (auto [target, count] : per_target) {
    int n = static_cast<int>(std::ceil(neg_ratio * count));
    if (n <= 0) continue;
    QueryBatch negs = sample_negative_queries(store, target, n, seeds.derive("eval-neg", target));
    qs.insert(qs.end(), negs.begin(), negs.end());
  }
  return qs;
}

int cmd_gen_es(int n, const std::string& out_dir, double holdout_frac, std::uint64_t seed) {
  GeneratedKb g = gen_even_successor(n, holdout_frac);
  fs::create_directories(out_dir);
  KbPaths paths(out_dir);

  std::vector<std::string> meta;
  for (const auto& p : g.kb.predicates.entries)
    meta.push_back(p.name + "\t" + std::to_string(p.arity));
  write_lines(paths.meta, meta);
  auto dump = [&](const std::string& path, const std::vector<Fact>& facts) {
    std::vector<std::string> lines;
    for (const Fact& f : facts) lines.push_back(fact_line(g.kb, f));
    write_lines(path, lines);
  };
  dump(paths.train, g.splits.train);
  dump(paths.valid, g.splits.valid);
  dump(paths.test, g.splits.test);

  Manifest m("gen-es", seed);
  m.j["config"] = {{"n", n}, {"holdout_frac", holdout_frac}};
  m.j["kb_digest"] = kb_digest(g.kb);
  m.j["facts"] = {{"train", g.splits.train.size()},
                  {"valid", g.splits.valid.size()},
                  {"test", g.splits.test.size()}};
  for (const auto& p : {paths.meta, paths.train, paths.valid, paths.test}) m.artifact(p);
  m.write(out_dir + "/manifest.json");
  std::cout << "wrote ES-" << n << " (" << g.total_facts() << " facts) to " << out_dir << "\n";
  return 0;
}

template <class Real>
void run_train(const LoadedKb& loaded, const AdjacencyStore& store, const TrainSettings& s,
               const std::vector<int>& targets, const std::string& out_dir) {
  TrainResult<Real> result = train<Real>(store, loaded.splits, s.cfg, s.tc, targets);

  Checkpoint ck = make_checkpoint(result.params, store.vocab, s.tc.precision);
  std::string ck_path = out_dir + "/checkpoint.bin";
  save_checkpoint(ck, ck_path);

  std::ofstream report(out_dir + "/report.txt");
  require(report.good(), Errc::IoFailure, "cannot write report");
  for (std::size_t e = 0; e < result.report.epochs.size(); ++e) {
    const EpochStats& st = result.report.epochs[e];
    report << "epoch=" << e << " loss=" << format_metric(st.loss);
    if (st.valid_mrr >= 0) {
      report << " valid_mrr=" << format_metric(st.valid_mrr)
             << " valid_hits10=" << format_metric(st.valid_hits10);
      if (st.valid_mrr_hard >= 0)
        report << " valid_mrr_hard=" << format_metric(st.valid_mrr_hard)
               << " valid_hits10_hard=" << format_metric(st.valid_hits10_hard);
    }
    report << "\n";
  }
  if (result.report.best_epoch >= 0) report << "best_epoch=" << result.report.best_epoch << "\n";

  Manifest m("train", s.tc.seed);
  m.j["kb_digest"] = kb_digest(loaded.kb);
  m.j["config"] = {{"T", s.cfg.T},       {"L", s.cfg.L},
                   {"C", s.cfg.C},       {"d", s.cfg.d},
                   {"K", s.cfg.K},       {"epochs", s.tc.epochs},
                   {"lr", s.tc.lr},      {"batch", s.tc.batch},
                   {"neg_ratio", s.tc.neg_ratio}, {"precision", s.tc.precision},
                   {"restarts", s.tc.restarts},   {"temperature", s.cfg.temperature},
                   {"mask_train_queries", s.tc.mask_train_queries}};
  std::vector<std::string> names;
  for (int t : targets) names.push_back(store.vocab.at(t).name);
  m.j["targets"] = names;
  m.j["train_seconds"] = result.report.total_seconds;
  m.artifact(ck_path);
  m.artifact(out_dir + "/report.txt");
  m.write(out_dir + "/manifest.json");
  std::cout << "trained " << result.report.epochs.size() << " epochs, final loss "
            << format_metric(result.report.epochs.empty() ? 0.0
                                                          : result.report.epochs.back().loss)
            << ", checkpoint at " << ck_path << "\n";
}

int cmd_train(const std::string& kb_dir, const std::string& targets_csv,
              const std::string& config_path, const std::string& out_dir, TrainSettings s) {
  LoadedKb loaded = load_kb_dir(kb_dir);
  AdjacencyStore store = build_matrices(loaded.kb, s.add_inverses, s.add_identity);
  s.cfg.K = store.vocab_size();
  std::vector<int> targets = resolve_targets(loaded.kb, targets_csv);
  fs::create_directories(out_dir);
  (void)config_path;
  if (s.tc.precision == 64)
    run_train<double>(loaded, store, s, targets, out_dir);
  else
    run_train<float>(loaded, store, s, targets, out_dir);
  return 0;
}

int cmd_extract(const std::string& ck_path, const std::string& out_path, bool variable_form,
                bool ast_form, std::uint64_t seed) {
  Checkpoint ck = load_checkpoint(ck_path);
  auto params = params_from_checkpoint<double>(ck);
  std::vector<std::string> lines;
  for (int k = 0; k < ck.vocab.size(); ++k) {
    const Predicate& p = ck.vocab.at(k);
    if (p.is_inverse || p.is_identity) continue;  // rules are written per data predicate
    AttentionBundle b = generate_bundle(params, k);
    RuleAst rule = extract(harden(b), ck.cfg, ck.vocab, k);
    if (ast_form)
      lines.push_back(render_ast_form(rule, ck.vocab));
    else if (variable_form)
      lines.push_back(render_variable_form(rule, ck.vocab));
    else
      lines.push_back(render_operator_form(rule, ck.vocab));
  }
  write_lines(out_path, lines);

  Manifest m("extract", seed);
  m.j["checkpoint"] = ck_path;
  m.j["form"] = ast_form ? "ast" : variable_form ? "variable" : "operator";
  m.artifact(out_path);
  m.write(out_path + ".manifest.json");
  std::cout << "wrote " << lines.size() << " rules to " << out_path << "\n";
  return 0;
}

std::vector<RuleAst> parse_rules_file(const std::string& path, const PredicateTable& vocab) {
  std::ifstream f(path);
  require(f.good(), Errc::IoFailure, "cannot open rules file '" + path + "'");
  std::vector<RuleAst> rules;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      rules.push_back(parse_operator_form(line, vocab));
    } catch (const Error&) {
      rules.push_back(parse_variable_form(line, vocab));
    }
  }
  require(!rules.empty(), Errc::NoRules, "no rules in '" + path + "'");
  return rules;
}

int cmd_eval(const std::string& ck_path, const std::string& rules_path, const std::string& kb_dir,
             const std::string& split_name, double threshold, double neg_ratio,
             std::uint64_t seed, const std::string& out_path) {
  require(ck_path.empty() != rules_path.empty(), Errc::FlagConflict,
          "exactly one of --checkpoint or --rules must be given");
  LoadedKb loaded = load_kb_dir(kb_dir);

  const std::vector<Fact>* split = &loaded.splits.test;
  if (split_name == "train") split = &loaded.splits.train;
  else if (split_name == "valid") split = &loaded.splits.valid;
  else require(split_name == "test", Errc::IoFailure, "unknown split '" + split_name + "'");
  require(!split->empty(), Errc::EmptyBatch, "split '" + split_name + "' is empty");

  KnownTrueIndex known(loaded.kb.num_entities());
  for (const auto* fs_ : {&loaded.splits.train, &loaded.splits.valid, &loaded.splits.test})
    for (const Fact& f : *fs_) known.add(f.pred, f.subj, f.obj);

  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("split", split_name);

  if (!ck_path.empty()) {
    Checkpoint ck = load_checkpoint(ck_path);
    AdjacencyStore store = build_matrices(loaded.kb, true, true);
    require(store.vocab.size() == ck.vocab.size(), Errc::DigestMismatch,
            "checkpoint vocabulary does not match the KB");
    for (int k = 0; k < store.vocab.size(); ++k)
      require(store.vocab.at(k).name == ck.vocab.at(k).name, Errc::DigestMismatch,
              "checkpoint vocabulary does not match the KB");
    auto params = params_from_checkpoint<double>(ck);
    RankMetrics rm = evaluate_soft(params, store, *split, known);
    rows.emplace_back("mode", "soft");
    rows.emplace_back("n_queries", std::to_string(split->size()));
    rows.emplace_back("n_ranked", std::to_string(rm.n));
    rows.emplace_back("mrr", format_metric(rm.mrr));
    rows.emplace_back("hits@10", format_metric(rm.hits10));
  } else {
    AdjacencyStore store = build_matrices(loaded.kb, true, true);
    std::vector<RuleAst> rules = parse_rules_file(rules_path, store.vocab);
    RuleSpaceConfig cfg;
    cfg.K = store.vocab_size();
    int max_len = 1;
    for (const RuleAst& r : rules)
      for (const StatementAst& st : r.statements) {
        max_len = std::max(max_len, static_cast<int>(st.arg1.path.ops.size()) + 1);
        max_len = std::max(max_len, static_cast<int>(st.arg2.path.ops.size()) + 1);
      }
    cfg.T = max_len;
    int depth = 0;
    for (const RuleAst& r : rules) {
      std::function<int(const FormulaNode*)> dep = [&](const FormulaNode* n) -> int {
        if (!n) return 0;
        if (n->kind == FormulaNode::Kind::Stmt) return 0;
        if (n->kind == FormulaNode::Kind::Neg) return dep(n->a.get());
        return 1 + std::max(dep(n->a.get()), dep(n->b.get()));
      };
      depth = std::max(depth, dep(r.root.get()));
    }
    cfg.L = depth + 1;
    cfg.C = std::max(2, static_cast<int>(rules.size()));
    cfg.d = 32;
    QueryBatch qs = eval_queries(store, *split, neg_ratio, seed);
    KnownTrueIndex kt(loaded.kb.num_entities());
    std::vector<Fact> all;
    for (const auto* fs_ : {&loaded.splits.train, &loaded.splits.valid, &loaded.splits.test})
      all.insert(all.end(), fs_->begin(), fs_->end());
    HardEvalResult r = evaluate_hard(rules, store, cfg, qs, threshold, &all);
    rows.emplace_back("mode", "hard");
    rows.emplace_back("n_queries", std::to_string(qs.size()));
    rows.emplace_back("accuracy", format_metric(r.accuracy));
    rows.emplace_back("n_ranked", std::to_string(r.n_ranked));
    rows.emplace_back("mrr", format_metric(r.mrr));
    rows.emplace_back("hits@10", format_metric(r.hits10));
  }

  std::ostringstream block;
  print_metrics_block(block, rows);
  std::cout << block.str();
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    require(f.good(), Errc::IoFailure, "cannot write '" + out_path + "'");
    f << block.str();
    Manifest m("eval", seed);
    m.j["kb_digest"] = kb_digest(loaded.kb);
    m.artifact(out_path);
    m.write(out_path + ".manifest.json");
  }
  return 0;
}

int cmd_check_grad(std::uint64_t seed, int T, int L, int C, int d) {
  KnowledgeBase kb = parse_facts({"e0\tSucc\te1", "e1\tSucc\te2", "e0\tEven", "e2\tEven"},
                                 {"Succ\t2", "Even\t1"});
  AdjacencyStore store = build_matrices(kb, true, true);
  RuleSpaceConfig cfg{store.vocab_size(), T, L, C, d};
  cfg.validate();
  auto master = init_params<double>(cfg, seed);
  int target = store.vocab.get("Even");
  QueryBatch batch{{0, target, 0, 1}, {1, target, 1, 0}, {2, target, 2, 1}};

  std::vector<std::string> checked = {"H",    "e_x",  "e_phi", "q_phi",
                                      "q_o",  "cond_w", "st_w",  "op_step.l1.mha.wq",
                                      "op_agg.mha3.wv", "st_arg1.l2.ffn.b1", "out_attn.mha3.wq"};
  if (L >= 2) checked.push_back("q_f.1");
  std::vector<Tensor64> tensors;
  for (const auto& want : checked)
    visit_params(master, [&](const std::string& name, Param<double>& p) {
      if (name == want) tensors.push_back(p.t);
    });

  double err = finite_diff_check(
      [&](Tape64& tape, const std::vector<int>& ids) {
        ModelParamsT<double> local = master;
        register_params(tape, local);
        visit_params(local, [&](const std::string& name, Param<double>& p) {
          for (std::size_t c = 0; c < checked.size(); ++c)
            if (name == checked[c]) p.node = ids[c];
        });
        GeneratorNodes g = generate(tape, local, target);
        RuleSpaceEvaluator<double> eval(tape, store, cfg, g.bundle);
        int acc = -1;
        for (const Query& q : batch) {
          int l = tape.cross_entropy(q.label, eval.score_node(q));
          acc = acc < 0 ? l : tape.add(acc, l);
        }
        return tape.scale(acc, 1.0 / static_cast<double>(batch.size()));
      },
      tensors);
  bool ok = err < 1e-4;
  std::printf("max relative error %.3e over %zu tensors: %s\n", err, tensors.size(),
              ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentiable first-order rule learning over relational KBs"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "root seed (sub-seeds derived per module)");
  int workers = 0;
  app.add_option("--workers", workers, "worker count; 1 forces deterministic mode");

  auto* gen = app.add_subcommand("gen-es", "generate an Even-and-Successor benchmark");
  int es_n = 10;
  double holdout = 0.2;
  std::string gen_out;
  gen->add_option("--n", es_n, "number of consecutive integers")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--holdout-frac", holdout, "fraction of Even facts held out for test");

  auto* tr = app.add_subcommand("train", "train the attention generator on a KB");
  std::string kb_dir, targets_csv, config_path, train_out = "run";
  TrainSettings settings;
  tr->add_option("--kb", kb_dir, "KB directory (meta.tsv + split files)")->required();
  tr->add_option("--targets", targets_csv, "comma-separated target predicates (default: all)");
  tr->add_option("--config", config_path, "key=value config file");
  tr->add_option("--out", train_out, "output directory");
  double f_lr = -1, f_neg = -1, f_temp = -1, f_std = -1;
  int f_epochs = -1, f_batch = -1, f_T = -1, f_L = -1, f_C = -1, f_d = -1, f_prec = -1,
      f_patience = -1, f_restarts = -1;
  bool no_inverses = false, no_identity = false, no_mask = false;
  tr->add_option("--epochs", f_epochs);
  tr->add_option("--lr", f_lr);
  tr->add_option("--batch", f_batch);
  tr->add_option("--neg-ratio", f_neg);
  tr->add_option("--temperature", f_temp);
  tr->add_option("--init-emb-std", f_std);
  tr->add_option("--T", f_T, "max operator path length");
  tr->add_option("--L", f_L, "formula levels");
  tr->add_option("--C", f_C, "formulas kept per level");
  tr->add_option("--d", f_d, "embedding width");
  tr->add_option("--precision", f_prec, "32 or 64");
  tr->add_option("--patience", f_patience);
  tr->add_option("--restarts", f_restarts, "independent restarts, best kept");
  bool anchored = false;
  tr->add_flag("--anchored-restarts", anchored,
               "restarts explore operator-chain prototypes (annealed pull)");
  tr->add_flag("--no-inverses", no_inverses);
  tr->add_flag("--no-identity", no_identity);
  tr->add_flag("--no-mask", no_mask, "disable leave-one-out query masking");

  auto* ex = app.add_subcommand("extract", "read hard rules out of a checkpoint");
  std::string ex_ck, ex_out = "rules.txt";
  bool variable_form = false, ast_form = false;
  ex->add_option("--checkpoint", ex_ck)->required();
  ex->add_option("--out", ex_out);
  ex->add_flag("--variable-form", variable_form, "render with explicit body variables");
  ex->add_flag("--ast", ast_form, "machine-readable nested form");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (soft) or rules file (hard)");
  std::string ev_ck, ev_rules, ev_kb, ev_split = "test", ev_out;
  double ev_threshold = 0.6, ev_neg = 1.0;
  ev->add_option("--checkpoint", ev_ck);
  ev->add_option("--rules", ev_rules);
  ev->add_option("--kb", ev_kb)->required();
  ev->add_option("--split", ev_split, "train|valid|test");
  ev->add_option("--threshold", ev_threshold, "hard classification threshold");
  ev->add_option("--neg-ratio", ev_neg, "negatives sampled per positive for accuracy");
  ev->add_option("--out", ev_out, "also write the metrics block to this file");

  auto* cg = app.add_subcommand("check-grad", "finite-difference check of the full pipeline");
  int cg_T = 2, cg_L = 1, cg_C = 2, cg_d = 8;
  cg->add_option("--T", cg_T);
  cg->add_option("--L", cg_L);
  cg->add_option("--C", cg_C);
  cg->add_option("--d", cg_d);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_es(es_n, gen_out, holdout, seed);
    if (*tr) {
      apply_config_file(settings, read_config_file(config_path));
      settings.tc.seed = seed;
      if (f_epochs >= 0) settings.tc.epochs = f_epochs;
      if (f_lr >= 0) settings.tc.lr = f_lr;
      if (f_batch >= 0) settings.tc.batch = f_batch;
      if (f_neg >= 0) settings.tc.neg_ratio = f_neg;
      if (f_temp >= 0) {
        settings.cfg.temperature = f_temp;
        settings.tc.temperature = f_temp;
      }
      if (f_std >= 0) settings.tc.init_emb_std = f_std;
      if (f_T >= 0) settings.cfg.T = f_T;
      if (f_L >= 0) settings.cfg.L = f_L;
      if (f_C >= 0) settings.cfg.C = f_C;
      if (f_d >= 0) settings.cfg.d = f_d;
      if (f_prec >= 0) settings.tc.precision = f_prec;
      if (f_patience >= 0) settings.tc.patience = f_patience;
      if (f_restarts >= 0) settings.tc.restarts = f_restarts;
      if (anchored) settings.tc.anchored_restarts = true;
      if (no_inverses) settings.add_inverses = false;
      if (no_identity) settings.add_identity = false;
      if (no_mask) settings.tc.mask_train_queries = false;
      if (workers > 0) settings.tc.workers = workers;
      settings.tc.temperature = settings.cfg.temperature;
      return cmd_train(kb_dir, targets_csv, config_path, train_out, settings);
    }
    if (*ex) return cmd_extract(ex_ck, ex_out, variable_form, ast_form, seed);
    if (*ev) return cmd_eval(ev_ck, ev_rules, ev_kb, ev_split, ev_threshold, ev_neg, seed, ev_out);
    if (*cg) return cmd_check_grad(seed, cg_T, cg_L, cg_C, cg_d);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
