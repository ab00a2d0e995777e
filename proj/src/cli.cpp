#include "dpnc/cli.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "dpnc/checkpoint.hpp"
#include "dpnc/config.hpp"
#include "dpnc/error.hpp"
#include "dpnc/evaluate.hpp"
#include "dpnc/fit.hpp"
#include "dpnc/kernels.hpp"
#include "dpnc/train.hpp"

namespace dpnc {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kMethods = {"crp", "pf", "exact", "circuit"};

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  int threads = 0;

  void add(CLI::App* app) {
    app->add_option("-c,--config", config, "experiment config (JSON)");
    app->add_option("--set", overrides, "override a config value, e.g. --set train.steps=10")->take_all();
    app->add_option("--threads", threads, "worker threads (default: all cores)");
  }
  ExperimentConfig load(bool check_files = true) const {
    if (threads > 0) kernels::set_threads(threads);
    return config.empty() ? ExperimentConfig::from_json(nlohmann::json::object(), overrides, check_files)
                          : ExperimentConfig::load(config, overrides, check_files);
  }
};

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream f(path, mode);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

void check_method(const std::string& m) {
  if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) {
    std::string names;
    for (const auto& n : kMethods) names += (names.empty() ? "" : ", ") + n;
    throw UsageError("unknown method '" + m + "'; valid methods: " + names);
  }
}

MethodPtr build_method(const std::string& name, const ExperimentConfig& cfg, const std::string& checkpoint,
                       Setting setting) {
  check_method(name);
  if (name == "crp") return make_crp_method(cfg.alpha());
  if (name == "exact") {
    if (setting != Setting::SequentialObservation)
      throw UsageError("method exact only supports the sequential setting");
    return make_exact_method(cfg.pf_family(), cfg.alpha());
  }
  if (name == "pf") return make_pf_method(cfg.pf_family(), cfg.alpha(), cfg.pf_options());
  if (checkpoint.empty()) throw UsageError("method circuit requires --checkpoint");
  Checkpoint ck = load_checkpoint(checkpoint);
  if (ck.circuit.input_dim != cfg.data_dim())
    throw ConfigError("checkpoint input_dim " + std::to_string(ck.circuit.input_dim) +
                      " does not match the data dimension " + std::to_string(cfg.data_dim()));
  if (ck.circuit.max_classes < cfg.episode_length())
    throw ConfigError("checkpoint max_classes is smaller than data.T");
  CircuitConfig cc = ck.circuit;
  cc.feedback = cfg.circuit().feedback;
  return make_circuit_method(std::make_shared<const CircuitParams<float>>(std::move(ck.params)), cc);
}

int cmd_simulate(const Common& c, const std::string& out_path, std::size_t n, std::uint64_t seed, std::ostream& out) {
  const auto cfg = c.load();
  const auto source = cfg.source(cfg.eval_split());
  std::vector<Episode> es(n);
  const RngStream root(seed);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    RngStream r = root.split(static_cast<std::uint64_t>(i));
    es[static_cast<std::size_t>(i)] = source(r);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (auto bad = validate_episode(es[i])) throw DataError("generated episode " + std::to_string(i) + " invalid: " + bad->what);
  auto f = open_out(out_path);
  write_episodes_jsonl(f, es);
  out << nlohmann::json{{"episodes", n}, {"path", out_path}, {"config_digest", cfg.digest(seed)}}.dump() << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& ckpt, std::string log, const std::string& resume, bool override_cfg,
              bool quiet, std::ostream& out, std::ostream& err) {
  const auto cfg = c.load();
  TrainConfig tc = cfg.train();
  tc.checkpoint_path = ckpt;
  if (log.empty()) log = ckpt + ".log.csv";
  const CircuitConfig cc = cfg.circuit();
  const auto source = cfg.source(BankSplit::MetaTrain);
  TrainHooks hooks;
  const std::size_t every = std::max<std::size_t>(1, tc.steps / 20);
  if (!quiet)
    hooks.on_step = [&](const TrainLogRow& r) {
      if (r.step % every == 0 || r.step == tc.steps)
        err << "step " << r.step << "/" << tc.steps << " loss " << r.loss << " (" << r.ms_per_step << " ms)\n";
    };
  TrainResult res;
  if (resume.empty()) {
    res = train_circuit(tc, cc, source, hooks);
  } else {
    res = resume_training(load_checkpoint(resume), tc, cc, source, override_cfg, hooks);
  }
  write_train_log(log, res.log, !resume.empty());
  nlohmann::json summary = {{"steps", tc.steps},
                            {"steps_run", res.log.size()},
                            {"checkpoint", ckpt},
                            {"log", log},
                            {"skipped_steps", res.skipped_steps},
                            {"config_digest", cfg.digest(tc.seed)}};
  if (!res.log.empty()) summary["final_loss"] = res.log.back().loss;
  out << summary.dump() << "\n";
  return 0;
}

int cmd_fit(const Common& c, const std::string& out_path, const std::string& history, std::ostream& out) {
  const auto cfg = c.load();
  const FitConfig fc = cfg.fit();
  const FitResult res = fit_hyperparameters(cfg.source(BankSplit::MetaTrain), cfg.pf_family(), cfg.alpha(), fc);
  {
    auto f = open_out(out_path);
    f << res.family->to_json().dump(2) << "\n";
  }
  if (!history.empty()) {
    auto f = open_out(history);
    f << "step,batch_nll,eval_nll\n";
    for (const auto& r : res.history)
      f << r.step << ',' << format_number(r.batch_nll) << ',' << (std::isnan(r.eval_nll) ? "" : format_number(r.eval_nll))
        << '\n';
  }
  out << nlohmann::json{{"initial_eval_nll", res.initial_eval_nll},
                        {"best_eval_nll", res.best_eval_nll},
                        {"best_step", res.best_step},
                        {"steps", fc.steps},
                        {"out", out_path},
                        {"config_digest", cfg.digest(fc.seed)}}
             .dump()
      << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& method_name, const std::string& checkpoint,
             const std::string& setting_name, long long n, long long seed_opt, const std::string& out_prefix,
             const std::string& per_episode, bool timing, std::ostream& out) {
  check_method(method_name);
  if (method_name == "circuit" && checkpoint.empty()) throw UsageError("method circuit requires --checkpoint");
  const auto cfg = c.load();
  const Setting setting = setting_name.empty() ? cfg.eval_setting() : parse_setting(setting_name);
  const std::size_t episodes = n > 0 ? static_cast<std::size_t>(n) : cfg.eval_episodes();
  const std::uint64_t seed = seed_opt >= 0 ? static_cast<std::uint64_t>(seed_opt) : cfg.eval_seed();
  const MethodPtr method = build_method(method_name, cfg, checkpoint, setting);
  auto replacements = std::make_shared<std::atomic<std::size_t>>(0);
  const auto source = cfg.source(cfg.eval_split(), replacements);
  Evaluation ev = evaluate(*method, source, setting, episodes, seed);
  ev.report.config_digest = cfg.digest(seed);
  if (cfg.is_bank()) ev.report.replacement_draws = replacements->load();
  if (timing) ev.report.ms_per_sequence = time_method(*method, source, setting, cfg.bench_seed(), cfg.bench_timing());
  if (!out_prefix.empty()) {
    open_out(out_prefix + ".json") << ev.report.to_json().dump(2) << "\n";
    open_out(out_prefix + ".csv") << MetricsReport::csv_header() << "\n" << ev.report.csv_row() << "\n";
  }
  if (!per_episode.empty()) {
    auto f = open_out(per_episode);
    const bool seq = setting == Setting::SequentialObservation;
    f << (seq ? "episode,nll\n" : "episode,ari,ami\n");
    for (const auto& r : ev.per_episode)
      f << r.index << ',' << (seq ? format_number(r.nll) : format_number(r.ari) + "," + format_number(r.ami)) << '\n';
  }
  out << ev.report.to_json().dump(2) << "\n";
  return 0;
}

int cmd_bench(const Common& c, const std::string& methods_list, const std::string& checkpoint,
              const std::string& setting_name, const std::string& out_path, std::ostream& out) {
  std::vector<std::string> names;
  std::stringstream ss(methods_list);
  for (std::string m; std::getline(ss, m, ',');)
    if (!m.empty()) {
      check_method(m);
      names.push_back(m);
    }
  if (names.empty()) throw UsageError("--methods is empty");
  if (std::find(names.begin(), names.end(), "circuit") != names.end() && checkpoint.empty())
    throw UsageError("method circuit requires --checkpoint");
  const auto cfg = c.load();
  const Setting setting = setting_name.empty() ? cfg.bench_setting() : parse_setting(setting_name);
  const auto source = cfg.source(cfg.eval_split());
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& m : names) {
    const MethodPtr method = build_method(m, cfg, checkpoint, setting);
    rows.emplace_back(m, time_method(*method, source, setting, cfg.bench_seed(), cfg.bench_timing()));
  }
  std::ostringstream table;
  table << "method,setting,ms_per_sequence\n";
  for (const auto& [m, ms] : rows) table << m << ',' << to_string(setting) << ',' << format_number(ms) << '\n';
  out << table.str();
  auto find = [&](const std::string& m) -> const double* {
    for (const auto& r : rows)
      if (r.first == m) return &r.second;
    return nullptr;
  };
  if (const double *pf = find("pf"), *circ = find("circuit"); pf && circ)
    out << "speedup pf/circuit: " << format_number(*pf / *circ) << "\n";
  if (!out_path.empty()) open_out(out_path) << table.str();
  return 0;
}

int cmd_make_bank(const Common& c, const SparseBankConfig& given, const std::vector<std::string>& set_flags,
                  const std::string& out_path, std::ostream& out) {
  const auto cfg = c.load(false);
  SparseBankConfig b = cfg.bank();
  auto flag = [&](const char* n) { return std::find(set_flags.begin(), set_flags.end(), n) != set_flags.end(); };
  if (flag("classes")) b.classes = given.classes;
  if (flag("items")) b.items = given.items;
  if (flag("dim")) b.dim = given.dim;
  if (flag("seed")) b.seed = given.seed;
  if (flag("zero-rate")) b.zero_rate = given.zero_rate;
  if (flag("item-shift-sd")) b.item_shift_sd = given.item_shift_sd;
  b.validate();
  const FeatureBank bank = make_sparse_bank(b);
  write_feature_bank(bank, out_path);
  out << nlohmann::json{{"classes", b.classes}, {"items", b.items}, {"dim", b.dim}, {"seed", b.seed},
                        {"path", out_path},     {"sidecar", out_path + ".json"}}
             .dump()
      << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dpnc: sequential DPMM inference with particle filters and a metalearned recurrent circuit", "dpnc"};
  app.require_subcommand(1);

  Common c_sim, c_train, c_fit, c_eval, c_bench, c_bank;

  auto* sim = app.add_subcommand("simulate", "write held-out episodes as JSONL");
  c_sim.add(sim);
  std::string sim_out;
  std::size_t sim_n = 100;
  std::uint64_t sim_seed = 0;
  sim->add_option("-o,--out", sim_out, "output JSONL path")->required();
  sim->add_option("-n,--n", sim_n, "number of episodes");
  sim->add_option("--seed", sim_seed, "root seed");

  auto* train = app.add_subcommand("train", "metalearn the circuit");
  c_train.add(train);
  std::string tr_out, tr_log, tr_resume;
  bool tr_override = false, tr_quiet = false;
  train->add_option("-o,--out", tr_out, "checkpoint path")->required();
  train->add_option("--log", tr_log, "training log CSV (default: <out>.log.csv)");
  train->add_option("--resume", tr_resume, "continue from this checkpoint");
  train->add_flag("--override", tr_override, "resume even if the config differs from the checkpoint");
  train->add_flag("-q,--quiet", tr_quiet, "no progress output");

  auto* fit = app.add_subcommand("fit-pf", "fit conjugate prior hyperparameters");
  c_fit.add(fit);
  std::string fit_out, fit_hist;
  fit->add_option("-o,--out", fit_out, "fitted family JSON path")->required();
  fit->add_option("--history", fit_hist, "per-step CSV");

  auto* ev = app.add_subcommand("eval", "evaluate a method on held-out episodes");
  c_eval.add(ev);
  std::string ev_method, ev_ckpt, ev_setting, ev_out, ev_per;
  long long ev_n = 0, ev_seed = -1;
  bool ev_timing = false;
  ev->add_option("-m,--method", ev_method, "crp|pf|exact|circuit")->required();
  ev->add_option("--checkpoint", ev_ckpt, "circuit checkpoint");
  ev->add_option("--setting", ev_setting, "sequential|unobserved (default: eval.setting)");
  ev->add_option("-n,--episodes", ev_n, "episodes (default: eval.n_episodes)");
  ev->add_option("--seed", ev_seed, "evaluation seed (default: eval.seed)");
  ev->add_option("-o,--out", ev_out, "write <out>.json and <out>.csv");
  ev->add_option("--per-episode", ev_per, "per-episode CSV");
  ev->add_flag("--timing", ev_timing, "also measure ms per sequence");

  auto* bench = app.add_subcommand("bench", "time methods per sequence");
  c_bench.add(bench);
  std::string b_methods = "pf,circuit", b_ckpt, b_setting, b_out;
  bench->add_option("--methods", b_methods, "comma-separated methods");
  bench->add_option("--checkpoint", b_ckpt, "circuit checkpoint");
  bench->add_option("--setting", b_setting, "sequential|unobserved (default: bench.setting)");
  bench->add_option("-o,--out", b_out, "CSV output");

  auto* bank = app.add_subcommand("make-sparse-bank", "generate a sparse nonnegative feature bank");
  c_bank.add(bank);
  SparseBankConfig bank_cfg;
  std::string bank_out;
  bank->add_option("--classes", bank_cfg.classes);
  bank->add_option("--items", bank_cfg.items, "items per class");
  bank->add_option("--dim", bank_cfg.dim);
  bank->add_option("--seed", bank_cfg.seed);
  bank->add_option("--zero-rate", bank_cfg.zero_rate);
  bank->add_option("--item-shift-sd", bank_cfg.item_shift_sd);
  bank->add_option("-o,--out", bank_out, "bank path (sidecar written to <out>.json)")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(c_sim, sim_out, sim_n, sim_seed, out);
    if (train->parsed()) return cmd_train(c_train, tr_out, tr_log, tr_resume, tr_override, tr_quiet, out, err);
    if (fit->parsed()) return cmd_fit(c_fit, fit_out, fit_hist, out);
    if (ev->parsed())
      return cmd_eval(c_eval, ev_method, ev_ckpt, ev_setting, ev_n, ev_seed, ev_out, ev_per, ev_timing, out);
    if (bench->parsed()) return cmd_bench(c_bench, b_methods, b_ckpt, b_setting, b_out, out);
    if (bank->parsed()) {
      std::vector<std::string> given;
      for (const char* n : {"classes", "items", "dim", "seed", "zero-rate", "item-shift-sd"})
        if (bank->count(std::string("--") + n) > 0) given.push_back(n);
      return cmd_make_bank(c_bank, bank_cfg, given, bank_out, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace dpnc
