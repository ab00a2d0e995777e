#include "dpnc/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dpnc/checkpoint.hpp"
#include "dpnc/error.hpp"

namespace dpnc {

nlohmann::json ExperimentConfig::defaults() {
  return nlohmann::json::parse(R"({
    "crp": {"alpha": 1.0},
    "data": {"kind": "synthetic", "D": 2, "T": 100,
             "nig": {"m": 0.0, "lambda": 0.01, "a": 2.0, "b": 2.0},
             "bank_path": "", "split": "meta-test", "split_seed": 0},
    "pf": {"particles": 100, "ess_threshold": 50.0, "family": null, "hyper_path": ""},
    "fit": {"steps": 10000, "batch": 128, "lr": 0.1, "seed": 0, "eval_every": 100,
            "eval_episodes": 256, "fd_step": 0.0001},
    "circuit": {"hidden": 256, "layers": 2, "max_classes": 100, "input_scale": 1.0,
                "input_transform": "identity", "feedback": "argmax"},
    "train": {"steps": 10000, "batch": 128, "T": 100, "lr": 0.001, "seed": 0,
              "checkpoint_every": 0, "clip_norm": 0.0, "shard": 64},
    "eval": {"n_episodes": 10000, "setting": "sequential", "seed": 1},
    "bench": {"setting": "unobserved", "warmup": 10, "batches": 5, "batch_size": 20, "seed": 2},
    "bank": {"classes": 100, "items": 100, "dim": 16, "seed": 0, "zero_rate": 0.5,
             "gate_concentration": 2.0, "mu_sd": 1.0, "sigma_a": 4.0, "sigma_b": 0.6,
             "item_shift_sd": 0.0}
  })");
}

namespace {

void check_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& prefix) {
  if (!given.is_object()) throw ConfigError("config: '" + prefix + "' must be an object");
  for (const auto& [k, v] : given.items()) {
    const std::string path = prefix.empty() ? k : prefix + "." + k;
    if (!known.contains(k)) throw ConfigError("config: unknown key '" + path + "'");
    if (path == "pf.family") continue;
    if (known.at(k).is_object()) check_keys(v, known.at(k), path);
  }
}

template <typename T>
T get(const nlohmann::json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: ") + section + "." + key + " has the wrong type");
  }
}

std::size_t get_count(const nlohmann::json& j, const char* section, const char* key) {
  const auto& v = j.at(section).at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(std::string("config: ") + section + "." + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

}  // namespace

ExperimentConfig::ExperimentConfig() : j_(defaults()) {}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::vector<std::string>& overrides,
                                             bool check_files) {
  ExperimentConfig c;
  c.check_files_ = check_files;
  check_keys(j, c.j_, "");
  c.j_.merge_patch(j);
  // merge_patch drops keys set to null; restore the free-form slot.
  if (!c.j_.at("pf").contains("family")) c.j_["pf"]["family"] = nullptr;
  for (const auto& o : overrides) c.set(o);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path, const std::vector<std::string>& overrides,
                                        bool check_files) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j, overrides, check_files);
}

void ExperimentConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &j_;
  const nlohmann::json known = defaults();
  const nlohmann::json* ref = &known;
  std::size_t pos = 0;
  std::string path;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    path += (path.empty() ? "" : ".") + part;
    const bool free_form = path.rfind("pf.family", 0) == 0 && path != "pf.family";
    if (!free_form && (!ref->is_object() || !ref->contains(part)))
      throw ConfigError("override: unknown key '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    if (!(*node)[part].is_object()) (*node)[part] = nlohmann::json::object();
    node = &(*node)[part];
    ref = free_form ? ref : &ref->at(part);
    pos = dot + 1;
  }
}

void ExperimentConfig::validate() const {
  if (!(alpha() > 0.0)) throw ConfigError("crp.alpha must be positive");
  const std::string kind = get<std::string>(j_, "data", "kind");
  if (kind != "synthetic" && kind != "bank") throw ConfigError("data.kind must be synthetic or bank, got " + kind);
  if (kind == "synthetic") synthetic().validate();
  if (kind == "bank") {
    const std::string p = get<std::string>(j_, "data", "bank_path");
    if (p.empty()) throw ConfigError("data.bank_path is required when data.kind is bank");
    if (check_files_ && !std::filesystem::exists(p)) throw ConfigError("feature bank file not found: " + p);
    (void)parse_bank_split(get<std::string>(j_, "data", "split"));
  }
  const std::string hp = get<std::string>(j_, "pf", "hyper_path");
  if (check_files_ && !hp.empty() && !std::filesystem::exists(hp)) throw ConfigError("pf.hyper_path not found: " + hp);
  if (episode_length() < 1) throw ConfigError("data.T must be at least 1");
  (void)pf_options();
  fit().validate();
  // A bank's dimension is read from the file, so skip this when it may not exist yet.
  if (check_files_ || !is_bank()) circuit().validate();
  train().validate();
  (void)eval_setting();
  (void)bench_setting();
}

std::string ExperimentConfig::digest(std::uint64_t seed) const {
  const std::string s = j_.dump();
  std::uint64_t h = fnv1a64(s.data(), s.size());
  h = fnv1a64(&seed, sizeof seed, h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double ExperimentConfig::alpha() const { return get<double>(j_, "crp", "alpha"); }
bool ExperimentConfig::is_bank() const { return get<std::string>(j_, "data", "kind") == "bank"; }
std::size_t ExperimentConfig::episode_length() const { return get_count(j_, "data", "T"); }

SyntheticConfig ExperimentConfig::synthetic() const {
  SyntheticConfig s;
  s.dim = get_count(j_, "data", "D");
  const auto& n = j_.at("data").at("nig");
  try {
    s.nig = NigHyper{n.at("m").get<double>(), n.at("lambda").get<double>(), n.at("a").get<double>(),
                     n.at("b").get<double>()};
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: data.nig needs numeric m, lambda, a, b");
  }
  s.alpha = alpha();
  s.length = episode_length();
  return s;
}

EpisodeSource ExperimentConfig::source(BankSplit split,
                                       std::shared_ptr<std::atomic<std::size_t>> replacement_counter) const {
  if (!is_bank()) return synthetic_source(synthetic());
  auto bank = std::make_shared<const FeatureBank>(load_feature_bank(get<std::string>(j_, "data", "bank_path"), split,
                                                                    get<std::uint64_t>(j_, "data", "split_seed")));
  return bank_source(bank, alpha(), episode_length(), std::move(replacement_counter));
}

BankSplit ExperimentConfig::eval_split() const { return parse_bank_split(get<std::string>(j_, "data", "split")); }

std::size_t ExperimentConfig::data_dim() const {
  if (!is_bank()) return get_count(j_, "data", "D");
  return load_feature_bank(get<std::string>(j_, "data", "bank_path"), BankSplit::All,
                           get<std::uint64_t>(j_, "data", "split_seed"))
      .dim;
}

FamilyPtr ExperimentConfig::pf_family() const {
  const std::string hp = get<std::string>(j_, "pf", "hyper_path");
  if (!hp.empty()) {
    std::ifstream in(hp);
    if (!in) throw ConfigError("cannot open fitted hyperparameters " + hp);
    try {
      return family_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("fitted hyperparameters " + hp + " are not valid JSON: " + e.what());
    }
  }
  const auto& f = j_.at("pf").at("family");
  if (!f.is_null()) return family_from_json(f);
  if (!is_bank()) {
    const auto s = synthetic();
    return family_from_json({{"family", "nig"},
                             {"m", s.nig.m},
                             {"lambda", s.nig.lambda},
                             {"a", s.nig.a},
                             {"b", s.nig.b},
                             {"dims", s.dim}});
  }
  return family_from_json({{"family", "hurdle"}, {"dims", data_dim()}});
}

PfOptions ExperimentConfig::pf_options() const {
  PfOptions o;
  o.particles = get_count(j_, "pf", "particles");
  o.ess_threshold = get<double>(j_, "pf", "ess_threshold");
  if (o.particles < 1) throw ConfigError("pf.particles must be at least 1");
  if (!(o.ess_threshold >= 0.0) || o.ess_threshold > static_cast<double>(o.particles))
    throw ConfigError("pf.ess_threshold must lie in [0, pf.particles]");
  return o;
}

FitConfig ExperimentConfig::fit() const {
  FitConfig f;
  f.steps = get_count(j_, "fit", "steps");
  f.batch = get_count(j_, "fit", "batch");
  f.lr = get<double>(j_, "fit", "lr");
  f.seed = get<std::uint64_t>(j_, "fit", "seed");
  f.eval_every = get_count(j_, "fit", "eval_every");
  f.eval_episodes = get_count(j_, "fit", "eval_episodes");
  f.fd_step = get<double>(j_, "fit", "fd_step");
  return f;
}

CircuitConfig ExperimentConfig::circuit() const {
  nlohmann::json c = j_.at("circuit");
  c["input_dim"] = is_bank() ? std::size_t{1} : get_count(j_, "data", "D");
  CircuitConfig cfg = CircuitConfig::from_json(c);
  if (is_bank()) cfg.input_dim = data_dim();
  return cfg;
}

TrainConfig ExperimentConfig::train() const {
  TrainConfig t;
  t.steps = get_count(j_, "train", "steps");
  t.batch = get_count(j_, "train", "batch");
  t.length = get_count(j_, "train", "T");
  t.lr = get<double>(j_, "train", "lr");
  t.seed = get<std::uint64_t>(j_, "train", "seed");
  t.checkpoint_every = get_count(j_, "train", "checkpoint_every");
  t.clip_norm = get<double>(j_, "train", "clip_norm");
  t.shard = get_count(j_, "train", "shard");
  nlohmann::json data = j_.at("data");
  data["alpha"] = alpha();
  data.erase("split");  // training always draws from meta-train
  t.data = data;
  return t;
}

std::size_t ExperimentConfig::eval_episodes() const { return get_count(j_, "eval", "n_episodes"); }
Setting ExperimentConfig::eval_setting() const {
  try {
    return parse_setting(get<std::string>(j_, "eval", "setting"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("eval.setting: ") + e.what());
  }
}
std::uint64_t ExperimentConfig::eval_seed() const { return get<std::uint64_t>(j_, "eval", "seed"); }

TimingOptions ExperimentConfig::bench_timing() const {
  TimingOptions t;
  t.warmup = get_count(j_, "bench", "warmup");
  t.batches = get_count(j_, "bench", "batches");
  t.batch_size = get_count(j_, "bench", "batch_size");
  if (t.batches < 1 || t.batch_size < 1) throw ConfigError("bench.batches and bench.batch_size must be at least 1");
  return t;
}
std::uint64_t ExperimentConfig::bench_seed() const { return get<std::uint64_t>(j_, "bench", "seed"); }
Setting ExperimentConfig::bench_setting() const {
  try {
    return parse_setting(get<std::string>(j_, "bench", "setting"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("bench.setting: ") + e.what());
  }
}

SparseBankConfig ExperimentConfig::bank() const {
  SparseBankConfig b;
  b.classes = get_count(j_, "bank", "classes");
  b.items = get_count(j_, "bank", "items");
  b.dim = get_count(j_, "bank", "dim");
  b.seed = get<std::uint64_t>(j_, "bank", "seed");
  b.zero_rate = get<double>(j_, "bank", "zero_rate");
  b.gate_concentration = get<double>(j_, "bank", "gate_concentration");
  b.mu_sd = get<double>(j_, "bank", "mu_sd");
  b.sigma_a = get<double>(j_, "bank", "sigma_a");
  b.sigma_b = get<double>(j_, "bank", "sigma_b");
  b.item_shift_sd = get<double>(j_, "bank", "item_shift_sd");
  return b;
}

}  // namespace dpnc
