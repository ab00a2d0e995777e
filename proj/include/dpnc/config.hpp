#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpnc/circuit.hpp"
#include "dpnc/evaluate.hpp"
#include "dpnc/expfam.hpp"
#include "dpnc/feature_bank.hpp"
#include "dpnc/fit.hpp"
#include "dpnc/pfilter.hpp"
#include "dpnc/simgen.hpp"
#include "dpnc/train.hpp"

namespace dpnc {

/// Resolved experiment configuration: built-in defaults, overlaid with a JSON
/// file, overlaid with `key.path=value` overrides. Every key must exist in the
/// defaults (typos are rejected); pf.family is free-form.
class ExperimentConfig {
 public:
  ExperimentConfig();  // defaults only

  static nlohmann::json defaults();
  /// With check_files false, referenced input files need not exist yet (used
  /// by commands that create them).
  static ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides = {},
                               bool check_files = true);
  static ExperimentConfig from_json(const nlohmann::json& j, const std::vector<std::string>& overrides = {},
                                    bool check_files = true);

  /// Applies one "a.b.c=value" override; value is parsed as JSON when possible,
  /// otherwise taken as a string.
  void set(const std::string& assignment);

  const nlohmann::json& json() const { return j_; }
  /// 16 hex digits identifying the resolved config together with `seed`.
  std::string digest(std::uint64_t seed) const;

  double alpha() const;
  bool is_bank() const;
  SyntheticConfig synthetic() const;
  std::size_t episode_length() const;  // data.T
  /// Episode source for the given split (ignored for synthetic data). Loads
  /// the bank on every call.
  /// Bank sources add with-replacement fallback draws to `replacement_counter`.
  EpisodeSource source(BankSplit split,
                       std::shared_ptr<std::atomic<std::size_t>> replacement_counter = nullptr) const;
  BankSplit eval_split() const;
  /// Observation dimension: data.D for synthetic data, the bank's for banks.
  std::size_t data_dim() const;

  /// Model used by pf / exact / fit-pf: pf.hyper_path, else pf.family, else
  /// the true synthetic prior, else a unit-hyperparameter hurdle model.
  FamilyPtr pf_family() const;
  PfOptions pf_options() const;
  FitConfig fit() const;
  CircuitConfig circuit() const;
  TrainConfig train() const;
  std::size_t eval_episodes() const;
  Setting eval_setting() const;
  std::uint64_t eval_seed() const;
  TimingOptions bench_timing() const;
  std::uint64_t bench_seed() const;
  Setting bench_setting() const;
  SparseBankConfig bank() const;

 private:
  void validate() const;
  nlohmann::json j_;
  bool check_files_ = true;
};

}  // namespace dpnc
