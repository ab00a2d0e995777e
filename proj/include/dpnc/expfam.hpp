#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace dpnc {

/// Conjugate-prior state in the generic form (tau, nu).
///
/// An update with observation x adds the sufficient statistics t(x) to tau and
/// one to nu. Each family fixes the layout of tau; nu is the number of
/// observations absorbed since the prior (zero for a prior).
struct HyperParams {
  std::vector<double> tau;
  double nu = 0.0;

  bool operator==(const HyperParams&) const = default;
};

/// Normal-inverse-gamma prior on (mu, sigma^2) for one dimension.
struct NigHyper {
  double m = 0.0;
  double lambda = 1.0;
  double a = 1.0;
  double b = 1.0;
};

struct BetaHyper {
  double a = 1.0;
  double b = 1.0;
};

/// Exponential-family likelihood with a conjugate prior and closed-form
/// posterior predictive.
///
/// Implementations are immutable. The `compile` / `log_predictive_compiled`
/// pair caches whatever the predictive density needs (normalising constants,
/// location, scale) so repeated evaluation against one posterior is cheap.
class Family {
 public:
  virtual ~Family() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t stat_size() const = 0;
  virtual HyperParams prior() const = 0;
  virtual bool in_support(std::span<const double> x) const = 0;
  virtual void suff_stats(std::span<const double> x, std::span<double> out) const = 0;
  virtual double log_base_measure(std::span<const double> x) const = 0;
  virtual bool admissible(std::span<const double> tau, double nu) const = 0;

  virtual std::size_t compiled_size() const = 0;
  virtual void compile(std::span<const double> tau, double nu, std::span<double> out) const = 0;
  virtual double log_predictive_compiled(std::span<const double> compiled, std::span<const double> x) const = 0;

  /// Unconstrained real parameterisation of the prior (logs of positive
  /// quantities) and its inverse.
  virtual std::vector<double> prior_params() const = 0;
  virtual std::shared_ptr<const Family> with_prior_params(std::span<const double> params) const = 0;

  virtual nlohmann::json to_json() const = 0;

  bool admissible(const HyperParams& h) const { return admissible(h.tau, h.nu); }
  std::vector<double> suff_stats(std::span<const double> x) const;

  /// tau + t(x), nu + 1. Throws DataError when x is outside the support.
  HyperParams posterior_update(HyperParams h, std::span<const double> x) const;
  void update_in_place(HyperParams& h, std::span<const double> x) const;
  /// Absorbs n row-major observations at once.
  HyperParams posterior_update_batch(HyperParams h, std::span<const double> rows, std::size_t n) const;

  /// Checked log posterior predictive density (or mass) of x.
  double log_predictive(const HyperParams& h, std::span<const double> x) const;
  std::vector<double> compile(const HyperParams& h) const;
};

using FamilyPtr = std::shared_ptr<const Family>;

// Gaussian with unknown mean and variance under a normal-inverse-gamma prior.
// tau = [lambda m, lambda m^2 + 2b, 2a, lambda], t(x) = [x, x^2, 1, 1].
// Predictive: Student-t, df 2a, location m, scale^2 b (lambda + 1) / (a lambda).
class NigFamily final : public Family {
 public:
  explicit NigFamily(NigHyper prior);

  const NigHyper& hyper() const { return prior_; }
  static HyperParams to_natural(const NigHyper& h);
  static NigHyper from_natural(std::span<const double> tau);

  std::string kind() const override { return "nig"; }
  std::size_t dim() const override { return 1; }
  std::size_t stat_size() const override { return 4; }
  HyperParams prior() const override { return to_natural(prior_); }
  bool in_support(std::span<const double> x) const override;
  void suff_stats(std::span<const double> x, std::span<double> out) const override;
  double log_base_measure(std::span<const double> x) const override;
  bool admissible(std::span<const double> tau, double nu) const override;
  std::size_t compiled_size() const override { return 4; }
  void compile(std::span<const double> tau, double nu, std::span<double> out) const override;
  double log_predictive_compiled(std::span<const double> c, std::span<const double> x) const override;
  std::vector<double> prior_params() const override;
  FamilyPtr with_prior_params(std::span<const double> params) const override;
  nlohmann::json to_json() const override;

 private:
  NigHyper prior_;
};

// Bernoulli on {0, 1} with a Beta prior. tau = [a, b], t(x) = [x, 1 - x].
class BetaBernoulliFamily final : public Family {
 public:
  explicit BetaBernoulliFamily(BetaHyper prior);

  std::string kind() const override { return "beta_bernoulli"; }
  std::size_t dim() const override { return 1; }
  std::size_t stat_size() const override { return 2; }
  HyperParams prior() const override { return {{prior_.a, prior_.b}, 0.0}; }
  bool in_support(std::span<const double> x) const override;
  void suff_stats(std::span<const double> x, std::span<double> out) const override;
  double log_base_measure(std::span<const double>) const override { return 0.0; }
  bool admissible(std::span<const double> tau, double nu) const override;
  std::size_t compiled_size() const override { return 2; }
  void compile(std::span<const double> tau, double nu, std::span<double> out) const override;
  double log_predictive_compiled(std::span<const double> c, std::span<const double> x) const override;
  std::vector<double> prior_params() const override;
  FamilyPtr with_prior_params(std::span<const double> params) const override;
  nlohmann::json to_json() const override;

 private:
  BetaHyper prior_;
};

// Hurdle model: a Beta-Bernoulli gate decides whether x is exactly zero;
// nonzero values follow the base family applied to log x.
// tau = [a_gate, b_gate, tau_base...],
// t(x) = [1{x != 0}, 1{x == 0}, t_base(log x) 1{x != 0}].
class HurdleFamily final : public Family {
 public:
  HurdleFamily(FamilyPtr base, BetaHyper gate);

  const Family& base() const { return *base_; }
  const BetaHyper& gate() const { return gate_; }

  std::string kind() const override { return "hurdle"; }
  std::size_t dim() const override { return 1; }
  std::size_t stat_size() const override { return 2 + base_->stat_size(); }
  HyperParams prior() const override;
  bool in_support(std::span<const double> x) const override;
  void suff_stats(std::span<const double> x, std::span<double> out) const override;
  double log_base_measure(std::span<const double> x) const override;
  bool admissible(std::span<const double> tau, double nu) const override;
  std::size_t compiled_size() const override { return 2 + base_->compiled_size(); }
  void compile(std::span<const double> tau, double nu, std::span<double> out) const override;
  double log_predictive_compiled(std::span<const double> c, std::span<const double> x) const override;
  std::vector<double> prior_params() const override;
  FamilyPtr with_prior_params(std::span<const double> params) const override;
  nlohmann::json to_json() const override;

 private:
  FamilyPtr base_;
  BetaHyper gate_;
};

FamilyPtr hurdle_compose(FamilyPtr base, BetaHyper gate_prior);

// Independent product over dimensions; observation dim is the sum of the
// component dims. tau is the concatenation of component taus and every
// component sees every observation, so nu is shared.
class ProductFamily final : public Family {
 public:
  explicit ProductFamily(std::vector<FamilyPtr> components);

  std::size_t num_components() const { return components_.size(); }
  const FamilyPtr& component(std::size_t i) const { return components_[i]; }
  std::size_t tau_offset(std::size_t i) const { return tau_offset_[i]; }
  std::size_t x_offset(std::size_t i) const { return x_offset_[i]; }
  std::size_t compiled_offset(std::size_t i) const { return compiled_offset_[i]; }
  std::size_t param_offset(std::size_t i) const { return param_offset_[i]; }
  /// Prior with component i replaced.
  std::shared_ptr<const ProductFamily> with_component(std::size_t i, FamilyPtr c) const;

  std::string kind() const override { return "product"; }
  std::size_t dim() const override { return dim_; }
  std::size_t stat_size() const override { return tau_offset_.back(); }
  HyperParams prior() const override;
  bool in_support(std::span<const double> x) const override;
  void suff_stats(std::span<const double> x, std::span<double> out) const override;
  double log_base_measure(std::span<const double> x) const override;
  bool admissible(std::span<const double> tau, double nu) const override;
  std::size_t compiled_size() const override { return compiled_offset_.back(); }
  void compile(std::span<const double> tau, double nu, std::span<double> out) const override;
  double log_predictive_compiled(std::span<const double> c, std::span<const double> x) const override;
  std::vector<double> prior_params() const override;
  FamilyPtr with_prior_params(std::span<const double> params) const override;
  nlohmann::json to_json() const override;

 private:
  std::vector<FamilyPtr> components_;
  std::size_t dim_ = 0;
  std::vector<std::size_t> tau_offset_, x_offset_, compiled_offset_, param_offset_;
};

FamilyPtr product_family(std::vector<FamilyPtr> components);

/// Builds a family from a JSON block. Recognised keys: family
/// (nig|beta_bernoulli|hurdle), m, lambda, a, b, beta_a, beta_b, and dims:
/// either a count of identical dimensions or an array of per-dimension blocks.
/// Always returns a ProductFamily. Throws ConfigError on bad input.
std::shared_ptr<const ProductFamily> family_from_json(const nlohmann::json& j);

}  // namespace dpnc
