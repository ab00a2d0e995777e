#include "dpnc/expfam.hpp"

#include <cmath>
#include <numeric>

#include "dpnc/error.hpp"
#include "dpnc/special.hpp"

namespace dpnc {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string fmt_x(std::span<const double> x) {
  std::string s = "[";
  for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x[i]);
  return s + "]";
}
}  // namespace

// ---- Family (generic conjugate bookkeeping) ----

std::vector<double> Family::suff_stats(std::span<const double> x) const {
  std::vector<double> t(stat_size());
  suff_stats(x, t);
  return t;
}

void Family::update_in_place(HyperParams& h, std::span<const double> x) const {
  if (x.size() != dim())
    throw DataError("observation has dimension " + std::to_string(x.size()) + ", family expects " +
                    std::to_string(dim()));
  if (!in_support(x)) throw DataError("observation " + fmt_x(x) + " is outside the support of " + kind());
  if (h.tau.size() != stat_size()) throw DataError("hyperparameter block does not match family layout");
  thread_local std::vector<double> t;
  t.resize(stat_size());
  suff_stats(x, t);
  for (std::size_t i = 0; i < t.size(); ++i) h.tau[i] += t[i];
  h.nu += 1.0;
}

HyperParams Family::posterior_update(HyperParams h, std::span<const double> x) const {
  update_in_place(h, x);
  return h;
}

HyperParams Family::posterior_update_batch(HyperParams h, std::span<const double> rows, std::size_t n) const {
  if (rows.size() != n * dim()) throw DataError("batch size does not match n * dim");
  std::vector<double> acc(stat_size(), 0.0), t(stat_size());
  for (std::size_t i = 0; i < n; ++i) {
    auto x = rows.subspan(i * dim(), dim());
    if (!in_support(x)) throw DataError("observation " + fmt_x(x) + " is outside the support of " + kind());
    suff_stats(x, t);
    for (std::size_t k = 0; k < t.size(); ++k) acc[k] += t[k];
  }
  for (std::size_t k = 0; k < acc.size(); ++k) h.tau[k] += acc[k];
  h.nu += static_cast<double>(n);
  return h;
}

double Family::log_predictive(const HyperParams& h, std::span<const double> x) const {
  if (h.tau.size() != stat_size() || !admissible(h)) throw DataError(kind() + ": inadmissible hyperparameters");
  if (x.size() != dim())
    throw DataError("observation has dimension " + std::to_string(x.size()) + ", family expects " +
                    std::to_string(dim()));
  if (!in_support(x)) throw DataError("observation " + fmt_x(x) + " is outside the support of " + kind());
  std::vector<double> c(compiled_size());
  compile(h.tau, h.nu, c);
  return log_predictive_compiled(c, x);
}

std::vector<double> Family::compile(const HyperParams& h) const {
  std::vector<double> c(compiled_size());
  compile(h.tau, h.nu, c);
  return c;
}

// ---- NIG ----

NigFamily::NigFamily(NigHyper prior) : prior_(prior) {
  if (!(prior.lambda > 0.0 && prior.a > 0.0 && prior.b > 0.0 && std::isfinite(prior.m)))
    throw ConfigError("NIG prior requires lambda > 0, a > 0, b > 0");
}

HyperParams NigFamily::to_natural(const NigHyper& h) {
  return {{h.lambda * h.m, h.lambda * h.m * h.m + 2.0 * h.b, 2.0 * h.a, h.lambda}, 0.0};
}

NigHyper NigFamily::from_natural(std::span<const double> tau) {
  NigHyper h;
  h.lambda = tau[3];
  h.m = tau[0] / tau[3];
  h.a = 0.5 * tau[2];
  h.b = 0.5 * (tau[1] - tau[0] * h.m);
  return h;
}

bool NigFamily::in_support(std::span<const double> x) const { return x.size() == 1 && std::isfinite(x[0]); }

void NigFamily::suff_stats(std::span<const double> x, std::span<double> out) const {
  out[0] = x[0];
  out[1] = x[0] * x[0];
  out[2] = 1.0;
  out[3] = 1.0;
}

double NigFamily::log_base_measure(std::span<const double>) const { return -kHalfLog2Pi; }

bool NigFamily::admissible(std::span<const double> tau, double nu) const {
  if (tau.size() != 4 || !all_finite(tau) || !(nu >= 0.0)) return false;
  const NigHyper h = from_natural(tau);
  return h.lambda > 0.0 && h.a > 0.0 && h.b > 0.0;
}

void NigFamily::compile(std::span<const double> tau, double, std::span<double> out) const {
  const NigHyper h = from_natural(tau);
  const double df = 2.0 * h.a;
  const double scale2 = h.b * (h.lambda + 1.0) / (h.a * h.lambda);
  out[0] = h.m;
  out[1] = 1.0 / (df * scale2);
  out[2] = 0.5 * (df + 1.0);
  out[3] = log_gamma(0.5 * (df + 1.0)) - log_gamma(0.5 * df) - 0.5 * std::log(df * M_PI * scale2);
}

double NigFamily::log_predictive_compiled(std::span<const double> c, std::span<const double> x) const {
  const double d = x[0] - c[0];
  return c[3] - c[2] * std::log1p(d * d * c[1]);
}

std::vector<double> NigFamily::prior_params() const {
  return {prior_.m, std::log(prior_.lambda), std::log(prior_.a), std::log(prior_.b)};
}

FamilyPtr NigFamily::with_prior_params(std::span<const double> p) const {
  return std::make_shared<NigFamily>(NigHyper{p[0], std::exp(p[1]), std::exp(p[2]), std::exp(p[3])});
}

nlohmann::json NigFamily::to_json() const {
  return {{"family", "nig"}, {"m", prior_.m}, {"lambda", prior_.lambda}, {"a", prior_.a}, {"b", prior_.b}};
}

// ---- Beta-Bernoulli ----

BetaBernoulliFamily::BetaBernoulliFamily(BetaHyper prior) : prior_(prior) {
  if (!(prior.a > 0.0 && prior.b > 0.0)) throw ConfigError("Beta prior requires beta_a > 0, beta_b > 0");
}

bool BetaBernoulliFamily::in_support(std::span<const double> x) const {
  return x.size() == 1 && (x[0] == 0.0 || x[0] == 1.0);
}

void BetaBernoulliFamily::suff_stats(std::span<const double> x, std::span<double> out) const {
  out[0] = x[0];
  out[1] = 1.0 - x[0];
}

bool BetaBernoulliFamily::admissible(std::span<const double> tau, double nu) const {
  return tau.size() == 2 && all_finite(tau) && tau[0] > 0.0 && tau[1] > 0.0 && nu >= 0.0;
}

void BetaBernoulliFamily::compile(std::span<const double> tau, double, std::span<double> out) const {
  const double total = std::log(tau[0] + tau[1]);
  out[0] = std::log(tau[0]) - total;
  out[1] = std::log(tau[1]) - total;
}

double BetaBernoulliFamily::log_predictive_compiled(std::span<const double> c, std::span<const double> x) const {
  return x[0] == 1.0 ? c[0] : c[1];
}

std::vector<double> BetaBernoulliFamily::prior_params() const { return {std::log(prior_.a), std::log(prior_.b)}; }

FamilyPtr BetaBernoulliFamily::with_prior_params(std::span<const double> p) const {
  return std::make_shared<BetaBernoulliFamily>(BetaHyper{std::exp(p[0]), std::exp(p[1])});
}

nlohmann::json BetaBernoulliFamily::to_json() const {
  return {{"family", "beta_bernoulli"}, {"beta_a", prior_.a}, {"beta_b", prior_.b}};
}

// ---- Hurdle ----

HurdleFamily::HurdleFamily(FamilyPtr base, BetaHyper gate) : base_(std::move(base)), gate_(gate) {
  if (!base_ || base_->dim() != 1) throw ConfigError("hurdle base must be a one-dimensional family");
  if (!(gate.a > 0.0 && gate.b > 0.0)) throw ConfigError("hurdle gate requires beta_a > 0, beta_b > 0");
}

FamilyPtr hurdle_compose(FamilyPtr base, BetaHyper gate_prior) {
  return std::make_shared<HurdleFamily>(std::move(base), gate_prior);
}

HyperParams HurdleFamily::prior() const {
  HyperParams h;
  h.tau = {gate_.a, gate_.b};
  const HyperParams b = base_->prior();
  h.tau.insert(h.tau.end(), b.tau.begin(), b.tau.end());
  return h;
}

bool HurdleFamily::in_support(std::span<const double> x) const {
  if (x.size() != 1 || !(x[0] >= 0.0)) return false;
  if (x[0] == 0.0) return true;
  const double lx = std::log(x[0]);
  return base_->in_support(std::span<const double>(&lx, 1));
}

void HurdleFamily::suff_stats(std::span<const double> x, std::span<double> out) const {
  auto base_out = out.subspan(2);
  if (x[0] == 0.0) {
    out[0] = 0.0;
    out[1] = 1.0;
    std::fill(base_out.begin(), base_out.end(), 0.0);
    return;
  }
  out[0] = 1.0;
  out[1] = 0.0;
  const double lx = std::log(x[0]);
  base_->suff_stats(std::span<const double>(&lx, 1), base_out);
}

double HurdleFamily::log_base_measure(std::span<const double> x) const {
  if (x[0] == 0.0) return 0.0;
  const double lx = std::log(x[0]);
  return base_->log_base_measure(std::span<const double>(&lx, 1)) - lx;
}

bool HurdleFamily::admissible(std::span<const double> tau, double nu) const {
  if (tau.size() != stat_size() || !(nu >= 0.0)) return false;
  if (!(tau[0] > 0.0 && tau[1] > 0.0 && std::isfinite(tau[0]) && std::isfinite(tau[1]))) return false;
  return base_->admissible(tau.subspan(2), tau[0] - gate_.a);
}

void HurdleFamily::compile(std::span<const double> tau, double, std::span<double> out) const {
  const double total = std::log(tau[0] + tau[1]);
  out[0] = std::log(tau[0]) - total;
  out[1] = std::log(tau[1]) - total;
  base_->compile(tau.subspan(2), tau[0] - gate_.a, out.subspan(2));
}

double HurdleFamily::log_predictive_compiled(std::span<const double> c, std::span<const double> x) const {
  if (x[0] == 0.0) return c[1];
  const double lx = std::log(x[0]);
  return c[0] + base_->log_predictive_compiled(c.subspan(2), std::span<const double>(&lx, 1)) - lx;
}

std::vector<double> HurdleFamily::prior_params() const {
  std::vector<double> p = {std::log(gate_.a), std::log(gate_.b)};
  const auto b = base_->prior_params();
  p.insert(p.end(), b.begin(), b.end());
  return p;
}

FamilyPtr HurdleFamily::with_prior_params(std::span<const double> p) const {
  return std::make_shared<HurdleFamily>(base_->with_prior_params(p.subspan(2)),
                                        BetaHyper{std::exp(p[0]), std::exp(p[1])});
}

nlohmann::json HurdleFamily::to_json() const {
  nlohmann::json j = {{"family", "hurdle"}, {"beta_a", gate_.a}, {"beta_b", gate_.b}};
  if (base_->kind() == "nig") {
    const nlohmann::json base = base_->to_json();
    for (const auto& [k, v] : base.items())
      if (k != "family") j[k] = v;
  } else {
    j["base"] = base_->to_json();
  }
  return j;
}

// ---- Product ----

ProductFamily::ProductFamily(std::vector<FamilyPtr> components) : components_(std::move(components)) {
  if (components_.empty()) throw ConfigError("product family needs at least one component");
  tau_offset_.push_back(0);
  x_offset_.push_back(0);
  compiled_offset_.push_back(0);
  param_offset_.push_back(0);
  for (const auto& c : components_) {
    if (!c) throw ConfigError("null product component");
    tau_offset_.push_back(tau_offset_.back() + c->stat_size());
    x_offset_.push_back(x_offset_.back() + c->dim());
    compiled_offset_.push_back(compiled_offset_.back() + c->compiled_size());
    param_offset_.push_back(param_offset_.back() + c->prior_params().size());
  }
  dim_ = x_offset_.back();
}

FamilyPtr product_family(std::vector<FamilyPtr> components) {
  return std::make_shared<ProductFamily>(std::move(components));
}

std::shared_ptr<const ProductFamily> ProductFamily::with_component(std::size_t i, FamilyPtr c) const {
  auto comps = components_;
  comps.at(i) = std::move(c);
  return std::make_shared<ProductFamily>(std::move(comps));
}

HyperParams ProductFamily::prior() const {
  HyperParams h;
  h.tau.reserve(stat_size());
  for (const auto& c : components_) {
    const auto p = c->prior();
    h.tau.insert(h.tau.end(), p.tau.begin(), p.tau.end());
  }
  return h;
}

bool ProductFamily::in_support(std::span<const double> x) const {
  if (x.size() != dim_) return false;
  for (std::size_t i = 0; i < components_.size(); ++i)
    if (!components_[i]->in_support(x.subspan(x_offset_[i], components_[i]->dim()))) return false;
  return true;
}

void ProductFamily::suff_stats(std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < components_.size(); ++i)
    components_[i]->suff_stats(x.subspan(x_offset_[i], components_[i]->dim()),
                               out.subspan(tau_offset_[i], components_[i]->stat_size()));
}

double ProductFamily::log_base_measure(std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i)
    s += components_[i]->log_base_measure(x.subspan(x_offset_[i], components_[i]->dim()));
  return s;
}

bool ProductFamily::admissible(std::span<const double> tau, double nu) const {
  if (tau.size() != stat_size()) return false;
  for (std::size_t i = 0; i < components_.size(); ++i)
    if (!components_[i]->admissible(tau.subspan(tau_offset_[i], components_[i]->stat_size()), nu)) return false;
  return true;
}

void ProductFamily::compile(std::span<const double> tau, double nu, std::span<double> out) const {
  for (std::size_t i = 0; i < components_.size(); ++i)
    components_[i]->compile(tau.subspan(tau_offset_[i], components_[i]->stat_size()), nu,
                            out.subspan(compiled_offset_[i], components_[i]->compiled_size()));
}

double ProductFamily::log_predictive_compiled(std::span<const double> c, std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < components_.size(); ++i)
    s += components_[i]->log_predictive_compiled(c.subspan(compiled_offset_[i], components_[i]->compiled_size()),
                                                 x.subspan(x_offset_[i], components_[i]->dim()));
  return s;
}

std::vector<double> ProductFamily::prior_params() const {
  std::vector<double> p;
  for (const auto& c : components_) {
    const auto q = c->prior_params();
    p.insert(p.end(), q.begin(), q.end());
  }
  return p;
}

FamilyPtr ProductFamily::with_prior_params(std::span<const double> params) const {
  if (params.size() != param_offset_.back()) throw ConfigError("prior parameter vector has wrong length");
  std::vector<FamilyPtr> comps;
  for (std::size_t i = 0; i < components_.size(); ++i)
    comps.push_back(components_[i]->with_prior_params(
        params.subspan(param_offset_[i], param_offset_[i + 1] - param_offset_[i])));
  return std::make_shared<ProductFamily>(std::move(comps));
}

nlohmann::json ProductFamily::to_json() const {
  const auto first = components_.front()->to_json();
  bool homogeneous = true;
  for (const auto& c : components_) homogeneous = homogeneous && c->to_json() == first;
  if (homogeneous) {
    auto j = first;
    j["dims"] = components_.size();
    return j;
  }
  nlohmann::json dims = nlohmann::json::array();
  for (const auto& c : components_) dims.push_back(c->to_json());
  return {{"dims", dims}};
}

// ---- JSON ----

namespace {

double get_or(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("hyperparameter '") + key + "' must be a number");
  return j.at(key).get<double>();
}

FamilyPtr one_dim_from_json(const nlohmann::json& block, const std::string& default_kind) {
  const std::string kind = block.contains("family") ? block.at("family").get<std::string>() : default_kind;
  NigHyper nig{get_or(block, "m", 0.0), get_or(block, "lambda", 1.0), get_or(block, "a", 1.0),
               get_or(block, "b", 1.0)};
  BetaHyper beta{get_or(block, "beta_a", 1.0), get_or(block, "beta_b", 1.0)};
  if (kind == "nig") return std::make_shared<NigFamily>(nig);
  if (kind == "beta_bernoulli") return std::make_shared<BetaBernoulliFamily>(beta);
  if (kind == "hurdle") {
    FamilyPtr base = block.contains("base") ? one_dim_from_json(block.at("base"), "nig")
                                            : std::make_shared<NigFamily>(nig);
    return hurdle_compose(std::move(base), beta);
  }
  throw ConfigError("unknown family '" + kind + "' (expected nig|beta_bernoulli|hurdle)");
}

}  // namespace

std::shared_ptr<const ProductFamily> family_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("family block must be a JSON object");
  const std::string kind = j.value("family", std::string("nig"));
  if (!j.contains("dims")) throw ConfigError("family block lacks 'dims'");
  const auto& dims = j.at("dims");
  std::vector<FamilyPtr> comps;
  if (dims.is_number_integer()) {
    const auto d = dims.get<long long>();
    if (d < 1) throw ConfigError("family 'dims' must be >= 1");
    const FamilyPtr c = one_dim_from_json(j, kind);
    comps.assign(static_cast<std::size_t>(d), c);
  } else if (dims.is_array()) {
    if (dims.empty()) throw ConfigError("family 'dims' array is empty");
    for (const auto& block : dims) comps.push_back(one_dim_from_json(block, kind));
  } else {
    throw ConfigError("family 'dims' must be an integer or an array");
  }
  return std::make_shared<ProductFamily>(std::move(comps));
}

}  // namespace dpnc
