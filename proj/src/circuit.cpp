#include "dpnc/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Core>

#include "dpnc/error.hpp"
#include "dpnc/kernels.hpp"

namespace dpnc {

using kernels::Trans;

void CircuitConfig::validate() const {
  if (input_dim < 1) throw ConfigError("circuit: input_dim must be at least 1");
  if (hidden < 1) throw ConfigError("circuit: hidden must be at least 1");
  if (layers < 1) throw ConfigError("circuit: layers must be at least 1");
  if (max_classes < 1) throw ConfigError("circuit: max_classes must be at least 1");
  if (!(input_scale > 0.0) || !std::isfinite(input_scale)) throw ConfigError("circuit: input_scale must be positive");
}

nlohmann::json CircuitConfig::to_json() const {
  return {{"input_dim", input_dim},     {"hidden", hidden},
          {"layers", layers},           {"max_classes", max_classes},
          {"input_scale", input_scale}, {"feedback", feedback == Feedback::Zeros ? "zeros" : "argmax"},
          {"input_transform", input_transform == InputTransform::Symlog ? "symlog" : "identity"}};
}

CircuitConfig CircuitConfig::from_json(const nlohmann::json& j) {
  CircuitConfig c;
  try {
    c.input_dim = j.value("input_dim", c.input_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.max_classes = j.value("max_classes", c.max_classes);
    c.input_scale = j.value("input_scale", c.input_scale);
    const std::string tr = j.value("input_transform", std::string("identity"));
    if (tr == "identity")
      c.input_transform = InputTransform::Identity;
    else if (tr == "symlog")
      c.input_transform = InputTransform::Symlog;
    else
      throw ConfigError("circuit.input_transform must be \"identity\" or \"symlog\", got \"" + tr + "\"");
    const std::string fb = j.value("feedback", std::string("argmax"));
    if (fb == "argmax")
      c.feedback = Feedback::OwnArgmax;
    else if (fb == "zeros")
      c.feedback = Feedback::Zeros;
    else
      throw ConfigError("circuit.feedback must be \"argmax\" or \"zeros\", got \"" + fb + "\"");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("circuit config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::pair<std::string, std::array<std::size_t, 2>>> circuit_layout(const CircuitConfig& cfg) {
  const std::size_t H = cfg.hidden, C = cfg.max_classes;
  std::vector<std::pair<std::string, std::array<std::size_t, 2>>> out;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    out.push_back({p + "w_ih", {3 * H, l == 0 ? cfg.input_dim : H}});
    if (l == 0) out.push_back({p + "w_label", {C, 3 * H}});
    out.push_back({p + "w_hh", {3 * H, H}});
    out.push_back({p + "b_ih", {1, 3 * H}});
    out.push_back({p + "b_hh", {1, 3 * H}});
  }
  out.push_back({"head.w", {C, H}});
  out.push_back({"head.b", {1, C}});
  return out;
}

template <typename T>
std::size_t CircuitParams<T>::num_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

template <typename T>
std::size_t CircuitParams<T>::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw std::out_of_range("no circuit parameter named " + name);
}

template <typename T>
CircuitParams<T> circuit_zeros(const CircuitConfig& cfg) {
  cfg.validate();
  CircuitParams<T> p;
  for (const auto& [name, shape] : circuit_layout(cfg)) {
    p.names.push_back(name);
    p.tensors.emplace_back(shape[0], shape[1]);
  }
  return p;
}

template <typename T>
CircuitParams<T> circuit_init(const CircuitConfig& cfg, RngStream& rng) {
  CircuitParams<T> p = circuit_zeros<T>(cfg);
  const std::size_t H = cfg.hidden;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& n = p.names[i];
    if (n.find(".b") != std::string::npos) continue;
    std::size_t fan_in = p.tensors[i].cols();
    if (n == "l0.w_ih" || n == "l0.w_label") fan_in = cfg.input_dim + cfg.max_classes;
    if (n == "head.w") fan_in = H;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (T& v : p.tensors[i].values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  }
  return p;
}

namespace {

struct LayerIdx {
  std::size_t w_ih, w_label, w_hh, b_ih, b_hh;
};

struct Layout {
  std::vector<LayerIdx> layers;
  std::size_t head_w, head_b;

  explicit Layout(const CircuitConfig& cfg) {
    std::size_t i = 0;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      LayerIdx li{};
      li.w_ih = i++;
      li.w_label = l == 0 ? i++ : static_cast<std::size_t>(-1);
      li.w_hh = i++;
      li.b_ih = i++;
      li.b_hh = i++;
      layers.push_back(li);
    }
    head_w = i++;
    head_b = i++;
  }
};

template <typename T>
void check_params(const CircuitParams<T>& p, const CircuitConfig& cfg) {
  cfg.validate();
  const auto layout = circuit_layout(cfg);
  if (p.size() != layout.size()) throw std::invalid_argument("circuit parameters do not match the config");
  for (std::size_t i = 0; i < layout.size(); ++i)
    if (p.tensors[i].rows() != layout[i].second[0] || p.tensors[i].cols() != layout[i].second[1])
      throw std::invalid_argument("circuit parameter " + layout[i].first + " has the wrong shape");
}

void check_episode(const Episode& e, const CircuitConfig& cfg, bool labels) {
  if (e.length() == 0) throw DataError("circuit: empty episode");
  if (e.dim != cfg.input_dim)
    throw DataError("circuit: observation dimension " + std::to_string(e.dim) + " does not match input_dim " +
                    std::to_string(cfg.input_dim));
  if (e.data.size() != e.length() * e.dim) throw DataError("circuit: observation count does not match labels");
  if (!labels) return;
  if (auto bad = validate_episode(e)) throw DataError("circuit: invalid episode: " + bad->what);
  if (static_cast<std::size_t>(num_classes(e.labels)) > cfg.max_classes)
    throw DataError("circuit: episode uses more classes than max_classes");
}


// h <- GRU update from the input and hidden projections, vectorised with Eigen arrays.
template <typename T>
void gru_update(T* gi, const T* gh, T* h, std::size_t B, std::size_t H) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  using Map = Eigen::Map<Arr>;
  using CMap = Eigen::Map<const Arr>;
  const auto n = static_cast<Eigen::Index>(H);
  for (std::size_t b = 0; b < B; ++b) {
    T* xi = gi + b * 3 * H;
    const T* xh = gh + b * 3 * H;
    Map rz(xi, 2 * n);
    rz = (T(1) + (-(rz + CMap(xh, 2 * n))).exp()).inverse();
    Map cand(xi + 2 * H, n);
    cand = (cand + Map(xi, n) * CMap(xh + 2 * H, n)).tanh();
    Map hb(h + b * H, n);
    hb = cand + Map(xi + H, n) * (hb - cand);
  }
}

// Tape-free forward pass over a batch of rows.
template <typename T>
class Runner {
 public:
  Runner(const CircuitParams<T>& p, const CircuitConfig& cfg, std::size_t batch)
      : p_(p), cfg_(cfg), idx_(cfg), B_(batch), H_(cfg.hidden), C_(cfg.max_classes) {
    h_.assign(cfg.layers, std::vector<T>(B_ * H_, T(0)));
    gi_.resize(B_ * 3 * H_);
    gh_.resize(B_ * 3 * H_);
    x_.resize(B_ * cfg.input_dim);
    logits_.resize(B_ * C_);
  }

  std::vector<std::vector<T>>& hidden() { return h_; }
  std::vector<T>& input() { return x_; }
  const T* logits(std::size_t b) const { return logits_.data() + b * C_; }

  // x_ must hold the (unscaled) observations; prev[b] is 0 or a label.
  void step(std::span<const int> prev) {
    for (T& v : x_) v = static_cast<T>(cfg_.encode(static_cast<double>(v)));
    const std::size_t G = 3 * H_;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const LayerIdx& li = idx_.layers[l];
      const T* in = l == 0 ? x_.data() : h_[l - 1].data();
      const std::size_t in_cols = l == 0 ? cfg_.input_dim : H_;
      kernels::gemm<T>(Trans::No, Trans::Yes, B_, G, in_cols, T(1), in, in_cols, p_.tensors[li.w_ih].data(), in_cols,
                       T(0), gi_.data(), G);
      if (l == 0) {
        const T* table = p_.tensors[li.w_label].data();
        for (std::size_t b = 0; b < B_; ++b)
          if (prev[b] > 0) {
            const T* row = table + static_cast<std::size_t>(prev[b] - 1) * G;
            T* dst = gi_.data() + b * G;
            for (std::size_t j = 0; j < G; ++j) dst[j] += row[j];
          }
      }
      kernels::add_bias_rows<T>(B_, G, gi_.data(), p_.tensors[li.b_ih].data(), gi_.data());
      T* h = h_[l].data();
      kernels::gemm<T>(Trans::No, Trans::Yes, B_, G, H_, T(1), h, H_, p_.tensors[li.w_hh].data(), H_, T(0),
                       gh_.data(), G);
      kernels::add_bias_rows<T>(B_, G, gh_.data(), p_.tensors[li.b_hh].data(), gh_.data());
      gru_update(gi_.data(), gh_.data(), h, B_, H_);
    }
    kernels::gemm<T>(Trans::No, Trans::Yes, B_, C_, H_, T(1), h_.back().data(), H_, p_.tensors[idx_.head_w].data(),
                     H_, T(0), logits_.data(), C_);
    kernels::add_bias_rows<T>(B_, C_, logits_.data(), p_.tensors[idx_.head_b].data(), logits_.data());
  }

 private:
  const CircuitParams<T>& p_;
  const CircuitConfig& cfg_;
  Layout idx_;
  std::size_t B_, H_, C_;
  std::vector<std::vector<T>> h_;
  std::vector<T> gi_, gh_, x_, logits_;
};

// log softmax over labels 1..valid evaluated at `label`.
template <typename T>
double masked_log_prob(const T* logits, int valid, int label) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < valid; ++k) mx = std::max(mx, static_cast<double>(logits[k]));
  double z = 0.0;
  for (int k = 0; k < valid; ++k) z += std::exp(static_cast<double>(logits[k]) - mx);
  return static_cast<double>(logits[label - 1]) - mx - std::log(z);
}

constexpr std::size_t kChunk = 256;

}  // namespace

template <typename T>
CircuitState<T> CircuitState<T>::initial(const CircuitConfig& cfg) {
  CircuitState s;
  s.h.assign(cfg.layers, std::vector<T>(cfg.hidden, T(0)));
  return s;
}

template <typename T>
std::vector<T> circuit_step(const CircuitParams<T>& params, const CircuitConfig& cfg, std::span<const double> x,
                            CircuitState<T>& state) {
  check_params(params, cfg);
  if (x.size() != cfg.input_dim)
    throw DataError("circuit_step: observation has dimension " + std::to_string(x.size()) + ", expected " +
                    std::to_string(cfg.input_dim));
  if (state.last_label < 0 || state.last_label > state.max_label ||
      static_cast<std::size_t>(state.last_label) > cfg.max_classes)
    throw std::invalid_argument("circuit_step: previous label out of range");
  if (state.h.size() != cfg.layers) throw std::invalid_argument("circuit_step: state does not match config");
  Runner<T> run(params, cfg, 1);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    if (state.h[l].size() != cfg.hidden) throw std::invalid_argument("circuit_step: state does not match config");
    run.hidden()[l] = state.h[l];
  }
  for (std::size_t d = 0; d < x.size(); ++d) run.input()[d] = static_cast<T>(x[d]);
  const int prev = state.last_label;
  run.step(std::span<const int>(&prev, 1));
  for (std::size_t l = 0; l < cfg.layers; ++l) state.h[l] = run.hidden()[l];
  return std::vector<T>(run.logits(0), run.logits(0) + cfg.max_classes);
}

template <typename T>
void circuit_observe(CircuitState<T>& state, int label, const CircuitConfig& cfg) {
  if (label < 0 || label > state.max_label + 1 || static_cast<std::size_t>(label) > cfg.max_classes)
    throw std::invalid_argument("circuit_observe: label out of range");
  state.last_label = label;
  state.max_label = std::max(state.max_label, label);
}

template <typename T>
std::vector<T> circuit_mask(int max_label, std::size_t max_classes) {
  std::vector<T> m(max_classes, -std::numeric_limits<T>::infinity());
  const std::size_t valid = std::min<std::size_t>(static_cast<std::size_t>(max_label) + 1, max_classes);
  std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(valid), T(0));
  return m;
}

template <typename T>
ad::Var<T> circuit_loss(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& leaves, const CircuitConfig& cfg,
                        std::span<const Episode> episodes) {
  cfg.validate();
  const Layout idx(cfg);
  if (leaves.size() != circuit_layout(cfg).size()) throw std::invalid_argument("circuit_loss: wrong leaf count");
  if (episodes.empty()) throw std::invalid_argument("circuit_loss: empty batch");
  const std::size_t B = episodes.size(), T_len = episodes[0].length(), D = cfg.input_dim, H = cfg.hidden,
                    C = cfg.max_classes;
  for (const auto& e : episodes) {
    check_episode(e, cfg, true);
    if (e.length() != T_len) throw std::invalid_argument("circuit_loss: episodes in a batch must share one length");
  }

  std::vector<ad::Var<T>> h;
  for (std::size_t l = 0; l < cfg.layers; ++l) h.push_back(tape.constant(Tensor<T>(B, H)));
  std::vector<int> prev(B, -1), target(B), max_label(B, 0);
  ad::Var<T> total{};
  for (std::size_t t = 0; t < T_len; ++t) {
    Tensor<T> X(B, D);
    Tensor<T> mask(B, C);
    for (std::size_t b = 0; b < B; ++b) {
      const auto x = episodes[b].x(t);
      for (std::size_t d = 0; d < D; ++d) X(b, d) = static_cast<T>(cfg.encode(x[d]));
      const auto m = circuit_mask<T>(max_label[b], C);
      std::copy(m.begin(), m.end(), mask.data() + b * C);
      target[b] = episodes[b].labels[t] - 1;
    }
    ad::Var<T> in = tape.constant(std::move(X));
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const LayerIdx& li = idx.layers[l];
      ad::Var<T> gi = ad::matmul(in, leaves[li.w_ih], true);
      if (l == 0) gi = ad::add(gi, ad::row_select(leaves[li.w_label], std::span<const int>(prev)));
      gi = ad::add_bias(gi, leaves[li.b_ih]);
      ad::Var<T> gh = ad::add_bias(ad::matmul(h[l], leaves[li.w_hh], true), leaves[li.b_hh]);
      h[l] = ad::gru_cell(gi, gh, h[l]);
      in = h[l];
    }
    ad::Var<T> logits = ad::add_bias(ad::matmul(in, leaves[idx.head_w], true), leaves[idx.head_b]);
    ad::Var<T> step_loss = ad::masked_softmax_nll(logits, mask, std::span<const int>(target));
    total = t == 0 ? step_loss : ad::add(total, step_loss);
    for (std::size_t b = 0; b < B; ++b) {
      prev[b] = target[b];
      max_label[b] = std::max(max_label[b], target[b] + 1);
    }
  }
  return ad::scale(total, T(1) / static_cast<T>(B * T_len));
}

template <typename T>
T circuit_nll(const CircuitParams<T>& params, const CircuitConfig& cfg, const Episode& e,
              std::vector<Tensor<T>>* grads) {
  check_params(params, cfg);
  ad::Tape<T> tape;
  std::vector<ad::Var<T>> leaves;
  for (const auto& t : params.tensors) leaves.push_back(tape.leaf(t, grads != nullptr));
  ad::Var<T> loss = circuit_loss(tape, leaves, cfg, std::span<const Episode>(&e, 1));
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (const auto& v : leaves) grads->push_back(v.grad());
  }
  return loss.value().item();
}

template <typename T>
std::vector<std::vector<double>> circuit_log_probs(const CircuitParams<T>& params, const CircuitConfig& cfg,
                                                   std::span<const Episode> episodes) {
  check_params(params, cfg);
  for (const auto& e : episodes) check_episode(e, cfg, true);
  std::vector<std::vector<double>> out(episodes.size());
  const std::size_t D = cfg.input_dim;
  for (std::size_t start = 0; start < episodes.size(); start += kChunk) {
    const std::size_t B = std::min(kChunk, episodes.size() - start);
    auto batch = episodes.subspan(start, B);
    std::size_t T_max = 0;
    for (const auto& e : batch) T_max = std::max(T_max, e.length());
    Runner<T> run(params, cfg, B);
    std::vector<int> prev(B, 0), max_label(B, 0);
    for (std::size_t b = 0; b < B; ++b) out[start + b].reserve(batch[b].length());
    for (std::size_t t = 0; t < T_max; ++t) {
      auto& X = run.input();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d) X[b * D + d] = t < batch[b].length() ? static_cast<T>(batch[b].x(t)[d]) : T(0);
      run.step(prev);
      for (std::size_t b = 0; b < B; ++b) {
        if (t >= batch[b].length()) continue;
        const int z = batch[b].labels[t];
        out[start + b].push_back(masked_log_prob(run.logits(b), max_label[b] + 1, z));
        prev[b] = z;
        max_label[b] = std::max(max_label[b], z);
      }
    }
  }
  return out;
}

template <typename T>
std::vector<std::vector<int>> circuit_map_batch(const CircuitParams<T>& params, const CircuitConfig& cfg,
                                                std::span<const Episode> episodes) {
  check_params(params, cfg);
  for (const auto& e : episodes) check_episode(e, cfg, false);
  std::vector<std::vector<int>> out(episodes.size());
  const std::size_t D = cfg.input_dim;
  const int C = static_cast<int>(cfg.max_classes);
  for (std::size_t start = 0; start < episodes.size(); start += kChunk) {
    const std::size_t B = std::min(kChunk, episodes.size() - start);
    auto batch = episodes.subspan(start, B);
    std::size_t T_max = 0;
    for (const auto& e : batch) T_max = std::max(T_max, e.length());
    Runner<T> run(params, cfg, B);
    std::vector<int> prev(B, 0), max_label(B, 0);
    for (std::size_t t = 0; t < T_max; ++t) {
      auto& X = run.input();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < D; ++d) X[b * D + d] = t < batch[b].length() ? static_cast<T>(batch[b].x(t)[d]) : T(0);
      run.step(prev);
      for (std::size_t b = 0; b < B; ++b) {
        if (t >= batch[b].length()) continue;
        const T* lg = run.logits(b);
        const int valid = std::min(max_label[b] + 1, C);
        int best = 0;
        for (int k = 1; k < valid; ++k)
          if (lg[k] > lg[best]) best = k;
        const int label = best + 1;
        out[start + b].push_back(label);
        max_label[b] = std::max(max_label[b], label);
        prev[b] = cfg.feedback == Feedback::OwnArgmax ? label : 0;
      }
    }
  }
  return out;
}

template <typename T>
std::vector<int> circuit_map(const CircuitParams<T>& params, const CircuitConfig& cfg, const Episode& observations) {
  return circuit_map_batch(params, cfg, std::span<const Episode>(&observations, 1)).front();
}

#define DPNC_INSTANTIATE(T)                                                                                        \
  template struct CircuitParams<T>;                                                                                \
  template struct CircuitState<T>;                                                                                 \
  template CircuitParams<T> circuit_init<T>(const CircuitConfig&, RngStream&);                                     \
  template CircuitParams<T> circuit_zeros<T>(const CircuitConfig&);                                                \
  template std::vector<T> circuit_step<T>(const CircuitParams<T>&, const CircuitConfig&, std::span<const double>, \
                                          CircuitState<T>&);                                                       \
  template void circuit_observe<T>(CircuitState<T>&, int, const CircuitConfig&);                                   \
  template std::vector<T> circuit_mask<T>(int, std::size_t);                                                       \
  template ad::Var<T> circuit_loss<T>(ad::Tape<T>&, const std::vector<ad::Var<T>>&, const CircuitConfig&,          \
                                      std::span<const Episode>);                                                   \
  template T circuit_nll<T>(const CircuitParams<T>&, const CircuitConfig&, const Episode&,                         \
                            std::vector<Tensor<T>>*);                                                              \
  template std::vector<std::vector<double>> circuit_log_probs<T>(const CircuitParams<T>&, const CircuitConfig&,    \
                                                                 std::span<const Episode>);                        \
  template std::vector<std::vector<int>> circuit_map_batch<T>(const CircuitParams<T>&, const CircuitConfig&,       \
                                                              std::span<const Episode>);                           \
  template std::vector<int> circuit_map<T>(const CircuitParams<T>&, const CircuitConfig&, const Episode&);

DPNC_INSTANTIATE(float)
DPNC_INSTANTIATE(double)

}  // namespace dpnc
