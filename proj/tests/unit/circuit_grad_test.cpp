#include <gtest/gtest.h>

#include "dpnc/circuit.hpp"
#include "support/gradcheck.hpp"

namespace {

using dpnc::CircuitConfig;
using dpnc::Episode;

TEST(CircuitGradient, FullLossMatchesFiniteDifferences) {
  CircuitConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden = 8;
  cfg.max_classes = 5;
  dpnc::RngStream rng(11);
  auto params = dpnc::circuit_init<double>(cfg, rng);
  // Non-zero biases so every path carries gradient.
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params.names[i].find(".b") != std::string::npos)
      for (double& v : params.tensors[i].values()) v = 0.3 * rng.normal();
  const Episode e({1, 2, 1, 3}, 2, {0.5, -1.0, 2.0, 0.3, 0.4, -0.9, -1.5, 1.1});

  testing_support::LossFn f = [&](dpnc::ad::Tape<double>& tape, const std::vector<dpnc::ad::Var<double>>& leaves) {
    return dpnc::circuit_loss(tape, leaves, cfg, std::span<const Episode>(&e, 1));
  };
  EXPECT_LT(testing_support::max_rel_error(f, params.tensors), 1e-4);
}

TEST(CircuitGradient, BatchedLossMatchesFiniteDifferences) {
  CircuitConfig cfg;
  cfg.input_dim = 1;
  cfg.hidden = 4;
  cfg.layers = 2;
  cfg.max_classes = 4;
  cfg.input_scale = 0.5;
  dpnc::RngStream rng(3);
  auto params = dpnc::circuit_init<double>(cfg, rng);
  const std::vector<Episode> es = {Episode({1, 1, 2}, 1, {0.1, 0.2, 3.0}), Episode({1, 2, 3}, 1, {-1.0, 1.0, 4.0})};
  testing_support::LossFn f = [&](dpnc::ad::Tape<double>& tape, const std::vector<dpnc::ad::Var<double>>& leaves) {
    return dpnc::circuit_loss(tape, leaves, cfg, std::span<const Episode>(es));
  };
  EXPECT_LT(testing_support::max_rel_error(f, params.tensors), 1e-4);
}

}  // namespace
