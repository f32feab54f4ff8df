#pragma once

// Central finite-difference check of every SC-Net parameter gradient.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "zoomprop/scnet.hpp"

namespace gradcheck {

struct Result {
  double max_rel_error = 0.0;
  long checked = 0;  // parameters with |grad| above the floor
  long total = 0;
};

struct Instance {
  zoomprop::ScNetModel model;
  std::vector<float> input;
  zoomprop::ScNetLabels labels;
  double lambda = 1.0;
};

// Random model, input and labels. Delta targets keep every residual at least
// 0.1 away from the smooth-L1 kink at |x| = 1.
inline Instance random_instance(std::uint64_t seed, int input_dim, int hidden, int k) {
  std::mt19937_64 rng(seed);
  Instance inst{zoomprop::ScNetModel::initialize(input_dim, hidden, k, seed), {}, zoomprop::ScNetLabels(k), 1.0};
  std::normal_distribution<double> g(0, 0.5);
  for (auto* layer : inst.model.layers()) {
    for (auto& b : layer->bias) b = g(rng) * 0.2;
  }
  std::uniform_real_distribution<float> u(-1.5f, 2.5f);
  inst.input.resize(input_dim);
  for (auto& v : inst.input) v = u(rng);
  std::uniform_int_distribution<int> coin(0, 1), pick(0, k - 1);
  std::uniform_real_distribution<double> lam(0.5, 3.0);
  inst.lambda = lam(rng);
  inst.labels.zoom_label = coin(rng);
  const int p = pick(rng);
  inst.labels.conf_labels[p] = 1;
  inst.labels.delta_weights[p] = 1;
  inst.labels.pattern = zoomprop::PatternIndex(p);
  const auto out = zoomprop::forward(inst.model, inst.input);
  std::uniform_real_distribution<double> small(-0.85, 0.85), large(1.15, 2.5);
  double r[4];
  for (double& x : r) x = coin(rng) ? small(rng) : (coin(rng) ? 1 : -1) * large(rng);
  const auto pred = out.deltas[p].as_array();
  // target = pred - residual
  inst.labels.delta_targets[p] = {pred[0] - r[0], pred[1] - r[1], pred[2] - r[2], pred[3] - r[3]};
  return inst;
}

inline double loss_of(const zoomprop::ScNetModel& m, const Instance& inst) {
  return zoomprop::loss(zoomprop::forward(m, inst.input), inst.labels, inst.lambda).total;
}

inline Result check(const Instance& inst, double eps = 1e-4, double floor = 1e-6) {
  using namespace zoomprop;
  ForwardCache cache;
  ScNetOutput out;
  forward(inst.model, inst.input, cache, out);
  const LossValue lv = loss(out, inst.labels, inst.lambda);
  ModelGradient grad(inst.model);
  backward(inst.model, cache, lv.grad, grad);

  Result res;
  ScNetModel probe = inst.model;
  auto probe_layers = probe.layers();
  auto grad_layers = grad.layers();
  for (std::size_t l = 0; l < probe_layers.size(); ++l) {
    auto visit = [&](std::vector<double>& params, const std::vector<double>& analytic) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double up = loss_of(probe, inst);
        params[i] = saved - eps;
        const double down = loss_of(probe, inst);
        params[i] = saved;
        const double numeric = (up - down) / (2 * eps);
        ++res.total;
        if (std::abs(analytic[i]) <= floor) continue;
        ++res.checked;
        const double rel = std::abs(analytic[i] - numeric) / std::max(std::abs(analytic[i]), std::abs(numeric));
        res.max_rel_error = std::max(res.max_rel_error, rel);
      }
    };
    visit(probe_layers[l]->weights, grad_layers[l]->weights);
    visit(probe_layers[l]->bias, grad_layers[l]->bias);
  }
  return res;
}

}  // namespace gradcheck
