#pragma once

// Central-difference gradient checks in double precision, shared by the unit
// tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dynaware/autodiff.hpp"
#include "dynaware/model.hpp"
#include "dynaware/rng.hpp"

namespace dwtest {

using dynaware::Rng;
using TensorD = dynaware::ad::Tensor<double>;
using VarD = dynaware::ad::Var<double>;
using TapeD = dynaware::ad::Tape<double>;

inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline TensorD random_tensor(Rng& rng, dynaware::ad::Shape shape, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Entries with |x| in [0.1, 1], random sign: keeps ReLU kinks out of reach of eps.
inline TensorD kink_free_tensor(Rng& rng, dynaware::ad::Shape shape) {
  TensorD t(std::move(shape));
  for (auto& v : t.data) v = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
  return t;
}

// Reduces any output to a scalar with fixed random weights so every output
// entry contributes a distinct gradient.
inline VarD weighted_sum(TapeD& tape, VarD out, std::uint64_t seed) {
  Rng rng(seed);
  auto w = random_tensor(rng, out.shape(), 0.5, 1.5);
  return dynaware::ad::sum(dynaware::ad::mul(out, tape.constant(std::move(w))));
}

struct GradCase {
  std::string name;
  std::vector<TensorD> inputs;
  std::function<VarD(TapeD&, const std::vector<VarD>&)> loss;
};

struct GradReport {
  std::string name;
  double max_rel = 0.0;
  std::size_t checked = 0;
};

inline double eval_loss(const GradCase& c, const std::vector<TensorD>& inputs) {
  TapeD tape(false);
  std::vector<VarD> vars;
  for (const auto& t : inputs) vars.push_back(tape.variable(t));
  return c.loss(tape, vars).value()[0];
}

inline GradReport check_gradients(const GradCase& c, double eps = 1e-5) {
  TapeD tape(true);
  std::vector<VarD> vars;
  for (const auto& t : c.inputs) vars.push_back(tape.variable(t));
  tape.backward(c.loss(tape, vars));
  GradReport r{c.name};
  auto inputs = c.inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const TensorD* g = tape.grad(vars[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i][j];
      inputs[i][j] = x0 + eps;
      const double lp = eval_loss(c, inputs);
      inputs[i][j] = x0 - eps;
      const double lm = eval_loss(c, inputs);
      inputs[i][j] = x0;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double analytic = g ? (*g)[j] : 0.0;
      r.max_rel = std::max(r.max_rel, rel_error(analytic, numeric));
      ++r.checked;
    }
  }
  return r;
}

// One case per differentiable op, inputs drawn from `seed`.
inline std::vector<GradCase> op_cases(std::uint64_t seed) {
  namespace ad = dynaware::ad;
  Rng rng(seed);
  std::vector<GradCase> cs;
  const std::uint64_t ws = dynaware::derive_seed(seed, 99);
  auto unary = [&](std::string name, TensorD x, std::function<VarD(VarD)> f) {
    cs.push_back({std::move(name), {std::move(x)},
                  [f, ws](TapeD& t, const std::vector<VarD>& v) { return weighted_sum(t, f(v[0]), ws); }});
  };
  auto binary = [&](std::string name, TensorD a, TensorD b, std::function<VarD(VarD, VarD)> f) {
    cs.push_back({std::move(name), {std::move(a), std::move(b)},
                  [f, ws](TapeD& t, const std::vector<VarD>& v) { return weighted_sum(t, f(v[0], v[1]), ws); }});
  };

  binary("add", random_tensor(rng, {3, 4}), random_tensor(rng, {3, 4}), [](VarD a, VarD b) { return ad::add(a, b); });
  unary("add_scalar", random_tensor(rng, {5}), [](VarD a) { return ad::add_scalar(a, 0.75); });
  unary("scale", random_tensor(rng, {2, 3}), [](VarD a) { return ad::scale(a, -1.25); });
  binary("mul", random_tensor(rng, {4, 3}), random_tensor(rng, {4, 3}), [](VarD a, VarD b) { return ad::mul(a, b); });
  unary("relu", kink_free_tensor(rng, {3, 5}), [](VarD a) { return ad::relu(a); });
  unary("reshape", random_tensor(rng, {2, 6}), [](VarD a) { return ad::reshape(a, {3, 4}); });
  cs.push_back({"affine",
                {random_tensor(rng, {4, 5}), random_tensor(rng, {3, 5}), random_tensor(rng, {3})},
                [ws](TapeD& t, const std::vector<VarD>& v) { return weighted_sum(t, ad::affine(v[0], v[1], v[2]), ws); }});
  binary("matmul_nt", random_tensor(rng, {3, 4}), random_tensor(rng, {5, 4}), [](VarD a, VarD b) { return ad::matmul_nt(a, b); });
  struct ConvShape {
    std::size_t n, c, h, co, k, stride, pad;
  };
  for (auto s : {ConvShape{2, 2, 5, 3, 3, 1, 1}, ConvShape{2, 3, 6, 2, 3, 2, 1}, ConvShape{1, 2, 8, 2, 4, 4, 0}}) {
    cs.push_back({"conv2d k" + std::to_string(s.k) + " s" + std::to_string(s.stride) + " p" + std::to_string(s.pad),
                  {random_tensor(rng, {s.n, s.c, s.h, s.h}), random_tensor(rng, {s.co, s.c, s.k, s.k}), random_tensor(rng, {s.co})},
                  [ws, s](TapeD& t, const std::vector<VarD>& v) {
                    return weighted_sum(t, ad::conv2d(v[0], v[1], v[2], {s.stride, s.pad}), ws);
                  }});
  }
  unary("mean_pool", random_tensor(rng, {2, 3, 4, 4}), [](VarD a) { return ad::mean_pool(a); });
  cs.push_back({"film",
                {random_tensor(rng, {2, 3, 3, 3}), random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})},
                [ws](TapeD& t, const std::vector<VarD>& v) { return weighted_sum(t, ad::film(v[0], v[1], v[2]), ws); }});
  binary("concat", random_tensor(rng, {3, 2}), random_tensor(rng, {3, 4}), [](VarD a, VarD b) { return ad::concat(a, b); });
  unary("columns", random_tensor(rng, {3, 6}), [](VarD a) { return ad::columns(a, 1, 4); });
  unary("rows", random_tensor(rng, {4, 2, 3}), [](VarD a) {
    static const std::vector<std::size_t> idx{3, 0, 3, 1, 3};
    return ad::rows(a, idx);
  });
  binary("outer", random_tensor(rng, {3, 4}), random_tensor(rng, {3, 2}), [](VarD a, VarD b) { return ad::outer(a, b); });
  cs.push_back({"bilinear",
                {random_tensor(rng, {3, 4}), random_tensor(rng, {3, 2}), random_tensor(rng, {5, 8}), random_tensor(rng, {5})},
                [ws](TapeD& t, const std::vector<VarD>& v) {
                  static const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {2, 2}, {1, 0}, {0, 1}, {2, 0}};
                  return weighted_sum(t, ad::bilinear(v[0], v[1], v[2], v[3], pairs), ws);
                }});
  unary("sum", random_tensor(rng, {2, 5}), [](VarD a) { return ad::sum(a); });
  unary("mean", random_tensor(rng, {3, 3}), [](VarD a) { return ad::mean(a); });

  std::vector<int> classes;
  for (int i = 0; i < 4; ++i) classes.push_back(static_cast<int>(rng.below(6)));
  cs.push_back({"softmax_xent", {random_tensor(rng, {4, 6}, -3.0, 3.0)},
                [classes](TapeD&, const std::vector<VarD>& v) { return ad::softmax_xent(v[0], std::span<const int>(classes)); }});
  std::vector<double> labels;
  for (int i = 0; i < 6; ++i) labels.push_back(static_cast<double>(rng.below(2)));
  cs.push_back({"sigmoid_bce", {random_tensor(rng, {6, 1}, -4.0, 4.0)},
                [labels](TapeD&, const std::vector<VarD>& v) { return ad::sigmoid_bce(v[0], std::span<const double>(labels)); }});
  std::vector<double> target = random_tensor(rng, {5}).data;
  cs.push_back({"mse", {random_tensor(rng, {5, 1})},
                [target](TapeD&, const std::vector<VarD>& v) { return ad::mse(v[0], std::span<const double>(target)); }});
  std::vector<std::size_t> pos;
  for (int i = 0; i < 4; ++i) pos.push_back(rng.below(5));
  cs.push_back({"infonce", {random_tensor(rng, {4, 5}, -2.0, 2.0)},
                [pos](TapeD&, const std::vector<VarD>& v) { return ad::infonce(v[0], std::span<const std::size_t>(pos), 0.7); }});
  return cs;
}

// ---------------------------------------------------------------- model level

inline dynaware::ModelConfig micro_config(dynaware::LossMode loss) {
  dynaware::ModelConfig c;
  c.loss = loss;
  c.raster = 16;
  c.channels = {2, 3, 4, 4};
  c.embed_dim = 6;
  c.film_hidden = 5;
  c.proj_dim = 4;
  c.similarity.bins = 5;
  c.frames = 2;
  c.negatives = 3;
  return c;
}

// Two tasks, four samples each, random rasters and targets.
inline dynaware::ModelInputs<double> micro_inputs(const dynaware::ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t R = c.raster, tasks = 2, per = 4, n = tasks * per;
  dynaware::ModelInputs<double> in;
  in.scenes = random_tensor(rng, {tasks, 4, R, R}, 0.0, 1.0);
  in.rendered = random_tensor(rng, {n, 4, R, R}, 0.0, 1.0);
  in.actions = random_tensor(rng, {n, dynaware::action_dim(c.tier)}, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    in.task_of.push_back(i / per);
    in.labels.push_back(i % per < per / 2 ? 1.0 : 0.0);
  }
  for (std::size_t t = 0; t < tasks; ++t) {
    for (std::size_t a = 0; a < per; ++a) {
      for (std::size_t b = 0; b < per; ++b) {
        in.pairs.emplace_back(t * per + a, t * per + b);
        const double v = a == b ? 1.0 : rng.uniform();
        in.pair_v.push_back(v);
        in.pair_bins.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(c.similarity.bins))));
      }
    }
  }
  in.frames = random_tensor(rng, {n * c.frames, 4, R, R}, 0.0, 1.0);
  return in;
}

inline double model_total_loss(dynaware::Model<double>& model, const dynaware::ModelInputs<double>& in) {
  dynaware::Model<double>::Graph g(model, false);
  return model.loss(g, in).total.value()[0];
}

// Checks up to `per_param` random entries of every parameter.
inline GradReport check_model_gradients(const dynaware::ModelConfig& config, std::uint64_t seed, std::size_t per_param = 6,
                                        double eps = 1e-5) {
  dynaware::Model<double> model(config, seed);
  // Zero biases put blank-region ReLU inputs exactly on the kink, where central
  // differences are meaningless. Check at a generic point instead.
  Rng bias_rng(dynaware::derive_seed(seed, 3));
  for (auto& p : model.parameters()) {
    if (p.name.size() > 2 && p.name.compare(p.name.size() - 2, 2, ".b") == 0) {
      for (auto& v : p.value.data) v = (bias_rng.below(2) ? 1.0 : -1.0) * bias_rng.uniform(0.05, 0.2);
    }
  }
  const auto in = micro_inputs(config, dynaware::derive_seed(seed, 1));
  model.zero_grad();
  {
    dynaware::Model<double>::Graph g(model, true);
    g.tape().backward(model.loss(g, in).total);
  }
  GradReport r{"model " + dynaware::to_string(config.loss)};
  Rng pick(dynaware::derive_seed(seed, 2));
  for (auto& p : model.parameters()) {
    const std::size_t count = std::min(per_param, p.value.size());
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t j = count == p.value.size() ? k : pick.below(p.value.size());
      const double x0 = p.value[j];
      auto numeric = [&](double h) {
        p.value[j] = x0 + h;
        const double lp = model_total_loss(model, in);
        p.value[j] = x0 - h;
        const double lm = model_total_loss(model, in);
        p.value[j] = x0;
        return (lp - lm) / (2.0 * h);
      };
      // a hidden ReLU can sit within eps of its kink; retry with a smaller step
      double err = rel_error(p.grad[j], numeric(eps));
      if (err > 1e-4) err = std::min(err, rel_error(p.grad[j], numeric(eps / 10.0)));
      r.max_rel = std::max(r.max_rel, err);
      ++r.checked;
    }
  }
  return r;
}

inline std::vector<dynaware::ModelConfig> end_to_end_configs() {
  using namespace dynaware;
  std::vector<ModelConfig> cs;
  cs.push_back(micro_config(LossMode::kBaseline));
  cs.push_back(micro_config(LossMode::kHandcrafted));
  auto elem = micro_config(LossMode::kHandcrafted);
  elem.combiner = Combiner::kElementwise;
  elem.projection = Projection::kMlp2;
  cs.push_back(elem);
  auto cat = micro_config(LossMode::kHandcrafted);
  cat.combiner = Combiner::kConcat;
  cat.projection = Projection::kMlp3;
  cat.aux_target = AuxTarget::kMse;
  cs.push_back(cat);
  cs.push_back(micro_config(LossMode::kSelfSupervised));
  return cs;
}

}  // namespace dwtest
