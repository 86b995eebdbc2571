#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "convonet/model.hpp"

namespace convonet {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t patience = 2;  // >= max_epochs effectively disables early stop
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  OptimizerKind optimizer = OptimizerKind::adam;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
};

inline constexpr double kProbClamp = 1e-7;

namespace detail {
inline double clamp_prob(double p) {
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}
}  // namespace detail

// Mean binary cross-entropy over the batch plus d(loss)/d(logit) per
// example. Probabilities are clamped before the log only; the gradient is
// the exact (sigmoid - y) / batch of the unclamped loss.
template <typename T>
std::pair<double, std::vector<TensorT<T>>> bce_loss(
    const std::vector<TensorT<T>>& probs, const std::vector<std::size_t>& labels) {
  if (probs.empty()) throw std::invalid_argument("bce_loss: empty batch");
  if (probs.size() != labels.size())
    throw std::invalid_argument("bce_loss: probs/labels length mismatch");
  const double batch = static_cast<double>(probs.size());
  double loss = 0.0;
  std::vector<TensorT<T>> grads;
  grads.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i].size() != 1)
      throw std::invalid_argument("bce_loss: expects one sigmoid output");
    if (labels[i] > 1)
      throw std::invalid_argument("bce_loss: labels must be 0 or 1");
    const double p = detail::clamp_prob(static_cast<double>(probs[i][0]));
    const double y = static_cast<double>(labels[i]);
    loss += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    TensorT<T> g({1}, T(0));
    g[0] = static_cast<T>((static_cast<double>(probs[i][0]) - y) / batch);
    grads.push_back(std::move(g));
  }
  return {loss / batch, std::move(grads)};
}

// Mean categorical cross-entropy; gradient rows are (p - onehot) / batch.
template <typename T>
std::pair<double, std::vector<TensorT<T>>> cce_loss(
    const std::vector<TensorT<T>>& probs, const std::vector<std::size_t>& labels) {
  if (probs.empty()) throw std::invalid_argument("cce_loss: empty batch");
  if (probs.size() != labels.size())
    throw std::invalid_argument("cce_loss: probs/labels length mismatch");
  const double batch = static_cast<double>(probs.size());
  double loss = 0.0;
  std::vector<TensorT<T>> grads;
  grads.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& row = probs[i];
    double sum = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j)
      sum += static_cast<double>(row[j]);
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::invalid_argument("cce_loss: probabilities must sum to 1");
    if (labels[i] >= row.size())
      throw std::invalid_argument("cce_loss: label " +
                                  std::to_string(labels[i]) +
                                  " >= class count " +
                                  std::to_string(row.size()));
    loss += -std::log(detail::clamp_prob(
        static_cast<double>(row[labels[i]])));
    TensorT<T> g = row;
    for (std::size_t j = 0; j < g.size(); ++j)
      g[j] = static_cast<T>(static_cast<double>(row[j]) / batch);
    g[labels[i]] -= static_cast<T>(1.0 / batch);
    grads.push_back(std::move(g));
  }
  return {loss / batch, std::move(grads)};
}

// Per-example loss and logit gradient routed by task.
template <typename T>
std::pair<double, std::vector<TensorT<T>>> classification_loss(
    Task task, const std::vector<TensorT<T>>& probs,
    const std::vector<std::size_t>& labels) {
  return task == Task::binary ? bce_loss(probs, labels)
                              : cce_loss(probs, labels);
}

template <typename T>
struct AdamState {
  std::vector<TensorT<T>> first;   // momentum accumulators
  std::vector<TensorT<T>> second;  // squared-gradient accumulators
  std::size_t t = 0;
};

template <typename T>
AdamState<T> adam_init(const std::vector<TensorT<T>*>& params) {
  AdamState<T> st;
  for (const auto* p : params) {
    st.first.emplace_back(p->shape(), T(0));
    st.second.emplace_back(p->shape(), T(0));
  }
  return st;
}

template <typename T>
void adam_step(const std::vector<TensorT<T>*>& params,
               const std::vector<TensorT<T>>& grads, AdamState<T>& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8) {
  if (params.size() != grads.size() || params.size() != state.first.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    TensorT<T>& p = *params[i];
    const TensorT<T>& g = grads[i];
    if (!p.same_shape(g))
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    TensorT<T>& m = state.first[i];
    TensorT<T>& v = state.second[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = beta1 * static_cast<double>(m[k]) + (1.0 - beta1) * gk;
      const double vk =
          beta2 * static_cast<double>(v[k]) + (1.0 - beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = mk / bc1;
      const double vhat = vk / bc2;
      p[k] = static_cast<T>(static_cast<double>(p[k]) -
                            lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
}

template <typename T>
struct RmsPropState {
  std::vector<TensorT<T>> second;
};

template <typename T>
RmsPropState<T> rmsprop_init(const std::vector<TensorT<T>*>& params) {
  RmsPropState<T> st;
  for (const auto* p : params) st.second.emplace_back(p->shape(), T(0));
  return st;
}

template <typename T>
void rmsprop_step(const std::vector<TensorT<T>*>& params,
                  const std::vector<TensorT<T>>& grads, RmsPropState<T>& state,
                  double lr, double rho = 0.9, double eps = 1e-8) {
  if (params.size() != grads.size() || params.size() != state.second.size())
    throw std::invalid_argument(
        "rmsprop_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    TensorT<T>& p = *params[i];
    const TensorT<T>& g = grads[i];
    if (!p.same_shape(g))
      throw std::invalid_argument("rmsprop_step: gradient shape mismatch");
    TensorT<T>& v = state.second[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double vk = rho * static_cast<double>(v[k]) + (1.0 - rho) * gk * gk;
      v[k] = static_cast<T>(vk);
      p[k] = static_cast<T>(static_cast<double>(p[k]) -
                            lr * gk / (std::sqrt(vk) + eps));
    }
  }
}

// Argmax with lowest-index tie break; single sigmoid output thresholds at
// 0.5 (>= 0.5 predicts the positive class).
template <typename T>
std::size_t predicted_class(const TensorT<T>& probs) {
  if (probs.size() == 1) return probs[0] >= T(0.5) ? 1 : 0;
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

namespace detail {

template <typename T>
void accumulate(std::vector<TensorT<T>>& into,
                const std::vector<TensorT<T>>& grads) {
  if (into.empty()) {
    into = grads;
    return;
  }
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t k = 0; k < grads[i].size(); ++k)
      into[i][k] += grads[i][k];
}

template <typename T>
std::pair<double, double> eval_pass(const Model<T>& model,
                                    const std::vector<ParagraphTensorT<T>>& xs,
                                    const std::vector<std::size_t>& ys) {
  std::vector<TensorT<T>> probs;
  probs.reserve(xs.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    probs.push_back(forward(model, xs[i], Mode::eval));
    if (predicted_class(probs.back()) == ys[i]) ++correct;
  }
  auto [loss, grads] = classification_loss(model.config.task, probs, ys);
  (void)grads;
  return {loss, static_cast<double>(correct) / static_cast<double>(xs.size())};
}

}  // namespace detail

// Mini-batch loop: seeded shuffles, validation carved from the training
// half, early stopping on validation loss, best-epoch weights restored.
// Single-threaded throughout so identical seeds replay identical runs.
template <typename T>
TrainReport train(Model<T>& model, const DatasetSplit& data,
                  const PipelineContext& ctx, const TrainConfig& cfg) {
  if (cfg.batch_size == 0)
    throw InputError("train: batch size must be >= 1");
  if (cfg.validation_fraction <= 0.0 || cfg.validation_fraction >= 1.0)
    throw InputError("train: validation fraction must lie in (0, 1)");
  if (data.train.size() < 2)
    throw InputError("train: need at least 2 training examples");
  {
    std::vector<bool> seen(model.config.num_classes, false);
    for (const auto& ex : data.train) {
      if (ex.label >= model.config.num_classes)
        throw InputError("train: label " + std::to_string(ex.label) +
                         " out of range for " +
                         std::to_string(model.config.num_classes) +
                         " classes");
      seen[ex.label] = true;
    }
    for (std::size_t c = 0; c < seen.size(); ++c)
      if (!seen[c])
        throw InputError("train: class " + std::to_string(c) + " (\"" +
                         data.class_names[c] +
                         "\") has no training examples");
  }

  std::vector<ParagraphTensorT<T>> tensors;
  std::vector<std::size_t> labels;
  tensors.reserve(data.train.size());
  for (const auto& ex : data.train) {
    tensors.push_back(build_paragraph<T>(ex.text, *ctx.embeddings, ctx.m,
                                         ctx.n, ctx.single_sequence));
    labels.push_back(ex.label);
  }

  std::mt19937 rng(static_cast<std::mt19937::result_type>(cfg.seed));
  std::vector<std::size_t> order(tensors.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::size_t val_count = static_cast<std::size_t>(
      cfg.validation_fraction * static_cast<double>(tensors.size()));
  val_count = std::max<std::size_t>(1, val_count);
  val_count = std::min(val_count, tensors.size() - 1);

  std::vector<ParagraphTensorT<T>> val_x, train_x;
  std::vector<std::size_t> val_y, train_y;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < val_count) {
      val_x.push_back(tensors[order[i]]);
      val_y.push_back(labels[order[i]]);
    } else {
      train_x.push_back(tensors[order[i]]);
      train_y.push_back(labels[order[i]]);
    }
  }

  auto params = parameters(model);
  AdamState<T> adam = adam_init(params);
  RmsPropState<T> rms = rmsprop_init(params);

  TrainReport report;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<TensorT<T>> best_params;
  for (const auto* p : params) best_params.push_back(*p);
  report.best_epoch = 0;
  std::size_t wait = 0;

  std::vector<std::size_t> idx(train_x.size());
  std::iota(idx.begin(), idx.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < idx.size();
         start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, idx.size());
      std::vector<TensorT<T>> probs;
      std::vector<std::size_t> ys;
      std::vector<ForwardCache<T>> caches(end - start);
      for (std::size_t b = start; b < end; ++b) {
        probs.push_back(forward(model, train_x[idx[b]], Mode::train, &rng,
                                &caches[b - start]));
        ys.push_back(train_y[idx[b]]);
      }
      auto [batch_loss, logit_grads] =
          classification_loss(model.config.task, probs, ys);
      epoch_loss += batch_loss * static_cast<double>(end - start);

      std::vector<TensorT<T>> grads;
      for (std::size_t b = 0; b < caches.size(); ++b)
        detail::accumulate(grads, backward(model, caches[b], logit_grads[b]));

      if (cfg.optimizer == OptimizerKind::adam)
        adam_step(params, grads, adam, cfg.learning_rate, cfg.beta1,
                  cfg.beta2, cfg.epsilon);
      else
        rmsprop_step(params, grads, rms, cfg.learning_rate, 0.9, cfg.epsilon);
    }
    epoch_loss /= static_cast<double>(train_x.size());

    auto [val_loss, val_acc] = detail::eval_pass(model, val_x, val_y);
    report.epochs.push_back({epoch, epoch_loss, val_loss, val_acc});
    report.stopped_epoch = epoch;

    if (val_loss < best_val) {
      best_val = val_loss;
      report.best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i)
        best_params[i] = *params[i];
      wait = 0;
    } else {
      ++wait;
      if (wait >= std::max<std::size_t>(cfg.patience, 1)) break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = best_params[i];
  return report;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check (64-bit only).
// ---------------------------------------------------------------------------

struct GradCheckSample {
  std::size_t tensor = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::vector<GradCheckSample> samples;
};

namespace detail {

// Activation pattern: relu gate signs and pool argmax positions. Two
// evaluations with different patterns straddle a kink where the loss is
// not differentiable, so central differences are meaningless there.
struct ActivationSignature {
  std::vector<std::size_t> argmax;
  std::vector<char> gates;
  bool operator==(const ActivationSignature&) const = default;
};

inline ActivationSignature signature_of(const ForwardCache<double>& cache) {
  ActivationSignature sig;
  for (const auto& pool : cache.pools)
    sig.argmax.insert(sig.argmax.end(), pool.argmax.begin(),
                      pool.argmax.end());
  for (const auto& pre : cache.conv_pre)
    for (double v : pre.vec()) sig.gates.push_back(v > 0.0 ? 1 : 0);
  for (double v : cache.hidden_pre.vec())
    sig.gates.push_back(v > 0.0 ? 1 : 0);
  return sig;
}

}  // namespace detail

// Compares analytic backward against central differences on a parameter
// subsample spread over every tensor (everything when the model is small).
// Dropout is forced off so both sides see the same function.
inline GradCheckReport gradient_check(Model<double> model,
                                      const ParagraphTensorT<double>& input,
                                      std::size_t label,
                                      std::size_t sample_target = 200,
                                      std::uint64_t seed = 1,
                                      double step = 1e-5) {
  model.config.dropout_rate = 0.0;  // deterministic check
  auto params = parameters(model);

  auto loss_and_signature = [&](detail::ActivationSignature* sig) {
    ForwardCache<double> cache;
    TensorT<double> probs =
        forward(model, input, Mode::train, nullptr, &cache);
    auto [loss, grads] = classification_loss(model.config.task,
                                             std::vector<TensorT<double>>{probs},
                                             std::vector<std::size_t>{label});
    (void)grads;
    if (sig) *sig = detail::signature_of(cache);
    return loss;
  };

  // analytic gradient of the single-example loss
  ForwardCache<double> cache;
  TensorT<double> probs = forward(model, input, Mode::train, nullptr, &cache);
  auto [loss0, logit_grads] = classification_loss(
      model.config.task, std::vector<TensorT<double>>{probs},
      std::vector<std::size_t>{label});
  (void)loss0;
  std::vector<TensorT<double>> analytic = backward(model, cache, logit_grads[0]);

  // pick indices: everything if small, otherwise a per-tensor quota
  std::size_t total = 0;
  for (const auto* p : params) total += p->size();
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  if (total <= sample_target) {
    for (std::size_t t = 0; t < params.size(); ++t)
      for (std::size_t k = 0; k < params[t]->size(); ++k)
        picks.emplace_back(t, k);
  } else {
    for (std::size_t t = 0; t < params.size(); ++t) {
      const std::size_t sz = params[t]->size();
      std::size_t quota = std::max<std::size_t>(
          1, (sample_target * sz + total - 1) / total);
      quota = std::min(quota, sz);
      std::vector<std::size_t> all(sz);
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng);
      for (std::size_t i = 0; i < quota; ++i) picks.emplace_back(t, all[i]);
    }
  }

  GradCheckReport report;
  for (auto [t, k] : picks) {
    double& theta = (*params[t])[k];
    const double saved = theta;

    detail::ActivationSignature sig_plus, sig_minus;
    theta = saved + step;
    const double loss_plus = loss_and_signature(&sig_plus);
    theta = saved - step;
    const double loss_minus = loss_and_signature(&sig_minus);
    theta = saved;

    if (!(sig_plus == sig_minus)) {
      ++report.skipped_kinks;
      continue;
    }
    const double numeric = (loss_plus - loss_minus) / (2.0 * step);
    const double ga = analytic[t][k];
    const double rel = std::abs(ga - numeric) /
                       std::max({std::abs(ga), std::abs(numeric), 1e-8});
    report.samples.push_back({t, k, ga, numeric, rel});
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.checked;
  }
  return report;
}

}  // namespace convonet
