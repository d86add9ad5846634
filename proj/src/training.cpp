#include "lrgnn/training.hpp"
#include "lrgnn/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace lrgnn {

using nlohmann::json;

void TrainConfig::validate_search() const {
  validate();
  if (epochs < hpo_epochs) {
    throw ConfigError("retraining epochs (" + std::to_string(epochs) +
                      ") must be at least hpo_epochs (" + std::to_string(hpo_epochs) + ")");
  }
}

void TrainConfig::validate() const {
  if (epochs == 0 || hpo_epochs == 0 || patience == 0) {
    throw ConfigError("epochs, hpo_epochs and patience must be positive");
  }
  if (batch_size == 0) {
    throw ConfigError("batch_size must be positive");
  }
  if (workers == 0) {
    throw ConfigError("workers must be positive");
  }
  if (!std::isfinite(learning_rate) || learning_rate <= 0.0) {
    throw ConfigError("learning_rate must be finite and positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw ConfigError("Adam needs beta1, beta2 in [0, 1) and epsilon > 0");
  }
  if (!(min_improvement >= 0.0)) {
    throw ConfigError("min_improvement must be non-negative");
  }
}

void to_json(json &j, const TrainConfig &c) {
  j = json{{"epochs", c.epochs},
           {"hpo_epochs", c.hpo_epochs},
           {"patience", c.patience},
           {"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"epsilon", c.epsilon},
           {"workers", c.workers},
           {"min_improvement", c.min_improvement}};
}

void from_json(const json &j, TrainConfig &c) {
  if (!j.is_object()) {
    throw ConfigError("train config must be an object");
  }
  TrainConfig d;
  for (const auto &[k, v] : j.items()) {
    try {
      if (k == "epochs") {
        d.epochs = v.get<std::size_t>();
      } else if (k == "hpo_epochs") {
        d.hpo_epochs = v.get<std::size_t>();
      } else if (k == "patience") {
        d.patience = v.get<std::size_t>();
      } else if (k == "learning_rate") {
        d.learning_rate = v.get<double>();
      } else if (k == "batch_size") {
        d.batch_size = v.get<std::size_t>();
      } else if (k == "seed") {
        d.seed = v.get<std::uint64_t>();
      } else if (k == "beta1") {
        d.beta1 = v.get<double>();
      } else if (k == "beta2") {
        d.beta2 = v.get<double>();
      } else if (k == "epsilon") {
        d.epsilon = v.get<double>();
      } else if (k == "workers") {
        d.workers = v.get<std::size_t>();
      } else if (k == "min_improvement") {
        d.min_improvement = v.get<double>();
      } else {
        throw ConfigError("train config: unknown field '" + k + "'");
      }
    } catch (const json::exception &e) {
      throw ConfigError("train config field '" + k + "': " + e.what());
    }
  }
  c = d;
}

void Adam::step(ParameterStore &params, std::span<const Tensor> grads) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("Adam: gradient count does not match parameter count");
  }
  if (m_.empty()) {
    for (const Parameter &p : params.all()) {
      m_.emplace_back(p.value.shape(), 0.0);
      v_.emplace_back(p.value.shape(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor &w = params[i].value;
    const Tensor &g = grads[i];
    if (!g.same_shape(w)) {
      throw std::invalid_argument("Adam: gradient of " + params[i].name + " has shape " +
                                  g.shape_string() + ", expected " + w.shape_string());
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      m_[i][k] = b1_ * m_[i][k] + (1.0 - b1_) * g[k];
      v_[i][k] = b2_ * v_[i][k] + (1.0 - b2_) * g[k] * g[k];
      const double mhat = m_[i][k] / c1;
      const double vhat = v_[i][k] / c2;
      w[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

namespace {

json tensors_to_json(const std::vector<Tensor> &ts) {
  json out = json::array();
  for (const Tensor &t : ts) {
    out.push_back({{"shape", t.shape()}, {"values", t.values()}});
  }
  return out;
}

std::vector<Tensor> tensors_from_json(const json &j) {
  std::vector<Tensor> out;
  for (const json &t : j) {
    out.emplace_back(t.at("shape").get<std::vector<std::size_t>>(),
                     t.at("values").get<std::vector<double>>());
  }
  return out;
}

} // namespace

json Adam::to_json() const {
  return json{{"lr", lr_}, {"beta1", b1_}, {"beta2", b2_}, {"epsilon", eps_}, {"t", t_},
              {"m", tensors_to_json(m_)}, {"v", tensors_to_json(v_)}};
}

Adam Adam::from_json(const json &j) {
  Adam a(j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
         j.at("epsilon").get<double>());
  a.t_ = j.at("t").get<std::size_t>();
  a.m_ = tensors_from_json(j.at("m"));
  a.v_ = tensors_from_json(j.at("v"));
  return a;
}

namespace {

std::size_t sample_rows(const Sample &s, Task task) {
  return task == Task::NodeRegression ? s.graph.node_count : 1;
}

struct Shard {
  double loss = 0.0;
  std::vector<Tensor> grads;
  std::exception_ptr error;
};

void differentiate(const Model &model, std::span<const Sample *const> samples, Shard &out) {
  try {
    const ModelInput input = make_input(samples, model.config());
    Tape tape;
    Var loss = model.loss(tape, input);
    tape.backward(loss);
    out.loss = loss.value()[0];
    out.grads = tape.gradients(model.parameters().all());
  } catch (...) {
    out.error = std::current_exception();
  }
}

} // namespace

BatchGradient batch_gradient(const Model &model, std::span<const Sample *const> batch,
                             std::size_t workers) {
  if (batch.empty()) {
    throw std::invalid_argument("batch_gradient: empty batch");
  }
  const Task task = model.config().task;
  const std::size_t shards = std::clamp<std::size_t>(workers, 1, batch.size());
  std::vector<std::span<const Sample *const>> parts;
  std::vector<double> rows;
  double total_rows = 0.0;
  for (std::size_t k = 0; k < shards; ++k) {
    const std::size_t b = k * batch.size() / shards, e = (k + 1) * batch.size() / shards;
    parts.push_back(batch.subspan(b, e - b));
    double r = 0.0;
    for (const Sample *s : parts.back()) {
      r += static_cast<double>(sample_rows(*s, task));
    }
    rows.push_back(r);
    total_rows += r;
  }

  std::vector<Shard> results(shards);
  if (shards == 1) {
    differentiate(model, parts[0], results[0]);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t k = 0; k < shards; ++k) {
      threads.emplace_back(differentiate, std::cref(model), parts[k], std::ref(results[k]));
    }
    for (auto &t : threads) {
      t.join();
    }
  }
  for (const Shard &s : results) {
    if (s.error) {
      std::rethrow_exception(s.error);
    }
  }
  if (shards == 1) {
    return {results[0].loss, std::move(results[0].grads)};
  }
  BatchGradient out;
  for (const Parameter &p : model.parameters().all()) {
    out.grads.emplace_back(p.value.shape(), 0.0);
  }
  for (std::size_t k = 0; k < shards; ++k) {
    const double w = rows[k] / total_rows;
    out.loss += w * results[k].loss;
    for (std::size_t i = 0; i < out.grads.size(); ++i) {
      for (std::size_t c = 0; c < out.grads[i].size(); ++c) {
        out.grads[i][c] += w * results[k].grads[i][c];
      }
    }
  }
  return out;
}

double dataset_loss(const Model &model, std::span<const Sample> data, std::size_t chunk) {
  if (data.empty()) {
    throw std::invalid_argument("dataset_loss: empty dataset");
  }
  const Task task = model.config().task;
  double total = 0.0, rows = 0.0;
  for (std::size_t b = 0; b < data.size(); b += chunk) {
    const auto part = data.subspan(b, std::min(chunk, data.size() - b));
    const ModelInput input = make_input(part, model.config());
    Tape tape;
    const double l = model.loss(tape, input).value()[0];
    double r = 0.0;
    for (const Sample &s : part) {
      r += static_cast<double>(sample_rows(s, task));
    }
    total += l * r;
    rows += r;
  }
  return total / rows;
}

json Checkpoint::to_json() const {
  std::ostringstream rng;
  rng << state.rng;
  json s{{"epoch", state.epoch},
         {"best_val", state.best_val},
         {"best_epoch", state.best_epoch},
         {"has_best", state.has_best},
         {"since_improvement", state.since_improvement},
         {"train_loss", state.train_loss},
         {"val_loss", state.val_loss},
         {"best_weights", tensors_to_json(state.best_weights)},
         {"optimizer", state.optimizer.to_json()},
         {"rng", rng.str()}};
  return json{{"format", "lrgnn-checkpoint"},
              {"version", 1},
              {"model", model.to_json()},
              {"train_config", config},
              {"state", s}};
}

Checkpoint Checkpoint::from_json(const json &j) {
  try {
    if (j.value("format", std::string{}) != "lrgnn-checkpoint" || j.value("version", 0) != 1) {
      throw SchemaError("checkpoint", "not an lrgnn-checkpoint version 1 document");
    }
    Checkpoint c{Model::from_json(j.at("model")), j.at("train_config").get<TrainConfig>(), {}};
    const json &s = j.at("state");
    c.state.epoch = s.at("epoch").get<std::size_t>();
    c.state.best_val = s.at("best_val").get<double>();
    c.state.best_epoch = s.at("best_epoch").get<std::size_t>();
    c.state.has_best = s.at("has_best").get<bool>();
    c.state.since_improvement = s.at("since_improvement").get<std::size_t>();
    c.state.train_loss = s.at("train_loss").get<std::vector<double>>();
    c.state.val_loss = s.at("val_loss").get<std::vector<double>>();
    c.state.best_weights = tensors_from_json(s.at("best_weights"));
    c.state.optimizer = Adam::from_json(s.at("optimizer"));
    std::istringstream rng(s.at("rng").get<std::string>());
    rng >> c.state.rng;
    if (!rng) {
      throw SchemaError("checkpoint.state.rng", "unreadable generator state");
    }
    return c;
  } catch (const json::exception &e) {
    throw SchemaError("checkpoint", e.what());
  } catch (const ConfigError &e) {
    throw SchemaError("checkpoint.train_config", e.what());
  }
}

void Checkpoint::save(const std::filesystem::path &path) const {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    out << to_json().dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot read " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw SchemaError(path.string(), e.what());
  }
  return from_json(j);
}

namespace {

std::vector<Tensor> snapshot(const ParameterStore &params) {
  std::vector<Tensor> out;
  for (const Parameter &p : params.all()) {
    out.push_back(p.value);
  }
  return out;
}

void restore(ParameterStore &params, const std::vector<Tensor> &weights) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    params[i].value = weights[i];
  }
}

TrainResult run(Model &model, TrainerState state, std::span<const Sample> train_set,
                std::span<const Sample> val_set, const TrainConfig &config,
                const TrainHooks &hooks) {
  config.validate();
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("train: training and validation sets must be non-empty");
  }
  if (hooks.checkpoint_dir) {
    std::filesystem::create_directories(*hooks.checkpoint_dir);
  }
  const Task task = model.config().task;
  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::vector<const Sample *> batch;

  while (state.epoch < config.epochs) {
    const std::size_t epoch = state.epoch + 1;
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(order), state.rng);
    double loss_sum = 0.0, row_sum = 0.0;
    for (std::size_t b = 0, index = 0; b < order.size(); b += config.batch_size, ++index) {
      batch.clear();
      double rows = 0.0;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
        batch.push_back(&train_set[order[i]]);
        rows += static_cast<double>(sample_rows(train_set[order[i]], task));
      }
      BatchGradient g = batch_gradient(model, batch, config.workers);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(index));
      }
      state.optimizer.step(model.parameters(), g.grads);
      loss_sum += g.loss * rows;
      row_sum += rows;
    }
    double val = dataset_loss(model, val_set, config.batch_size);
    if (hooks.validation_override) {
      val = hooks.validation_override(epoch, val);
    }
    if (!std::isfinite(val)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    state.epoch = epoch;
    state.train_loss.push_back(loss_sum / row_sum);
    state.val_loss.push_back(val);
    const bool improved = !state.has_best || val <= state.best_val - config.min_improvement;
    if (improved) {
      state.has_best = true;
      state.best_val = val;
      state.best_epoch = epoch;
      state.best_weights = snapshot(model.parameters());
      state.since_improvement = 0;
    } else {
      ++state.since_improvement;
    }
    if (hooks.checkpoint_dir) {
      Checkpoint{model, config, state}.save(*hooks.checkpoint_dir / "checkpoint.json");
      if (improved) {
        model.save(*hooks.checkpoint_dir / "best_model.json");
      }
    }
    if (state.since_improvement >= config.patience) {
      result.stopped_early = true;
      break;
    }
    if (hooks.halt_after && epoch >= *hooks.halt_after) {
      result.halted = true;
      break;
    }
  }
  if (!result.halted && state.has_best) {
    restore(model.parameters(), state.best_weights);
  }
  result.train_loss = state.train_loss;
  result.val_loss = state.val_loss;
  result.best_epoch = state.best_epoch;
  result.best_val = state.best_val;
  result.epochs_run = state.epoch;
  return result;
}

} // namespace

TrainResult train(Model &model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig &config, const TrainHooks &hooks) {
  TrainerState state;
  state.rng.seed(config.seed);
  state.optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon);
  return run(model, std::move(state), train_set, val_set, config, hooks);
}

TrainResult resume(Model &model, const Checkpoint &checkpoint, std::span<const Sample> train_set,
                   std::span<const Sample> val_set, const TrainHooks &hooks) {
  model = checkpoint.model;
  return run(model, checkpoint.state, train_set, val_set, checkpoint.config, hooks);
}

Metrics regression_metrics(const Tensor &truth, const Tensor &predicted) {
  if (!truth.same_shape(predicted)) {
    throw std::invalid_argument("regression_metrics: shapes " + truth.shape_string() + " and " +
                                predicted.shape_string() + " differ");
  }
  if (truth.empty()) {
    throw std::invalid_argument("regression_metrics: no values");
  }
  const std::size_t n = truth.size();
  const double dn = static_cast<double>(n);
  double se = 0.0, ae = 0.0, mt = 0.0, mp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = predicted[i] - truth[i];
    se += r * r;
    ae += std::abs(r);
    mt += truth[i];
    mp += predicted[i];
  }
  mt /= dn;
  mp /= dn;
  double stt = 0.0, spp = 0.0, stp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = truth[i] - mt, b = predicted[i] - mp;
    stt += a * a;
    spp += b * b;
    stp += a * b;
  }
  Metrics m;
  m.count = n;
  m.mse = se / dn;
  m.mae = ae / dn;
  if (stt == 0.0 || spp == 0.0) {
    m.pearson = 0.0;
    m.pearson_degenerate = true;
  } else {
    m.pearson = std::clamp(stp / std::sqrt(stt * spp), -1.0, 1.0);
  }
  return m;
}

namespace {

std::size_t argmax_row(const Tensor &t, std::size_t r) {
  const auto row = t.row(r);
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

} // namespace

double accuracy(const Tensor &logits, std::span<const int> labels) {
  if (logits.rows() != labels.size() || labels.empty()) {
    throw std::invalid_argument("accuracy: one non-empty label per logit row required");
  }
  std::size_t hits = 0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    hits += argmax_row(logits, r) == static_cast<std::size_t>(labels[r]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Evaluation evaluate(const Model &model, std::span<const Sample> data, std::size_t chunk) {
  if (data.empty()) {
    throw std::invalid_argument("evaluate: empty dataset");
  }
  const ModelConfig &cfg = model.config();
  std::vector<double> truth, pred;
  std::size_t cols = 0;
  std::vector<int> labels;
  Tensor logits;
  std::vector<double> logit_values;
  for (std::size_t b = 0; b < data.size(); b += chunk) {
    const auto part = data.subspan(b, std::min(chunk, data.size() - b));
    const ModelInput input = make_input(part, cfg);
    const Tensor out = model.predict(input);
    if (cfg.task == Task::GraphClassification) {
      const auto l = class_labels(input.graph_targets, cfg.num_classes);
      labels.insert(labels.end(), l.begin(), l.end());
      logit_values.insert(logit_values.end(), out.values().begin(), out.values().end());
      continue;
    }
    const Tensor &target =
        cfg.task == Task::NodeRegression ? input.node_targets.value() : input.graph_targets;
    if (!target.same_shape(out)) {
      throw std::invalid_argument("evaluate: targets " + target.shape_string() +
                                  " do not match predictions " + out.shape_string());
    }
    cols = out.cols();
    truth.insert(truth.end(), target.values().begin(), target.values().end());
    pred.insert(pred.end(), out.values().begin(), out.values().end());
  }
  Evaluation ev;
  if (cfg.task == Task::GraphClassification) {
    logits = Tensor({labels.size(), cfg.num_classes}, std::move(logit_values));
    ev.metrics.count = labels.size();
    ev.metrics.accuracy = accuracy(logits, labels);
    ev.truth = Tensor::matrix(labels.size(), 1);
    ev.predicted = Tensor::matrix(labels.size(), 1);
    for (std::size_t r = 0; r < labels.size(); ++r) {
      ev.truth(r, 0) = labels[r];
      ev.predicted(r, 0) = static_cast<double>(argmax_row(logits, r));
    }
    return ev;
  }
  const std::size_t rows = cols == 0 ? 0 : truth.size() / cols;
  ev.truth = Tensor({rows, cols}, std::move(truth));
  ev.predicted = Tensor({rows, cols}, std::move(pred));
  ev.metrics = regression_metrics(ev.truth, ev.predicted);
  return ev;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) {
    throw std::runtime_error("format_double: conversion failed");
  }
  return std::string(buf, end);
}

std::string format_metrics(const Metrics &m) {
  std::ostringstream out;
  out << "count " << m.count << '\n';
  if (m.mse) {
    out << "mse " << format_double(*m.mse) << '\n';
  }
  if (m.mae) {
    out << "mae " << format_double(*m.mae) << '\n';
  }
  if (m.pearson) {
    out << "pearson_r " << format_double(*m.pearson) << '\n';
    out << "pearson_degenerate " << (m.pearson_degenerate ? 1 : 0) << '\n';
  }
  if (m.accuracy) {
    out << "accuracy " << format_double(*m.accuracy) << '\n';
  }
  return out.str();
}

void write_metrics(const std::filesystem::path &path, const Metrics &m) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << format_metrics(m);
}

void write_parity(const std::filesystem::path &path, const Tensor &truth, const Tensor &predicted) {
  if (!truth.same_shape(predicted)) {
    throw std::invalid_argument("write_parity: shapes differ");
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << "true,predicted\n";
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out << format_double(truth[i]) << ',' << format_double(predicted[i]) << '\n';
  }
}

} // namespace lrgnn
