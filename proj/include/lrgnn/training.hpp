#pragma once

#include "lrgnn/model.hpp"
#include "lrgnn/random.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lrgnn {

struct TrainConfig {
  std::size_t epochs = 200;    // T', the retraining budget
  std::size_t hpo_epochs = 20; // T, the per-trial budget
  std::size_t patience = 20;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t workers = 1;
  // A validation loss counts as an improvement when it drops by at least this.
  double min_improvement = 1e-12;

  // Throws ConfigError naming the violated rule.
  void validate() const;
  // Also requires the retraining budget to cover the per-trial budget.
  void validate_search() const;
  friend bool operator==(const TrainConfig &, const TrainConfig &) = default;
};

void to_json(nlohmann::json &j, const TrainConfig &c);
void from_json(const nlohmann::json &j, TrainConfig &c);

class Adam {
public:
  Adam() = default;
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ParameterStore &params, std::span<const Tensor> grads);
  std::size_t steps() const { return t_; }

  nlohmann::json to_json() const;
  static Adam from_json(const nlohmann::json &j);
  friend bool operator==(const Adam &, const Adam &) = default;

private:
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Loss and parameter gradients of one mini-batch. With more than one worker
// the batch is cut into contiguous shards, each differentiated on its own
// thread, and shard gradients are combined with weights n_k / n (n counts
// target rows), which reproduces the full-batch mean-loss gradient.
struct BatchGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;
};
BatchGradient batch_gradient(const Model &model, std::span<const Sample *const> batch,
                             std::size_t workers);

// Loss averaged over target rows, evaluated in chunks of `chunk` samples.
double dataset_loss(const Model &model, std::span<const Sample> data, std::size_t chunk);

struct TrainerState {
  std::size_t epoch = 0; // epochs completed
  double best_val = 0.0;
  std::size_t best_epoch = 0;
  bool has_best = false;
  std::size_t since_improvement = 0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<Tensor> best_weights;
  Adam optimizer;
  Rng rng;

  friend bool operator==(const TrainerState &, const TrainerState &) = default;
};

// A resumable snapshot: model weights, optimizer moments, shuffle generator,
// traces and the best weights so far.
struct Checkpoint {
  Model model;
  TrainConfig config;
  TrainerState state;

  nlohmann::json to_json() const;
  static Checkpoint from_json(const nlohmann::json &j);
  void save(const std::filesystem::path &path) const;
  static Checkpoint load(const std::filesystem::path &path);
};

struct TrainHooks {
  // Writes <dir>/checkpoint.json after every epoch and <dir>/best_model.json
  // whenever validation improves.
  std::optional<std::filesystem::path> checkpoint_dir;
  // Stop (without restoring best weights) once this many epochs are done;
  // simulates an interrupted run.
  std::optional<std::size_t> halt_after;
  // Replaces the measured validation loss; used to construct traces.
  std::function<double(std::size_t epoch, double measured)> validation_override;
};

struct TrainResult {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0; // 1-based
  double best_val = 0.0;
  std::size_t epochs_run = 0;
  bool stopped_early = false;
  bool halted = false;
};

// Minimises the mean squared error (or cross-entropy) with Adam for up to
// `config.epochs` epochs, stopping after `config.patience` consecutive epochs
// without improvement. Best-validation weights are restored on exit. Throws
// TrainingError on a non-finite loss, naming the epoch and batch.
TrainResult train(Model &model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainConfig &config, const TrainHooks &hooks = {});
// Continues a run from a checkpoint. The model is replaced by the checkpoint's.
TrainResult resume(Model &model, const Checkpoint &checkpoint, std::span<const Sample> train_set,
                   std::span<const Sample> val_set, const TrainHooks &hooks = {});

struct Metrics {
  std::size_t count = 0;
  std::optional<double> mse, mae, pearson;
  bool pearson_degenerate = false;
  std::optional<double> accuracy;
};

// Over all entries of equally shaped tensors.
Metrics regression_metrics(const Tensor &truth, const Tensor &predicted);
double accuracy(const Tensor &logits, std::span<const int> labels);

struct Evaluation {
  Metrics metrics;
  Tensor truth;     // regression targets, or labels as one column
  Tensor predicted; // regression outputs, or argmax class as one column
};
Evaluation evaluate(const Model &model, std::span<const Sample> data, std::size_t chunk = 64);

// "name value" lines with round-trip precision.
std::string format_metrics(const Metrics &m);
void write_metrics(const std::filesystem::path &path, const Metrics &m);
// CSV with header "true,predicted", one row per scalar target.
void write_parity(const std::filesystem::path &path, const Tensor &truth, const Tensor &predicted);
std::string format_double(double v);

} // namespace lrgnn
