#pragma once

// Conditional random search. A space fixes the three branch flags and lists
// grids for depth, heads, width and edge width; sampling is uniform over the
// grid product with rejection of configurations whose width is not divisible
// by the head count.

#include "lrgnn/model.hpp"
#include "lrgnn/random.hpp"
#include "lrgnn/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lrgnn {

struct SearchSpace {
  bool has_pos = false;
  bool attention = false; // global_attn_engine
  bool encodings = false; // use_encodings
  std::vector<MpnnKind> kinds;
  std::vector<std::size_t> num_conv_layers;
  std::vector<std::size_t> heads;
  std::vector<std::size_t> hidden_dim;
  std::vector<std::size_t> edge_embed_dim;

  // Grids of the published search space for one branch.
  static SearchSpace standard(bool has_pos, bool attention, bool encodings);

  // Throws ConfigError on empty grids, inadmissible kinds, nonzero heads
  // with attention off, zero heads with attention on, or an empty feasible
  // set.
  void validate() const;
  // Empty when `c` lies in this space, else the first violated rule.
  std::string violation(const ModelConfig &c) const;
  std::size_t feasible_count() const;

  friend bool operator==(const SearchSpace &, const SearchSpace &) = default;
};

// Grids are written as lists or as {"range": [lo, hi]} (inclusive, step 1).
void to_json(nlohmann::json &j, const SearchSpace &s);
void from_json(const nlohmann::json &j, SearchSpace &s);

// Fields not searched (task, input widths, pooling, bases) come from `base`.
ModelConfig sample_config(const SearchSpace &space, const ModelConfig &base, Rng &rng);

struct TrialRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  ModelConfig config;
  bool failed = false;
  std::string failure;
  double val_loss = 0.0;
  Metrics test;
  std::size_t parameter_count = 0;
  std::string checkpoint;
};

nlohmann::json trial_to_json(const TrialRecord &t);
TrialRecord trial_from_json(const nlohmann::json &j);
// One record per line, ordered by trial index.
void write_trial_store(const std::filesystem::path &path, std::span<const TrialRecord> trials);
std::vector<TrialRecord> read_trial_store(const std::filesystem::path &path);

// Index into `trials` of the finished trial with the smallest validation
// loss; ties go to the smaller trial index. Throws TrainingError listing the
// failures when every trial failed.
std::size_t select_best(std::span<const TrialRecord> trials);

struct HpoSettings {
  std::size_t budget = 10;
  std::uint64_t seed = 0;
  std::size_t workers = 1; // concurrent trials
  TrainConfig train;       // hpo_epochs per trial; epochs and patience for the retrain
  std::optional<std::filesystem::path> out_dir;
};

struct HpoResult {
  std::vector<TrialRecord> trials;
  std::size_t best = 0;
  Model final_model;
  TrainResult final_train;
  Metrics final_test;
};

// Trial configurations are drawn up front from `seed`, so the trial sequence
// and h* do not depend on scheduling.
HpoResult run_hpo(const SearchSpace &space, const ModelConfig &base, const HpoSettings &settings,
                  std::span<const Sample> train_set, std::span<const Sample> val_set,
                  std::span<const Sample> test_set);

} // namespace lrgnn
