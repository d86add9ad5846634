#pragma once

// Four pipelines selected by two switches:
//
//   attention  encodings  scheme  body
//   open       open       S1      K MPNN layers on raw X, E
//   open       closed     S2      embed X||L||P||C, E||G -> K MPNN layers
//   closed     open       S3      embed X||L, E||[L_u-L_v] -> K GPS blocks
//   closed     closed     S4      embed X||L||P||C, E||G -> K GPS blocks
//
// followed by pooling and a linear head (graph tasks) or a per-node linear
// head (node tasks).

#include "lrgnn/embedder.hpp"
#include "lrgnn/layers.hpp"
#include "lrgnn/parameters.hpp"
#include "lrgnn/sample.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace lrgnn {

enum class Task { GraphRegression, NodeRegression, GraphClassification };
std::string to_string(Task t);
Task parse_task(const std::string &s);

enum class Scheme { S1 = 1, S2 = 2, S3 = 3, S4 = 4 };
std::string to_string(Scheme s);

// Message passing families admissible with and without atom positions.
std::vector<MpnnKind> admissible_kinds(bool has_pos);

struct ModelConfig {
  bool attention = false; // S1 closed
  bool encodings = false; // S2 closed
  MpnnKind mpnn_kind = MpnnKind::EdgeConditionedSum;
  std::optional<Aggregator> aggregator; // family default when unset
  std::size_t num_conv_layers = 2;
  std::size_t hidden_dim = 32;
  std::size_t edge_embed_dim = 0;
  std::size_t heads = 0;
  PoolMode pooling = PoolMode::Mean;
  Task task = Task::GraphRegression;
  std::size_t num_classes = 0; // classification only
  std::size_t output_dim = 1;  // regression target width
  bool has_pos = false;
  std::size_t node_feature_dim = 1;
  std::size_t edge_feature_dim = 0;
  std::size_t lpe_dim = 2;
  RadialBasis radial;
  AngularBasis angular;

  Scheme scheme() const;
  // Throws ConfigError naming the violated rule.
  void validate() const;
  EmbedderConfig embedder_config() const;
  Aggregator effective_aggregator() const;
  std::size_t head_width() const;
  // Channels a forward pass reads.
  std::set<Channel> consumed_channels() const;

  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

void to_json(nlohmann::json &j, const ModelConfig &c);
// Throws ConfigError naming the offending field.
void from_json(const nlohmann::json &j, ModelConfig &c);

// A batch prepared for a forward pass. Channel reads are recorded so tests
// can audit which inputs a scheme consumes.
struct ModelInput {
  std::size_t num_graphs = 0;
  std::size_t node_count = 0;
  MessageGraph messages;
  Index graph_index;
  Offsets offsets;
  Index edge_u, edge_v;
  std::map<Channel, Tensor> channels;
  std::optional<GeometricBasis> geometry;
  Tensor graph_targets;               // graphs x t
  std::optional<Tensor> node_targets; // nodes x t
  mutable std::set<Channel> reads;

  bool has(Channel c) const { return channels.count(c) != 0; }
  // Throws std::invalid_argument naming the channel and the scheme.
  const Tensor &read(Channel c, Scheme scheme) const;
  std::size_t target_rows(Task task) const;
};

// Every channel present on all samples is attached, whether or not the
// scheme reads it. The geometric basis is built when `config` uses the
// geometric family.
ModelInput make_input(std::span<const Sample *const> samples, const ModelConfig &config);
ModelInput make_input(std::span<const Sample> samples, const ModelConfig &config);

class Model {
public:
  struct Trace {
    Var output;
    std::vector<Var> node_states; // after the embedder and after each layer
  };

  // Throws ConfigError when the config is invalid.
  static Model assemble(const ModelConfig &config, std::uint64_t seed);

  const ModelConfig &config() const { return config_; }
  ParameterStore &parameters() { return params_; }
  const ParameterStore &parameters() const { return params_; }
  const Embedder &embedder() const { return embedder_; }
  const std::vector<MpnnLayer> &mpnn_layers() const { return mpnn_; }
  const std::vector<GpsBlock> &gps_blocks() const { return gps_; }

  Trace forward(Tape &tape, const ModelInput &input) const;
  Tensor predict(const ModelInput &input) const;
  // Mean squared error for regression, mean cross-entropy for classification.
  Var loss(Tape &tape, const ModelInput &input) const;
  Var loss(Tape &tape, const ModelInput &input, Var output) const;
  std::size_t count_parameters() const { return params_.scalar_count(); }

  nlohmann::json to_json() const;
  // Throws SchemaError on a malformed document.
  static Model from_json(const nlohmann::json &j);
  void save(const std::filesystem::path &path) const;
  static Model load(const std::filesystem::path &path);

  friend bool operator==(const Model &a, const Model &b);

private:
  ModelConfig config_;
  ParameterStore params_;
  Embedder embedder_;
  std::vector<MpnnLayer> mpnn_;
  std::vector<GpsBlock> gps_;
  Slot w_head_ = 0, b_head_ = 0;
};

// Class labels stored as the first graph target; throws std::invalid_argument
// on a non-integral or out-of-range label.
std::vector<int> class_labels(const Tensor &graph_targets, std::size_t num_classes);

} // namespace lrgnn
