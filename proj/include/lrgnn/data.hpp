#pragma once

// Line-delimited graph files, split policy, the encode pipeline and the
// synthetic long-range-interaction generator.
//
// Graph file: line 1 is a header object
//   {"format": "lrgnn-graphs", "version": 1, "task": {...}}
// and every further line one graph
//   {"n": N, "edges": [[u, v], ...], "x": [[...], ...], "e": [[...], ...],
//    "x_dim": p, "e_dim": f, "pos"?: [[x, y, z], ...], "z"?: [...],
//    "y_graph"?: [...], "y_node"?: [[...], ...], "cutoff"?: r,
//    "enc"?: {"C": [[...]], "P": [[...]], "G": [[...]], "L": [[...]]}}
// An empty file is an empty dataset.

#include "lrgnn/elements.hpp"
#include "lrgnn/encoders.hpp"
#include "lrgnn/model.hpp"
#include "lrgnn/sample.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lrgnn {

struct TaskDescriptor {
  Task task = Task::GraphRegression;
  bool geometric = false; // positions required on every graph
  std::size_t num_classes = 0;
  std::string name;

  friend bool operator==(const TaskDescriptor &, const TaskDescriptor &) = default;
};

struct Dataset {
  TaskDescriptor task;
  std::vector<Sample> samples;

  friend bool operator==(const Dataset &, const Dataset &) = default;
};

// Throws SchemaError carrying the line number and field path.
Dataset load_graphs(const std::filesystem::path &path);
void save_graphs(const Dataset &dataset, const std::filesystem::path &path);
Dataset parse_graphs(std::istream &in, const std::string &source);
void write_graphs(const Dataset &dataset, std::ostream &out);

// Positional-encoding width used for the public benchmark families.
std::optional<std::size_t> lpe_dim_for(const std::string &dataset_name);

struct SplitAssignment {
  std::vector<std::size_t> train, val, test;
};
// Seeded shuffle then contiguous slicing with sizes floor(f0 n), floor(f1 n)
// and the remainder. Throws std::invalid_argument when n < 3 or the fractions
// do not sum to 1.
SplitAssignment split(std::size_t n, std::span<const double> fractions, std::uint64_t seed);
SplitAssignment split(std::size_t n, std::uint64_t seed); // 80/10/10

std::vector<Sample> select(std::span<const Sample> samples, std::span<const std::size_t> indices);

struct Discard {
  std::size_t index; // position in the input dataset
  std::string reason;
};
struct EncodeReport {
  std::size_t input_count = 0;
  std::vector<Discard> discarded;
};
// Attaches encodings to every graph, dropping graphs whose encodings are
// flagged or non-finite. Parallel over graphs; the result is independent of
// `workers`.
EncodeReport encode_dataset(Dataset &dataset, const ElementTable &table,
                            const EncoderOptions &options, std::size_t workers);
std::string format_discard_report(const EncodeReport &report);

// Standardizes every encoding channel in place with statistics of the
// samples at `train` only.
ChannelStats standardize_channels(std::vector<Sample> &samples, std::span<const std::size_t> train);

struct SyntheticLriConfig {
  std::size_t graphs = 500;
  std::size_t min_atoms = 8;
  std::size_t max_atoms = 16;
  double box = 4.0;
  double cutoff = 2.0;
  double c6 = 64.0; // r_c^6 at the default cutoff: a pair at the cutoff contributes -1
  std::uint64_t seed = 0;
  // Redraw positions until the radius graph is connected, so the Laplacian
  // encodings are well defined.
  bool require_connected = true;
  std::size_t max_attempts = 10000;

  // Throws ConfigError; a box whose diagonal is below the cutoff has no
  // long-range pairs.
  void validate() const;
};

// Sum over unordered pairs with r >= cutoff of -c6 / r^6.
double lri_target(const Tensor &positions, double cutoff, double c6);
Dataset gen_synthetic_lri(const SyntheticLriConfig &config);

bool is_connected(std::size_t node_count, std::span<const Edge> edges);

} // namespace lrgnn
