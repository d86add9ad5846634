#pragma once

#include "lrgnn/encoders.hpp"
#include "lrgnn/graph.hpp"

#include <optional>

namespace lrgnn {

// A graph together with its (optional) encoder channels.
struct Sample {
  AtomGraph graph;
  std::optional<EncodingBundle> encodings;

  friend bool operator==(const Sample &, const Sample &) = default;
};

} // namespace lrgnn
