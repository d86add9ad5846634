#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lrgnn {

inline constexpr std::size_t kElementPropertyCount = 15;

// Column order of the per-atom chemical descriptor block.
inline constexpr std::array<std::string_view, kElementPropertyCount> kElementColumns = {
    "atomic_weight",     "group",           "period",       "block",
    "valence_electrons", "covalent_radius", "vdw_radius",   "en_pauling",
    "en_allen",          "electron_affinity", "ionization_energy", "melting_point",
    "boiling_point",     "density",         "atomic_volume"};

// Per-element property rows for Z = 1..max_z. Text format: '#' comment
// lines, one header line "Z,<15 column names>", then one row per Z in order.
class ElementTable {
public:
  using Row = std::array<double, kElementPropertyCount>;

  static ElementTable parse(std::istream &in, const std::string &source);
  static ElementTable load(const std::filesystem::path &path);
  // Table compiled into the library from data/elements.csv.
  static const ElementTable &builtin();

  int max_z() const { return static_cast<int>(rows_.size()); }
  bool supports(int z) const { return z >= 1 && z <= max_z(); }
  const Row &row(int z) const;

private:
  std::vector<Row> rows_;
};

} // namespace lrgnn
