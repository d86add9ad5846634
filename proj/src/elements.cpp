#include "lrgnn/elements.hpp"
#include "lrgnn/errors.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

extern const char *const kBuiltinElementTableCsv;

namespace lrgnn {

namespace {

std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cells.push_back(cell);
  }
  return cells;
}

} // namespace

ElementTable ElementTable::parse(std::istream &in, const std::string &source) {
  ElementTable table;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.empty() || line[0] == '#') {
      continue;
    }
    auto cells = split_csv(line);
    if (cells.size() != kElementPropertyCount + 1) {
      throw SchemaError(where, "expected " + std::to_string(kElementPropertyCount + 1) +
                                   " columns, found " + std::to_string(cells.size()));
    }
    if (!header_seen) {
      if (cells[0] != "Z") {
        throw SchemaError(where, "header must start with Z");
      }
      for (std::size_t c = 0; c < kElementPropertyCount; ++c) {
        if (cells[c + 1] != kElementColumns[c]) {
          throw SchemaError(where, "column " + std::to_string(c + 1) + " must be '" +
                                       std::string(kElementColumns[c]) + "', found '" +
                                       cells[c + 1] + "'");
        }
      }
      header_seen = true;
      continue;
    }
    Row row{};
    try {
      const int z = std::stoi(cells[0]);
      if (z != table.max_z() + 1) {
        throw SchemaError(where, "rows must list Z = 1, 2, ... in order; found Z=" + cells[0]);
      }
      for (std::size_t c = 0; c < kElementPropertyCount; ++c) {
        row[c] = std::stod(cells[c + 1]);
        if (!std::isfinite(row[c])) {
          throw SchemaError(where, std::string(kElementColumns[c]) + " is not finite");
        }
      }
    } catch (const std::logic_error &) {
      throw SchemaError(where, "unparsable number");
    }
    table.rows_.push_back(row);
  }
  if (!header_seen) {
    throw SchemaError(source, "missing header line");
  }
  return table;
}

ElementTable ElementTable::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open element table " + path.string());
  }
  return parse(in, path.string());
}

const ElementTable &ElementTable::builtin() {
  static const ElementTable table = [] {
    std::istringstream in(kBuiltinElementTableCsv);
    return parse(in, "builtin:elements.csv");
  }();
  return table;
}

const ElementTable::Row &ElementTable::row(int z) const {
  if (!supports(z)) {
    throw std::out_of_range("element table has no entry for Z=" + std::to_string(z));
  }
  return rows_[static_cast<std::size_t>(z - 1)];
}

} // namespace lrgnn
