#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "wps/measure.hpp"

namespace wps {

// 17 significant digits: enough to reproduce any double bit-exactly on parse.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v{};
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first != last && (*first == ' ' || *first == '\t')) ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{})
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}

using Cell = std::variant<double, std::int64_t, std::string>;

inline std::string cell_to_string(const Cell& c) {
  if (std::holds_alternative<double>(c)) return format_double(std::get<double>(c));
  if (std::holds_alternative<std::int64_t>(c))
    return std::to_string(std::get<std::int64_t>(c));
  return std::get<std::string>(c);
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::string to_csv() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) os << ',';
      os << columns[i];
    }
    os << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) os << ',';
        os << cell_to_string(row[i]);
      }
      os << '\n';
    }
    return os.str();
  }

  std::string to_json() const {
    std::ostringstream os;
    os << "{\"columns\":[";
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) os << ',';
      os << '"' << columns[i] << '"';
    }
    os << "],\"rows\":[";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (r) os << ',';
      os << '[';
      for (std::size_t i = 0; i < rows[r].size(); ++i) {
        if (i) os << ',';
        const Cell& c = rows[r][i];
        if (std::holds_alternative<std::string>(c))
          os << '"' << std::get<std::string>(c) << '"';
        else
          os << cell_to_string(c);
      }
      os << ']';
    }
    os << "]}\n";
    return os.str();
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

// Writes via a temp file in the same directory, then renames into place.
inline void write_file_atomic(const std::filesystem::path& path,
                              std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path dir = path.parent_path().empty() ? "." : path.parent_path();
  fs::create_directories(dir);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Measure CSV: rows `location,mass` or `time,location,mass`. A three-column
// file must carry a single time value to denote one measure.
inline AtomicMeasure measure_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<Atom> atoms;
  bool have_time = false;
  bool first_data = true;
  double the_time = 0.0;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (lineno == 1 && !cells.empty() &&
        (cells[0] == "time" || cells[0] == "location")) {
      have_time = cells[0] == "time";
      if ((have_time && cells.size() != 3) || (!have_time && cells.size() != 2))
        throw std::invalid_argument("measure CSV: unexpected header layout");
      continue;
    }
    if (cells.size() == 3) {
      const double t = parse_double(cells[0]);
      if (first_data) {
        the_time = t;
        first_data = false;
      } else if (t != the_time) {
        throw std::invalid_argument(
            "measure CSV holds multiple snapshot times; expected one measure");
      }
      atoms.push_back({parse_double(cells[1]), parse_double(cells[2])});
    } else if (cells.size() == 2) {
      atoms.push_back({parse_double(cells[0]), parse_double(cells[1])});
    } else {
      throw std::invalid_argument("measure CSV: line " + std::to_string(lineno) +
                                  " has " + std::to_string(cells.size()) +
                                  " fields");
    }
  }
  return AtomicMeasure(std::move(atoms));
}

inline Table measure_to_table(const AtomicMeasure& mu) {
  Table t;
  t.columns = {"location", "mass"};
  for (const Atom& a : mu.atoms()) t.rows.push_back({a.location, a.mass});
  return t;
}

}  // namespace wps
