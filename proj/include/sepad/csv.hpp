// Copyright 2026 the sepad authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sepad/errors.hpp"
#include "sepad/util.hpp"

namespace sepad::csv {

// Plain comma-separated values, no quoting. Fields must not contain commas
// or newlines; all files this toolkit writes satisfy that.
inline std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(strfmt("cannot open CSV file: %s", path.c_str()));
  Table t;
  std::string line;
  bool first = true;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto fields = split_row(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size())
        throw ParseError(strfmt("%s:%zu: expected %zu fields, got %zu", path.c_str(), lineno,
                                t.header.size(), fields.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (first) throw ParseError(strfmt("%s: empty CSV file", path.c_str()));
  return t;
}

inline std::string join_row(const std::vector<std::string>& fields) {
  std::string s;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) s.push_back(',');
    s += fields[i];
  }
  s.push_back('\n');
  return s;
}

}  // namespace sepad::csv
