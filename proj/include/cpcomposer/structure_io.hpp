#pragma once

// Structure files hold one graph per line as a JSON object:
//   {"types":[...],"coords":[[x,y,z],...],"context_types":[...],"context_coords":[...]}
// The context fields are optional. Canonical output writes the fields in that
// order, omits empty context, and prints coordinates with six decimals.

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpcomposer/error.hpp"
#include "cpcomposer/graph.hpp"

namespace cpc {

inline std::string format_fixed(double v, int decimals) {
  if (v == 0.0) v = 0.0;  // no "-0.000000"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
  return s;
}

inline std::string to_structure_line(const GeometricGraph& g) {
  std::string out;
  auto ints = [&](const std::vector<int>& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    out += ']';
  };
  auto xyz = [&](const std::vector<Vec3>& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
      out += i ? ",[" : "[";
      for (int c = 0; c < 3; ++c) out += (c ? "," : "") + format_fixed(v[i][static_cast<std::size_t>(c)], 6);
      out += ']';
    }
    out += ']';
  };
  out += "{\"types\":";
  ints(g.types);
  out += ",\"coords\":";
  xyz(g.coords);
  if (g.n_context() > 0) {
    out += ",\"context_types\":";
    ints(g.context_types);
    out += ",\"context_coords\":";
    xyz(g.context_coords);
  }
  out += '}';
  return out;
}

inline GeometricGraph parse_structure_line(const std::string& line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
  }
  if (!j.is_object()) throw ParseError("record is not an object", line_no);

  auto read_types = [&](const char* key, bool required) {
    std::vector<int> out;
    if (!j.contains(key)) {
      if (required) throw ParseError(std::string("missing field '") + key + "'", line_no);
      return out;
    }
    const auto& a = j[key];
    if (!a.is_array()) throw ParseError(std::string("field '") + key + "' is not an array", line_no);
    for (const auto& v : a) {
      if (!v.is_number_integer()) throw ParseError(std::string("field '") + key + "' has a non-integer entry", line_no);
      const auto t = v.get<long long>();
      if (t < 0 || t >= kNumTypes) {
        throw ParseError("type index " + std::to_string(t) + " out of range [0, " + std::to_string(kNumTypes) + ")", line_no);
      }
      out.push_back(static_cast<int>(t));
    }
    return out;
  };
  auto read_coords = [&](const char* key, bool required) {
    std::vector<Vec3> out;
    if (!j.contains(key)) {
      if (required) throw ParseError(std::string("missing field '") + key + "'", line_no);
      return out;
    }
    const auto& a = j[key];
    if (!a.is_array()) throw ParseError(std::string("field '") + key + "' is not an array", line_no);
    for (const auto& p : a) {
      if (!p.is_array() || p.size() != 3) {
        throw ParseError(std::string("field '") + key + "' needs [x,y,z] triples", line_no);
      }
      Vec3 x{};
      for (std::size_t c = 0; c < 3; ++c) {
        if (!p[c].is_number()) throw ParseError(std::string("field '") + key + "' has a non-numeric coordinate", line_no);
        x[c] = p[c].get<double>();
      }
      out.push_back(x);
    }
    return out;
  };

  GeometricGraph g;
  g.types = read_types("types", true);
  g.coords = read_coords("coords", true);
  g.context_types = read_types("context_types", false);
  g.context_coords = read_coords("context_coords", false);
  if (g.types.size() != g.coords.size()) throw ParseError("types and coords differ in length", line_no);
  if (g.context_types.size() != g.context_coords.size()) {
    throw ParseError("context_types and context_coords differ in length", line_no);
  }
  return g;
}

inline std::vector<GeometricGraph> read_structures(std::istream& in) {
  std::vector<GeometricGraph> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_structure_line(line, line_no));
  }
  return out;
}

inline std::vector<GeometricGraph> read_structures(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open structure file '" + path + "'");
  return read_structures(in);
}

inline void write_structures(std::ostream& out, const std::vector<GeometricGraph>& graphs) {
  for (const auto& g : graphs) out << to_structure_line(g) << '\n';
}

inline void write_structures(const std::string& path, const std::vector<GeometricGraph>& graphs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write structure file '" + path + "'");
  write_structures(out, graphs);
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace cpc
