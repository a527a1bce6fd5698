// Copyright 2026 The Mallows Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mallows/mallows.hpp"

namespace mallows {

using json = nlohmann::json;

// Invalid configuration; the message names the offending field.
class config_error : public std::invalid_argument {
 public:
  config_error(const std::string& field, const std::string& msg)
      : std::invalid_argument("field '" + field + "': " + msg), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

namespace detail {

inline const json& require_field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw config_error(path.empty() ? "<root>" : path, "expected an object");
  const auto it = j.find(key);
  const std::string field = path.empty() ? key : path + "." + key;
  if (it == j.end()) throw config_error(field, "missing");
  return *it;
}

inline double number_field(const json& v, const std::string& field) {
  if (!v.is_number()) throw config_error(field, "expected a number");
  return v.get<double>();
}

}  // namespace detail

// {"n": int, "components": [{"phi": float, "center": [ints]}], "weights": [floats]}
inline MallowsMixture mixture_from_json(const json& j) {
  const json& jn = detail::require_field(j, "n", "");
  if (!jn.is_number_integer() || jn.get<long long>() < 1 || jn.get<long long>() > 255)
    throw config_error("n", "expected an integer in [1, 255]");
  const int n = jn.get<int>();
  const json& jc = detail::require_field(j, "components", "");
  if (!jc.is_array() || jc.empty()) throw config_error("components", "expected a non-empty array");
  const json& jw = detail::require_field(j, "weights", "");
  if (!jw.is_array()) throw config_error("weights", "expected an array");
  if (jw.size() != jc.size()) throw config_error("weights", "length differs from components");

  std::vector<MallowsModel> comps;
  std::vector<double> w;
  double sum = 0.0;
  for (std::size_t i = 0; i < jc.size(); ++i) {
    const std::string base = "components[" + std::to_string(i) + "]";
    const double phi = detail::number_field(detail::require_field(jc[i], "phi", base), base + ".phi");
    if (!(phi >= 0.0 && phi <= 1.0)) throw config_error(base + ".phi", "must lie in [0, 1]");
    const json& jr = detail::require_field(jc[i], "center", base);
    if (!jr.is_array()) throw config_error(base + ".center", "expected an array of integers");
    std::vector<int> r;
    for (const auto& e : jr) {
      if (!e.is_number_integer()) throw config_error(base + ".center", "expected an array of integers");
      r.push_back(e.get<int>());
    }
    if (static_cast<int>(r.size()) != n)
      throw config_error(base + ".center", "length " + std::to_string(r.size()) + " differs from n");
    try {
      comps.emplace_back(phi, Permutation(std::move(r)));
    } catch (const std::invalid_argument& e) {
      throw config_error(base + ".center", e.what());
    }
    const std::string wf = "weights[" + std::to_string(i) + "]";
    const double x = detail::number_field(jw[i], wf);
    if (!(x >= 0.0)) throw config_error(wf, "must be non-negative");
    w.push_back(x);
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw config_error("weights", "must sum to 1");
  for (double& x : w) x /= sum;
  return MallowsMixture(std::move(comps), std::move(w));
}

inline json mixture_to_json(const MallowsMixture& m) {
  json comps = json::array();
  for (const auto& c : m.components) comps.push_back({{"phi", c.phi}, {"center", c.center.ranking()}});
  return {{"n", m.n()}, {"components", comps}, {"weights", m.weights}};
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error(path, std::string("not valid JSON: ") + e.what());
  }
}

inline MallowsMixture load_mixture(const std::string& path) { return mixture_from_json(read_json_file(path)); }

// One permutation per line; '#' starts a comment, blank lines are skipped.
inline std::vector<Permutation> read_permutations(std::istream& in) {
  std::vector<Permutation> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_permutation(line));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (out.back().n() != out.front().n())
      throw std::invalid_argument("line " + std::to_string(lineno) + ": length differs from line 1");
  }
  return out;
}

inline std::vector<Permutation> read_permutations_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  return read_permutations(in);
}

// With components given, each line is followed by a "# component=i" comment.
inline void write_permutations(std::ostream& out, const std::vector<Permutation>& perms,
                               const std::vector<int>* components = nullptr) {
  std::string buf;
  for (std::size_t i = 0; i < perms.size(); ++i) {
    buf = perms[i].str();
    if (components && i < components->size()) buf += "  # component=" + std::to_string((*components)[i]);
    buf += '\n';
    out << buf;
  }
}

// Semicolon-separated list of permutations: "1 2 3;2 1 3".
inline std::vector<Permutation> parse_permutation_list(const std::string& s) {
  std::vector<Permutation> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ';'))
    if (item.find_first_not_of(" \t") != std::string::npos) out.push_back(parse_permutation(item));
  return out;
}

}  // namespace mallows
