#pragma once

// Unit geometric constraints (node types and pair distances), the cyclization
// strategies built from them, the training-time design spaces they are sampled
// from, and the satisfaction checker used for evaluation.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cpcomposer/error.hpp"
#include "cpcomposer/graph.hpp"

namespace cpc {

struct TypeEntry {
  std::size_t node;
  int type;
  auto operator<=>(const TypeEntry&) const = default;
};

struct DistanceEntry {
  std::size_t i;
  std::size_t j;  // i < j
  double target;  // Angstrom
  auto operator<=>(const DistanceEntry&) const = default;
};

/// Set of (node, required type); at most one entry per node.
class TypeConstraint {
 public:
  TypeConstraint() = default;
  explicit TypeConstraint(std::vector<TypeEntry> entries) : entries_(std::move(entries)) {
    for (const auto& e : entries_) {
      if (e.type < 0 || e.type >= kNumTypes) throw PreconditionError("type constraint: type " + std::to_string(e.type) + " out of range");
    }
    std::sort(entries_.begin(), entries_.end());
    entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());
    for (std::size_t k = 1; k < entries_.size(); ++k) {
      if (entries_[k].node == entries_[k - 1].node) {
        throw ConflictError("conflicting type requirements for node " + std::to_string(entries_[k].node) + ": " +
                            type_code(entries_[k - 1].type) + " vs " + type_code(entries_[k].type));
      }
    }
  }

  const std::vector<TypeEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool operator==(const TypeConstraint&) const = default;

 private:
  std::vector<TypeEntry> entries_;
};

/// Set of (i, j, distance) with i < j; at most one entry per pair.
class DistanceConstraint {
 public:
  DistanceConstraint() = default;
  explicit DistanceConstraint(std::vector<DistanceEntry> entries) : entries_(std::move(entries)) {
    for (auto& e : entries_) {
      if (e.i == e.j) throw PreconditionError("distance constraint: pair (" + std::to_string(e.i) + "," + std::to_string(e.j) + ") is a self-loop");
      if (!(e.target > 0.0)) throw PreconditionError("distance constraint: target must be positive");
      if (e.i > e.j) std::swap(e.i, e.j);
    }
    std::sort(entries_.begin(), entries_.end());
    entries_.erase(std::unique(entries_.begin(), entries_.end()), entries_.end());
    for (std::size_t k = 1; k < entries_.size(); ++k) {
      if (entries_[k].i == entries_[k - 1].i && entries_[k].j == entries_[k - 1].j) {
        throw ConflictError("conflicting distance requirements for pair (" + std::to_string(entries_[k].i) + "," +
                            std::to_string(entries_[k].j) + ")");
      }
    }
  }

  const std::vector<DistanceEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool operator==(const DistanceConstraint&) const = default;

 private:
  std::vector<DistanceEntry> entries_;
};

/// (types, distances); an empty side means "unconditional" for that side.
struct ConstraintPair {
  TypeConstraint types;
  DistanceConstraint dists;

  bool empty() const noexcept { return types.empty() && dists.empty(); }
  /// Largest node index referenced, plus one.
  std::size_t span() const {
    std::size_t n = 0;
    for (const auto& e : types.entries()) n = std::max(n, e.node + 1);
    for (const auto& e : dists.entries()) n = std::max(n, e.j + 1);
    return n;
  }
  bool operator==(const ConstraintPair&) const = default;
};

/// Set union of every pair; throws ConflictError when two inputs disagree on a
/// node type or a pair distance.
inline ConstraintPair compose(const std::vector<ConstraintPair>& pairs) {
  std::vector<TypeEntry> ts;
  std::vector<DistanceEntry> ds;
  for (const auto& p : pairs) {
    ts.insert(ts.end(), p.types.entries().begin(), p.types.entries().end());
    ds.insert(ds.end(), p.dists.entries().begin(), p.dists.entries().end());
  }
  return ConstraintPair{TypeConstraint(std::move(ts)), DistanceConstraint(std::move(ds))};
}

// ---------------------------------------------------------------------------
// Cyclization strategies
// ---------------------------------------------------------------------------

enum class StrategyKind { StapledD, StapledE, HeadToTail, Disulfide, Bicycle };

/// Target C-alpha distances of each linkage, in Angstrom.
struct LinkLengths {
  double kd = 5.0;  // lysine - aspartate staple
  double ke = 5.5;  // lysine - glutamate staple
  double p = 3.8;   // head-to-tail amide
  double s = 5.5;   // disulfide
  double t = 6.0;   // bicycle triangle side
};

struct StrategySpec {
  StrategyKind kind;
  std::vector<std::size_t> anchors;
  LinkLengths lengths{};
};

inline std::size_t anchor_count(StrategyKind k) {
  switch (k) {
    case StrategyKind::StapledD:
    case StrategyKind::StapledE: return 1;
    case StrategyKind::HeadToTail: return 0;
    case StrategyKind::Disulfide: return 2;
    case StrategyKind::Bicycle: return 3;
  }
  return 0;
}

inline std::string strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::StapledD: return "stapled-d";
    case StrategyKind::StapledE: return "stapled-e";
    case StrategyKind::HeadToTail: return "head-to-tail";
    case StrategyKind::Disulfide: return "disulfide";
    case StrategyKind::Bicycle: return "bicycle";
  }
  return "?";
}

inline std::optional<StrategyKind> parse_strategy_kind(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
  if (name == "stapled-d") return StrategyKind::StapledD;
  if (name == "stapled-e") return StrategyKind::StapledE;
  if (name == "head-to-tail" || name == "h-t") return StrategyKind::HeadToTail;
  if (name == "disulfide" || name == "-s-s-") return StrategyKind::Disulfide;
  if (name == "bicycle") return StrategyKind::Bicycle;
  return std::nullopt;
}

/// Unit constraints realizing one cyclization of a length-n peptide.
inline ConstraintPair decompose(const StrategySpec& s, std::size_t n) {
  const auto& a = s.anchors;
  const auto name = strategy_name(s.kind);
  if (a.size() != anchor_count(s.kind)) {
    throw PreconditionError(name + ": expected " + std::to_string(anchor_count(s.kind)) + " anchor(s), got " +
                            std::to_string(a.size()));
  }
  for (auto i : a) {
    if (i >= n) throw PreconditionError(name + ": anchor " + std::to_string(i) + " out of range for length " + std::to_string(n));
  }
  switch (s.kind) {
    case StrategyKind::StapledD:
    case StrategyKind::StapledE: {
      const bool d = s.kind == StrategyKind::StapledD;
      const std::size_t off = d ? 3 : 4;
      if (a[0] + off >= n) {
        throw PreconditionError(name + ": partner index " + std::to_string(a[0] + off) + " out of range for length " + std::to_string(n));
      }
      return {TypeConstraint({{a[0], aa::kLys}, {a[0] + off, d ? aa::kAsp : aa::kGlu}}),
              DistanceConstraint({{a[0], a[0] + off, d ? s.lengths.kd : s.lengths.ke}})};
    }
    case StrategyKind::HeadToTail:
      if (n < 2) throw PreconditionError(name + ": needs at least two residues");
      return {TypeConstraint(), DistanceConstraint({{0, n - 1, s.lengths.p}})};
    case StrategyKind::Disulfide: {
      const auto i = std::min(a[0], a[1]), j = std::max(a[0], a[1]);
      if (j - i < 2) throw PreconditionError(name + ": cysteines at " + std::to_string(i) + " and " + std::to_string(j) + " must be non-adjacent");
      return {TypeConstraint({{i, aa::kCys}, {j, aa::kCys}}), DistanceConstraint({{i, j, s.lengths.s}})};
    }
    case StrategyKind::Bicycle: {
      auto v = a;
      std::sort(v.begin(), v.end());
      if (v[1] - v[0] < 2 || v[2] - v[1] < 2) {
        throw PreconditionError(name + ": anchors must be pairwise separated by at least 2");
      }
      return {TypeConstraint({{v[0], aa::kCys}, {v[1], aa::kCys}, {v[2], aa::kCys}}),
              DistanceConstraint({{v[0], v[1], s.lengths.t}, {v[0], v[2], s.lengths.t}, {v[1], v[2], s.lengths.t}})};
    }
  }
  throw PreconditionError("unknown strategy");
}

/// Parses a composite strategy such as "disulfide:1,4+head-to-tail" or
/// "2*disulfide" and decomposes it. Components without inline anchors consume
/// them in order from `anchors`.
inline ConstraintPair decompose_composite(const std::string& text, std::vector<std::size_t> anchors, std::size_t n,
                                          const LinkLengths& lengths = {}) {
  std::vector<ConstraintPair> parts;
  std::size_t next = 0;
  std::stringstream ss(text);
  std::string item;
  auto parse_uint = [&](const std::string& s) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw PreconditionError("invalid anchor '" + s + "' in '" + text + "'");
    return v;
  };
  if (text.empty() || text.back() == '+') throw PreconditionError("empty strategy component in '" + text + "'");
  while (std::getline(ss, item, '+')) {
    if (item.empty()) throw PreconditionError("empty strategy component in '" + text + "'");
    std::size_t repeat = 1;
    if (auto star = item.find('*'); star != std::string::npos && star > 0 &&
                                    std::all_of(item.begin(), item.begin() + static_cast<long>(star), ::isdigit)) {
      repeat = parse_uint(item.substr(0, star));
      item = item.substr(star + 1);
    }
    std::vector<std::size_t> inline_anchors;
    bool has_inline = false;
    if (auto colon = item.find(':'); colon != std::string::npos) {
      has_inline = true;
      std::stringstream as(item.substr(colon + 1));
      std::string tok;
      while (std::getline(as, tok, ',')) inline_anchors.push_back(parse_uint(tok));
      item = item.substr(0, colon);
    }
    auto kind = parse_strategy_kind(item);
    if (!kind) throw PreconditionError("unknown strategy '" + item + "'");
    const std::size_t need = anchor_count(*kind);
    if (has_inline && inline_anchors.size() != need * repeat) {
      throw PreconditionError(item + ": expected " + std::to_string(need * repeat) + " inline anchor(s)");
    }
    for (std::size_t r = 0; r < repeat; ++r) {
      StrategySpec spec{*kind, {}, lengths};
      for (std::size_t k = 0; k < need; ++k) {
        if (has_inline) {
          spec.anchors.push_back(inline_anchors[r * need + k]);
        } else {
          if (next >= anchors.size()) throw PreconditionError(item + ": not enough anchors supplied");
          spec.anchors.push_back(anchors[next++]);
        }
      }
      parts.push_back(decompose(spec, n));
    }
  }
  if (next != anchors.size()) throw PreconditionError("more anchors supplied than the strategy uses");
  return compose(parts);
}

// ---------------------------------------------------------------------------
// Canonical text form
// ---------------------------------------------------------------------------

/// One entry per line, sorted: "type <node> <code>" then
/// "distance <i> <j> <target>" with three decimals.
inline std::string to_text(const ConstraintPair& c) {
  std::string out;
  for (const auto& e : c.types.entries()) out += "type " + std::to_string(e.node) + " " + type_code(e.type) + "\n";
  for (const auto& e : c.dists.entries()) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "distance %zu %zu %.3f\n", e.i, e.j, e.target);
    out += buf;
  }
  return out;
}

/// Inverse of to_text; '#' starts a comment. Types may be one-letter codes or indices.
inline ConstraintPair parse_constraints(std::istream& in) {
  std::vector<TypeEntry> ts;
  std::vector<DistanceEntry> ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    if (kind == "type") {
      long long node = -1;
      std::string t;
      if (!(ls >> node >> t) || node < 0) throw ParseError("expected 'type <node> <type>'", line_no);
      int type = -1;
      if (t.size() == 1 && std::isalpha(static_cast<unsigned char>(t[0]))) {
        auto pos = kAlphabet.find(static_cast<char>(std::toupper(static_cast<unsigned char>(t[0]))));
        if (pos != std::string_view::npos) type = static_cast<int>(pos);
      } else {
        try {
          std::size_t used = 0;
          type = std::stoi(t, &used);
          if (used != t.size()) type = -1;
        } catch (const std::exception&) {
          type = -1;
        }
      }
      if (type < 0 || type >= kNumTypes) throw ParseError("unknown amino-acid type '" + t + "'", line_no);
      ts.push_back({static_cast<std::size_t>(node), type});
    } else if (kind == "distance") {
      long long i = -1, j = -1;
      double d = 0.0;
      if (!(ls >> i >> j >> d) || i < 0 || j < 0) throw ParseError("expected 'distance <i> <j> <angstrom>'", line_no);
      if (i == j || !(d > 0.0)) throw ParseError("distance entry needs i != j and a positive target", line_no);
      ds.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), d});
    } else {
      throw ParseError("unknown entry kind '" + kind + "'", line_no);
    }
    std::string extra;
    if (ls >> extra) throw ParseError("trailing text '" + extra + "'", line_no);
  }
  return ConstraintPair{TypeConstraint(std::move(ts)), DistanceConstraint(std::move(ds))};
}

// ---------------------------------------------------------------------------
// Training design spaces
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxTypeEntries = 4;
inline constexpr std::size_t kMaxDistanceEntries = 6;
inline constexpr std::array<std::size_t, 3> kSeparations = {3, 4, 6};

/// Draws a uniformly random subset of `pool` whose size is uniform on
/// {0, ..., min(cap, |pool|)}.
template <class T, class Rng>
std::vector<T> sample_subset(std::vector<T> pool, std::size_t cap, Rng& rng) {
  const std::size_t hi = std::min(cap, pool.size());
  std::uniform_int_distribution<std::size_t> size_dist(0, hi);
  const std::size_t k = size_dist(rng);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

/// Up to four peptide nodes, each required to keep its ground-truth type.
template <class Rng>
TypeConstraint sample_type_constraint(const GeometricGraph& g, Rng& rng) {
  std::vector<std::size_t> nodes(g.n_peptide());
  std::iota(nodes.begin(), nodes.end(), std::size_t{0});
  std::vector<TypeEntry> out;
  for (auto i : sample_subset(std::move(nodes), kMaxTypeEntries, rng)) out.push_back({i, g.types[i]});
  return TypeConstraint(std::move(out));
}

/// Peptide pairs at sequence separation 3, 4 or 6; the candidate pool for
/// distance constraints.
inline std::vector<std::pair<std::size_t, std::size_t>> separation_pairs(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i)
    for (auto s : kSeparations)
      if (i + s < n) out.emplace_back(i, i + s);
  std::sort(out.begin(), out.end());
  return out;
}

/// Up to six separation-{3,4,6} pairs, each required to keep its true distance.
template <class Rng>
DistanceConstraint sample_distance_constraint(const GeometricGraph& g, Rng& rng) {
  std::vector<DistanceEntry> out;
  for (auto [i, j] : sample_subset(separation_pairs(g.n_peptide()), kMaxDistanceEntries, rng)) {
    out.push_back({i, j, distance(g.coords[i], g.coords[j])});
  }
  return DistanceConstraint(std::move(out));
}

// ---------------------------------------------------------------------------
// Satisfaction
// ---------------------------------------------------------------------------

inline constexpr double kDefaultTolerance = 0.5;

struct SatisfactionItem {
  bool is_type;
  std::size_t i;
  std::size_t j;      // distance items only
  int required_type;  // type items only
  int actual_type;
  double target;  // distance items only
  double actual;
  bool pass;

  std::string describe() const {
    char buf[160];
    if (is_type) {
      std::snprintf(buf, sizeof buf, "type node %zu: required %c, found %c: %s", i, type_code(required_type),
                    type_code(actual_type), pass ? "pass" : "FAIL");
    } else {
      std::snprintf(buf, sizeof buf, "distance %zu-%zu: target %.3f, found %.3f: %s", i, j, target, actual,
                    pass ? "pass" : "FAIL");
    }
    return buf;
  }
};

struct SatisfactionReport {
  std::vector<SatisfactionItem> items;
  bool pass = true;

  std::vector<SatisfactionItem> failures() const {
    std::vector<SatisfactionItem> out;
    for (const auto& it : items)
      if (!it.pass) out.push_back(it);
    return out;
  }
};

/// Types must match exactly; distances must lie within the closed interval
/// [target - tol, target + tol].
inline SatisfactionReport check_satisfaction(const GeometricGraph& g, const ConstraintPair& c, double tol = kDefaultTolerance) {
  const std::size_t n = g.n_peptide();
  if (c.span() > n) {
    throw PreconditionError("constraint references node " + std::to_string(c.span() - 1) + " of a " + std::to_string(n) +
                            "-residue peptide");
  }
  SatisfactionReport r;
  for (const auto& e : c.types.entries()) {
    const int actual = g.types[e.node];
    const bool ok = actual == e.type;
    r.items.push_back({true, e.node, e.node, e.type, actual, 0.0, 0.0, ok});
    r.pass = r.pass && ok;
  }
  for (const auto& e : c.dists.entries()) {
    const double d = distance(g.coords[e.i], g.coords[e.j]);
    const bool ok = std::abs(d - e.target) <= tol;
    r.items.push_back({false, e.i, e.j, -1, -1, e.target, d, ok});
    r.pass = r.pass && ok;
  }
  return r;
}

}  // namespace cpc
