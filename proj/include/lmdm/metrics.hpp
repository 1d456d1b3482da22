//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmdm/geometry.hpp"

namespace lmdm {

// Reference covalent bond lengths in Angstrom.
class BondTable {
public:
  BondTable() {
    const char *single[][3] = {{"H", "H", "0.74"}, {"H", "C", "1.09"}, {"H", "N", "1.01"}, {"H", "O", "0.96"},
                               {"H", "F", "0.92"}, {"C", "C", "1.54"}, {"C", "N", "1.47"}, {"C", "O", "1.43"},
                               {"C", "F", "1.35"}, {"N", "N", "1.45"}, {"N", "O", "1.40"}, {"N", "F", "1.36"},
                               {"O", "O", "1.48"}, {"O", "F", "1.42"}, {"F", "F", "1.42"}};
    const char *dbl[][3] = {{"C", "C", "1.34"}, {"C", "N", "1.29"}, {"C", "O", "1.20"},
                            {"N", "N", "1.25"}, {"N", "O", "1.21"}, {"O", "O", "1.21"}};
    const char *triple[][3] = {{"C", "C", "1.20"}, {"C", "N", "1.16"}, {"C", "O", "1.13"}, {"N", "N", "1.10"}};
    for (auto &r : single) set(r[0], r[1], 1, std::stod(r[2]));
    for (auto &r : dbl) set(r[0], r[1], 2, std::stod(r[2]));
    for (auto &r : triple) set(r[0], r[1], 3, std::stod(r[2]));
  }

  void set(const std::string &a, const std::string &b, int order, double length) {
    table_[key(a, b)][order] = length;
    elements_.insert(a);
    elements_.insert(b);
  }

  bool knows(const std::string &e) const { return elements_.count(e) > 0; }

  std::optional<double> length(const std::string &a, const std::string &b, int order) const {
    auto it = table_.find(key(a, b));
    if (it == table_.end()) return std::nullopt;
    auto jt = it->second.find(order);
    if (jt == it->second.end()) return std::nullopt;
    return jt->second;
  }

  static double margin(int order) { return order == 1 ? 0.1 : 0.05; }

private:
  static std::pair<std::string, std::string> key(const std::string &a, const std::string &b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  }
  std::map<std::pair<std::string, std::string>, std::map<int, double>> table_;
  std::set<std::string> elements_;
};

struct Bond {
  int i, j, order;
  bool operator==(const Bond &) const = default;
};

struct BondGraph {
  int n_atoms = 0;
  std::vector<Bond> bonds; // i < j, lexicographic
  std::vector<std::string> element_ids;
  int net_charge = 0;
};

inline BondGraph infer_bonds(const Molecule &mol, const BondTable &table = {}) {
  mol.validate();
  for (const auto &e : mol.element_ids)
    if (!table.knows(e)) throw UnsupportedElement("no bond lengths for element '" + e + "'");
  BondGraph g;
  g.n_atoms = mol.size();
  g.element_ids = mol.element_ids;
  g.net_charge = mol.net_charge();
  for (int i = 0; i < mol.size(); ++i)
    for (int j = i + 1; j < mol.size(); ++j) {
      const double d = (mol.coords.row(i) - mol.coords.row(j)).norm();
      for (int order = 3; order >= 1; --order) {
        auto r = table.length(mol.element_ids[i], mol.element_ids[j], order);
        if (r && d <= *r + BondTable::margin(order)) {
          g.bonds.push_back({i, j, order});
          break;
        }
      }
    }
  return g;
}

// Allowed valences per element; extras extend the defaults.
class ValenceTable {
public:
  ValenceTable() : allowed_{{"H", {1}}, {"C", {4}}, {"N", {3}}, {"O", {2}}, {"F", {1}}} {}

  void add(const std::string &element, int valence) {
    auto &v = allowed_[element];
    if (std::find(v.begin(), v.end(), valence) == v.end()) v.push_back(valence);
  }

  const std::vector<int> &allowed(const std::string &element) const {
    auto it = allowed_.find(element);
    if (it == allowed_.end()) throw UnsupportedElement("no valence rule for element '" + element + "'");
    return it->second;
  }

  int max_allowed(const std::string &element) const {
    const auto &v = allowed(element);
    return *std::max_element(v.begin(), v.end());
  }

private:
  std::map<std::string, std::vector<int>> allowed_;
};

struct MoleculeCheck {
  bool valid = false;
  int stable_atoms = 0;
  bool ion_free = false;
  int n_components = 0;
};

struct CheckOptions {
  bool require_connected = true;
  ValenceTable valences;
};

inline std::vector<int> bond_valences(const BondGraph &g) {
  std::vector<int> v(static_cast<std::size_t>(g.n_atoms), 0);
  for (const Bond &b : g.bonds) {
    v[static_cast<std::size_t>(b.i)] += b.order;
    v[static_cast<std::size_t>(b.j)] += b.order;
  }
  return v;
}

inline int count_components(const BondGraph &g) {
  std::vector<int> parent(static_cast<std::size_t>(g.n_atoms));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  int comps = g.n_atoms;
  for (const Bond &b : g.bonds) {
    int a = find(b.i), c = find(b.j);
    if (a != c) {
      parent[static_cast<std::size_t>(a)] = c;
      --comps;
    }
  }
  return comps;
}

inline MoleculeCheck molecule_checks(const BondGraph &g, const CheckOptions &opt = {}) {
  MoleculeCheck c;
  c.n_components = count_components(g);
  auto val = bond_valences(g);
  bool within = true, saturated = true;
  for (int i = 0; i < g.n_atoms; ++i) {
    const auto &el = g.element_ids[static_cast<std::size_t>(i)];
    const auto &allowed = opt.valences.allowed(el);
    const int v = val[static_cast<std::size_t>(i)];
    if (v > opt.valences.max_allowed(el)) within = false;
    if (std::find(allowed.begin(), allowed.end(), v) != allowed.end()) ++c.stable_atoms;
    else saturated = false;
  }
  c.valid = within && (!opt.require_connected || c.n_components == 1);
  c.ion_free = saturated && g.net_charge == 0;
  return c;
}

// Order-independent graph fingerprint from iterated neighbourhood refinement
// over (element, bond-order multiset).
inline std::uint64_t canonical_hash(const BondGraph &g) {
  auto mix = [](std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2))); };
  const auto n = static_cast<std::size_t>(g.n_atoms);
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (const Bond &b : g.bonds) {
    adj[static_cast<std::size_t>(b.i)].push_back({b.j, b.order});
    adj[static_cast<std::size_t>(b.j)].push_back({b.i, b.order});
  }
  std::vector<std::uint64_t> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : g.element_ids[i]) h = mix(h, ch);
    std::vector<int> orders;
    for (auto [j, o] : adj[i]) orders.push_back(o);
    std::sort(orders.begin(), orders.end());
    for (int o : orders) h = mix(h, static_cast<std::uint64_t>(o));
    inv[i] = h;
  }
  for (std::size_t round = 0; round < n; ++round) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::uint64_t> nb;
      for (auto [j, o] : adj[i]) nb.push_back(mix(inv[static_cast<std::size_t>(j)], static_cast<std::uint64_t>(o)));
      std::sort(nb.begin(), nb.end());
      std::uint64_t h = mix(inv[i], nb.size());
      for (auto v : nb) h = mix(h, v);
      next[i] = h;
    }
    inv = std::move(next);
  }
  std::sort(inv.begin(), inv.end());
  std::uint64_t h = mix(static_cast<std::uint64_t>(n), g.bonds.size());
  for (auto v : inv) h = mix(h, v);
  return h;
}

inline std::uint64_t canonical_hash(const Molecule &m, const BondTable &table = {}) {
  return canonical_hash(infer_bonds(m, table));
}

inline std::set<std::uint64_t> corpus_hashes(const std::vector<Molecule> &mols, const BondTable &table = {}) {
  std::set<std::uint64_t> out;
  for (const auto &m : mols) out.insert(canonical_hash(m, table));
  return out;
}

struct MetricsReport {
  int n_total = 0, n_valid = 0, n_unique = 0, n_novel = 0, n_stable = 0;
  int n_atoms = 0, n_stable_atoms = 0;
  double validity = 0, uniqueness = 0, novelty = 0, stability = 0, atom_stability = 0;
  std::map<int, int> components; // fragment count -> molecules

  nlohmann::json to_json() const {
    nlohmann::json j = {{"n_total", n_total},   {"n_valid", n_valid},       {"n_unique", n_unique},
                        {"n_novel", n_novel},   {"n_stable", n_stable},     {"validity", validity},
                        {"uniqueness", uniqueness}, {"novelty", novelty},   {"stability", stability},
                        {"atom_stability", atom_stability}};
    nlohmann::json comp = nlohmann::json::object();
    for (auto [k, v] : components) comp[std::to_string(k)] = v;
    j["components"] = comp;
    return j;
  }

  std::string table() const {
    char buf[512];
    std::string out;
    auto row = [&](const char *name, double pct, int num, int den) {
      std::snprintf(buf, sizeof buf, "%-16s %8.2f %%  (%d / %d)\n", name, pct, num, den);
      out += buf;
    };
    row("validity", validity, n_valid, n_total);
    row("uniqueness", uniqueness, n_unique, n_valid);
    row("novelty", novelty, n_novel, n_unique);
    row("stability", stability, n_stable, n_total);
    row("atom_stability", atom_stability, n_stable_atoms, n_atoms);
    for (auto [k, v] : components) {
      std::snprintf(buf, sizeof buf, "%-16s %8d    (%d fragment%s)\n", "components", v, k, k == 1 ? "" : "s");
      out += buf;
    }
    return out;
  }
};

inline double percent(int num, int den) { return den > 0 ? 100.0 * num / den : 0.0; }

inline MetricsReport set_metrics(const std::vector<Molecule> &generated, const std::set<std::uint64_t> &train_hashes,
                                 const CheckOptions &opt = {}, const BondTable &table = {}) {
  if (generated.empty()) throw ContractError("set_metrics: no molecules to evaluate");
  MetricsReport r;
  std::set<std::uint64_t> unique;
  for (const auto &m : generated) {
    BondGraph g = infer_bonds(m, table);
    MoleculeCheck c = molecule_checks(g, opt);
    ++r.n_total;
    r.n_atoms += g.n_atoms;
    r.n_stable_atoms += c.stable_atoms;
    ++r.components[c.n_components];
    if (c.ion_free && c.n_components == 1) ++r.n_stable;
    if (c.valid) {
      ++r.n_valid;
      unique.insert(canonical_hash(g));
    }
  }
  r.n_unique = static_cast<int>(unique.size());
  for (auto h : unique)
    if (!train_hashes.count(h)) ++r.n_novel;
  r.validity = percent(r.n_valid, r.n_total);
  r.uniqueness = percent(r.n_unique, r.n_valid);
  r.novelty = percent(r.n_novel, r.n_unique);
  r.stability = percent(r.n_stable, r.n_total);
  r.atom_stability = percent(r.n_stable_atoms, r.n_atoms);
  return r;
}

} // namespace lmdm
