//
// Copyright 2026 The LMDM Authors.
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lmdm/config.hpp"
#include "lmdm/geometry.hpp"
#include "lmdm/nn.hpp"

namespace lmdm {

// ---------------------------------------------------------------------------
// XYZ

// Reads one or more concatenated blocks. Rows are "El x y z" with an
// optional fifth integer column holding the formal charge.
inline std::vector<Molecule> parse_xyz(const std::string &text, const Vocabulary &vocab = {}) {
  std::vector<Molecule> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next = [&](std::string &l) {
    if (!std::getline(in, l)) return false;
    ++lineno;
    if (!l.empty() && l.back() == '\r') l.pop_back();
    return true;
  };
  while (next(line)) {
    if (RunConfig::trim(line).empty()) continue;
    int n = 0;
    {
      std::istringstream ls(line);
      std::string rest;
      if (!(ls >> n) || (ls >> rest) || n < 1) throw ParseError("expected a positive atom count", lineno);
    }
    std::string comment;
    if (!next(comment)) throw ParseError("missing comment line", lineno + 1);
    std::vector<std::string> elements;
    std::vector<int> charges;
    Matrix coords(n, 3);
    bool any_charge = false;
    for (int i = 0; i < n; ++i) {
      if (!next(line)) throw ParseError("expected " + std::to_string(n) + " atom rows", lineno + 1);
      std::istringstream ls(line);
      std::string el;
      double x, y, z;
      if (!(ls >> el >> x >> y >> z)) throw ParseError("malformed atom row", lineno);
      int q = 0;
      std::string extra;
      if (ls >> extra) {
        std::size_t pos = 0;
        try {
          q = std::stoi(extra, &pos);
        } catch (const std::logic_error &) {
          pos = 0;
        }
        if (pos != extra.size()) throw ParseError("malformed charge column", lineno);
        any_charge = true;
        if (ls >> extra) throw ParseError("too many columns", lineno);
      }
      if (!vocab.contains(el)) throw UnsupportedElement("line " + std::to_string(lineno) + ": element '" + el + "' is not in the vocabulary");
      elements.push_back(el);
      charges.push_back(q);
      coords.row(i) << x, y, z;
    }
    try {
      out.push_back(Molecule::from_elements(elements, coords, vocab, any_charge ? charges : std::vector<int>{}));
    } catch (const InvalidGeometry &e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

inline std::string read_file(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_file(const std::string &path, const std::string &bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed for '" + path + "'");
}

inline std::vector<Molecule> read_xyz(const std::string &path, const Vocabulary &vocab = {}) {
  return parse_xyz(read_file(path), vocab);
}

inline std::string format_xyz(const std::vector<Molecule> &mols) {
  std::string out;
  char buf[160];
  for (const auto &m : mols) {
    m.validate();
    out += std::to_string(m.size()) + "\n\n";
    bool charged = false;
    for (int i = 0; i < m.size(); ++i) charged |= m.charge(i) != 0;
    for (int i = 0; i < m.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s %.6f %.6f %.6f", m.element_ids[static_cast<std::size_t>(i)].c_str(),
                    m.coords(i, 0), m.coords(i, 1), m.coords(i, 2));
      out += buf;
      if (charged) out += " " + std::to_string(m.charge(i));
      out += "\n";
    }
  }
  return out;
}

inline void write_xyz(const std::vector<Molecule> &mols, const std::string &path) {
  write_file(path, format_xyz(mols));
}

// ---------------------------------------------------------------------------
// Property sidecar: first non-comment line names the columns, then one row
// of values per molecule in corpus order.

struct PropertyTable {
  std::vector<std::string> names;
  Matrix values; // molecules x properties

  Matrix select(const std::vector<std::string> &wanted) const {
    Matrix out(values.rows(), static_cast<Eigen::Index>(wanted.size()));
    for (std::size_t c = 0; c < wanted.size(); ++c) {
      auto it = std::find(names.begin(), names.end(), wanted[c]);
      if (it == names.end()) throw ConfigError("property '" + wanted[c] + "' missing from sidecar");
      out.col(static_cast<Eigen::Index>(c)) = values.col(it - names.begin());
    }
    return out;
  }
};

inline PropertyTable parse_properties(const std::string &text) {
  PropertyTable t;
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (RunConfig::trim(line).empty()) continue;
    std::istringstream ls(line);
    if (t.names.empty()) {
      std::string name;
      while (ls >> name) t.names.push_back(name);
      continue;
    }
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      std::size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(tok, &pos);
      } catch (const std::logic_error &) {
        pos = 0;
      }
      if (pos != tok.size()) throw ParseError("malformed property value '" + tok + "'", lineno);
      row.push_back(v);
    }
    if (row.size() != t.names.size()) throw ParseError("expected " + std::to_string(t.names.size()) + " values", lineno);
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < t.names.size(); ++c) t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return t;
}

inline PropertyTable read_properties(const std::string &path) { return parse_properties(read_file(path)); }

// ---------------------------------------------------------------------------
// Checkpoints
//
// "LMDM" | u32 version | u32 stage | u64 seed | u32 len + config text |
// u32 count | per array: u32 len + name, u32 rank, u64 dims..., f64 values
// All integers and floats little-endian.

enum class Stage : std::uint32_t { ae = 0, diffusion = 1 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Stage stage = Stage::ae;
  std::uint64_t seed = 0;
  std::string config_text;
  ParamStore arrays;

  RunConfig config() const { return RunConfig::parse(config_text); }

  // Throws when a structural key differs from `run`.
  void require_compatible(const RunConfig &run) const {
    auto bad = config().structural_mismatches(run);
    if (bad.empty()) return;
    std::string msg = "checkpoint config mismatch on";
    for (const auto &k : bad) msg += " " + k + " (checkpoint " + config().str(k) + ", run " + run.str(k) + ")";
    throw CheckpointError(msg);
  }
};

namespace detail {

template <class T> void put(std::string &out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.append(b, sizeof(T));
}

class Reader {
public:
  explicit Reader(const std::string &bytes) : s_(bytes) {}
  template <class T> T get() {
    need(sizeof(T));
    char b[sizeof(T)];
    std::memcpy(b, s_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == s_.size(); }

private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  const std::string &s_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize_checkpoint(const Checkpoint &c) {
  std::string out = "LMDM";
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.stage));
  detail::put<std::uint64_t>(out, c.seed);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.config_text.size()));
  out += c.config_text;
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto &[name, m] : c.arrays.arrays()) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put<std::uint32_t>(out, 2);
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put<double>(out, m.data()[i]);
  }
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string &bytes) {
  detail::Reader r(bytes);
  if (r.bytes(4) != "LMDM") throw CheckpointError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const auto stage = r.get<std::uint32_t>();
  if (stage > 1) throw CheckpointError("unknown checkpoint stage " + std::to_string(stage));
  c.stage = static_cast<Stage>(stage);
  c.seed = r.get<std::uint64_t>();
  c.config_text = r.bytes(r.get<std::uint32_t>());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t a = 0; a < count; ++a) {
    std::string name = r.bytes(r.get<std::uint32_t>());
    if (r.get<std::uint32_t>() != 2) throw CheckpointError("array '" + name + "' is not rank 2");
    const auto rows = r.get<std::uint64_t>(), cols = r.get<std::uint64_t>();
    if (rows * cols > bytes.size()) throw CheckpointError("array '" + name + "' larger than file");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
    if (c.arrays.contains(name)) throw CheckpointError("duplicate array '" + name + "'");
    c.arrays.add(name, std::move(m));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

inline void write_checkpoint(const Checkpoint &c, const std::string &path) {
  write_file(path, serialize_checkpoint(c));
}

inline Checkpoint read_checkpoint(const std::string &path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error &e) {
    throw CheckpointError(e.what());
  }
  return deserialize_checkpoint(bytes);
}

} // namespace lmdm
