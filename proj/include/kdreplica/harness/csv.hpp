#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kdreplica/harness/sweep.hpp"

namespace kdreplica {

/// Column order of every sweep CSV: parameters, mode, replica block,
/// empirical block, status. Wall times go to a separate file so that the
/// table itself is a pure function of the spec.
inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c;
    for (auto f : ModelParams::kFieldNames) c.emplace_back(f);
    for (const char* s :
         {"mode", "m", "q", "dq", "s", "ds", "b", "eg", "phi", "converged",
          "iterations", "m_t", "q_t", "dq_t", "b_t", "eg_t", "train_loss",
          "out_mse", "pre_mse", "n_dim", "n_seeds", "n_converged"}) {
      c.emplace_back(s);
    }
    for (const char* s : {"emp_m", "emp_q", "emp_s", "emp_b", "emp_eg",
                          "emp_eg_formula", "emp_m_t", "emp_q_t", "emp_b_t",
                          "emp_eg_t", "emp_loss", "emp_norm", "emp_out_mse",
                          "emp_pre_mse", "emp_iterations"}) {
      c.emplace_back(s);
      c.emplace_back(std::string(s) + "_se");
    }
    c.emplace_back("status");
    return c;
  }();
  return cols;
}

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace detail {

inline std::string opt_field(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string();
}

inline void push_stat(std::vector<std::string>& row, const std::optional<Stat>& s) {
  row.push_back(s ? format_real(s->mean) : "");
  row.push_back(s ? format_real(s->se) : "");
}

}  // namespace detail

inline std::vector<std::string> csv_fields(const SweepRecord& r) {
  std::vector<std::string> row;
  for (auto f : ModelParams::kFieldNames) row.push_back(format_real(r.params.get(f)));
  row.emplace_back(mode_name(r.mode));
  if (r.replica) {
    const auto& b = *r.replica;
    row.push_back(format_real(b.m));
    row.push_back(format_real(b.q));
    row.push_back(detail::opt_field(b.dq));
    row.push_back(detail::opt_field(b.s));
    row.push_back(detail::opt_field(b.ds));
    row.push_back(format_real(b.b));
    row.push_back(format_real(b.eg));
    row.push_back(detail::opt_field(b.phi));
  } else {
    row.insert(row.end(), 8, "");
  }
  row.emplace_back(r.converged ? "1" : "0");
  row.push_back(r.replica && r.replica->iterations
                    ? std::to_string(*r.replica->iterations)
                    : "");
  if (r.replica) {
    const auto& b = *r.replica;
    for (const auto& v : {b.m_t, b.q_t, b.dq_t, b.b_t, b.eg_t, b.train_loss,
                          b.out_mse, b.pre_mse}) {
      row.push_back(detail::opt_field(v));
    }
  } else {
    row.insert(row.end(), 8, "");
  }
  if (r.empirical) {
    const auto& e = *r.empirical;
    row.push_back(std::to_string(e.n_dim));
    row.push_back(std::to_string(e.n_seeds));
    row.push_back(std::to_string(e.n_converged));
    for (const auto& s : {e.m, e.q, e.s, e.b, e.eg, e.eg_formula, e.m_t, e.q_t,
                          e.b_t, e.eg_t, e.loss, e.norm, e.out_mse, e.pre_mse,
                          e.iterations}) {
      detail::push_stat(row, s);
    }
  } else {
    row.insert(row.end(), 3 + 30, "");
  }
  row.push_back(r.status);
  return row;
}

inline std::string join_csv(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

inline std::string csv_header() { return join_csv(csv_columns()); }
inline std::string csv_row(const SweepRecord& r) { return join_csv(csv_fields(r)); }

/// A CSV file read back by column name.
class CsvTable {
 public:
  static CsvTable parse(std::istream& in, const std::string& origin = "") {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error("csv: empty file " + origin);
    }
    t.header_ = split(line);
    for (std::size_t i = 0; i < t.header_.size(); ++i) t.index_[t.header_[i]] = i;
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto row = split(line);
      if (row.size() != t.header_.size()) {
        throw std::runtime_error("csv: " + origin + ":" + std::to_string(lineno) +
                                 " has " + std::to_string(row.size()) +
                                 " fields, header has " +
                                 std::to_string(t.header_.size()));
      }
      t.rows_.push_back(std::move(row));
    }
    return t;
  }

  static CsvTable load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("csv: cannot read '" + path + "'");
    return parse(f, path);
  }

  std::size_t size() const { return rows_.size(); }
  bool has_column(const std::string& name) const { return index_.count(name) != 0; }

  const std::string& field(std::size_t row, const std::string& col) const {
    auto it = index_.find(col);
    if (it == index_.end()) throw std::runtime_error("csv: no column '" + col + "'");
    return rows_.at(row)[it->second];
  }

  std::optional<double> number(std::size_t row, const std::string& col) const {
    const std::string& s = field(row, col);
    if (s.empty()) return std::nullopt;
    return std::stod(s);
  }

  const std::vector<std::string>& header() const { return header_; }

 private:
  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    out.push_back(cur);
    return out;
  }

  std::vector<std::string> header_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace kdreplica
