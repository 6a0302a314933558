#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include "kdreplica/harness/config.hpp"
#include "kdreplica/harness/csv.hpp"
#include "kdreplica/harness/sweep.hpp"

namespace kdreplica {

struct SweepSummary {
  std::size_t rows = 0;
  std::size_t failed_rows = 0;  // status other than "ok"
};

/// Runs `spec` and writes the table to `out` (stdout when empty). Next to a
/// file output it writes `<out>.config` with the resolved configuration and
/// `<out>.timing.csv` with per-row wall times.
inline SweepSummary write_sweep(const SweepSpec& spec, const Config& resolved,
                                const std::string& out, int workers) {
  std::ofstream file, timing;
  std::ostream* os = &std::cout;
  if (!out.empty()) {
    const auto parent = std::filesystem::path(out).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    file.open(out);
    if (!file) throw std::runtime_error("cannot write '" + out + "'");
    os = &file;
    std::ofstream cfg(out + ".config");
    cfg << resolved.dump();
    timing.open(out + ".timing.csv");
    timing << "row,index,mode,wall_time_s\n";
  }
  *os << csv_header() << '\n';
  SweepSummary summary;
  run_sweep(spec, workers, [&](const SweepRecord& r) {
    *os << csv_row(r) << '\n';
    os->flush();
    if (timing.is_open()) {
      timing << summary.rows << ',' << r.index << ',' << mode_name(r.mode) << ','
             << format_real(r.wall_time) << '\n';
    }
    if (r.status != "ok") {
      ++summary.failed_rows;
      std::cerr << "row " << summary.rows << " (" << mode_name(r.mode)
                << "): " << r.status;
      if (!r.message.empty()) std::cerr << ": " << r.message;
      std::cerr << '\n';
    }
    ++summary.rows;
  });
  return summary;
}

}  // namespace kdreplica
