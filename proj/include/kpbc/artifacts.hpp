#pragma once

// =============================================================================
// kpbc - run artifacts (CSV trajectories, JSON summaries/reports, plot script)
// =============================================================================
// Doubles are serialized with 17 significant digits so that parsing an emitted
// CSV reproduces the recorded samples exactly.
// =============================================================================

#include "kpbc/analysis.hpp"
#include "kpbc/simulate.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace kpbc {

/// Shortest-round-trip decimal form of a double (17 significant digits).
std::string format_double(double value);

/// Fixed CSV column names for a trajectory:
///   t, x1..xn, u1..um, then uK1..uKm (kpbc/kpbc1) or v1..vm (spbc),
///   y1, y2_1.., y3, S_K, and S1 (kpbc/kpbc1) or S2 (spbc).
/// Open-loop runs have no port or total-storage column.
std::vector<std::string> trajectory_columns(const Trajectory& traj);

void write_trajectory_csv(const std::string& path, const Trajectory& traj);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;  ///< column major
};

CsvTable read_csv(const std::string& path);

nlohmann::json summary_to_json(const RunSummary& summary);
nlohmann::json report_to_json(const PassivityReport& report);

void write_text_file(const std::string& path, const std::string& content);

/// Matplotlib script that consumes only the named CSV file.
std::string plot_script(const std::string& csv_filename, const Trajectory& traj);

}  // namespace kpbc
