#include "kpbc/artifacts.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace kpbc {

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::vector<std::string> trajectory_columns(const Trajectory& traj) {
    std::vector<std::string> names;
    names.emplace_back("t");
    for (int i = 1; i <= traj.plant_dim; ++i) {
        names.push_back("x" + std::to_string(i));
    }
    for (int i = 1; i <= traj.input_dim; ++i) {
        names.push_back("u" + std::to_string(i));
    }
    const bool shifted = traj.kind == ControllerKind::ShiftedPBC;
    if (traj.kind != ControllerKind::OpenLoop) {
        for (int i = 1; i <= traj.input_dim; ++i) {
            names.push_back((shifted ? "v" : "uK") + std::to_string(i));
        }
    }
    names.emplace_back("y1");
    for (int i = 1; i <= traj.input_dim; ++i) {
        names.push_back("y2_" + std::to_string(i));
    }
    names.emplace_back("y3");
    names.emplace_back("S_K");
    if (traj.kind != ControllerKind::OpenLoop) {
        names.emplace_back(shifted ? "S2" : "S1");
    }
    return names;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open output file: " + path);
    }
    const std::vector<std::string> names = trajectory_columns(traj);
    for (std::size_t c = 0; c < names.size(); ++c) {
        out << names[c] << (c + 1 < names.size() ? "," : "\n");
    }
    const bool with_port = traj.kind != ControllerKind::OpenLoop;
    for (std::size_t k = 0; k < traj.size(); ++k) {
        std::vector<double> row;
        row.reserve(names.size());
        row.push_back(traj.t[k]);
        const Vector& x = traj.z[k];
        for (int i = 0; i < traj.plant_dim; ++i) {
            row.push_back(x[i]);
        }
        for (int i = 0; i < traj.input_dim; ++i) {
            row.push_back(traj.u_applied[k][i]);
        }
        if (with_port) {
            for (int i = 0; i < traj.input_dim; ++i) {
                row.push_back(traj.port[k][i]);
            }
        }
        row.push_back(traj.y1[k]);
        for (int i = 0; i < traj.input_dim; ++i) {
            row.push_back(traj.y2[k][i]);
        }
        row.push_back(traj.y3[k]);
        row.push_back(traj.storage_plant[k]);
        if (with_port) {
            row.push_back(traj.storage_total[k]);
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << format_double(row[c]) << (c + 1 < row.size() ? "," : "\n");
        }
    }
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open CSV file: " + path);
    }
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) {
        throw Error("CSV file is empty: " + path);
    }
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
        table.header.push_back(cell);
    }
    table.columns.resize(table.header.size());
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream row(line);
        std::size_t c = 0;
        while (std::getline(row, cell, ',')) {
            if (c >= table.columns.size()) {
                throw Error("CSV row has too many cells");
            }
            table.columns[c++].push_back(std::stod(cell));
        }
        if (c != table.columns.size()) {
            throw Error("CSV row has too few cells");
        }
    }
    return table;
}

nlohmann::json summary_to_json(const RunSummary& summary) {
    nlohmann::json j;
    j["id"] = summary.id;
    j["converged"] = summary.converged;
    j["t_converge"] = summary.t_converge;
    j["distance_to_anchor"] = summary.distance_to_anchor;
    j["worst_storage_increase"] = summary.worst_storage_increase;
    j["in_invariant_set"] = summary.in_invariant_set;
    j["oscillation_count"] = summary.oscillation_count;
    j["endpoint"] = std::vector<double>(summary.endpoint.begin(), summary.endpoint.end());
    j["error"] = summary.error;
    return j;
}

nlohmann::json report_to_json(const PassivityReport& report) {
    nlohmann::json j;
    j["property"] = report.property;
    j["samples"] = report.samples;
    j["violations"] = report.violations;
    j["identity_violations"] = report.identity_violations;
    j["evaluation_failures"] = report.evaluation_failures;
    j["worst_margin"] = report.worst_margin;
    j["worst_identity_residual"] = report.worst_identity_residual;
    j["tolerance"] = report.tolerance;
    j["seed"] = report.seed;
    nlohmann::json witnesses = nlohmann::json::array();
    for (const Witness& w : report.witnesses) {
        nlohmann::json item;
        item["point"] = std::vector<double>(w.point.begin(), w.point.end());
        if (std::isfinite(w.margin)) {
            item["margin"] = w.margin;
        } else {
            item["margin"] = nullptr;
        }
        item["index"] = w.index;
        witnesses.push_back(std::move(item));
    }
    j["witnesses"] = std::move(witnesses);
    return j;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open output file: " + path);
    }
    out << content;
}

std::string plot_script(const std::string& csv_filename, const Trajectory& traj) {
    const std::vector<std::string> names = trajectory_columns(traj);
    std::ostringstream py;
    py << "#!/usr/bin/env python3\n"
       << "\"\"\"Plots the trajectory CSV written next to this script.\"\"\"\n"
       << "import csv\n"
       << "import matplotlib.pyplot as plt\n\n"
       << "rows = list(csv.DictReader(open(" << std::quoted(csv_filename) << ")))\n"
       << "col = lambda name: [float(r[name]) for r in rows]\n"
       << "t = col(\"t\")\n\n"
       << "fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8, 9))\n";
    py << "for name in [";
    for (int i = 1; i <= traj.plant_dim; ++i) {
        py << "\"x" << i << "\", ";
    }
    py << "]:\n"
       << "    axes[0].plot(t, col(name), label=name)\n"
       << "axes[0].set_ylabel(\"state\")\n"
       << "axes[0].legend(loc=\"best\")\n";
    py << "for name in [";
    for (int i = 1; i <= traj.input_dim; ++i) {
        py << "\"u" << i << "\", ";
    }
    if (traj.kind != ControllerKind::OpenLoop) {
        const bool shifted = traj.kind == ControllerKind::ShiftedPBC;
        for (int i = 1; i <= traj.input_dim; ++i) {
            py << "\"" << (shifted ? "v" : "uK") << i << "\", ";
        }
    }
    py << "]:\n"
       << "    axes[1].plot(t, col(name), label=name)\n"
       << "axes[1].set_ylabel(\"input\")\n"
       << "axes[1].legend(loc=\"best\")\n";
    py << "for name in [\"y1\", \"S_K\"";
    if (traj.kind != ControllerKind::OpenLoop) {
        py << ", \"" << (traj.kind == ControllerKind::ShiftedPBC ? "S2" : "S1") << "\"";
    }
    py << "]:\n"
       << "    axes[2].plot(t, col(name), label=name)\n"
       << "axes[2].set_ylabel(\"storage / monitors\")\n"
       << "axes[2].set_xlabel(\"t\")\n"
       << "axes[2].legend(loc=\"best\")\n\n"
       << "fig.tight_layout()\n"
       << "plt.show()\n";
    return py.str();
}

}  // namespace kpbc
