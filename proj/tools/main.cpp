// kpbc command line: scenario-driven simulation, passivity verification, and
// equilibrium solving.
//
// Exit codes: 0 success; 2 integration/solver failure; 3 validation failure;
// 4 verification violations.

#include "kpbc/artifacts.hpp"
#include "kpbc/models.hpp"
#include "kpbc/scenario.hpp"
#include "kpbc/simulate.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIntegration = 2;
constexpr int kExitValidation = 3;
constexpr int kExitViolations = 4;

int worker_budget() {
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) {
        workers = 1;
    }
    if (const char* env = std::getenv("KPBC_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1) {
                workers = std::min(workers, cap);
            }
        } catch (const std::exception&) {
            std::cerr << "warning: ignoring invalid KPBC_THREADS value\n";
        }
    }
    return workers;
}

struct Overrides {
    std::optional<double> dt;
    std::optional<double> t_final;
    std::optional<std::int64_t> seed;
};

void apply_overrides(kpbc::Scenario& scenario, const Overrides& ov) {
    if (ov.dt) {
        scenario.integrator.dt = *ov.dt;
    }
    if (ov.t_final) {
        scenario.integrator.t_final = *ov.t_final;
    }
    if (ov.seed) {
        for (auto& block : scenario.verification) {
            block.box.seed = static_cast<std::uint64_t>(*ov.seed);
        }
    }
    scenario.integrator.validate();
}

std::filesystem::path output_directory(const kpbc::Scenario& scenario,
                                       const std::string& out_flag) {
    std::filesystem::path dir = out_flag.empty() ? scenario.output_dir : out_flag;
    std::filesystem::create_directories(dir);
    return dir;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_flag,
                 const Overrides& ov) {
    kpbc::Scenario scenario;
    kpbc::ModelBundle model;
    kpbc::ClosedLoopSystem loop;
    kpbc::Vector z0;
    std::filesystem::path dir;
    try {
        scenario = kpbc::load_scenario(scenario_path);
        apply_overrides(scenario, ov);
        model = kpbc::scenario_model(scenario);
        loop = kpbc::build_closed_loop(scenario, model);
        if (!scenario.initial_state) {
            throw kpbc::ValidationError("simulate requires an initial_state");
        }
        z0 = *scenario.initial_state;
        if (z0.size() != loop.dim) {
            throw kpbc::ValidationError("initial_state has wrong dimension");
        }
        dir = output_directory(scenario, out_flag);
    } catch (const kpbc::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitValidation;
    }

    const auto csv_path = dir / (scenario.id + "_trajectory.csv");
    const auto summary_path = dir / (scenario.id + "_summary.json");
    const auto plot_path = dir / (scenario.id + "_plot.py");

    kpbc::Trajectory traj;
    std::string failure;
    try {
        traj = kpbc::simulate(loop, z0, scenario.integrator);
    } catch (const kpbc::IntegrationError& err) {
        failure = err.what();
        traj = err.partial;
    } catch (const kpbc::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitValidation;
    }

    kpbc::RunSummary summary;
    summary.id = scenario.id;
    if (traj.size() > 0) {
        const kpbc::AnchorSet anchor = kpbc::build_anchor(scenario, model);
        summary = kpbc::summarize_run(loop, traj, anchor, scenario.convergence.eps,
                                      scenario.convergence.window, scenario.convergence.tag_tol);
        summary.id = scenario.id;
        kpbc::write_trajectory_csv(csv_path.string(), traj);
        kpbc::write_text_file(plot_path.string(),
                              kpbc::plot_script(csv_path.filename().string(), traj));
    }
    summary.error = failure;
    kpbc::write_text_file(summary_path.string(), kpbc::summary_to_json(summary).dump(2) + "\n");

    if (!failure.empty()) {
        std::cerr << "error: " << failure << "\n";
        return kExitIntegration;
    }
    std::cout << kpbc::summary_to_json(summary).dump(2) << "\n";
    return kExitOk;
}

int cmd_verify(const std::string& scenario_path, const std::string& out_flag,
               const Overrides& ov) {
    kpbc::Scenario scenario;
    kpbc::ModelBundle model;
    std::filesystem::path dir;
    try {
        scenario = kpbc::load_scenario(scenario_path);
        apply_overrides(scenario, ov);
        model = kpbc::scenario_model(scenario);
        if (scenario.verification.empty()) {
            throw kpbc::ValidationError("verify requires at least one verification block");
        }
        dir = output_directory(scenario, out_flag);
    } catch (const kpbc::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitValidation;
    }

    const int workers = worker_budget();
    nlohmann::json reports = nlohmann::json::array();
    bool clean = true;
    try {
        for (const auto& block : scenario.verification) {
            const kpbc::PassivityReport report =
                kpbc::run_verification_block(block, model, workers);
            clean = clean && report.clean();
            reports.push_back(kpbc::report_to_json(report));
        }
    } catch (const kpbc::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitValidation;
    }

    const auto report_path = dir / (scenario.id + "_report.json");
    kpbc::write_text_file(report_path.string(), reports.dump(2) + "\n");
    std::cout << reports.dump(2) << "\n";
    return clean ? kExitOk : kExitViolations;
}

int cmd_equilibrium(const std::string& model_id, std::optional<double> v_star,
                    const std::vector<std::string>& params, const std::string& x0_csv,
                    const std::string& u0_csv, bool free_input) {
    nlohmann::json param_json = nlohmann::json::object();
    try {
        for (const std::string& kv : params) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw kpbc::ValidationError("--param expects key=value, got: " + kv);
            }
            param_json[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        }
        if (v_star) {
            param_json["v_star"] = *v_star;
        }
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitValidation;
    }

    kpbc::ModelBundle model;
    try {
        model = kpbc::make_model(model_id, param_json);
    } catch (const kpbc::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitValidation;
    }

    auto parse_csv_vector = [](const std::string& text) {
        std::vector<double> values;
        std::stringstream ss(text);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::stod(cell));
        }
        kpbc::Vector v(static_cast<Eigen::Index>(values.size()));
        for (std::size_t i = 0; i < values.size(); ++i) {
            v[static_cast<Eigen::Index>(i)] = values[i];
        }
        return v;
    };

    kpbc::EquilibriumPair eq;
    try {
        if (model_id == "zeta" && x0_csv.empty()) {
            // Closed form.
            eq = model.anchor;
        } else {
            const kpbc::Vector x0 = x0_csv.empty()
                                        ? kpbc::Vector::Zero(model.system.state_dim)
                                        : parse_csv_vector(x0_csv);
            const kpbc::Vector u0 = u0_csv.empty()
                                        ? kpbc::Vector::Zero(model.system.input_dim)
                                        : parse_csv_vector(u0_csv);
            eq = kpbc::find_equilibrium(model.system, x0, u0,
                                        free_input ? kpbc::EquilibriumMode::FreeInput
                                                   : kpbc::EquilibriumMode::FixInput);
        }
    } catch (const kpbc::SolverError& err) {
        std::cerr << "error: " << err.what() << " (residual " << err.residual << ")\n";
        return kExitIntegration;
    } catch (const kpbc::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitValidation;
    }

    nlohmann::json out;
    out["model"] = model_id;
    out["x_star"] = std::vector<double>(eq.x_star.begin(), eq.x_star.end());
    out["u_star"] = std::vector<double>(eq.u_star.begin(), eq.u_star.end());
    out["residual"] = eq.residual;
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Krasovskii / shifted passivity analysis and control"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string out_dir;
    Overrides ov;
    double dt_flag = 0.0;
    double t_final_flag = 0.0;
    std::int64_t seed_flag = 0;

    auto add_common = [&](CLI::App* cmd, bool with_overrides) {
        cmd->add_option("--scenario", scenario_path, "scenario JSON file")->required();
        cmd->add_option("--out", out_dir, "output directory (overrides scenario)");
        cmd->add_option("--seed", seed_flag, "override verification seeds");
        if (with_overrides) {
            cmd->add_option("--dt", dt_flag, "override integrator step");
            cmd->add_option("--t-final", t_final_flag, "override time horizon");
        }
    };

    CLI::App* simulate = app.add_subcommand("simulate", "integrate a closed-loop scenario");
    add_common(simulate, true);

    CLI::App* verify = app.add_subcommand("verify", "run passivity verification blocks");
    add_common(verify, false);

    CLI::App* equilibrium = app.add_subcommand("equilibrium", "solve for an equilibrium pair");
    std::string model_id;
    double v_star_flag = 0.0;
    std::vector<std::string> params;
    std::string x0_csv;
    std::string u0_csv;
    bool free_input = false;
    equilibrium->add_option("--model", model_id, "model id (zeta, cuberoot, linear:<preset>)")
        ->required();
    equilibrium->add_option("--vstar", v_star_flag, "desired load voltage (zeta)");
    equilibrium->add_option("--param", params, "model parameter key=value");
    equilibrium->add_option("--x0", x0_csv, "initial state guess, comma separated");
    equilibrium->add_option("--u0", u0_csv, "initial input guess, comma separated");
    equilibrium->add_flag("--free-u", free_input, "solve for the input as well");

    CLI11_PARSE(app, argc, argv);

    if (simulate->parsed()) {
        if (simulate->count("--dt")) ov.dt = dt_flag;
        if (simulate->count("--t-final")) ov.t_final = t_final_flag;
        if (simulate->count("--seed")) ov.seed = seed_flag;
        return cmd_simulate(scenario_path, out_dir, ov);
    }
    if (verify->parsed()) {
        if (verify->count("--seed")) ov.seed = seed_flag;
        return cmd_verify(scenario_path, out_dir, ov);
    }
    return cmd_equilibrium(model_id, equilibrium->count("--vstar") ? std::optional(v_star_flag)
                                                                   : std::nullopt,
                           params, x0_csv, u0_csv, free_input);
}
