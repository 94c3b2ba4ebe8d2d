#pragma once

// =============================================================================
// kpbc - scenario files
// =============================================================================
// Versioned JSON scenarios drive simulation and verification runs.  Parsing is
// strict: unknown keys are rejected at every level.
// =============================================================================

#include "kpbc/controllers.hpp"
#include "kpbc/models.hpp"
#include "kpbc/simulate.hpp"
#include "kpbc/types.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kpbc {

/// Exogenous signal description (shared by nu ports and open-loop inputs).
struct SignalSpec {
    std::string kind = "zero";  ///< zero | constant | sine
    Vector value;               ///< constant
    Vector offset;              ///< sine
    Vector amplitude;           ///< sine
    double omega = 1.0;
    double phase = 0.0;

    [[nodiscard]] TimeSignal to_signal(int dim) const;
    [[nodiscard]] TimeSignal to_derivative(int dim) const;
};

struct VerificationBlock {
    std::string property;  ///< krasovskii | differential | shifted | incremental | exactness
    SampleBox box;
    double tolerance = 1e-9;
    int segments = 64;
    std::optional<Matrix> metric;  ///< overrides the model metric
};

struct ConvergenceSpec {
    std::string anchor = "point";  ///< point | zeta-family
    std::optional<Vector> point;   ///< defaults to the model equilibrium state
    double eps = 1e-3;
    double window = 10.0;
    double tag_tol = 1e-6;
};

struct Scenario {
    int schema = 1;
    std::string id;
    std::string model_id;
    nlohmann::json model_params;
    std::string controller_kind;  ///< kpbc | kpbc1 | spbc | open-loop (empty: verify only)
    std::map<std::string, Matrix> gains;
    std::optional<Vector> u_star;  ///< overrides the model equilibrium input
    SignalSpec nu;
    SignalSpec input;  ///< open-loop plant input
    std::optional<Vector> initial_state;
    IntegratorConfig integrator;
    ConvergenceSpec convergence;
    std::vector<VerificationBlock> verification;
    std::string output_dir = ".";
};

/// Parses and validates a scenario document.  Throws ValidationError.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::string& path);

/// Instantiates the scenario's model.
ModelBundle scenario_model(const Scenario& scenario);

/// Builds the closed loop described by the scenario (requires a controller).
ClosedLoopSystem build_closed_loop(const Scenario& scenario, const ModelBundle& model);

/// Convergence anchor for run summaries.
AnchorSet build_anchor(const Scenario& scenario, const ModelBundle& model);

/// Executes one verification block.
PassivityReport run_verification_block(const VerificationBlock& block, const ModelBundle& model,
                                       int workers);

}  // namespace kpbc
