#pragma once

// =============================================================================
// kpbc - closed-loop simulation and trajectory analysis
// =============================================================================

#include "kpbc/controllers.hpp"
#include "kpbc/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kpbc {

enum class IntegrationMethod { RK4, RK45 };

struct IntegratorConfig {
    IntegrationMethod method = IntegrationMethod::RK4;
    double dt = 1e-3;          ///< fixed step (RK4) / initial step (RK45)
    double t_final = 200.0;
    int record_stride = 10;    ///< keep every k-th accepted step
    double rel_tol = 1e-8;     ///< RK45 only
    double abs_tol = 1e-10;    ///< RK45 only
    double dt_min = 1e-10;     ///< RK45 only
    double dt_max = 1.0;       ///< RK45 only

    void validate() const;
};

/// Recorded run: time grid plus state, input, monitor, storage and supply
/// channels, all of equal length and free of NaN/Inf.
struct Trajectory {
    ControllerKind kind = ControllerKind::OpenLoop;
    int plant_dim = 0;
    int input_dim = 0;

    std::vector<double> t;
    std::vector<Vector> z;          ///< composite state
    std::vector<Vector> u_applied;  ///< plant input
    std::vector<Vector> port;       ///< u_K, v, or udot
    std::vector<double> y1;
    std::vector<Vector> y2;
    std::vector<double> y3;
    std::vector<double> storage_plant;  ///< S_K channel
    std::vector<double> storage_total;  ///< S1, S2, or S_K
    std::vector<double> supply;         ///< supply rate samples

    [[nodiscard]] std::size_t size() const { return t.size(); }
};

/// Integration failure; carries the partial trajectory recorded so far.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& what, double t) : Error(what), t(t) {}

    double t;
    Trajectory partial;
};

using FieldFn = std::function<Vector(double, const Vector&)>;

/// One classical Runge-Kutta step.  Throws IntegrationError when a stage
/// evaluates to NaN/Inf.
Vector rk4_step(const FieldFn& field, const Vector& z, double t, double dt);

/// One Dormand-Prince 5(4) trial step.  `error_estimate` is the embedded error
/// scaled by the tolerances (accept when <= 1); `dt_next` applies the standard
/// controller with safety 0.9 and growth clamped to [0.2, 5].
struct Rk45Step {
    Vector z_next;
    double error_estimate = 0.0;  ///< tolerance-scaled norm
    double error_raw = 0.0;       ///< infinity norm of the embedded difference
    double dt_next = 0.0;
};

Rk45Step rk45_step(const FieldFn& field, const Vector& z, double t, double dt, double rel_tol,
                   double abs_tol);

/// Integrates the closed loop from z0 and records all channels.
Trajectory simulate(const ClosedLoopSystem& loop, const Vector& z0, const IntegratorConfig& cfg);

/// Convergence target: a single point or the Zeta equilibrium family
/// x*(v*) = ((v*)^2/a3, v*, v*/a3, v*), v* >= 0; distance is measured on the
/// plant-state block.
struct AnchorSet {
    enum class Kind { Point, ZetaFamily };

    static AnchorSet point(Vector x_star);
    static AnchorSet zeta_family(double alpha3);

    [[nodiscard]] double distance(const Vector& x) const;

    Kind kind = Kind::Point;
    Vector x_star;
    double alpha3 = 1.0;
};

struct RunSummary {
    std::string id;
    bool converged = false;
    double t_converge = 0.0;       ///< end of the first all-good trailing window
    Vector endpoint;
    double distance_to_anchor = 0.0;
    double worst_storage_increase = 0.0;
    bool in_invariant_set = false;
    int oscillation_count = 0;     ///< sign changes of d(distance)/dt
    std::string error;             ///< nonempty when the run failed
};

/// Converged when the distance to the anchor stays below eps over a trailing
/// window of the given duration; t_converge is the end of the first such
/// window.
RunSummary detect_convergence(const Trajectory& traj, const AnchorSet& anchor, double eps,
                              double window);

enum class StorageChannel { Plant, Total };

struct MonotonicityResult {
    double worst_increase = 0.0;
    bool within_slack = true;
};

/// Largest increase of the storage channel between consecutive samples.
MonotonicityResult monotonicity_monitor(const Trajectory& traj, StorageChannel channel,
                                        double slack);

/// detect_convergence plus invariant-set tagging and storage monotonicity.
RunSummary summarize_run(const ClosedLoopSystem& loop, const Trajectory& traj,
                         const AnchorSet& anchor, double eps, double window,
                         double tag_tol = 1e-6);

struct BatchScenario {
    std::string id;
    ClosedLoopSystem loop;
    Vector z0;
    IntegratorConfig integrator;
    AnchorSet anchor;
    double eps = 1e-3;
    double window = 10.0;
    double tag_tol = 1e-6;
};

/// Runs scenarios on up to `workers` threads.  Results are ordered like the
/// input and independent of the worker count; per-scenario failures land in
/// RunSummary::error.
std::vector<RunSummary> batch_run(const std::vector<BatchScenario>& scenarios, int workers);

}  // namespace kpbc
