#include "kpbc/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

namespace kpbc {

void IntegratorConfig::validate() const {
    if (dt <= 0.0) throw ConfigError("dt must be positive");
    if (t_final <= 0.0) throw ConfigError("t_final must be positive");
    if (record_stride < 1) throw ConfigError("record_stride must be >= 1");
    if (method == IntegrationMethod::RK45) {
        if (rel_tol <= 0.0 || abs_tol <= 0.0) throw ConfigError("tolerances must be positive");
        if (dt_min <= 0.0 || dt_min > dt_max) throw ConfigError("need 0 < dt_min <= dt_max");
    }
}

namespace {

Vector eval_stage(const FieldFn& field, double t, const Vector& z) {
    Vector d = field(t, z);
    if (!d.allFinite()) {
        std::ostringstream msg;
        msg << "vector field is not finite at t=" << t;
        throw IntegrationError(msg.str(), t);
    }
    return d;
}

}  // namespace

Vector rk4_step(const FieldFn& field, const Vector& z, double t, double dt) {
    const Vector k1 = eval_stage(field, t, z);
    const Vector k2 = eval_stage(field, t + 0.5 * dt, z + 0.5 * dt * k1);
    const Vector k3 = eval_stage(field, t + 0.5 * dt, z + 0.5 * dt * k2);
    const Vector k4 = eval_stage(field, t + dt, z + dt * k3);
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Rk45Step rk45_step(const FieldFn& field, const Vector& z, double t, double dt, double rel_tol,
                   double abs_tol) {
    // Dormand-Prince 5(4) tableau.
    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                        e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                        e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

    const Vector k1 = eval_stage(field, t, z);
    const Vector k2 = eval_stage(field, t + c2 * dt, z + dt * (a21 * k1));
    const Vector k3 = eval_stage(field, t + c3 * dt, z + dt * (a31 * k1 + a32 * k2));
    const Vector k4 = eval_stage(field, t + c4 * dt, z + dt * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vector k5 = eval_stage(field, t + c5 * dt,
                                 z + dt * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vector k6 = eval_stage(
        field, t + dt, z + dt * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vector z5 = z + dt * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vector k7 = eval_stage(field, t + dt, z5);

    const Vector err = dt * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double norm = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double scale = abs_tol + rel_tol * std::max(std::abs(z[i]), std::abs(z5[i]));
        const double e = err[i] / scale;
        norm += e * e;
    }
    norm = std::sqrt(norm / static_cast<double>(std::max<Eigen::Index>(1, z.size())));

    Rk45Step result;
    result.z_next = z5;
    result.error_estimate = norm;
    result.error_raw = err.lpNorm<Eigen::Infinity>();
    const double factor =
        (norm == 0.0) ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);
    result.dt_next = dt * factor;
    return result;
}

namespace {

void record_sample(Trajectory& traj, const ClosedLoopSystem& loop, double t, const Vector& z) {
    const Vector u = loop.plant_input(t, z);
    const Vector port = loop.port_signal(t, z);
    const MonitorOutputs mon = loop.monitors(t, z);
    const double sk = loop.storage_plant(t, z);
    const double st = loop.storage_total(t, z);
    const double w = loop.supply_rate(t, z);
    const bool finite = z.allFinite() && u.allFinite() && port.allFinite() &&
                        mon.y2.allFinite() && std::isfinite(mon.y1) && std::isfinite(mon.y3) &&
                        std::isfinite(sk) && std::isfinite(st) && std::isfinite(w);
    if (!finite) {
        std::ostringstream msg;
        msg << "non-finite sample at t=" << t;
        throw IntegrationError(msg.str(), t);
    }
    traj.t.push_back(t);
    traj.z.push_back(z);
    traj.u_applied.push_back(u);
    traj.port.push_back(port);
    traj.y1.push_back(mon.y1);
    traj.y2.push_back(mon.y2);
    traj.y3.push_back(mon.y3);
    traj.storage_plant.push_back(sk);
    traj.storage_total.push_back(st);
    traj.supply.push_back(w);
}

}  // namespace

Trajectory simulate(const ClosedLoopSystem& loop, const Vector& z0, const IntegratorConfig& cfg) {
    cfg.validate();
    require(z0.size() == loop.dim, "initial state has wrong dimension");

    Trajectory traj;
    traj.kind = loop.kind;
    traj.plant_dim = loop.plant_dim;
    traj.input_dim = loop.input_dim;

    try {
        record_sample(traj, loop, 0.0, z0);
        Vector z = z0;

        if (cfg.method == IntegrationMethod::RK4) {
            const std::int64_t steps =
                static_cast<std::int64_t>(std::ceil(cfg.t_final / cfg.dt - 1e-12));
            for (std::int64_t k = 0; k < steps; ++k) {
                const double t = static_cast<double>(k) * cfg.dt;
                const double dt = std::min(cfg.dt, cfg.t_final - t);
                z = rk4_step(loop.field, z, t, dt);
                const double t_next =
                    (k + 1 == steps) ? cfg.t_final : static_cast<double>(k + 1) * cfg.dt;
                if ((k + 1) % cfg.record_stride == 0 || k + 1 == steps) {
                    record_sample(traj, loop, t_next, z);
                }
            }
        } else {
            double t = 0.0;
            double dt = std::clamp(cfg.dt, cfg.dt_min, cfg.dt_max);
            std::int64_t accepted = 0;
            while (t < cfg.t_final - 1e-14) {
                dt = std::min(dt, cfg.t_final - t);
                const Rk45Step step = rk45_step(loop.field, z, t, dt, cfg.rel_tol, cfg.abs_tol);
                if (step.error_estimate <= 1.0) {
                    t += dt;
                    z = step.z_next;
                    ++accepted;
                    if (accepted % cfg.record_stride == 0 || t >= cfg.t_final - 1e-14) {
                        record_sample(traj, loop, t, z);
                    }
                    dt = std::clamp(step.dt_next, cfg.dt_min, cfg.dt_max);
                } else {
                    if (dt <= cfg.dt_min * (1.0 + 1e-12)) {
                        std::ostringstream msg;
                        msg << "step size underflow at t=" << t
                            << " (error estimate " << step.error_estimate << " at dt_min)";
                        throw IntegrationError(msg.str(), t);
                    }
                    dt = std::max(cfg.dt_min, step.dt_next);
                }
            }
        }
    } catch (IntegrationError& err) {
        err.partial = std::move(traj);
        throw;
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Trajectory analysis
// ---------------------------------------------------------------------------

AnchorSet AnchorSet::point(Vector x_star) {
    AnchorSet a;
    a.kind = Kind::Point;
    a.x_star = std::move(x_star);
    return a;
}

AnchorSet AnchorSet::zeta_family(double alpha3) {
    require(alpha3 > 0.0, "alpha3 must be positive");
    AnchorSet a;
    a.kind = Kind::ZetaFamily;
    a.alpha3 = alpha3;
    return a;
}

namespace {

double zeta_family_distance(const Vector& x, double alpha3) {
    require(x.size() == 4, "zeta family distance expects a 4-dimensional state");
    auto dist = [&](double vs) {
        const double d0 = x[0] - vs * vs / alpha3;
        const double d1 = x[1] - vs;
        const double d2 = x[2] - vs / alpha3;
        const double d3 = x[3] - vs;
        return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3);
    };
    // Coarse scan over v* >= 0 followed by golden-section refinement.
    const double v_max = std::max(1.0, 2.0 * x.cwiseAbs().maxCoeff() * std::max(1.0, alpha3));
    const int coarse = 256;
    double best_v = 0.0;
    double best = dist(0.0);
    for (int k = 1; k <= coarse; ++k) {
        const double vs = v_max * static_cast<double>(k) / coarse;
        const double d = dist(vs);
        if (d < best) {
            best = d;
            best_v = vs;
        }
    }
    double lo = std::max(0.0, best_v - v_max / coarse);
    double hi = std::min(v_max, best_v + v_max / coarse);
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = hi - gr * (hi - lo);
    double b = lo + gr * (hi - lo);
    double fa = dist(a);
    double fb = dist(b);
    for (int it = 0; it < 80 && (hi - lo) > 1e-14; ++it) {
        if (fa < fb) {
            hi = b;
            b = a;
            fb = fa;
            a = hi - gr * (hi - lo);
            fa = dist(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + gr * (hi - lo);
            fb = dist(b);
        }
    }
    return std::min({best, fa, fb});
}

}  // namespace

double AnchorSet::distance(const Vector& x) const {
    if (kind == Kind::Point) {
        require(x.size() == x_star.size(), "state has wrong dimension");
        return (x - x_star).norm();
    }
    return zeta_family_distance(x, alpha3);
}

RunSummary detect_convergence(const Trajectory& traj, const AnchorSet& anchor, double eps,
                              double window) {
    require(traj.size() > 0, "empty trajectory");
    require(eps > 0.0 && window >= 0.0, "need eps > 0 and window >= 0");

    const std::size_t count = traj.size();
    std::vector<double> dist(count);
    for (std::size_t k = 0; k < count; ++k) {
        dist[k] = anchor.distance(traj.z[k].head(traj.plant_dim));
    }

    RunSummary summary;
    summary.endpoint = traj.z.back();
    summary.distance_to_anchor = dist.back();

    const double t0 = traj.t.front();
    double bad_last = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count; ++k) {
        if (dist[k] >= eps) {
            bad_last = traj.t[k];
            continue;
        }
        const double window_start = traj.t[k] - window;
        if (window_start >= bad_last && window_start >= t0 - 1e-12 && !summary.converged) {
            summary.converged = true;
            summary.t_converge = traj.t[k];
        }
    }

    // Oscillation metric: sign changes of the discrete derivative of the
    // distance channel.  The deadband is scaled by the trajectory's distance
    // range so that jitter at the convergence floor is not counted.
    double dist_max = 0.0;
    for (double d : dist) {
        dist_max = std::max(dist_max, d);
    }
    const double deadband = 1e-9 * (1.0 + dist_max);
    int changes = 0;
    int prev_sign = 0;
    for (std::size_t k = 1; k < count; ++k) {
        const double diff = dist[k] - dist[k - 1];
        if (std::abs(diff) <= deadband) {
            continue;
        }
        const int sign = diff > 0.0 ? 1 : -1;
        if (prev_sign != 0 && sign != prev_sign) {
            ++changes;
        }
        prev_sign = sign;
    }
    summary.oscillation_count = changes;
    return summary;
}

MonotonicityResult monotonicity_monitor(const Trajectory& traj, StorageChannel channel,
                                        double slack) {
    const std::vector<double>& s =
        channel == StorageChannel::Plant ? traj.storage_plant : traj.storage_total;
    MonotonicityResult result;
    result.worst_increase = 0.0;
    for (std::size_t k = 1; k < s.size(); ++k) {
        result.worst_increase = std::max(result.worst_increase, s[k] - s[k - 1]);
    }
    result.within_slack = result.worst_increase <= slack;
    return result;
}

RunSummary summarize_run(const ClosedLoopSystem& loop, const Trajectory& traj,
                         const AnchorSet& anchor, double eps, double window, double tag_tol) {
    RunSummary summary = detect_convergence(traj, anchor, eps, window);
    summary.worst_storage_increase =
        monotonicity_monitor(traj, StorageChannel::Total, 0.0).worst_increase;
    summary.in_invariant_set = loop.invariant_set_tag(traj.z.back(), tag_tol);
    return summary;
}

std::vector<RunSummary> batch_run(const std::vector<BatchScenario>& scenarios, int workers) {
    std::vector<RunSummary> results(scenarios.size());
    if (scenarios.empty()) {
        return results;
    }
    workers = std::clamp<int>(workers, 1, static_cast<int>(scenarios.size()));

    auto run_one = [&](std::size_t i) {
        const BatchScenario& sc = scenarios[i];
        RunSummary summary;
        summary.id = sc.id;
        try {
            const Trajectory traj = simulate(sc.loop, sc.z0, sc.integrator);
            summary = summarize_run(sc.loop, traj, sc.anchor, sc.eps, sc.window, sc.tag_tol);
            summary.id = sc.id;
        } catch (const Error& err) {
            summary.converged = false;
            summary.error = err.what();
        }
        results[i] = std::move(summary);
    };

    if (workers == 1) {
        for (std::size_t i = 0; i < scenarios.size(); ++i) {
            run_one(i);
        }
        return results;
    }

    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&, w]() {
            try {
                for (std::size_t i = static_cast<std::size_t>(w); i < scenarios.size();
                     i += static_cast<std::size_t>(workers)) {
                    run_one(i);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    for (const auto& err : errors) {
        if (err) {
            std::rethrow_exception(err);
        }
    }
    return results;
}

}  // namespace kpbc
