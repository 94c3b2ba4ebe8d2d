#include "kpbc/controllers.hpp"

#include <cmath>
#include <sstream>

namespace kpbc {

TimeSignal zero_signal(int dim) {
    return [dim](double) { return Vector::Zero(dim); };
}

namespace {

Matrix as_square(Matrix k, int m, const char* name) {
    if (k.size() == 1 && m == 1) {
        return k;
    }
    if (k.rows() != m || k.cols() != m) {
        std::ostringstream msg;
        msg << name << " must be " << m << "x" << m;
        throw ConfigError(msg.str());
    }
    return k;
}

Matrix symmetrize(Matrix k, const char* name, std::vector<std::string>& warnings) {
    const double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12) {
        std::ostringstream msg;
        msg << name << " symmetrized (asymmetry " << asym << ")";
        warnings.push_back(msg.str());
    }
    return 0.5 * (k + k.transpose());
}

std::pair<Matrix, Eigen::LLT<Matrix>> require_spd(Matrix k, int m, const char* name,
                                                  std::vector<std::string>& warnings) {
    k = symmetrize(as_square(std::move(k), m, name), name, warnings);
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) {
        throw ConfigError(std::string(name) + " must be symmetric positive definite");
    }
    return {std::move(k), std::move(llt)};
}

Matrix require_psd(Matrix k, int m, const char* name, std::vector<std::string>& warnings) {
    k = symmetrize(as_square(std::move(k), m, name), name, warnings);
    Eigen::SelfAdjointEigenSolver<Matrix> es(k, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-12) {
        throw ConfigError(std::string(name) + " must be symmetric positive semidefinite");
    }
    return k;
}

TimeSignal signal_or_zero(TimeSignal s, int dim) {
    return s ? std::move(s) : zero_signal(dim);
}

}  // namespace

KrasovskiiPBCConfig make_kpbc_config(Matrix K1, Matrix K2, Matrix K3, Vector u_star,
                                     TimeSignal nu1) {
    const int m = static_cast<int>(u_star.size());
    require(m >= 1, "setpoint input must be nonempty");
    KrasovskiiPBCConfig cfg;
    auto [k1, factor] = require_spd(std::move(K1), m, "K1", cfg.warnings);
    cfg.K1 = std::move(k1);
    cfg.K1_factor = std::move(factor);
    cfg.K2 = require_psd(std::move(K2), m, "K2", cfg.warnings);
    cfg.K3 = require_psd(std::move(K3), m, "K3", cfg.warnings);
    cfg.u_star = std::move(u_star);
    cfg.nu1 = signal_or_zero(std::move(nu1), m);
    return cfg;
}

FirstOrderKPBCConfig make_kpbc1_config(Matrix K2, Matrix K3, Vector u_star, TimeSignal nu1) {
    const int m = static_cast<int>(u_star.size());
    require(m >= 1, "setpoint input must be nonempty");
    FirstOrderKPBCConfig cfg;
    auto [k2, factor] = require_spd(std::move(K2), m, "K2", cfg.warnings);
    cfg.K2 = std::move(k2);
    cfg.K2_factor = std::move(factor);
    cfg.K3 = require_psd(std::move(K3), m, "K3", cfg.warnings);
    cfg.u_star = std::move(u_star);
    cfg.nu1 = signal_or_zero(std::move(nu1), m);
    return cfg;
}

ShiftedPBCConfig make_spbc_config(Matrix K4, Matrix K5, Matrix K6, Matrix K7, Vector u_star,
                                  TimeSignal nu2) {
    const int m = static_cast<int>(u_star.size());
    require(m >= 1, "setpoint input must be nonempty");
    ShiftedPBCConfig cfg;
    auto [k4, factor] = require_spd(std::move(K4), m, "K4", cfg.warnings);
    cfg.K4 = std::move(k4);
    cfg.K4_factor = std::move(factor);
    cfg.K5 = require_psd(std::move(K5), m, "K5", cfg.warnings);
    cfg.K6 = require_psd(std::move(K6), m, "K6", cfg.warnings);
    cfg.K7 = require_psd(std::move(K7), m, "K7", cfg.warnings);
    cfg.u_star = std::move(u_star);
    cfg.nu2 = signal_or_zero(std::move(nu2), m);
    return cfg;
}

std::pair<Vector, Vector> kpbc_rhs(const KrasovskiiPBCConfig& cfg,
                                   const KrasovskiiPBCState& state, const Vector& y_K,
                                   double t) {
    const Vector rhs =
        cfg.nu1(t) - cfg.K2 * state.u_K - cfg.K3 * (state.u - cfg.u_star) - y_K;
    return {state.u_K, cfg.K1_factor.solve(rhs)};
}

Vector kpbc_first_order(const FirstOrderKPBCConfig& cfg, const Vector& u, const Vector& y_K,
                        double t) {
    return cfg.K2_factor.solve(cfg.nu1(t) - cfg.K3 * (u - cfg.u_star) - y_K);
}

std::pair<Vector, Vector> spbc_rhs(const ShiftedPBCConfig& cfg, const Vector& v, const Vector& y,
                                   double t) {
    const Vector u = cfg.u_star - cfg.K5 * y + cfg.K6 * v;
    const Vector vdot = cfg.K4_factor.solve(cfg.nu2(t) - cfg.K6 * y - cfg.K7 * v);
    return {u, vdot};
}

double eval_S1(const KrasovskiiStorage& storage, const KrasovskiiPBCConfig& cfg, const Vector& x,
               const Vector& u, const Vector& u_K) {
    const Vector du = u - cfg.u_star;
    return storage.value(x, u) + 0.5 * du.dot(cfg.K3 * du) + 0.5 * u_K.dot(cfg.K1 * u_K);
}

double eval_S2(const KrasovskiiStorage& storage, const ShiftedPBCConfig& cfg, const Vector& x,
               const Vector& v) {
    return storage.value(x, cfg.u_star) + 0.5 * v.dot(cfg.K4 * v);
}

MonitorOutputs monitor_outputs(const KrasovskiiStorage& storage, const InputAffineSystem& sys,
                               const EquilibriumPair& anchor, const Vector& x, const Vector& u,
                               const Matrix& K3) {
    MonitorOutputs out;
    out.y1 = storage.grad_x(x, u).dot(evaluate_f(sys, x, u));
    out.y2 = storage.grad_u(x, u);
    if (K3.size() > 0) {
        out.y2 += K3 * (u - anchor.u_star);
    }
    out.y3 = storage.grad_x(x, anchor.u_star).dot(evaluate_f(sys, x, anchor.u_star));
    return out;
}

KrasovskiiTransfer transfer_coefficients(const KrasovskiiPBCConfig& cfg) {
    KrasovskiiTransfer tf;
    tf.K1 = cfg.K1;
    tf.K2 = cfg.K2;
    tf.K3 = cfg.K3;
    const Matrix at_one = cfg.K1 + cfg.K2 + cfg.K3;
    tf.singular_at_one = Eigen::FullPivLU<Matrix>(at_one).rank() < at_one.rows();
    return tf;
}

ShiftedTransfer transfer_coefficients(const ShiftedPBCConfig& cfg) {
    ShiftedTransfer tf;
    tf.direct_gain = -cfg.K5;
    tf.filter_gain = cfg.K6;
    tf.filter_inertia = cfg.K4;
    tf.filter_damping = cfg.K7;
    const Matrix at_one = cfg.K4 + cfg.K7;
    tf.singular_at_one = Eigen::FullPivLU<Matrix>(at_one).rank() < at_one.rows();
    return tf;
}

std::string to_string(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::KrasovskiiPBC: return "kpbc";
        case ControllerKind::FirstOrderKPBC: return "kpbc1";
        case ControllerKind::ShiftedPBC: return "spbc";
        case ControllerKind::OpenLoop: return "open-loop";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Closed-loop assembly
// ---------------------------------------------------------------------------

ClosedLoopSystem assemble_closed_loop(const InputAffineSystem& sys,
                                      const KrasovskiiStorage& storage,
                                      const KrasovskiiPBCConfig& cfg) {
    const int n = sys.state_dim;
    const int m = sys.input_dim;
    require(cfg.u_star.size() == m, "controller setpoint has wrong dimension");

    ClosedLoopSystem loop;
    loop.kind = ControllerKind::KrasovskiiPBC;
    loop.plant_dim = n;
    loop.input_dim = m;
    loop.dim = n + 2 * m;

    InputAffineSystem plant = sys;
    KrasovskiiStorage s = storage;
    KrasovskiiPBCConfig c = cfg;
    EquilibriumPair setpoint{s.anchor().x_star, c.u_star, 0.0};

    loop.field = [plant, s, c, n, m](double t, const Vector& z) -> Vector {
        require(z.size() == n + 2 * m, "composite state has wrong dimension");
        const Vector x = z.head(n);
        const KrasovskiiPBCState state{z.segment(n, m), z.tail(m)};
        auto [udot, uKdot] = kpbc_rhs(c, state, s.grad_u(x, state.u), t);
        Vector dz(n + 2 * m);
        dz << evaluate_f(plant, x, state.u), udot, uKdot;
        return dz;
    };
    loop.plant_input = [n, m](double, const Vector& z) -> Vector { return z.segment(n, m); };
    loop.port_signal = [m](double, const Vector& z) -> Vector { return z.tail(m); };
    loop.supply_rate = [c, m](double t, const Vector& z) {
        return c.nu1(t).dot(z.tail(m));
    };
    loop.monitors = [plant, s, c, setpoint, n, m](double, const Vector& z) {
        return monitor_outputs(s, plant, setpoint, z.head(n), z.segment(n, m), c.K3);
    };
    loop.storage_total = [s, c, n, m](double, const Vector& z) {
        return eval_S1(s, c, z.head(n), z.segment(n, m), z.tail(m));
    };
    loop.storage_plant = [s, n, m](double, const Vector& z) {
        return s.value(z.head(n), z.segment(n, m));
    };
    loop.invariant_set_tag = [plant, s, c, n, m](const Vector& z, double tol) {
        const Vector x = z.head(n);
        const Vector u = z.segment(n, m);
        const double y1 = s.grad_x(x, u).dot(evaluate_f(plant, x, u));
        const Vector damped = c.K2 * z.tail(m);
        return std::abs(y1) <= tol && damped.lpNorm<Eigen::Infinity>() <= tol;
    };
    return loop;
}

ClosedLoopSystem assemble_closed_loop(const InputAffineSystem& sys,
                                      const KrasovskiiStorage& storage,
                                      const FirstOrderKPBCConfig& cfg) {
    const int n = sys.state_dim;
    const int m = sys.input_dim;
    require(cfg.u_star.size() == m, "controller setpoint has wrong dimension");

    ClosedLoopSystem loop;
    loop.kind = ControllerKind::FirstOrderKPBC;
    loop.plant_dim = n;
    loop.input_dim = m;
    loop.dim = n + m;

    InputAffineSystem plant = sys;
    KrasovskiiStorage s = storage;
    FirstOrderKPBCConfig c = cfg;
    EquilibriumPair setpoint{s.anchor().x_star, c.u_star, 0.0};

    auto u_K_of = [plant, s, c, n, m](double t, const Vector& z) -> Vector {
        const Vector x = z.head(n);
        const Vector u = z.tail(m);
        return kpbc_first_order(c, u, s.grad_u(x, u), t);
    };

    loop.field = [plant, u_K_of, n, m](double t, const Vector& z) -> Vector {
        require(z.size() == n + m, "composite state has wrong dimension");
        Vector dz(n + m);
        dz << evaluate_f(plant, z.head(n), z.tail(m)), u_K_of(t, z);
        return dz;
    };
    loop.plant_input = [n, m](double, const Vector& z) -> Vector { return z.tail(m); };
    loop.port_signal = u_K_of;
    loop.supply_rate = [c, u_K_of](double t, const Vector& z) {
        return c.nu1(t).dot(u_K_of(t, z));
    };
    loop.monitors = [plant, s, c, setpoint, n, m](double, const Vector& z) {
        return monitor_outputs(s, plant, setpoint, z.head(n), z.tail(m), c.K3);
    };
    loop.storage_total = [s, c, n, m](double, const Vector& z) {
        const Vector du = z.tail(m) - c.u_star;
        return s.value(z.head(n), z.tail(m)) + 0.5 * du.dot(c.K3 * du);
    };
    loop.storage_plant = [s, n, m](double, const Vector& z) {
        return s.value(z.head(n), z.tail(m));
    };
    loop.invariant_set_tag = [plant, s, c, setpoint, n, m](const Vector& z, double tol) {
        const MonitorOutputs mon =
            monitor_outputs(s, plant, setpoint, z.head(n), z.tail(m), c.K3);
        return std::abs(mon.y1) <= tol && mon.y2.lpNorm<Eigen::Infinity>() <= tol;
    };
    return loop;
}

ClosedLoopSystem assemble_closed_loop(const InputAffineSystem& sys,
                                      const KrasovskiiStorage& storage,
                                      const ShiftedPBCConfig& cfg) {
    const int n = sys.state_dim;
    const int m = sys.input_dim;
    require(cfg.u_star.size() == m, "controller setpoint has wrong dimension");

    ClosedLoopSystem loop;
    loop.kind = ControllerKind::ShiftedPBC;
    loop.plant_dim = n;
    loop.input_dim = m;
    loop.dim = n + m;

    InputAffineSystem plant = sys;
    KrasovskiiStorage s = storage;
    ShiftedPBCConfig c = cfg;
    const EquilibriumPair anchor{s.anchor().x_star, c.u_star, 0.0};
    OutputMapX h = shifted_output(sys, storage, anchor);

    loop.field = [plant, c, h, n, m](double t, const Vector& z) -> Vector {
        require(z.size() == n + m, "composite state has wrong dimension");
        const Vector x = z.head(n);
        const Vector v = z.tail(m);
        auto [u, vdot] = spbc_rhs(c, v, h(x), t);
        Vector dz(n + m);
        dz << evaluate_f(plant, x, u), vdot;
        return dz;
    };
    loop.plant_input = [c, h, n, m](double t, const Vector& z) -> Vector {
        return spbc_rhs(c, z.tail(m), h(z.head(n)), t).first;
    };
    loop.port_signal = [m](double, const Vector& z) -> Vector { return z.tail(m); };
    loop.supply_rate = [c, m](double t, const Vector& z) {
        return c.nu2(t).dot(z.tail(m));
    };
    loop.monitors = [plant, s, c, h, anchor, n, m](double t, const Vector& z) {
        const Vector x = z.head(n);
        const Vector u = spbc_rhs(c, z.tail(m), h(x), t).first;
        MonitorOutputs out;
        out.y1 = s.grad_x(x, u).dot(evaluate_f(plant, x, u));
        out.y2 = h(x);
        out.y3 = s.grad_x(x, anchor.u_star).dot(evaluate_f(plant, x, anchor.u_star));
        return out;
    };
    loop.storage_total = [s, c, n, m](double, const Vector& z) {
        return eval_S2(s, c, z.head(n), z.tail(m));
    };
    loop.storage_plant = [s, c, h, n, m](double t, const Vector& z) {
        const Vector x = z.head(n);
        const Vector u = spbc_rhs(c, z.tail(m), h(x), t).first;
        return s.value(x, u);
    };
    loop.invariant_set_tag = [plant, s, c, h, anchor, n, m](const Vector& z, double tol) {
        const Vector x = z.head(n);
        const Vector v = z.tail(m);
        const Vector y = h(x);
        const double y3 = s.grad_x(x, anchor.u_star).dot(evaluate_f(plant, x, anchor.u_star));
        return (c.K5 * y).lpNorm<Eigen::Infinity>() <= tol && std::abs(y3) <= tol &&
               (c.K7 * v).lpNorm<Eigen::Infinity>() <= tol;
    };
    return loop;
}

ClosedLoopSystem open_loop(const InputAffineSystem& sys,
                           std::optional<KrasovskiiStorage> storage, InputSignal input) {
    require(static_cast<bool>(input.value), "open loop requires an input signal");
    const int n = sys.state_dim;
    const int m = sys.input_dim;

    ClosedLoopSystem loop;
    loop.kind = ControllerKind::OpenLoop;
    loop.plant_dim = n;
    loop.input_dim = m;
    loop.dim = n;

    InputAffineSystem plant = sys;
    if (!input.derivative) {
        input.derivative = zero_signal(m);
    }
    InputSignal sig = std::move(input);

    loop.field = [plant, sig, n](double t, const Vector& z) -> Vector {
        require(z.size() == n, "state has wrong dimension");
        return evaluate_f(plant, z, sig.value(t));
    };
    loop.plant_input = [sig](double t, const Vector&) { return sig.value(t); };
    loop.port_signal = [sig](double t, const Vector&) { return sig.derivative(t); };
    if (storage) {
        KrasovskiiStorage s = *storage;
        loop.supply_rate = [s, sig](double t, const Vector& z) {
            return sig.derivative(t).dot(s.grad_u(z, sig.value(t)));
        };
        loop.monitors = [plant, s, sig](double t, const Vector& z) {
            const EquilibriumPair& anchor = s.anchor();
            return monitor_outputs(s, plant, anchor, z, sig.value(t));
        };
        loop.storage_total = [s, sig](double t, const Vector& z) {
            return s.value(z, sig.value(t));
        };
        loop.storage_plant = loop.storage_total;
    } else {
        loop.supply_rate = [](double, const Vector&) { return 0.0; };
        loop.monitors = [m](double, const Vector&) {
            return MonitorOutputs{0.0, Vector::Zero(m), 0.0};
        };
        loop.storage_total = [](double, const Vector&) { return 0.0; };
        loop.storage_plant = loop.storage_total;
    }
    loop.invariant_set_tag = [](const Vector&, double) { return false; };
    return loop;
}

}  // namespace kpbc
