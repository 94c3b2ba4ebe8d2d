#include "kpbc/models.hpp"

#include <cmath>

namespace kpbc {

// ---------------------------------------------------------------------------
// DC-Zeta converter
// ---------------------------------------------------------------------------

void ZetaParams::validate() const {
    if (!(alpha1 > 0.0 && alpha2 > 0.0 && alpha3 > 0.0)) {
        throw ValidationError("zeta parameters alpha1..alpha3 must be positive");
    }
    if (!(v_star > 0.0)) {
        throw ValidationError("zeta v_star must be positive");
    }
}

InputAffineSystem zeta_system(const ZetaParams& params) {
    params.validate();
    const double a1 = params.alpha1;
    const double a2 = params.alpha2;
    const double a3 = params.alpha3;

    InputAffineSystem sys;
    sys.state_dim = 4;
    sys.input_dim = 1;
    sys.drift = [a1, a2, a3](const Vector& x) -> Vector {
        Vector d(4);
        d << -x[1], x[0], -x[3] / a1, (x[2] - x[3] / a3) / a2;
        return d;
    };
    sys.input_matrix = [a1](const Vector& x) -> Matrix {
        Matrix g(4, 1);
        g << 1.0 + x[1], -(x[0] + x[2]), (1.0 + x[1]) / a1, 0.0;
        return g;
    };
    sys.drift_jacobian = [a1, a2, a3](const Vector&) -> Matrix {
        Matrix jac = Matrix::Zero(4, 4);
        jac(0, 1) = -1.0;
        jac(1, 0) = 1.0;
        jac(2, 3) = -1.0 / a1;
        jac(3, 2) = 1.0 / a2;
        jac(3, 3) = -1.0 / (a2 * a3);
        return jac;
    };
    sys.input_column_jacobian = [a1](const Vector&, int) -> Matrix {
        Matrix jac = Matrix::Zero(4, 4);
        jac(0, 1) = 1.0;
        jac(1, 0) = -1.0;
        jac(1, 2) = -1.0;
        jac(2, 1) = 1.0 / a1;
        return jac;
    };
    return sys;
}

EquilibriumPair zeta_equilibrium(const ZetaParams& params) {
    params.validate();
    const double vs = params.v_star;
    Vector x(4);
    x << vs * vs / params.alpha3, vs, vs / params.alpha3, vs;
    Vector u(1);
    u << vs / (vs + 1.0);
    const InputAffineSystem sys = zeta_system(params);
    const double residual = evaluate_f(sys, x, u).norm();
    return EquilibriumPair{std::move(x), std::move(u), residual};
}

KrasovskiiStorage zeta_storage(const ZetaParams& params) {
    Matrix metric = Matrix::Zero(4, 4);
    metric.diagonal() << 1.0, 1.0, params.alpha1, params.alpha2;
    return KrasovskiiStorage::canonical(zeta_system(params), std::move(metric),
                                        zeta_equilibrium(params));
}

OutputMapXU zeta_krasovskii_output(const ZetaParams& params) {
    const InputAffineSystem sys = zeta_system(params);
    // Measures only x and xdot; the converter parameters cancel in g'M.
    return [sys](const Vector& x, const Vector& u) -> Vector {
        const Vector f = evaluate_f(sys, x, u);
        Vector out(1);
        out << (1.0 + x[1]) * f[0] - (x[0] + x[2]) * f[1] + (1.0 + x[1]) * f[2];
        return out;
    };
}

// ---------------------------------------------------------------------------
// Cube-root system
// ---------------------------------------------------------------------------

double signed_cbrt(double x) { return std::cbrt(x); }

double signed_pow23(double x) {
    const double r = std::cbrt(x);
    return r * r;
}

double signed_pow43(double x) {
    const double r = std::cbrt(x);
    return r * r * r * r;
}

InputAffineSystem cuberoot_system() {
    InputAffineSystem sys;
    sys.state_dim = 2;
    sys.input_dim = 1;
    sys.drift = [](const Vector& x) { return Vector::Zero(x.size()); };
    sys.input_matrix = [](const Vector& x) -> Matrix {
        Matrix g(2, 1);
        g << signed_cbrt(x[0]), -signed_cbrt(x[1]);
        return g;
    };
    sys.output = [](const Vector& x) -> Vector {
        Vector y(1);
        y << signed_pow43(x[0]) - signed_pow43(x[1]);
        return y;
    };
    sys.drift_jacobian = [](const Vector&) { return Matrix::Zero(2, 2); };
    sys.input_column_jacobian = [](const Vector& x, int) -> Matrix {
        for (int j = 0; j < 2; ++j) {
            if (x[j] == 0.0) {
                throw SingularPointError("cube-root Jacobian undefined on coordinate axis", j);
            }
        }
        Matrix jac = Matrix::Zero(2, 2);
        jac(0, 0) = 1.0 / (3.0 * signed_pow23(x[0]));
        jac(1, 1) = -1.0 / (3.0 * signed_pow23(x[1]));
        return jac;
    };
    return sys;
}

KrasovskiiStorage cuberoot_storage() {
    EquilibriumPair anchor{Vector::Zero(2), Vector::Zero(1), 0.0};
    auto value = [](const Vector& x, const Vector& u) {
        return 0.5 * (signed_pow23(x[0]) + signed_pow23(x[1])) * u[0] * u[0];
    };
    auto grad_x = [](const Vector& x, const Vector& u) -> Vector {
        Vector g(2);
        for (int j = 0; j < 2; ++j) {
            if (x[j] == 0.0) {
                throw SingularPointError("cube-root storage gradient undefined on axis", j);
            }
            g[j] = u[0] * u[0] / (3.0 * signed_cbrt(x[j]));
        }
        return g;
    };
    auto grad_u = [](const Vector& x, const Vector& u) -> Vector {
        Vector g(1);
        g << (signed_pow23(x[0]) + signed_pow23(x[1])) * u[0];
        return g;
    };
    return KrasovskiiStorage::general(value, grad_x, grad_u, std::move(anchor));
}

OutputMapXU cuberoot_output_rate() {
    // ydot = (dh/dx) g(x) u with dh/dx = (4/3)[x1^{1/3}, -x2^{1/3}].
    return [](const Vector& x, const Vector& u) -> Vector {
        Vector out(1);
        out << (4.0 / 3.0) * (signed_pow23(x[0]) + signed_pow23(x[1])) * u[0];
        return out;
    };
}

// ---------------------------------------------------------------------------
// Linear benchmarks
// ---------------------------------------------------------------------------

InputAffineSystem linear_system(Matrix a, Matrix b) {
    require(a.rows() == a.cols(), "A must be square");
    require(b.rows() == a.rows(), "B must have as many rows as A");
    InputAffineSystem sys;
    sys.state_dim = static_cast<int>(a.rows());
    sys.input_dim = static_cast<int>(b.cols());
    Matrix A = std::move(a);
    Matrix B = std::move(b);
    sys.drift = [A](const Vector& x) -> Vector { return A * x; };
    sys.input_matrix = [B](const Vector&) { return B; };
    sys.drift_jacobian = [A](const Vector&) { return A; };
    const int n = sys.state_dim;
    sys.input_column_jacobian = [n](const Vector&, int) { return Matrix::Zero(n, n); };
    return sys;
}

LinearPreset linear_preset(const std::string& name) {
    if (name == "scalar") {
        Matrix a(1, 1), b(1, 1), m(1, 1);
        a << -1.0;
        b << 1.0;
        m << 1.0;
        return LinearPreset{name, a, b, m};
    }
    if (name == "order2") {
        Matrix a(2, 2), b(2, 1);
        a << 0.0, 1.0, -1.0, -1.0;
        b << 0.0, 1.0;
        return LinearPreset{name, a, b, Matrix::Identity(2, 2)};
    }
    throw ValidationError("unknown linear preset: " + name);
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

namespace {

void reject_unknown_keys(const nlohmann::json& params,
                         std::initializer_list<const char*> allowed) {
    for (const auto& item : params.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ValidationError("unknown model parameter: " + item.key());
        }
    }
}

double number_or(const nlohmann::json& params, const char* key, double fallback) {
    if (!params.contains(key)) {
        return fallback;
    }
    if (!params[key].is_number()) {
        throw ValidationError(std::string("model parameter ") + key + " must be a number");
    }
    return params[key].get<double>();
}

}  // namespace

ModelBundle make_model(const std::string& id, const nlohmann::json& params) {
    if (!params.is_object() && !params.is_null()) {
        throw ValidationError("model parameters must be an object");
    }
    const nlohmann::json p = params.is_null() ? nlohmann::json::object() : params;

    if (id == "zeta") {
        reject_unknown_keys(p, {"alpha1", "alpha2", "alpha3", "v_star"});
        ZetaParams zp;
        zp.alpha1 = number_or(p, "alpha1", zp.alpha1);
        zp.alpha2 = number_or(p, "alpha2", zp.alpha2);
        zp.alpha3 = number_or(p, "alpha3", zp.alpha3);
        zp.v_star = number_or(p, "v_star", zp.v_star);
        zp.validate();
        ModelBundle bundle;
        bundle.id = id;
        bundle.system = zeta_system(zp);
        bundle.storage = zeta_storage(zp);
        bundle.anchor = zeta_equilibrium(zp);
        bundle.krasovskii_output_map = zeta_krasovskii_output(zp);
        bundle.metric = bundle.storage.metric(Vector::Zero(4));
        bundle.zeta_alpha3 = zp.alpha3;
        return bundle;
    }
    if (id == "cuberoot") {
        reject_unknown_keys(p, {});
        ModelBundle bundle;
        bundle.id = id;
        bundle.system = cuberoot_system();
        bundle.storage = cuberoot_storage();
        bundle.anchor = bundle.storage.anchor();
        bundle.krasovskii_output_map = cuberoot_output_rate();
        bundle.metric = Matrix::Identity(2, 2);
        return bundle;
    }
    if (id.rfind("linear:", 0) == 0) {
        reject_unknown_keys(p, {});
        const LinearPreset preset = linear_preset(id.substr(7));
        ModelBundle bundle;
        bundle.id = id;
        bundle.system = linear_system(preset.a, preset.b);
        const int n = bundle.system.state_dim;
        const int m = bundle.system.input_dim;
        EquilibriumPair origin{Vector::Zero(n), Vector::Zero(m), 0.0};
        bundle.storage =
            KrasovskiiStorage::canonical(bundle.system, preset.metric, origin);
        bundle.anchor = std::move(origin);
        bundle.metric = preset.metric;
        return bundle;
    }
    throw ValidationError("unknown model id: " + id);
}

}  // namespace kpbc
