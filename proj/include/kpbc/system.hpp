#pragma once

// =============================================================================
// kpbc - input-affine system representation
// =============================================================================
// Systems of the form
//
//     xdot = f(x, u) = g0(x) + sum_i g_i(x) u_i,    y = h(x)
//
// are described by callables for the drift g0, the input matrix g (columns
// g_i), an optional output map h, and optional analytic Jacobians.  When a
// Jacobian callable is absent, central finite differences are used.
// =============================================================================

#include "kpbc/types.hpp"

#include <functional>
#include <optional>
#include <utility>

namespace kpbc {

struct InputAffineSystem {
    int state_dim = 0;  ///< n
    int input_dim = 0;  ///< m

    std::function<Vector(const Vector&)> drift;         ///< g0 : R^n -> R^n
    std::function<Matrix(const Vector&)> input_matrix;  ///< g : R^n -> R^{n x m}
    std::function<Vector(const Vector&)> output;        ///< h : R^n -> R^m (optional)

    /// Analytic Jacobian of the drift (optional; finite differences otherwise).
    std::function<Matrix(const Vector&)> drift_jacobian;
    /// Analytic Jacobian of input column i (optional).
    std::function<Matrix(const Vector&, int)> input_column_jacobian;
};

/// State/input pair with f(x*, u*) = 0 up to the reported residual.
struct EquilibriumPair {
    Vector x_star;
    Vector u_star;
    double residual = 0.0;
};

/// Tangent signals of the variational system along a trajectory.
struct VariationalSignal {
    Vector delta_x;
    Vector delta_u;
    Vector delta_y;

    /// Checks dimensional consistency with the base system.
    void validate(const InputAffineSystem& sys) const;
};

/// Evaluates the vector field f(x,u) = g0(x) + g(x) u.
Vector evaluate_f(const InputAffineSystem& sys, const Vector& x, const Vector& u);

/// State Jacobian of the field, d f(x,u) / dx = d g0/dx + sum_i (d g_i/dx) u_i.
/// Throws SingularPointError when the Jacobian does not exist at x.
Matrix state_jacobian(const InputAffineSystem& sys, const Vector& x, const Vector& u);

/// Integrator-augmented system: state (x,u), input u_K with udot = u_K,
/// output y_K = h_K(x,u).
struct ExtendedSystem {
    InputAffineSystem base;
    std::function<Vector(const Vector&, const Vector&)> output;  ///< h_K(x,u)

    [[nodiscard]] int state_dim() const { return base.state_dim + base.input_dim; }
    [[nodiscard]] int input_dim() const { return base.input_dim; }

    /// Drift of the composite state: (f(x,u), 0).
    [[nodiscard]] Vector drift(const Vector& z) const;
    /// Input matrix of the composite state: rows (0; I_m).
    [[nodiscard]] Matrix input_matrix(const Vector& z) const;
    /// The same dynamics packaged as a plain InputAffineSystem over (x,u).
    [[nodiscard]] InputAffineSystem as_system() const;
};

ExtendedSystem build_extended(const InputAffineSystem& sys,
                              std::function<Vector(const Vector&, const Vector&)> output);

enum class EquilibriumMode {
    FixInput,  ///< solve f(x, u0) = 0 for x (damped Newton)
    FreeInput  ///< solve f(x, u) = 0 for (x, u) (damped Gauss-Newton, least squares)
};

/// Damped Newton search for an equilibrium pair.  Step halving (up to 40
/// halvings per iteration), at most `max_iterations` iterations; succeeds when
/// |f(x,u)| <= tolerance.
EquilibriumPair find_equilibrium(const InputAffineSystem& sys, const Vector& x0,
                                 const Vector& u0, EquilibriumMode mode,
                                 double tolerance = 1e-10, int max_iterations = 200);

}  // namespace kpbc
