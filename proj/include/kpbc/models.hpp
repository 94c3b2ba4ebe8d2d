#pragma once

// =============================================================================
// kpbc - built-in models
// =============================================================================
// The normalized DC-Zeta converter average model, the parameter-free cube-root
// system, and small linear benchmarks with closed-form certificates.
// =============================================================================

#include "kpbc/analysis.hpp"
#include "kpbc/storage.hpp"
#include "kpbc/system.hpp"
#include "kpbc/types.hpp"

#include <optional>
#include <string>

// nlohmann/json is used for registry parameters (vendored single header).
#include <json.hpp>

namespace kpbc {

// ---------------------------------------------------------------------------
// DC-Zeta converter (normalized average model)
// ---------------------------------------------------------------------------
//
//   xdot = [-x2; x1; -x4/a1; (x3 - x4/a3)/a2]
//          + [1+x2; -(x1+x3); (1+x2)/a1; 0] u
//
// States: inductor currents (x1, x3) and capacitor voltages (x2, x4) after
// normalization; the input u is the duty ratio.  For a desired load voltage
// v* > 0 the equilibrium is
//
//   x* = ((v*)^2/a3, v*, v*/a3, v*),   u* = v*/(v*+1).

struct ZetaParams {
    double alpha1 = 1.0;
    double alpha2 = 1.0;
    double alpha3 = 1.0;
    double v_star = 1.0 / 3.0;

    void validate() const;
};

/// Fourth-order converter model with hand-coded Jacobians.
InputAffineSystem zeta_system(const ZetaParams& params);

/// Closed-form equilibrium for the desired load voltage.
EquilibriumPair zeta_equilibrium(const ZetaParams& params);

/// Canonical storage f'Mf/2 with M = diag(1, 1, a1, a2), anchored at the
/// closed-form equilibrium.
KrasovskiiStorage zeta_storage(const ZetaParams& params);

/// Parameter-free closed form of the Krasovskii output,
/// y_K = [1+x2, -(x1+x3), 1+x2, 0] xdot.
OutputMapXU zeta_krasovskii_output(const ZetaParams& params);

// ---------------------------------------------------------------------------
// Cube-root system
// ---------------------------------------------------------------------------
//
//   xdot = [x1^{1/3}; -x2^{1/3}] u,   y = x1^{4/3} - x2^{4/3}
//
// Fractional powers use the real signed root: x^{1/3} = sign(x)|x|^{1/3}.
// The state Jacobian does not exist on the coordinate axes; requesting it
// there raises SingularPointError.

/// Signed cube root helpers used by the model.
double signed_cbrt(double x);      ///< sign(x)|x|^{1/3}
double signed_pow23(double x);     ///< (x^{1/3})^2
double signed_pow43(double x);     ///< (x^{1/3})^4

InputAffineSystem cuberoot_system();

/// Storage S_K(x,u) = (x1^{2/3} + x2^{2/3}) u^2 / 2 with analytic gradients;
/// vanishes on both equilibrium branches {u = 0} and {x = 0}.
KrasovskiiStorage cuberoot_storage();

/// Rate of the model output, ydot = (dh/dx) g(x) u.
OutputMapXU cuberoot_output_rate();

// ---------------------------------------------------------------------------
// Linear benchmarks
// ---------------------------------------------------------------------------

InputAffineSystem linear_system(Matrix a, Matrix b);

/// Hurwitz benchmark with a metric satisfying A'M + MA <= 0.
struct LinearPreset {
    std::string name;
    Matrix a;
    Matrix b;
    Matrix metric;
};

/// Presets: "scalar" (xdot = -x + u, M = 1) and "order2" (damped oscillator,
/// M = I).  Throws ValidationError for unknown names.
LinearPreset linear_preset(const std::string& name);

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// A model plus its certificate data, as consumed by scenarios.
struct ModelBundle {
    std::string id;
    InputAffineSystem system;
    KrasovskiiStorage storage;
    EquilibriumPair anchor;
    OutputMapXU krasovskii_output_map;  ///< independent closed form when available
    Matrix metric;                      ///< constant certificate metric when available
    std::optional<double> zeta_alpha3;  ///< set for "zeta" (equilibrium family)
};

/// Instantiates "zeta", "cuberoot", or "linear:<preset>" with JSON parameters
/// (zeta: alpha1, alpha2, alpha3, v_star).  Throws ValidationError for unknown
/// ids or parameters.
ModelBundle make_model(const std::string& id, const nlohmann::json& params);

}  // namespace kpbc
