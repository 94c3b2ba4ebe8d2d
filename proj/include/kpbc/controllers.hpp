#pragma once

// =============================================================================
// kpbc - passivity based dynamic controllers and closed-loop assembly
// =============================================================================
// Two controller families act on a plant with Krasovskii storage S_K:
//
//   kpbc   (second order, drives the integrator-extended plant):
//              udot = u_K,   K1 uKdot = nu1 - K2 u_K - K3 (u - u*) - y_K
//   kpbc1  (first order):    K2 u_K = nu1 - K3 (u - u*) - y_K
//   spbc   (shifted output feedback on the original plant):
//              u = u* - K5 y + K6 v,   K4 vdot = nu2 - K6 y - K7 v
//
// Gain matrices are validated at construction; quadratic-form gains are
// symmetrized and positive (semi)definiteness is enforced there, never at
// runtime.
// =============================================================================

#include "kpbc/analysis.hpp"
#include "kpbc/storage.hpp"
#include "kpbc/system.hpp"
#include "kpbc/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace kpbc {

using TimeSignal = std::function<Vector(double)>;

/// Zero signal of the given dimension.
TimeSignal zero_signal(int dim);

struct KrasovskiiPBCConfig {
    Matrix K1;  ///< symmetric positive definite
    Matrix K2;  ///< symmetric positive semidefinite
    Matrix K3;  ///< symmetric positive semidefinite
    Vector u_star;
    TimeSignal nu1;
    Eigen::LLT<Matrix> K1_factor;
    std::vector<std::string> warnings;
};

struct KrasovskiiPBCState {
    Vector u;
    Vector u_K;
};

struct FirstOrderKPBCConfig {
    Matrix K2;  ///< symmetric positive definite
    Matrix K3;  ///< symmetric positive semidefinite
    Vector u_star;
    TimeSignal nu1;
    Eigen::LLT<Matrix> K2_factor;
    std::vector<std::string> warnings;
};

struct ShiftedPBCConfig {
    Matrix K4;  ///< symmetric positive definite
    Matrix K5;  ///< symmetric positive semidefinite
    Matrix K6;  ///< symmetric positive semidefinite
    Matrix K7;  ///< symmetric positive semidefinite
    Vector u_star;
    TimeSignal nu2;
    Eigen::LLT<Matrix> K4_factor;
    std::vector<std::string> warnings;
};

struct ShiftedPBCState {
    Vector v;
};

/// Throws ConfigError for invalid gains; nu defaults to zero.
KrasovskiiPBCConfig make_kpbc_config(Matrix K1, Matrix K2, Matrix K3, Vector u_star,
                                     TimeSignal nu1 = nullptr);
FirstOrderKPBCConfig make_kpbc1_config(Matrix K2, Matrix K3, Vector u_star,
                                       TimeSignal nu1 = nullptr);
ShiftedPBCConfig make_spbc_config(Matrix K4, Matrix K5, Matrix K6, Matrix K7, Vector u_star,
                                  TimeSignal nu2 = nullptr);

/// Controller state derivatives (udot, uKdot) given the plant output y_K.
std::pair<Vector, Vector> kpbc_rhs(const KrasovskiiPBCConfig& cfg,
                                   const KrasovskiiPBCState& state, const Vector& y_K, double t);

/// First-order controller: the u_K fed into udot = u_K.
Vector kpbc_first_order(const FirstOrderKPBCConfig& cfg, const Vector& u, const Vector& y_K,
                        double t);

/// Shifted controller: applied input u and filter derivative vdot.
std::pair<Vector, Vector> spbc_rhs(const ShiftedPBCConfig& cfg, const Vector& v, const Vector& y,
                                   double t);

/// Composite storage of the kpbc loop:
/// S_K(x,u) + |u-u*|^2_{K3}/2 + |u_K|^2_{K1}/2.
double eval_S1(const KrasovskiiStorage& storage, const KrasovskiiPBCConfig& cfg, const Vector& x,
               const Vector& u, const Vector& u_K);

/// Composite storage of the spbc loop: S_K(x,u*) + |v|^2_{K4}/2.
double eval_S2(const KrasovskiiStorage& storage, const ShiftedPBCConfig& cfg, const Vector& x,
               const Vector& v);

/// Monitor channels recorded along runs:
///   y1 = dS_K(x,u)/dx f(x,u)          (nonpositive when the certificate holds)
///   y2 = K3 (u - u*) + y_K            (K3 omitted when not supplied)
///   y3 = dS_K(x,u*)/dx f(x,u*)
struct MonitorOutputs {
    double y1 = 0.0;
    Vector y2;
    double y3 = 0.0;
};

MonitorOutputs monitor_outputs(const KrasovskiiStorage& storage, const InputAffineSystem& sys,
                               const EquilibriumPair& anchor, const Vector& x, const Vector& u,
                               const Matrix& K3 = Matrix());

/// Controller transfer-function data.  The kpbc controller reads
/// u - u* = (K1 s^2 + K2 s + K3)^{-1} (V1 - Y_K).
struct KrasovskiiTransfer {
    Matrix K1, K2, K3;       ///< denominator coefficients, descending powers
    bool singular_at_one = false;
};

/// Realization quadruple of the spbc controller:
/// u - u* = -K5 Y + K6 (K4 s + K7)^{-1} (V2 - K6 Y).
struct ShiftedTransfer {
    Matrix direct_gain;      ///< -K5
    Matrix filter_gain;      ///< K6
    Matrix filter_inertia;   ///< K4
    Matrix filter_damping;   ///< K7
    bool singular_at_one = false;
};

KrasovskiiTransfer transfer_coefficients(const KrasovskiiPBCConfig& cfg);
ShiftedTransfer transfer_coefficients(const ShiftedPBCConfig& cfg);

// ---------------------------------------------------------------------------
// Closed-loop assembly
// ---------------------------------------------------------------------------

enum class ControllerKind { KrasovskiiPBC, FirstOrderKPBC, ShiftedPBC, OpenLoop };

[[nodiscard]] std::string to_string(ControllerKind kind);

/// Autonomous vector field over the composite state plus evaluation hooks.
/// Composite layouts: kpbc (x,u,u_K); kpbc1 (x,u); spbc (x,v);
/// open loop (x).
struct ClosedLoopSystem {
    ControllerKind kind = ControllerKind::OpenLoop;
    int plant_dim = 0;
    int input_dim = 0;
    int dim = 0;

    std::function<Vector(double, const Vector&)> field;
    std::function<Vector(double, const Vector&)> plant_input;   ///< applied u
    std::function<Vector(double, const Vector&)> port_signal;   ///< u_K, v, or udot
    std::function<double(double, const Vector&)> supply_rate;   ///< nu'port (or udot'y_K)
    std::function<MonitorOutputs(double, const Vector&)> monitors;
    std::function<double(double, const Vector&)> storage_total; ///< S1, S2, or S_K
    std::function<double(double, const Vector&)> storage_plant; ///< S_K at the applied input
    std::function<bool(const Vector&, double)> invariant_set_tag;
};

ClosedLoopSystem assemble_closed_loop(const InputAffineSystem& sys,
                                      const KrasovskiiStorage& storage,
                                      const KrasovskiiPBCConfig& cfg);
ClosedLoopSystem assemble_closed_loop(const InputAffineSystem& sys,
                                      const KrasovskiiStorage& storage,
                                      const FirstOrderKPBCConfig& cfg);
ClosedLoopSystem assemble_closed_loop(const InputAffineSystem& sys,
                                      const KrasovskiiStorage& storage,
                                      const ShiftedPBCConfig& cfg);

/// Exogenous input for open-loop runs; the derivative feeds the supply rate
/// udot' y_K of the Krasovskii inequality.
struct InputSignal {
    std::function<Vector(double)> value;
    std::function<Vector(double)> derivative;
};

ClosedLoopSystem open_loop(const InputAffineSystem& sys,
                           std::optional<KrasovskiiStorage> storage, InputSignal input);

}  // namespace kpbc
