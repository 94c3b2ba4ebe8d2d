#pragma once

// =============================================================================
// kpbc - storage functions for the passivity certificates
// =============================================================================

#include "kpbc/system.hpp"
#include "kpbc/types.hpp"

#include <functional>
#include <utility>

namespace kpbc {

/// Storage S_K(x,u) for the Krasovskii certificate.  The canonical kind is the
/// quadratic form f(x,u)' M(x) f(x,u) / 2 built from a metric M; the general
/// kind wraps arbitrary value/gradient callables.  Missing gradients fall back
/// to central finite differences.
class KrasovskiiStorage {
public:
    enum class Kind { Canonical, General };

    using ValueFn = std::function<double(const Vector&, const Vector&)>;
    using GradFn = std::function<Vector(const Vector&, const Vector&)>;
    using MetricFn = std::function<Matrix(const Vector&)>;

    /// Default-constructed storage is empty; build one via the factories.
    KrasovskiiStorage() = default;

    static KrasovskiiStorage canonical(const InputAffineSystem& sys, Matrix metric,
                                       EquilibriumPair anchor);
    static KrasovskiiStorage canonical_varying(const InputAffineSystem& sys, MetricFn metric,
                                               EquilibriumPair anchor);
    static KrasovskiiStorage general(ValueFn value, GradFn grad_x, GradFn grad_u,
                                     EquilibriumPair anchor);

    [[nodiscard]] double value(const Vector& x, const Vector& u) const { return value_(x, u); }
    [[nodiscard]] Vector grad_x(const Vector& x, const Vector& u) const { return grad_x_(x, u); }
    [[nodiscard]] Vector grad_u(const Vector& x, const Vector& u) const { return grad_u_(x, u); }

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] bool has_constant_metric() const noexcept { return constant_metric_; }
    [[nodiscard]] Matrix metric(const Vector& x) const;
    [[nodiscard]] const EquilibriumPair& anchor() const noexcept { return anchor_; }

private:
    Kind kind_ = Kind::General;
    bool constant_metric_ = false;
    MetricFn metric_;
    ValueFn value_;
    GradFn grad_x_;
    GradFn grad_u_;
    EquilibriumPair anchor_;
};

/// Storage S_D(x, dx) = dx' M(x) dx / 2 for the differential certificate,
/// together with the tangent output gain h_d(x) (an m x n matrix).
class DifferentialStorage {
public:
    using MetricFn = std::function<Matrix(const Vector&)>;
    using GainFn = std::function<Matrix(const Vector&)>;

    static DifferentialStorage constant(Matrix metric, GainFn output_gain);
    static DifferentialStorage varying(MetricFn metric, GainFn output_gain);

    [[nodiscard]] double value(const Vector& x, const Vector& delta_x) const;
    [[nodiscard]] Matrix metric(const Vector& x) const { return metric_(x); }
    [[nodiscard]] Matrix output_gain(const Vector& x) const { return output_gain_(x); }
    [[nodiscard]] bool has_constant_metric() const noexcept { return constant_metric_; }

    /// Directional derivative of the metric along `direction` (zero when the
    /// metric is constant, finite differences otherwise).
    [[nodiscard]] Matrix metric_directional_derivative(const Vector& x,
                                                       const Vector& direction) const;

private:
    DifferentialStorage() = default;

    bool constant_metric_ = false;
    MetricFn metric_;
    GainFn output_gain_;
};

/// Storage S_s(x) for the shifted certificate, with its anchor and output map.
class ShiftedStorage {
public:
    using ValueFn = std::function<double(const Vector&)>;
    using GradFn = std::function<Vector(const Vector&)>;
    using OutputFn = std::function<Vector(const Vector&)>;

    /// grad may be null; finite differences of value are used instead.
    ShiftedStorage(ValueFn value, GradFn grad, EquilibriumPair anchor, OutputFn output);

    [[nodiscard]] double value(const Vector& x) const { return value_(x); }
    [[nodiscard]] Vector gradient(const Vector& x) const { return grad_(x); }
    [[nodiscard]] Vector output(const Vector& x) const { return output_(x); }
    [[nodiscard]] const EquilibriumPair& anchor() const noexcept { return anchor_; }

private:
    ValueFn value_;
    GradFn grad_;
    OutputFn output_;
    EquilibriumPair anchor_;
};

}  // namespace kpbc
