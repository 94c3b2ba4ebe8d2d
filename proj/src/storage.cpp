#include "kpbc/storage.hpp"

#include "kpbc/numdiff.hpp"

namespace kpbc {

KrasovskiiStorage KrasovskiiStorage::canonical(const InputAffineSystem& sys, Matrix metric,
                                               EquilibriumPair anchor) {
    require(metric.rows() == sys.state_dim && metric.cols() == sys.state_dim,
            "metric has wrong shape");
    KrasovskiiStorage s;
    s.kind_ = Kind::Canonical;
    s.constant_metric_ = true;
    Matrix m = std::move(metric);
    s.metric_ = [m](const Vector&) { return m; };
    s.value_ = [sys, m](const Vector& x, const Vector& u) {
        const Vector f = evaluate_f(sys, x, u);
        return 0.5 * f.dot(m * f);
    };
    // d/dx (f'Mf/2) = f' M (df/dx); the metric term vanishes for constant M.
    s.grad_x_ = [sys, m](const Vector& x, const Vector& u) -> Vector {
        const Vector f = evaluate_f(sys, x, u);
        const Matrix jac = state_jacobian(sys, x, u);
        return jac.transpose() * (m * f);
    };
    s.grad_u_ = [sys, m](const Vector& x, const Vector& u) -> Vector {
        const Vector f = evaluate_f(sys, x, u);
        return sys.input_matrix(x).transpose() * (m * f);
    };
    s.anchor_ = std::move(anchor);
    return s;
}

KrasovskiiStorage KrasovskiiStorage::canonical_varying(const InputAffineSystem& sys,
                                                       MetricFn metric, EquilibriumPair anchor) {
    require(static_cast<bool>(metric), "metric callable required");
    KrasovskiiStorage s;
    s.kind_ = Kind::Canonical;
    s.constant_metric_ = false;
    s.metric_ = metric;
    s.value_ = [sys, metric](const Vector& x, const Vector& u) {
        const Vector f = evaluate_f(sys, x, u);
        return 0.5 * f.dot(metric(x) * f);
    };
    s.grad_x_ = [sys, metric](const Vector& x, const Vector& u) -> Vector {
        const Vector f = evaluate_f(sys, x, u);
        const Matrix jac = state_jacobian(sys, x, u);
        Vector grad = jac.transpose() * (metric(x) * f);
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            const Matrix dm = central_matrix_derivative(metric, x, j);
            grad[j] += 0.5 * f.dot(dm * f);
        }
        return grad;
    };
    s.grad_u_ = [sys, metric](const Vector& x, const Vector& u) -> Vector {
        const Vector f = evaluate_f(sys, x, u);
        return sys.input_matrix(x).transpose() * (metric(x) * f);
    };
    s.anchor_ = std::move(anchor);
    return s;
}

KrasovskiiStorage KrasovskiiStorage::general(ValueFn value, GradFn grad_x, GradFn grad_u,
                                             EquilibriumPair anchor) {
    require(static_cast<bool>(value), "value callable required");
    KrasovskiiStorage s;
    s.kind_ = Kind::General;
    s.value_ = value;
    if (grad_x) {
        s.grad_x_ = std::move(grad_x);
    } else {
        s.grad_x_ = [value](const Vector& x, const Vector& u) {
            return central_gradient([&](const Vector& p) { return value(p, u); }, x);
        };
    }
    if (grad_u) {
        s.grad_u_ = std::move(grad_u);
    } else {
        s.grad_u_ = [value](const Vector& x, const Vector& u) {
            return central_gradient([&](const Vector& p) { return value(x, p); }, u);
        };
    }
    s.anchor_ = std::move(anchor);
    return s;
}

Matrix KrasovskiiStorage::metric(const Vector& x) const {
    require(kind_ == Kind::Canonical, "metric is only defined for canonical storage");
    return metric_(x);
}

DifferentialStorage DifferentialStorage::constant(Matrix metric, GainFn output_gain) {
    DifferentialStorage s;
    s.constant_metric_ = true;
    Matrix m = std::move(metric);
    s.metric_ = [m](const Vector&) { return m; };
    s.output_gain_ = std::move(output_gain);
    return s;
}

DifferentialStorage DifferentialStorage::varying(MetricFn metric, GainFn output_gain) {
    require(static_cast<bool>(metric), "metric callable required");
    DifferentialStorage s;
    s.constant_metric_ = false;
    s.metric_ = std::move(metric);
    s.output_gain_ = std::move(output_gain);
    return s;
}

double DifferentialStorage::value(const Vector& x, const Vector& delta_x) const {
    return 0.5 * delta_x.dot(metric_(x) * delta_x);
}

Matrix DifferentialStorage::metric_directional_derivative(const Vector& x,
                                                          const Vector& direction) const {
    if (constant_metric_) {
        return Matrix::Zero(x.size(), x.size());
    }
    return central_matrix_directional(metric_, x, direction);
}

ShiftedStorage::ShiftedStorage(ValueFn value, GradFn grad, EquilibriumPair anchor,
                               OutputFn output)
    : value_(std::move(value)), output_(std::move(output)), anchor_(std::move(anchor)) {
    require(static_cast<bool>(value_), "value callable required");
    require(static_cast<bool>(output_), "output callable required");
    if (grad) {
        grad_ = std::move(grad);
    } else {
        auto v = value_;
        grad_ = [v](const Vector& x) { return central_gradient(v, x); };
    }
}

}  // namespace kpbc
