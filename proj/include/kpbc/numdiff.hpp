#pragma once

// Central finite differences with per-coordinate step 1e-6 * (1 + |x_j|).

#include "kpbc/types.hpp"

#include <cmath>
#include <functional>

namespace kpbc {

inline double fd_step(double xj) { return 1e-6 * (1.0 + std::abs(xj)); }

/// Central-difference gradient of a scalar function.
inline Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x) {
    Vector grad(x.size());
    Vector xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = fd_step(x[j]);
        xp[j] = x[j] + h;
        const double fp = f(xp);
        xp[j] = x[j] - h;
        const double fm = f(xp);
        xp[j] = x[j];
        grad[j] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

/// Central-difference Jacobian of a vector function (columns are d/dx_j).
inline Matrix central_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x) {
    Vector xp = x;
    Matrix jac;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = fd_step(x[j]);
        xp[j] = x[j] + h;
        const Vector fp = f(xp);
        xp[j] = x[j] - h;
        const Vector fm = f(xp);
        xp[j] = x[j];
        if (jac.size() == 0) {
            jac.resize(fp.size(), x.size());
        }
        jac.col(j) = (fp - fm) / (2.0 * h);
    }
    return jac;
}

/// Central-difference derivative of a matrix function along coordinate j.
inline Matrix central_matrix_derivative(const std::function<Matrix(const Vector&)>& m,
                                        const Vector& x, Eigen::Index j) {
    const double h = fd_step(x[j]);
    Vector xp = x;
    xp[j] = x[j] + h;
    const Matrix mp = m(xp);
    xp[j] = x[j] - h;
    const Matrix mm = m(xp);
    return (mp - mm) / (2.0 * h);
}

/// Directional derivative of a matrix function along a (not necessarily unit) direction.
inline Matrix central_matrix_directional(const std::function<Matrix(const Vector&)>& m,
                                         const Vector& x, const Vector& direction) {
    const double scale = direction.norm();
    if (scale == 0.0) {
        const Matrix m0 = m(x);
        return Matrix::Zero(m0.rows(), m0.cols());
    }
    const double h = 1e-6 * (1.0 + x.norm()) / scale;
    const Matrix mp = m(x + h * direction);
    const Matrix mm = m(x - h * direction);
    return (mp - mm) / (2.0 * h);
}

}  // namespace kpbc
