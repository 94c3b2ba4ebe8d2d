#include "kpbc/system.hpp"

#include "kpbc/numdiff.hpp"

#include <cmath>
#include <sstream>

namespace kpbc {

namespace {

void check_point(const InputAffineSystem& sys, const Vector& x, const Vector& u) {
    if (x.size() != sys.state_dim || u.size() != sys.input_dim) {
        std::ostringstream msg;
        msg << "state/input dimensions (" << x.size() << ", " << u.size()
            << ") do not match system (" << sys.state_dim << ", " << sys.input_dim << ")";
        throw ContractViolation(msg.str());
    }
}

void check_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (!m.col(j).allFinite()) {
                throw SingularPointError(std::string(what) + " is not finite", static_cast<int>(j));
            }
        }
        throw SingularPointError(std::string(what) + " is not finite", 0);
    }
}

}  // namespace

void VariationalSignal::validate(const InputAffineSystem& sys) const {
    require(delta_x.size() == sys.state_dim, "delta_x has wrong dimension");
    require(delta_u.size() == sys.input_dim, "delta_u has wrong dimension");
    require(delta_y.size() == sys.input_dim, "delta_y has wrong dimension");
}

Vector evaluate_f(const InputAffineSystem& sys, const Vector& x, const Vector& u) {
    check_point(sys, x, u);
    Vector g0 = sys.drift(x);
    require(g0.size() == sys.state_dim, "drift returned wrong dimension");
    if (sys.input_dim == 0) {
        return g0;
    }
    const Matrix g = sys.input_matrix(x);
    require(g.rows() == sys.state_dim && g.cols() == sys.input_dim,
            "input matrix has wrong shape");
    g0.noalias() += g * u;
    return g0;
}

Matrix state_jacobian(const InputAffineSystem& sys, const Vector& x, const Vector& u) {
    check_point(sys, x, u);
    Matrix jac;
    if (sys.drift_jacobian) {
        jac = sys.drift_jacobian(x);
        require(jac.rows() == sys.state_dim && jac.cols() == sys.state_dim,
                "drift Jacobian has wrong shape");
        if (sys.input_column_jacobian) {
            for (int i = 0; i < sys.input_dim; ++i) {
                jac.noalias() += u[i] * sys.input_column_jacobian(x, i);
            }
        } else {
            // Mixed analytic/finite-difference case: differentiate g columns.
            for (int i = 0; i < sys.input_dim; ++i) {
                auto column = [&sys, i](const Vector& p) -> Vector {
                    return sys.input_matrix(p).col(i);
                };
                jac.noalias() += u[i] * central_jacobian(column, x);
            }
        }
    } else {
        auto field = [&sys, &u](const Vector& p) { return evaluate_f(sys, p, u); };
        jac = central_jacobian(field, x);
    }
    check_finite(jac, "state Jacobian");
    return jac;
}

Vector ExtendedSystem::drift(const Vector& z) const {
    require(z.size() == state_dim(), "extended state has wrong dimension");
    const Vector x = z.head(base.state_dim);
    const Vector u = z.tail(base.input_dim);
    Vector d = Vector::Zero(state_dim());
    d.head(base.state_dim) = evaluate_f(base, x, u);
    return d;
}

Matrix ExtendedSystem::input_matrix(const Vector& z) const {
    require(z.size() == state_dim(), "extended state has wrong dimension");
    Matrix g = Matrix::Zero(state_dim(), input_dim());
    g.bottomRows(base.input_dim).setIdentity();
    return g;
}

InputAffineSystem ExtendedSystem::as_system() const {
    const int n = base.state_dim;
    const int m = base.input_dim;
    InputAffineSystem sys;
    sys.state_dim = n + m;
    sys.input_dim = m;
    ExtendedSystem self = *this;
    sys.drift = [self](const Vector& z) { return self.drift(z); };
    sys.input_matrix = [self](const Vector& z) { return self.input_matrix(z); };
    if (output) {
        auto out = output;
        sys.output = [out, n, m](const Vector& z) {
            return out(z.head(n), z.tail(m));
        };
    }
    InputAffineSystem inner = base;
    sys.drift_jacobian = [inner, n, m](const Vector& z) {
        const Vector x = z.head(n);
        const Vector u = z.tail(m);
        Matrix jac = Matrix::Zero(n + m, n + m);
        jac.topLeftCorner(n, n) = state_jacobian(inner, x, u);
        jac.topRightCorner(n, m) = inner.input_matrix(x);
        return jac;
    };
    sys.input_column_jacobian = [n, m](const Vector&, int) {
        return Matrix::Zero(n + m, n + m);
    };
    return sys;
}

ExtendedSystem build_extended(const InputAffineSystem& sys,
                              std::function<Vector(const Vector&, const Vector&)> output) {
    require(static_cast<bool>(output), "extended system requires an output map");
    return ExtendedSystem{sys, std::move(output)};
}

namespace {

struct Iterate {
    Vector x;
    Vector u;
};

Vector residual_of(const InputAffineSystem& sys, const Iterate& it) {
    return evaluate_f(sys, it.x, it.u);
}

}  // namespace

EquilibriumPair find_equilibrium(const InputAffineSystem& sys, const Vector& x0,
                                 const Vector& u0, EquilibriumMode mode,
                                 double tolerance, int max_iterations) {
    require(x0.allFinite() && u0.allFinite(), "initial guess must be finite");
    require(x0.size() == sys.state_dim && u0.size() == sys.input_dim,
            "initial guess has wrong dimensions");

    const int n = sys.state_dim;
    const int m = sys.input_dim;
    Iterate it{x0, u0};
    Vector res = residual_of(sys, it);
    double res_norm = res.norm();

    for (int iter = 0; iter < max_iterations; ++iter) {
        if (res_norm <= tolerance) {
            return EquilibriumPair{it.x, it.u, res_norm};
        }

        Vector step;
        if (mode == EquilibriumMode::FixInput) {
            const Matrix jac = state_jacobian(sys, it.x, it.u);
            Eigen::FullPivLU<Matrix> lu(jac);
            if (lu.rank() < n) {
                throw SingularPointError("equilibrium solve: rank-deficient Jacobian",
                                         static_cast<int>(lu.rank()));
            }
            step = lu.solve(-res);
        } else {
            Matrix jac(n, n + m);
            jac.leftCols(n) = state_jacobian(sys, it.x, it.u);
            jac.rightCols(m) = sys.input_matrix(it.x);
            Eigen::ColPivHouseholderQR<Matrix> qr(jac);
            if (qr.rank() < n) {
                throw SingularPointError("equilibrium solve: rank-deficient Jacobian",
                                         static_cast<int>(qr.rank()));
            }
            step = qr.solve(-res);
        }

        // Step halving until the residual decreases.
        double lambda = 1.0;
        bool improved = false;
        Iterate next = it;
        Vector next_res;
        for (int halving = 0; halving <= 40; ++halving) {
            if (mode == EquilibriumMode::FixInput) {
                next.x = it.x + lambda * step;
            } else {
                next.x = it.x + lambda * step.head(n);
                next.u = it.u + lambda * step.tail(m);
            }
            next_res = residual_of(sys, next);
            if (next_res.allFinite() && next_res.norm() < res_norm) {
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!improved) {
            throw SolverError("equilibrium solve stalled (no residual decrease)", it.x, it.u,
                              res_norm);
        }
        it = next;
        res = next_res;
        res_norm = res.norm();
    }

    if (res_norm <= tolerance) {
        return EquilibriumPair{it.x, it.u, res_norm};
    }
    throw SolverError("equilibrium solve did not converge", it.x, it.u, res_norm);
}

}  // namespace kpbc
