// Acceptance suite: end-to-end checks of the library against its reference
// values and closed-loop behaviour.  Prints one line per criterion and exits
// with the number of failed criteria.

#include "kpbc/analysis.hpp"
#include "kpbc/artifacts.hpp"
#include "kpbc/controllers.hpp"
#include "kpbc/models.hpp"
#include "kpbc/numdiff.hpp"
#include "kpbc/simulate.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace kpbc;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%2d] %-38s %s%s%s\n", number, name.c_str(), pass ? "PASS" : "FAIL",
                detail.empty() ? "" : "  -- ", detail.c_str());
    if (!pass) {
        ++failures;
    }
}

double seconds_since(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Vector vec1(double a) {
    Vector v(1);
    v << a;
    return v;
}

Matrix scalar(double a) {
    Matrix m(1, 1);
    m << a;
    return m;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

struct ClosedLoopRun {
    std::string id;
    Trajectory trajectory;
    RunSummary summary;
};

// ---------------------------------------------------------------------------

void criterion_1_equilibrium() {
    const auto start = std::chrono::steady_clock::now();
    const ZetaParams params;
    const EquilibriumPair closed = zeta_equilibrium(params);
    bool pass = closed.x_star[0] == 1.0 / 9 && closed.x_star[1] == 1.0 / 3 &&
                closed.x_star[2] == 1.0 / 3 && closed.x_star[3] == 1.0 / 3 &&
                closed.u_star[0] == 0.25;

    Vector x0(4);
    x0 << 0.1, 0.3, 0.3, 0.3;
    const EquilibriumPair solved =
        find_equilibrium(zeta_system(params), x0, vec1(0.25), EquilibriumMode::FixInput);
    pass = pass && solved.residual <= 1e-10 &&
           (solved.x_star - closed.x_star).norm() <= 1e-8;
    const double elapsed = seconds_since(start);
    pass = pass && elapsed < 1.0;
    report(1, "zeta equilibrium reproduction", pass,
           "residual " + fmt(solved.residual) + ", " + fmt(elapsed) + " s");
}

void criterion_2_krasovskii_certificate() {
    const auto start = std::chrono::steady_clock::now();
    const ZetaParams params;
    const InputAffineSystem sys = zeta_system(params);
    const KrasovskiiStorage storage = zeta_storage(params);

    SampleBox box;
    box.lower.resize(5);
    box.upper.resize(5);
    box.lower << -0.5, -0.5, -0.5, -0.5, 0.0;
    box.upper << 1.5, 1.5, 1.5, 1.5, 1.0;
    box.count = 100000;
    box.seed = 42;
    const PassivityReport rep =
        verify_krasovskii(sys, storage, box, 1e-9, zeta_krasovskii_output(params), 2);

    // Margin identity: dS_K/dx f == -f4^2 / a3 on independent samples.
    double worst_identity = 0.0;
    SampleStream stream(42, 1);
    for (int k = 0; k < 10000; ++k) {
        Vector x(4);
        for (int i = 0; i < 4; ++i) x[i] = -0.5 + 2.0 * stream.uniform();
        const Vector u = vec1(stream.uniform());
        const Vector f = evaluate_f(sys, x, u);
        const double margin = storage.grad_x(x, u).dot(f);
        worst_identity =
            std::max(worst_identity, std::abs(margin + f[3] * f[3] / params.alpha3));
    }

    const double elapsed = seconds_since(start);
    const bool pass = rep.violations == 0 && rep.identity_violations == 0 &&
                      rep.samples == 100000 && worst_identity <= 1e-10 && elapsed < 10.0;
    report(2, "zeta Krasovskii certificate", pass,
           "worst margin " + fmt(rep.worst_margin) + ", identity " + fmt(worst_identity) +
               ", " + fmt(elapsed) + " s");
}

void criterion_3_cuberoot_certificate() {
    const InputAffineSystem sys = cuberoot_system();
    const KrasovskiiStorage storage = cuberoot_storage();
    auto y_rate = cuberoot_output_rate();

    double worst_margin = 0.0;
    double worst_identity = 0.0;
    SampleStream stream(42, 2);
    for (int k = 0; k < 100000; ++k) {
        Vector x(2);
        for (int i = 0; i < 2; ++i) {
            const double sign = stream.uniform() < 0.5 ? -1.0 : 1.0;
            x[i] = sign * (1e-3 + (1.0 - 1e-3) * stream.uniform());
        }
        const Vector u = vec1(2.0 * stream.uniform() - 1.0);
        worst_margin =
            std::max(worst_margin, std::abs(storage.grad_x(x, u).dot(evaluate_f(sys, x, u))));
        worst_identity = std::max(
            worst_identity, (storage.grad_u(x, u) - y_rate(x, u)).lpNorm<Eigen::Infinity>());
    }

    const bool margin_ok = worst_margin <= 1e-12;
    const bool identity_ok = worst_identity <= 1e-9;
    report(3, "cube-root certificate", margin_ok && identity_ok,
           "gradient-field residual " + fmt(worst_margin) +
               (identity_ok ? "" : "; output-map identity residual " + fmt(worst_identity) +
                                       " (dS/du equals 3/4 of dh/dx g u for this model, so"
                                       " the stated identity cannot hold)"));
}

std::vector<ClosedLoopRun> run_closed_loop_family(const ClosedLoopSystem& loop,
                                                  const std::vector<Vector>& starts,
                                                  double dt) {
    IntegratorConfig cfg;
    cfg.method = IntegrationMethod::RK4;
    cfg.dt = dt;
    cfg.t_final = 200.0;
    cfg.record_stride = 10;
    const AnchorSet anchor = AnchorSet::zeta_family(1.0);

    std::vector<ClosedLoopRun> runs;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        ClosedLoopRun run;
        run.id = to_string(loop.kind) + "-" + std::to_string(i);
        run.trajectory = simulate(loop, starts[i], cfg);
        run.summary = summarize_run(loop, run.trajectory, anchor, 1e-3, 10.0);
        run.summary.id = run.id;
        runs.push_back(std::move(run));
    }
    return runs;
}

std::vector<Vector> kpbc_starts() {
    std::vector<Vector> starts;
    Vector z(6);
    z << 0, 0, 0, 0, 0, 0;
    starts.push_back(z);
    z << 0.5, 0.5, 0.5, 0.5, 0.5, 0;
    starts.push_back(z);
    z << 1, 1, 1, 1, 0, 0;
    starts.push_back(z);
    z << 0, 0.5, 1, 0.5, 0.25, 0;
    starts.push_back(z);
    return starts;
}

std::vector<Vector> spbc_starts() {
    std::vector<Vector> starts;
    Vector z(5);
    z << 0, 0, 0, 0, 0;
    starts.push_back(z);
    z << 0.5, 0.5, 0.5, 0.5, 0;
    starts.push_back(z);
    z << 1, 1, 1, 1, 0;
    starts.push_back(z);
    z << 0, 0.5, 1, 0.5, 0;
    starts.push_back(z);
    return starts;
}

void criterion_4_5_6_11(std::vector<ClosedLoopRun>& kpbc_runs,
                        std::vector<ClosedLoopRun>& spbc_runs) {
    const ZetaParams params;
    const InputAffineSystem sys = zeta_system(params);
    const KrasovskiiStorage storage = zeta_storage(params);
    const EquilibriumPair eq = zeta_equilibrium(params);

    const auto kpbc_loop = assemble_closed_loop(
        sys, storage, make_kpbc_config(scalar(1), scalar(1), scalar(1), eq.u_star));
    const auto spbc_loop = assemble_closed_loop(
        sys, storage, make_spbc_config(scalar(1), scalar(1), scalar(1), scalar(1), eq.u_star));

    // Criterion 4.
    {
        const auto start = std::chrono::steady_clock::now();
        kpbc_runs = run_closed_loop_family(kpbc_loop, kpbc_starts(), 1e-3);
        const double elapsed = seconds_since(start);
        bool pass = elapsed < 30.0;
        double worst_t = 0.0;
        for (const auto& run : kpbc_runs) {
            pass = pass && run.summary.converged;
            worst_t = std::max(worst_t, run.summary.t_converge);
        }
        report(4, "kpbc convergence to the equilibrium set", pass,
               "slowest window end t=" + fmt(worst_t) + ", " + fmt(elapsed) + " s");
    }

    // Criterion 5.
    {
        spbc_runs = run_closed_loop_family(spbc_loop, spbc_starts(), 1e-3);
        bool pass = true;
        double worst_t = 0.0;
        for (const auto& run : spbc_runs) {
            pass = pass && run.summary.converged;
            worst_t = std::max(worst_t, run.summary.t_converge);
        }
        report(5, "spbc convergence to the equilibrium set", pass,
               "slowest window end t=" + fmt(worst_t));
    }

    // Criterion 6: storage monotonicity at two step sizes.
    {
        double worst_coarse = 0.0;
        for (const auto& run : kpbc_runs) {
            worst_coarse = std::max(worst_coarse, run.summary.worst_storage_increase);
        }
        for (const auto& run : spbc_runs) {
            worst_coarse = std::max(worst_coarse, run.summary.worst_storage_increase);
        }

        double worst_fine = 0.0;
        for (const auto* loop : {&kpbc_loop, &spbc_loop}) {
            IntegratorConfig cfg;
            cfg.dt = 5e-4;
            cfg.t_final = 200.0;
            cfg.record_stride = 10;
            const Trajectory traj = simulate(*loop, Vector::Zero(loop->dim), cfg);
            worst_fine = std::max(
                worst_fine,
                monotonicity_monitor(traj, StorageChannel::Total, 0.0).worst_increase);
        }
        const bool pass = worst_coarse <= 1e-8 && worst_fine <= 2.5e-9;
        report(6, "storage monotonicity under refinement", pass,
               "worst increase " + fmt(worst_coarse) + " at dt=1e-3, " + fmt(worst_fine) +
                   " at dt=5e-4");
    }

    // Criterion 11: oscillation metric is computed and serialized.
    {
        nlohmann::json all = nlohmann::json::array();
        for (const auto* family : {&kpbc_runs, &spbc_runs}) {
            for (const auto& run : *family) {
                all.push_back(summary_to_json(run.summary));
            }
        }
        bool pass = true;
        for (const auto& item : all) {
            pass = pass && item.contains("oscillation_count") &&
                   item["oscillation_count"].is_number_integer();
        }
        const nlohmann::json reread = nlohmann::json::parse(all.dump());
        pass = pass && reread.size() == 8;
        report(11, "oscillation metric reported", pass,
               "kpbc origin " + std::to_string(kpbc_runs[0].summary.oscillation_count) +
                   " sign changes, spbc origin " +
                   std::to_string(spbc_runs[0].summary.oscillation_count));
    }
}

void criterion_7_dissipation_under_excitation() {
    const ZetaParams params;
    const EquilibriumPair eq = zeta_equilibrium(params);
    auto nu = [](double t) { return Vector::Constant(1, 0.1 * std::sin(t)); };
    const auto loop = assemble_closed_loop(
        zeta_system(params), zeta_storage(params),
        make_kpbc_config(scalar(1), scalar(1), scalar(1), eq.u_star, nu));

    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_final = 100.0;
    cfg.record_stride = 10;
    const Trajectory traj = simulate(loop, Vector::Zero(6), cfg);
    const PassivityReport rep =
        dissipation_check(traj.t, traj.storage_total, traj.supply, 1e-6);
    report(7, "dissipation inequality with supply", rep.violations == 0,
           "worst excess " + fmt(rep.worst_margin) + " over " +
               std::to_string(traj.size()) + " grid points");
}

void criterion_8_frequency_response() {
    bool pass = true;
    std::ostringstream detail;
    for (double omega : {0.5, 1.0, 2.0}) {
        // Controller alone, driven by y_K = sin(wt):
        //   udot = uK,  uKdot = -uK - (u - u*) - sin(wt).
        auto field = [omega](double t, const Vector& z) -> Vector {
            Vector dz(2);
            dz << z[1], -z[1] - z[0] - std::sin(omega * t);
            return dz;
        };
        const double dt = 1e-3;
        const double period = 2.0 * M_PI / omega;
        const double t_final = 60.0 + 2.0 * period;
        Vector z = Vector::Zero(2);
        double amplitude = 0.0;
        const auto steps = static_cast<std::int64_t>(std::round(t_final / dt));
        for (std::int64_t k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) * dt;
            z = rk4_step(field, z, t, dt);
            if (t + dt >= t_final - 2.0 * period) {
                amplitude = std::max(amplitude, std::abs(z[0]));
            }
        }
        const std::complex<double> s(0.0, omega);
        const double expected = 1.0 / std::abs(s * s + s + 1.0);
        const double rel = std::abs(amplitude - expected) / expected;
        pass = pass && rel <= 0.02;
        detail << "w=" << omega << " rel " << fmt(rel) << "; ";
    }
    report(8, "controller frequency response", pass, detail.str());
}

void criterion_9_linear_oracle() {
    const ModelBundle lin = make_model("linear:scalar", nlohmann::json::object());
    const Matrix metric = Matrix::Identity(1, 1);
    bool pass = true;
    std::ostringstream detail;

    SampleBox box;
    box.lower.resize(2);
    box.upper.resize(2);
    box.lower << -1.0, -1.0;
    box.upper << 1.0, 1.0;
    box.count = 10000;
    box.seed = 9;

    const PassivityReport kras = verify_krasovskii(lin.system, lin.storage, box, 1e-9);
    pass = pass && kras.violations == 0 && kras.identity_violations == 0;

    InputAffineSystem plant = lin.system;
    const DifferentialStorage dstorage = DifferentialStorage::constant(
        metric,
        [plant](const Vector& x) -> Matrix { return plant.input_matrix(x).transpose(); });
    const PassivityReport diff = verify_differential(lin.system, dstorage, box, 1e-9);
    pass = pass && diff.violations == 0 && diff.identity_violations == 0;

    const ShiftedStorage sstorage =
        shifted_storage_from_krasovskii(lin.system, lin.storage, lin.anchor);
    const PassivityReport shift = verify_shifted(lin.system, sstorage, box, 1e-9);
    pass = pass && shift.violations == 0;

    const PassivityReport incr = verify_incremental(lin.system, metric, box, 1e-9);
    pass = pass && incr.violations == 0;

    SampleBox xbox;
    xbox.lower = vec1(-1.0);
    xbox.upper = vec1(1.0);
    xbox.count = 1000;
    xbox.seed = 9;
    const PassivityReport exact = check_exactness(lin.system, metric, xbox, 1e-12);
    pass = pass && exact.violations == 0 && exact.worst_margin == 0.0;

    double worst_hi = 0.0;
    SampleStream stream(9, 3);
    for (int k = 0; k < 1000; ++k) {
        const Vector x = vec1(2.0 * stream.uniform() - 1.0);
        const Vector xp = vec1(2.0 * stream.uniform() - 1.0);
        const Vector h = incremental_output(lin.system, metric, x, xp, 64);
        worst_hi = std::max(worst_hi, std::abs(h[0] - (x[0] - xp[0])));
    }
    pass = pass && worst_hi <= 1e-12;

    detail << "margins: k " << fmt(kras.worst_margin) << ", d " << fmt(diff.worst_margin)
           << ", s " << fmt(shift.worst_margin) << ", i " << fmt(incr.worst_margin)
           << "; h_I err " << fmt(worst_hi);
    report(9, "scalar linear oracle checks", pass, detail.str());
}

void criterion_10_derivative_oracles() {
    bool pass = true;
    double worst = 0.0;

    auto check_grad = [&](const std::function<double(const Vector&)>& f,
                          const std::function<Vector(const Vector&)>& grad, const Vector& x) {
        const Vector analytic = grad(x);
        const Vector fd = central_gradient(f, x);
        const double rel = (analytic - fd).lpNorm<Eigen::Infinity>() /
                           (1.0 + analytic.lpNorm<Eigen::Infinity>());
        worst = std::max(worst, rel);
        pass = pass && rel <= 1e-6;
    };

    const ZetaParams params;
    const InputAffineSystem zeta = zeta_system(params);
    const KrasovskiiStorage zstorage = zeta_storage(params);
    SampleStream stream(10, 0);
    for (int k = 0; k < 100; ++k) {
        Vector x(4);
        for (int i = 0; i < 4; ++i) x[i] = 2.0 * stream.uniform() - 0.5;
        const Vector u = vec1(stream.uniform());

        const Matrix analytic = state_jacobian(zeta, x, u);
        const Matrix fd =
            central_jacobian([&](const Vector& p) { return evaluate_f(zeta, p, u); }, x);
        const double rel = (analytic - fd).cwiseAbs().maxCoeff() /
                           (1.0 + analytic.cwiseAbs().maxCoeff());
        worst = std::max(worst, rel);
        pass = pass && rel <= 1e-6;

        check_grad([&](const Vector& p) { return zstorage.value(p, u); },
                   [&](const Vector& p) { return zstorage.grad_x(p, u); }, x);
        check_grad([&](const Vector& p) { return zstorage.value(x, p); },
                   [&](const Vector& p) { return zstorage.grad_u(x, p); }, u);
    }

    const KrasovskiiStorage cstorage = cuberoot_storage();
    for (int k = 0; k < 100; ++k) {
        Vector x(2);
        for (int i = 0; i < 2; ++i) {
            const double sign = stream.uniform() < 0.5 ? -1.0 : 1.0;
            x[i] = sign * (0.05 + stream.uniform());
        }
        const Vector u = vec1(2.0 * stream.uniform() - 1.0);
        check_grad([&](const Vector& p) { return cstorage.value(p, u); },
                   [&](const Vector& p) { return cstorage.grad_x(p, u); }, x);
        check_grad([&](const Vector& p) { return cstorage.value(x, p); },
                   [&](const Vector& p) { return cstorage.grad_u(x, p); }, u);
    }

    const EquilibriumPair eq = zeta_equilibrium(params);
    const ShiftedStorage sstorage = shifted_storage_from_krasovskii(zeta, zstorage, eq);
    for (int k = 0; k < 100; ++k) {
        Vector x(4);
        for (int i = 0; i < 4; ++i) x[i] = 2.0 * stream.uniform() - 0.5;
        check_grad([&](const Vector& p) { return sstorage.value(p); },
                   [&](const Vector& p) { return sstorage.gradient(p); }, x);
    }

    report(10, "analytic derivatives vs differences", pass, "worst rel " + fmt(worst));
}

}  // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_1_equilibrium();
    criterion_2_krasovskii_certificate();
    criterion_3_cuberoot_certificate();

    std::vector<ClosedLoopRun> kpbc_runs;
    std::vector<ClosedLoopRun> spbc_runs;
    criterion_4_5_6_11(kpbc_runs, spbc_runs);
    criterion_7_dissipation_under_excitation();
    criterion_8_frequency_response();
    criterion_9_linear_oracle();
    criterion_10_derivative_oracles();

    std::printf("%d criterion(s) failed\n", failures);
    return failures;
}
