#include "kpbc/analysis.hpp"

#include "kpbc/numdiff.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

namespace kpbc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

void SampleBox::validate() const {
    require(lower.size() == upper.size(), "sample box bounds have mismatched dimensions");
    require(lower.size() > 0, "sample box must have at least one dimension");
    require((lower.array() <= upper.array()).all(), "sample box requires lower <= upper");
    require(count >= 1, "sample count must be >= 1");
}

SampleStream::SampleStream(std::uint64_t seed, std::int64_t index)
    : state_(seed ^ (0x9E3779B97F4A7C15ULL *
                     (static_cast<std::uint64_t>(index) + 0x632BE59BD9B4E019ULL))) {}

std::uint64_t SampleStream::next_bits() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double SampleStream::uniform() {
    return static_cast<double>(next_bits() >> 11) * 0x1.0p-53;
}

double SampleStream::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) {
        u1 = 0x1.0p-53;
    }
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

BoxSampler::BoxSampler(Vector lower, Vector upper, std::int64_t count, std::uint64_t seed,
                       SampleStrategy strategy)
    : lower_(std::move(lower)),
      upper_(std::move(upper)),
      requested_count_(count),
      seed_(seed),
      strategy_(strategy) {
    SampleBox box{lower_, upper_, requested_count_, seed_, strategy_};
    box.validate();
    if (strategy_ == SampleStrategy::Grid) {
        const double d = static_cast<double>(lower_.size());
        grid_points_per_dim_ = std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::floor(std::pow(static_cast<double>(count), 1.0 / d) +
                                                    1e-9)));
        actual_count_ = 1;
        for (Eigen::Index j = 0; j < lower_.size(); ++j) {
            actual_count_ *= grid_points_per_dim_;
        }
    } else {
        actual_count_ = count;
    }
}

Vector BoxSampler::point(std::int64_t index, SampleStream& stream) const {
    Vector p(lower_.size());
    if (strategy_ == SampleStrategy::UniformRandom) {
        for (Eigen::Index j = 0; j < p.size(); ++j) {
            p[j] = lower_[j] + (upper_[j] - lower_[j]) * stream.uniform();
        }
    } else {
        const std::int64_t k = grid_points_per_dim_;
        std::int64_t rest = index;
        for (Eigen::Index j = 0; j < p.size(); ++j) {
            const std::int64_t cell = rest % k;
            rest /= k;
            const double frac = (k == 1) ? 0.5 : static_cast<double>(cell) / static_cast<double>(k - 1);
            p[j] = lower_[j] + (upper_[j] - lower_[j]) * frac;
        }
    }
    return p;
}

Vector BoxSampler::point(std::int64_t index) const {
    SampleStream stream(seed_, index);
    return point(index, stream);
}

Vector BoxSampler::unit_sphere(SampleStream& stream, Eigen::Index dim) {
    Vector v(dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
        v[j] = stream.normal();
    }
    const double norm = v.norm();
    if (norm < 1e-12) {
        v.setZero();
        v[0] = 1.0;
        return v;
    }
    return v / norm;
}

// ---------------------------------------------------------------------------
// Generic sampled-check runner
// ---------------------------------------------------------------------------

namespace {

struct SampleOutcome {
    double margin = 0.0;    // quantity required <= 0
    double identity = 0.0;  // equality-condition residual (>= 0)
    bool failed = false;
    Vector point;
};

struct RankedWitness {
    double key = 0.0;  // failures rank above any margin
    Witness witness;
};

struct Accumulator {
    std::int64_t violations = 0;
    std::int64_t identity_violations = 0;
    std::int64_t failures = 0;
    double worst_margin = -kInf;
    double worst_identity = 0.0;
    std::vector<RankedWitness> top;

    void insert(RankedWitness rw) {
        top.push_back(std::move(rw));
        std::sort(top.begin(), top.end(), [](const RankedWitness& a, const RankedWitness& b) {
            if (a.key != b.key) return a.key > b.key;
            return a.witness.index < b.witness.index;
        });
        if (top.size() > 10) {
            top.resize(10);
        }
    }

    void add(std::int64_t index, const SampleOutcome& out, double tolerance) {
        if (out.failed) {
            ++failures;
            insert(RankedWitness{kInf, Witness{out.point, kNaN, index}});
            return;
        }
        worst_margin = std::max(worst_margin, out.margin);
        worst_identity = std::max(worst_identity, out.identity);
        if (out.margin > tolerance) {
            ++violations;
        }
        if (out.identity > tolerance) {
            ++identity_violations;
        }
        insert(RankedWitness{out.margin, Witness{out.point, out.margin, index}});
    }

    void merge(const Accumulator& other) {
        violations += other.violations;
        identity_violations += other.identity_violations;
        failures += other.failures;
        worst_margin = std::max(worst_margin, other.worst_margin);
        worst_identity = std::max(worst_identity, other.worst_identity);
        for (const auto& rw : other.top) {
            insert(rw);
        }
    }
};

using SampleFn = std::function<SampleOutcome(std::int64_t index, SampleStream& stream)>;

PassivityReport run_sampled_check(const std::string& property, std::int64_t count,
                                  std::uint64_t seed, double tolerance, int workers,
                                  const SampleFn& eval) {
    workers = std::max(1, workers);
    workers = static_cast<int>(std::min<std::int64_t>(workers, count));

    std::vector<Accumulator> parts(static_cast<std::size_t>(workers));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));

    auto run_range = [&](int w, std::int64_t begin, std::int64_t end) {
        try {
            Accumulator& acc = parts[static_cast<std::size_t>(w)];
            for (std::int64_t k = begin; k < end; ++k) {
                SampleStream stream(seed, k);
                SampleOutcome out;
                try {
                    out = eval(k, stream);
                } catch (const Error&) {
                    out.failed = true;
                }
                acc.add(k, out, tolerance);
            }
        } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
    };

    const std::int64_t chunk = (count + workers - 1) / workers;
    if (workers == 1) {
        run_range(0, 0, count);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            const std::int64_t begin = w * chunk;
            const std::int64_t end = std::min<std::int64_t>(count, begin + chunk);
            threads.emplace_back(run_range, w, begin, end);
        }
        for (auto& t : threads) {
            t.join();
        }
    }
    for (const auto& err : errors) {
        if (err) {
            std::rethrow_exception(err);
        }
    }

    Accumulator total;
    for (const auto& part : parts) {
        total.merge(part);
    }

    PassivityReport report;
    report.property = property;
    report.samples = count;
    report.violations = total.violations;
    report.identity_violations = total.identity_violations;
    report.evaluation_failures = total.failures;
    report.worst_margin = total.worst_margin;
    report.worst_identity_residual = total.worst_identity;
    report.tolerance = tolerance;
    report.seed = seed;
    report.witnesses.reserve(total.top.size());
    for (auto& rw : total.top) {
        report.witnesses.push_back(std::move(rw.witness));
    }
    return report;
}

Vector concat(const Vector& a, const Vector& b) {
    Vector out(a.size() + b.size());
    out << a, b;
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Output-map constructions
// ---------------------------------------------------------------------------

OutputMapXU krasovskii_output(const InputAffineSystem& sys, const KrasovskiiStorage& storage) {
    if (storage.kind() == KrasovskiiStorage::Kind::Canonical) {
        // Closed form g(x)' M(x) f(x,u); distinct code path from grad_u when an
        // independent check of the gradient identity is wanted.
        auto metric = [storage](const Vector& x) { return storage.metric(x); };
        InputAffineSystem plant = sys;
        return [plant, metric](const Vector& x, const Vector& u) -> Vector {
            const Vector f = evaluate_f(plant, x, u);
            return plant.input_matrix(x).transpose() * (metric(x) * f);
        };
    }
    KrasovskiiStorage s = storage;
    return [s](const Vector& x, const Vector& u) { return s.grad_u(x, u); };
}

OutputMapX shifted_output(const InputAffineSystem& sys, const KrasovskiiStorage& storage,
                          const EquilibriumPair& anchor) {
    require(anchor.u_star.size() == sys.input_dim, "anchor input has wrong dimension");
    InputAffineSystem plant = sys;
    KrasovskiiStorage s = storage;
    const Vector u_star = anchor.u_star;
    return [plant, s, u_star](const Vector& x) -> Vector {
        return plant.input_matrix(x).transpose() * s.grad_x(x, u_star);
    };
}

std::pair<KrasovskiiStorage, OutputMapXU> krasovskii_from_differential(
    const InputAffineSystem& sys, const DifferentialStorage& dstorage,
    const EquilibriumPair& anchor) {
    KrasovskiiStorage storage =
        dstorage.has_constant_metric()
            ? KrasovskiiStorage::canonical(sys, dstorage.metric(Vector::Zero(sys.state_dim)),
                                           anchor)
            : KrasovskiiStorage::canonical_varying(
                  sys, [dstorage](const Vector& x) { return dstorage.metric(x); }, anchor);
    InputAffineSystem plant = sys;
    DifferentialStorage ds = dstorage;
    OutputMapXU output = [plant, ds](const Vector& x, const Vector& u) -> Vector {
        return ds.output_gain(x) * evaluate_f(plant, x, u);
    };
    return {std::move(storage), std::move(output)};
}

ShiftedStorage shifted_storage_from_krasovskii(const InputAffineSystem& sys,
                                               const KrasovskiiStorage& storage,
                                               const EquilibriumPair& anchor) {
    KrasovskiiStorage s = storage;
    const Vector u_star = anchor.u_star;
    auto value = [s, u_star](const Vector& x) { return s.value(x, u_star); };
    auto grad = [s, u_star](const Vector& x) { return s.grad_x(x, u_star); };
    return ShiftedStorage(value, grad, anchor, shifted_output(sys, storage, anchor));
}

Vector incremental_output(const InputAffineSystem& sys, const Matrix& metric, const Vector& x,
                          const Vector& x_prime, int segments) {
    require(x.size() == sys.state_dim && x_prime.size() == sys.state_dim,
            "points have wrong dimension");
    require(metric.rows() == sys.state_dim && metric.cols() == sys.state_dim,
            "metric has wrong shape");
    require(segments >= 1, "segment count must be positive");
    if (x == x_prime) {
        return Vector::Zero(sys.input_dim);
    }
    if (segments % 2 != 0) {
        ++segments;
    }
    const Vector weighted_diff = metric * (x - x_prime);
    const double h = 1.0 / segments;
    auto integrand = [&](double s) -> Vector {
        const Vector gamma = s * x + (1.0 - s) * x_prime;
        return sys.input_matrix(gamma).transpose() * weighted_diff;
    };
    Vector sum = integrand(0.0) + integrand(1.0);
    for (int k = 1; k < segments; ++k) {
        sum += (k % 2 == 1 ? 4.0 : 2.0) * integrand(k * h);
    }
    return (h / 3.0) * sum;
}

OutputMapX incremental_shifted_output(const InputAffineSystem& sys, const Matrix& metric,
                                      const Vector& x_star, int segments) {
    InputAffineSystem plant = sys;
    Matrix m = metric;
    Vector anchor = x_star;
    return [plant, m, anchor, segments](const Vector& x) {
        return incremental_output(plant, m, x, anchor, segments);
    };
}

// ---------------------------------------------------------------------------
// Sampled certificate checks
// ---------------------------------------------------------------------------

PassivityReport verify_krasovskii(const InputAffineSystem& sys, const KrasovskiiStorage& storage,
                                  const SampleBox& box, double tolerance, OutputMapXU output,
                                  int workers) {
    box.validate();
    require(box.dim() == sys.state_dim + sys.input_dim, "box must cover (x,u)");
    const BoxSampler sampler(box);
    const int n = sys.state_dim;
    const int m = sys.input_dim;
    OutputMapXU hk = output ? std::move(output) : krasovskii_output(sys, storage);

    auto eval = [&, hk](std::int64_t index, SampleStream& stream) {
        SampleOutcome out;
        out.point = sampler.point(index, stream);
        try {
            const Vector x = out.point.head(n);
            const Vector u = out.point.tail(m);
            out.margin = storage.grad_x(x, u).dot(evaluate_f(sys, x, u));
            out.identity = (storage.grad_u(x, u) - hk(x, u)).lpNorm<Eigen::Infinity>();
        } catch (const Error&) {
            out.failed = true;
        }
        return out;
    };
    return run_sampled_check("krasovskii", sampler.size(), sampler.seed(), tolerance, workers,
                             eval);
}

PassivityReport verify_differential(const InputAffineSystem& sys,
                                    const DifferentialStorage& dstorage, const SampleBox& box,
                                    double tolerance, int workers) {
    box.validate();
    require(box.dim() == sys.state_dim + sys.input_dim, "box must cover (x,u)");
    const BoxSampler sampler(box);
    const int n = sys.state_dim;
    const int m = sys.input_dim;

    auto eval = [&](std::int64_t index, SampleStream& stream) {
        SampleOutcome out;
        const Vector xu = sampler.point(index, stream);
        const Vector delta_x = BoxSampler::unit_sphere(stream, n);
        out.point = concat(xu, delta_x);
        try {
            const Vector x = xu.head(n);
            const Vector u = xu.tail(m);
            const Vector f = evaluate_f(sys, x, u);
            const Matrix jac = state_jacobian(sys, x, u);
            const Matrix metric = dstorage.metric(x);
            const Vector m_dx = metric * delta_x;
            double margin = m_dx.dot(jac * delta_x);
            if (!dstorage.has_constant_metric()) {
                margin +=
                    0.5 * delta_x.dot(dstorage.metric_directional_derivative(x, f) * delta_x);
            }
            out.margin = margin;
            const Vector lhs = sys.input_matrix(x).transpose() * m_dx;
            const Vector rhs = dstorage.output_gain(x) * delta_x;
            out.identity = (lhs - rhs).lpNorm<Eigen::Infinity>();
        } catch (const Error&) {
            out.failed = true;
        }
        return out;
    };
    return run_sampled_check("differential", sampler.size(), sampler.seed(), tolerance, workers,
                             eval);
}

PassivityReport verify_shifted(const InputAffineSystem& sys, const ShiftedStorage& sstorage,
                               const SampleBox& box, double tolerance, int workers) {
    box.validate();
    require(box.dim() == sys.state_dim + sys.input_dim, "box must cover (x,u)");
    const BoxSampler sampler(box);
    const int n = sys.state_dim;
    const int m = sys.input_dim;
    const Vector u_star = sstorage.anchor().u_star;
    const Vector h_star = sstorage.output(sstorage.anchor().x_star);

    auto eval = [&](std::int64_t index, SampleStream& stream) {
        SampleOutcome out;
        out.point = sampler.point(index, stream);
        try {
            const Vector x = out.point.head(n);
            const Vector u = out.point.tail(m);
            const double lhs = sstorage.gradient(x).dot(evaluate_f(sys, x, u));
            const double rhs = (u - u_star).dot(sstorage.output(x) - h_star);
            out.margin = lhs - rhs;
        } catch (const Error&) {
            out.failed = true;
        }
        return out;
    };
    return run_sampled_check("shifted", sampler.size(), sampler.seed(), tolerance, workers, eval);
}

PassivityReport verify_incremental(const InputAffineSystem& sys, const Matrix& metric,
                                   const SampleBox& box, double tolerance, int segments,
                                   int workers) {
    box.validate();
    require(box.dim() == sys.state_dim + sys.input_dim, "box must cover (x,u)");
    // Pairs are drawn from the duplicated box.
    const BoxSampler sampler(concat(box.lower, box.lower), concat(box.upper, box.upper), box.count,
                             box.seed, box.strategy);
    const int n = sys.state_dim;
    const int m = sys.input_dim;

    auto eval = [&](std::int64_t index, SampleStream& stream) {
        SampleOutcome out;
        out.point = sampler.point(index, stream);
        try {
            const Vector x = out.point.head(n);
            const Vector u = out.point.segment(n, m);
            const Vector xp = out.point.segment(n + m, n);
            const Vector up = out.point.tail(m);
            const Vector df = evaluate_f(sys, x, u) - evaluate_f(sys, xp, up);
            const double lhs = (x - xp).dot(metric * df);
            const double rhs = (u - up).dot(incremental_output(sys, metric, x, xp, segments));
            out.margin = lhs - rhs;
        } catch (const Error&) {
            out.failed = true;
        }
        return out;
    };
    return run_sampled_check("incremental", sampler.size(), sampler.seed(), tolerance, workers,
                             eval);
}

PassivityReport check_exactness(const InputAffineSystem& sys, const Matrix& metric,
                                const SampleBox& box, double tolerance, int workers) {
    box.validate();
    require(box.dim() == sys.state_dim, "box must cover x");
    const BoxSampler sampler(box);

    auto eval = [&](std::int64_t index, SampleStream& stream) {
        SampleOutcome out;
        out.point = sampler.point(index, stream);
        try {
            const Vector& x = out.point;
            double worst = 0.0;
            for (int i = 0; i < sys.input_dim; ++i) {
                Matrix col_jac;
                if (sys.input_column_jacobian) {
                    col_jac = sys.input_column_jacobian(x, i);
                } else {
                    col_jac = central_jacobian(
                        [&sys, i](const Vector& p) -> Vector {
                            return sys.input_matrix(p).col(i);
                        },
                        x);
                }
                const Matrix form = metric * col_jac;
                worst = std::max(worst, (form - form.transpose()).cwiseAbs().maxCoeff());
            }
            out.margin = worst;
        } catch (const Error&) {
            out.failed = true;
        }
        return out;
    };
    return run_sampled_check("exactness", sampler.size(), sampler.seed(), tolerance, workers,
                             eval);
}

PassivityReport dissipation_check(std::span<const double> time, std::span<const double> storage,
                                  std::span<const double> supply, double tolerance) {
    const std::size_t count = time.size();
    require(storage.size() == count && supply.size() == count,
            "trajectory channels have mismatched lengths");

    PassivityReport report;
    report.property = "dissipation";
    report.samples = static_cast<std::int64_t>(count);
    report.tolerance = tolerance;
    report.worst_margin = -kInf;
    if (count < 2) {
        return report;
    }

    const double dt = time[1] - time[0];
    require(dt > 0.0, "time grid must be increasing");
    for (std::size_t k = 1; k < count; ++k) {
        const double step = time[k] - time[k - 1];
        if (std::abs(step - dt) > 1e-9 * std::max(1.0, std::abs(dt))) {
            throw ContractViolation("dissipation check requires a uniform grid; resample first");
        }
    }

    // D_k = S_k - cumulative trapezoid of the supply; excess of pair (t1,t2) is
    // D(t2) - D(t1), so it suffices to track the running minimum of D.
    double integral = 0.0;
    double run_min = storage[0];
    std::size_t run_min_at = 0;
    Accumulator acc;
    for (std::size_t k = 1; k < count; ++k) {
        integral += 0.5 * (supply[k - 1] + supply[k]) * dt;
        const double d = storage[k] - integral;
        const double excess = d - run_min;
        SampleOutcome out;
        out.margin = excess;
        out.point = Vector(2);
        out.point << time[run_min_at], time[k];
        acc.add(static_cast<std::int64_t>(k), out, tolerance);
        if (d < run_min) {
            run_min = d;
            run_min_at = k;
        }
    }

    report.violations = acc.violations;
    report.worst_margin = acc.worst_margin;
    report.witnesses.reserve(acc.top.size());
    for (auto& rw : acc.top) {
        report.witnesses.push_back(std::move(rw.witness));
    }
    return report;
}

}  // namespace kpbc
