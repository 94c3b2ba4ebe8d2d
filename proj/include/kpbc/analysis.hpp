#pragma once

// =============================================================================
// kpbc - passivity certificate verification
// =============================================================================
// Output-map constructions and sampled checks of the dissipation inequalities.
// Sampling is deterministic: the random stream of sample k depends only on
// (seed, k), so reports are identical for any worker count.
// =============================================================================

#include "kpbc/storage.hpp"
#include "kpbc/system.hpp"
#include "kpbc/types.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kpbc {

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

enum class SampleStrategy { UniformRandom, Grid };

/// Axis-aligned box of sample points, with count, seed and strategy.
struct SampleBox {
    Vector lower;
    Vector upper;
    std::int64_t count = 100000;
    std::uint64_t seed = 42;
    SampleStrategy strategy = SampleStrategy::UniformRandom;

    void validate() const;
    [[nodiscard]] Eigen::Index dim() const { return lower.size(); }
};

/// Deterministic per-sample random stream (splitmix64 based).
class SampleStream {
public:
    SampleStream(std::uint64_t seed, std::int64_t index);

    std::uint64_t next_bits();
    double uniform();  ///< in [0, 1)
    double normal();   ///< standard normal (Box-Muller)

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Draws points from a box; for Grid strategy the requested count is rounded
/// down to the nearest full lattice k^dim.
class BoxSampler {
public:
    BoxSampler(Vector lower, Vector upper, std::int64_t count, std::uint64_t seed,
               SampleStrategy strategy);
    explicit BoxSampler(const SampleBox& box)
        : BoxSampler(box.lower, box.upper, box.count, box.seed, box.strategy) {}

    [[nodiscard]] std::int64_t size() const { return actual_count_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    /// Point for sample `index`; `stream` is left positioned after the
    /// coordinate draws so callers can draw auxiliary variables from it.
    Vector point(std::int64_t index, SampleStream& stream) const;
    Vector point(std::int64_t index) const;

    /// Unit vector of dimension `dim` drawn from `stream`.
    static Vector unit_sphere(SampleStream& stream, Eigen::Index dim);

private:
    Vector lower_;
    Vector upper_;
    std::int64_t requested_count_;
    std::int64_t actual_count_;
    std::uint64_t seed_;
    SampleStrategy strategy_;
    std::int64_t grid_points_per_dim_ = 0;
};

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Sample point retained in a report; `point` concatenates the sampled
/// coordinates of the check (see each verifier for the layout).
struct Witness {
    Vector point;
    double margin = 0.0;
    std::int64_t index = 0;
};

/// Outcome of a sampled certificate check.  `violations` counts samples whose
/// margin (the quantity required to be <= 0) exceeds the tolerance;
/// equality-condition residuals are tracked separately.
struct PassivityReport {
    std::string property;
    std::int64_t samples = 0;
    std::int64_t violations = 0;
    std::int64_t identity_violations = 0;
    std::int64_t evaluation_failures = 0;
    double worst_margin = -std::numeric_limits<double>::infinity();
    double worst_identity_residual = 0.0;
    double tolerance = 0.0;
    std::uint64_t seed = 0;
    std::vector<Witness> witnesses;  ///< up to 10 worst samples

    [[nodiscard]] bool clean() const {
        return violations == 0 && identity_violations == 0;
    }
};

// ---------------------------------------------------------------------------
// Output-map constructions
// ---------------------------------------------------------------------------

using OutputMapXU = std::function<Vector(const Vector&, const Vector&)>;
using OutputMapX = std::function<Vector(const Vector&)>;

/// y_K(x,u) = (dS_K/du)'; for canonical storage this equals g(x)' M(x) f(x,u).
OutputMapXU krasovskii_output(const InputAffineSystem& sys, const KrasovskiiStorage& storage);

/// Shifted output h(x) = (dS_K(x,u*)/dx g(x))'; h(anchor.x_star) vanishes.
OutputMapX shifted_output(const InputAffineSystem& sys, const KrasovskiiStorage& storage,
                          const EquilibriumPair& anchor);

/// Krasovskii storage S_K(x,u) = S_D(x, f(x,u)) and output h_K = h_d(x) f(x,u)
/// induced by a differential storage.
std::pair<KrasovskiiStorage, OutputMapXU> krasovskii_from_differential(
    const InputAffineSystem& sys, const DifferentialStorage& dstorage,
    const EquilibriumPair& anchor);

/// Shifted storage S_s(x) = S_K(x, u*) with the output map from shifted_output.
ShiftedStorage shifted_storage_from_krasovskii(const InputAffineSystem& sys,
                                               const KrasovskiiStorage& storage,
                                               const EquilibriumPair& anchor);

/// Incremental output h_I(x,x') = int_0^1 g'(s x + (1-s) x') M (x - x') ds along
/// the straight-line path, by composite Simpson quadrature (odd segment counts
/// are rounded up).
Vector incremental_output(const InputAffineSystem& sys, const Matrix& metric, const Vector& x,
                          const Vector& x_prime, int segments = 64);

/// Shifted output induced by the incremental one: h(x) = h_I(x, x*).
OutputMapX incremental_shifted_output(const InputAffineSystem& sys, const Matrix& metric,
                                      const Vector& x_star, int segments = 64);

// ---------------------------------------------------------------------------
// Sampled certificate checks
// ---------------------------------------------------------------------------

/// Krasovskii certificate over a box in (x,u).  Margin: dS_K/dx f(x,u).
/// Identity residual: |dS_K/du - output'|, against `output` when provided,
/// otherwise against the closed-form g'Mf path for canonical storage.
/// Witness layout: (x, u).
PassivityReport verify_krasovskii(const InputAffineSystem& sys, const KrasovskiiStorage& storage,
                                  const SampleBox& box, double tolerance,
                                  OutputMapXU output = nullptr, int workers = 1);

/// Differential certificate over a box in (x,u) with tangent vectors sampled on
/// the unit sphere.  Margin: dS_D/dx f + dS_D/ddx (df/dx) dx.  Identity
/// residual: |dS_D/ddx g - (h_d dx)'|.  Witness layout: (x, u, delta_x).
PassivityReport verify_differential(const InputAffineSystem& sys,
                                    const DifferentialStorage& dstorage, const SampleBox& box,
                                    double tolerance, int workers = 1);

/// Shifted certificate over a box in (x,u).  Margin:
/// dS_s/dx f(x,u) - (u-u*)'(h(x)-h(x*)).  Witness layout: (x, u).
PassivityReport verify_shifted(const InputAffineSystem& sys, const ShiftedStorage& sstorage,
                               const SampleBox& box, double tolerance, int workers = 1);

/// Generalized incremental certificate with S_I = (x-x')'M(x-x')/2 and h_I from
/// incremental_output; the box describes one (x,u) copy and pairs are drawn
/// independently.  Witness layout: (x, u, x', u').
PassivityReport verify_incremental(const InputAffineSystem& sys, const Matrix& metric,
                                   const SampleBox& box, double tolerance, int segments = 64,
                                   int workers = 1);

/// Path-independence test for the incremental output: for each input column,
/// the Jacobian of x -> M g_i(x) must be symmetric.  The box is over x only and
/// the margin is the worst asymmetry.  Witness layout: (x).
PassivityReport check_exactness(const InputAffineSystem& sys, const Matrix& metric,
                                const SampleBox& box, double tolerance, int workers = 1);

/// Integral dissipation check on a uniformly gridded trajectory: for every
/// grid pair t1 < t2, storage(t2) - storage(t1) - trapezoid(supply) <= tol.
/// `violations` counts right endpoints t2 for which some admissible t1 fails.
/// Witness layout: (t1, t2).
PassivityReport dissipation_check(std::span<const double> time,
                                  std::span<const double> storage,
                                  std::span<const double> supply, double tolerance);

}  // namespace kpbc
