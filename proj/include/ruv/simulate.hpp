#ifndef RUV_SIMULATE_HPP
#define RUV_SIMULATE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "projections.hpp"
#include "prps.hpp"
#include "ruv3.hpp"

/**
 * @file simulate.hpp
 *
 * @brief Seeded generation of synthetic datasets with known unwanted
 * variation, the relative-error metric q, grid running and decay-slope
 * estimation.
 *
 * Datasets follow Y = W*alpha + epsilon with n = m^2, a configurable
 * negative-control scaling, two replication structures and two entry
 * distributions.  Every (seed, m, replicate) cell draws from its own RNG
 * stream, so grids parallelize with bit-reproducible results.
 */

namespace ruv {

enum class NcRule { MSquaredOver8, MThreeHalvesOver2, TwoTimesM };
enum class Replication { SamplesIncreasing, ReplicatesIncreasing };
enum class NoiseDistribution { Normal, ParetoStd };

/// How to pick the fitted dimension for each generated dataset.
struct KPolicy {
    enum class Mode { Fixed, Max };
    Mode mode = Mode::Fixed;
    Index value = 3;

    static KPolicy fixed(Index k) { return {Mode::Fixed, k}; }
    static KPolicy max() { return {Mode::Max, 0}; }

    Index resolve(Index cap) const {
        if (mode == Mode::Max) return cap;
        if (value < 1 || value > cap) {
            throw validation_error("k policy: fixed k = " + std::to_string(value) +
                                   " not resolvable to [1," + std::to_string(cap) + "]");
        }
        return value;
    }
};

/// Piecewise-linear temporal trend on the unwanted factors, per (factor,
/// subtype); each linear piece spans [-U, U] with U ~ Uniform(0,1).
struct TrendSpec {
    Index segments = 1; // linear pieces per (factor, subtype)
};

struct SimScenario {
    Index m = 16;
    NcRule nc_rule = NcRule::MSquaredOver8;
    Replication replication = Replication::SamplesIncreasing;
    NoiseDistribution distribution = NoiseDistribution::Normal;
    Index k0 = 3;
    KPolicy k_choice = KPolicy::fixed(3);
    bool with_mu = false;
    bool with_signal = false;             // adds an MX*beta term with beta_c = 0
    std::optional<TrendSpec> trend;       // present => PRPS scenario
    std::uint64_t seed = 1;

    Index n() const { return m * m; }
    Index nc() const {
        switch (nc_rule) {
            case NcRule::MSquaredOver8: return (m * m) / 8;
            case NcRule::MThreeHalvesOver2:
                return static_cast<Index>(std::llround(std::pow(static_cast<double>(m), 1.5) / 2.0));
            case NcRule::TwoTimesM: return 2 * m;
        }
        return 0;
    }
};

inline void validate_scenario(const SimScenario& sc) {
    std::vector<std::string> v;
    if (sc.m < 8 || sc.m % 4 != 0) v.push_back("m must be a multiple of 4 and at least 8");
    if (sc.k0 < 1) v.push_back("k0 must be positive");
    if (sc.nc() < 1) v.push_back("nc rule yields no control columns");
    if (sc.nc() < sc.k0) v.push_back("nc must be at least k0");
    if (sc.nc() > sc.n()) v.push_back("nc rule exceeds n");
    if (!v.empty()) {
        std::string msg = "invalid scenario:";
        for (const auto& s : v) msg += "\n  - " + s;
        throw validation_error(msg);
    }
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Independent stream per (seed, m, replicate, component tag).
inline std::mt19937_64 make_stream(std::uint64_t seed, Index m, Index replicate, std::uint64_t tag) {
    std::uint64_t x = splitmix64(seed);
    x = splitmix64(x ^ splitmix64(static_cast<std::uint64_t>(m) * 0xd1342543de82ef95ull));
    x = splitmix64(x ^ splitmix64(static_cast<std::uint64_t>(replicate) * 0xaf251af3b0f025b5ull));
    x = splitmix64(x ^ splitmix64(tag * 0x9e3779b97f4a7c15ull));
    return std::mt19937_64(x);
}

constexpr std::uint64_t kTagW = 1, kTagAlpha = 2, kTagEps = 3, kTagMu = 4, kTagSignal = 5, kTagTrend = 6;

} // namespace detail

/// One draw from the standardized Pareto(scale 1, shape 5): the raw draw
/// (1-U)^(-1/5) recentered by 5/4 and rescaled by sqrt(5/48) to unit variance.
inline double pareto_std(std::mt19937_64& rng) {
    static const double kMean = 5.0 / 4.0;
    static const double kSd = std::sqrt(5.0 / 48.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double u = unif(rng);
    double x = std::pow(1.0 - u, -0.2);
    return (x - kMean) / kSd;
}

namespace detail {

inline double draw(std::mt19937_64& rng, NoiseDistribution d, std::normal_distribution<double>& normal) {
    return d == NoiseDistribution::Normal ? normal(rng) : pareto_std(rng);
}

inline void fill_iid(Matrix& A, std::mt19937_64& rng, NoiseDistribution d) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < A.rows(); ++i) {
        for (Index j = 0; j < A.cols(); ++j) {
            A(i, j) = draw(rng, d, normal);
        }
    }
}

/// Trend values t_ij for the rows of one subtype, one factor column:
/// consecutive equal-length runs, each linear from -U to U (random
/// orientation), U ~ Uniform(0,1) per run.
inline void fill_trend_column(std::vector<double>& t, const std::vector<Index>& rows,
                              Index segments, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Index len = static_cast<Index>(rows.size());
    for (Index seg = 0; seg < segments; ++seg) {
        Index lo = seg * len / segments;
        Index hi = (seg + 1) * len / segments;
        double u = unif(rng);
        double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
        Index run = hi - lo;
        for (Index p = 0; p < run; ++p) {
            double frac = run > 1 ? static_cast<double>(p) / static_cast<double>(run - 1) : 0.5;
            t[static_cast<std::size_t>(rows[static_cast<std::size_t>(lo + p)])] =
                sign * u * (2.0 * frac - 1.0);
        }
    }
}

/// W with i.i.d. entries, optionally shifted by the per-subtype temporal trend.
inline Matrix gen_w(Index m, Index k0, NoiseDistribution d,
                    const std::optional<TrendSpec>& trend,
                    const std::vector<std::vector<Index>>& subtype_rows,
                    std::mt19937_64& w_rng, std::mt19937_64& t_rng) {
    Matrix W(m, k0);
    fill_iid(W, w_rng, d);
    if (trend) {
        std::vector<double> t(static_cast<std::size_t>(m));
        for (Index j = 0; j < k0; ++j) {
            for (const auto& rows : subtype_rows) {
                fill_trend_column(t, rows, trend->segments, t_rng);
            }
            for (Index i = 0; i < m; ++i) {
                W(i, j) += t[static_cast<std::size_t>(i)];
            }
        }
    }
    return W;
}

inline MappingMatrix block_mapping(Index m, Index s, const char* sample_prefix) {
    const Index per = m / s;
    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        pairs.emplace_back("a" + std::to_string(i), sample_prefix + std::to_string(i / per));
    }
    return build_mapping(pairs);
}

inline std::vector<std::string> variable_labels(Index n) {
    std::vector<std::string> v;
    v.reserve(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) v.push_back("v" + std::to_string(j));
    return v;
}

} // namespace detail

/// A generated dataset with its unwanted-variation truth in factor form.
struct SimDraw {
    Dataset dataset;
    Matrix w_truth;      // m x k0
    Matrix alpha_truth;  // k0 x n

    Matrix truth() const { return w_truth * alpha_truth; }
};

/**
 * Generates one dataset for the scenario: Y = W*alpha + epsilon, plus the
 * optional mu row and MX*beta signal (beta zero on control columns).  The
 * mapping follows the replication rule; controls are the first nc columns.
 * Deterministic in (seed, m, replicate_index).
 */
inline SimDraw gen_dataset(const SimScenario& sc, Index replicate_index) {
    validate_scenario(sc);
    const Index m = sc.m, n = sc.n(), nc = sc.nc(), k0 = sc.k0;
    const Index s = (sc.replication == Replication::SamplesIncreasing) ? m / 4 : 4;

    SimDraw out;
    out.dataset.mapping = detail::block_mapping(m, s, "s");

    std::vector<std::vector<Index>> subtype_rows = out.dataset.mapping.replicate_sets;
    auto w_rng = detail::make_stream(sc.seed, m, replicate_index, detail::kTagW);
    auto t_rng = detail::make_stream(sc.seed, m, replicate_index, detail::kTagTrend);
    out.w_truth = detail::gen_w(m, k0, sc.distribution, sc.trend, subtype_rows, w_rng, t_rng);

    out.alpha_truth.resize(k0, n);
    auto a_rng = detail::make_stream(sc.seed, m, replicate_index, detail::kTagAlpha);
    detail::fill_iid(out.alpha_truth, a_rng, sc.distribution);

    Matrix& Y = out.dataset.matrix.values;
    Y = out.w_truth * out.alpha_truth;
    {
        auto e_rng = detail::make_stream(sc.seed, m, replicate_index, detail::kTagEps);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index i = 0; i < m; ++i) {
            for (Index j = 0; j < n; ++j) {
                Y(i, j) += detail::draw(e_rng, sc.distribution, normal);
            }
        }
    }
    if (sc.with_mu) {
        auto mu_rng = detail::make_stream(sc.seed, m, replicate_index, detail::kTagMu);
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::RowVectorXd mu(n);
        for (Index j = 0; j < n; ++j) mu[j] = normal(mu_rng);
        Y.rowwise() += mu;
    }
    if (sc.with_signal) {
        auto s_rng = detail::make_stream(sc.seed, m, replicate_index, detail::kTagSignal);
        std::normal_distribution<double> normal(0.0, 1.0);
        const Index p = 2;
        Matrix X(s, p), beta = Matrix::Zero(p, n);
        for (Index i = 0; i < s; ++i) {
            for (Index j = 0; j < p; ++j) X(i, j) = normal(s_rng);
        }
        for (Index i = 0; i < p; ++i) {
            for (Index j = nc; j < n; ++j) beta(i, j) = normal(s_rng); // beta_c = 0
        }
        Matrix xb = X * beta; // s x n
        for (Index i = 0; i < m; ++i) {
            Y.row(i) += xb.row(out.dataset.mapping.assay_to_sample[static_cast<std::size_t>(i)]);
        }
    }

    out.dataset.matrix.assay_ids = out.dataset.mapping.assay_ids;
    out.dataset.matrix.variable_ids = detail::variable_labels(n);
    out.dataset.controls.indices.resize(static_cast<std::size_t>(nc));
    for (Index j = 0; j < nc; ++j) out.dataset.controls.indices[static_cast<std::size_t>(j)] = j;
    return out;
}

/// A generated PRPS scenario: extended dataset plus truth spanning all rows.
struct PrpsDraw {
    ExtendedDataset extended;
    Matrix w_truth;      // (m0 + m_pa) x k0
    Matrix alpha_truth;  // k0 x n

    Matrix truth() const { return w_truth * alpha_truth; }
};

/**
 * The replicate-free temporal-trend scenario: m0 singleton assays split into
 * s = m0/4 subtypes of known biology, two pseudo-assays per subtype (first
 * and second half), extended per the PRPS construction.  The truth on a
 * pseudo row is the averaging matrix applied to the original truth.
 */
inline PrpsDraw gen_prps_scenario(const SimScenario& sc, Index replicate_index) {
    validate_scenario(sc);
    if (!sc.trend) {
        throw validation_error("gen_prps_scenario: scenario has no trend spec");
    }
    const Index m0 = sc.m, n = sc.n(), nc = sc.nc(), k0 = sc.k0;
    const Index s = m0 / 4;
    const Index per = m0 / s;
    if (per < 4) {
        throw validation_error("gen_prps_scenario: subtypes need at least 4 assays for a half/half split");
    }

    Dataset d0;
    {
        // no real replicates: every assay is its own sample
        std::vector<std::pair<std::string, std::string>> pairs;
        for (Index i = 0; i < m0; ++i) {
            pairs.emplace_back("a" + std::to_string(i), "u" + std::to_string(i));
        }
        d0.mapping = build_mapping(pairs);
    }

    std::vector<std::vector<Index>> subtype_rows(static_cast<std::size_t>(s));
    std::vector<std::string> biology(static_cast<std::size_t>(m0)), half(static_cast<std::size_t>(m0));
    for (Index i = 0; i < m0; ++i) {
        Index c = i / per;
        subtype_rows[static_cast<std::size_t>(c)].push_back(i);
        biology[static_cast<std::size_t>(i)] = "t" + std::to_string(c);
        half[static_cast<std::size_t>(i)] = (i % per) < per / 2 ? "h0" : "h1";
    }

    auto w_rng = detail::make_stream(sc.seed, m0, replicate_index, detail::kTagW);
    auto t_rng = detail::make_stream(sc.seed, m0, replicate_index, detail::kTagTrend);
    Matrix W0 = detail::gen_w(m0, k0, sc.distribution, sc.trend, subtype_rows, w_rng, t_rng);

    PrpsDraw out;
    out.alpha_truth.resize(k0, n);
    auto a_rng = detail::make_stream(sc.seed, m0, replicate_index, detail::kTagAlpha);
    detail::fill_iid(out.alpha_truth, a_rng, sc.distribution);

    d0.matrix.values = W0 * out.alpha_truth;
    {
        auto e_rng = detail::make_stream(sc.seed, m0, replicate_index, detail::kTagEps);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index i = 0; i < m0; ++i) {
            for (Index j = 0; j < n; ++j) {
                d0.matrix.values(i, j) += detail::draw(e_rng, sc.distribution, normal);
            }
        }
    }
    d0.matrix.assay_ids = d0.mapping.assay_ids;
    d0.matrix.variable_ids = detail::variable_labels(n);
    d0.controls.indices.resize(static_cast<std::size_t>(nc));
    for (Index j = 0; j < nc; ++j) d0.controls.indices[static_cast<std::size_t>(j)] = j;

    PrpsPlan plan = build_prps_plan(biology, half, /*min_group_size=*/2,
                                    /*b1=*/std::max<Index>(32, per), /*b2=*/4);
    out.extended = extend_dataset(d0, plan);

    AveragingMatrix A = averaging_matrix(plan, m0);
    out.w_truth.resize(m0 + A.num_pseudo(), k0);
    out.w_truth.topRows(A.num_pseudo()) = A.apply(W0);
    out.w_truth.bottomRows(m0) = W0;
    return out;
}

/// Relative spectral-norm error of the removed component against the truth.
inline double rel_error_q(const Matrix& removed, const Matrix& truth, double tol = 1e-10) {
    if (removed.rows() != truth.rows() || removed.cols() != truth.cols()) {
        throw validation_error("rel_error_q: dimension mismatch");
    }
    double denom = spectral_norm(truth, tol);
    if (denom <= 0.0) {
        throw validation_error("rel_error_q: truth matrix has zero norm");
    }
    return spectral_norm(removed - truth, tol) / denom;
}

namespace detail {

/// Largest eigenvalue of A*B for symmetric PSD A, B, via the symmetric
/// congruence sqrt(A)*B*sqrt(A).  Both are r x r, r small.
inline double lambda_max_product(const Matrix& A, const Matrix& B) {
    Eigen::SelfAdjointEigenSolver<Matrix> ea(Matrix(0.5 * (A + A.transpose())));
    Vector d = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Matrix S = ea.eigenvectors() * d.asDiagonal() * ea.eigenvectors().transpose();
    Matrix T = S * B * S;
    Eigen::SelfAdjointEigenSolver<Matrix> et(Matrix(0.5 * (T + T.transpose())));
    return std::max(0.0, et.eigenvalues().maxCoeff());
}

} // namespace detail

/**
 * q computed from the factor forms without materializing any m-by-n matrix:
 * the removed-minus-truth difference is rank k + k0, so its spectral norm is
 * obtained from (k+k0)-sized Gram blocks.  Matches rel_error_q on the
 * materialized matrices.
 */
inline double rel_error_q_factored(const Matrix& w_hat, const Matrix& alpha_hat,
                                   const Matrix& w_truth, const Matrix& alpha_truth) {
    const Index k = w_hat.cols(), k0 = w_truth.cols(), r = k + k0;
    Matrix FtF(r, r), GGt(r, r);
    FtF.topLeftCorner(k, k) = w_hat.transpose() * w_hat;
    FtF.topRightCorner(k, k0) = -(w_hat.transpose() * w_truth);
    FtF.bottomLeftCorner(k0, k) = FtF.topRightCorner(k, k0).transpose();
    FtF.bottomRightCorner(k0, k0) = w_truth.transpose() * w_truth;
    GGt.topLeftCorner(k, k) = alpha_hat * alpha_hat.transpose();
    GGt.topRightCorner(k, k0) = alpha_hat * alpha_truth.transpose();
    GGt.bottomLeftCorner(k0, k) = GGt.topRightCorner(k, k0).transpose();
    GGt.bottomRightCorner(k0, k0) = alpha_truth * alpha_truth.transpose();

    double num_sq = detail::lambda_max_product(FtF, GGt);
    double den_sq = detail::lambda_max_product(Matrix(w_truth.transpose() * w_truth),
                                               Matrix(alpha_truth * alpha_truth.transpose()));
    if (den_sq <= 0.0) {
        throw validation_error("rel_error_q_factored: truth matrix has zero norm");
    }
    return std::sqrt(num_sq / den_sq);
}

/// Per-m aggregation of the q values of one scenario.
struct MSummary {
    Index m = 0;
    std::vector<double> q;  // one per successful replicate, replicate order
    double mean_q = 0.0;
    double se_q = 0.0;
    int failures = 0;
};

struct SimResult {
    std::vector<MSummary> levels;
    double slope = std::numeric_limits<double>::quiet_NaN();
    double slope_se = std::numeric_limits<double>::quiet_NaN();
};

/// Two-point log2-log2 decay slope on the final two grid points, with the
/// standard error propagated from the per-m Monte Carlo standard errors.
inline std::pair<double, double> decay_slope(const std::vector<MSummary>& points) {
    if (points.size() < 2) {
        throw validation_error("decay_slope: need at least 2 points");
    }
    const MSummary& a = points[points.size() - 2];
    const MSummary& b = points.back();
    if (a.mean_q <= 0.0 || b.mean_q <= 0.0) {
        throw validation_error("decay_slope: non-positive mean q");
    }
    double dx = std::log2(static_cast<double>(b.m)) - std::log2(static_cast<double>(a.m));
    double slope = (std::log2(b.mean_q) - std::log2(a.mean_q)) / dx;
    const double ln2 = std::log(2.0);
    double var = (b.se_q * b.se_q) / (b.mean_q * b.mean_q) + (a.se_q * a.se_q) / (a.mean_q * a.mean_q);
    double se = std::sqrt(var) / (ln2 * dx);
    return {slope, se};
}

/// One simulation cell: generate, fit, score.  Throws only on non-numerical
/// errors; singular fits surface as numerical_error to the caller.
inline double run_cell(const SimScenario& sc, Index replicate_index) {
    if (sc.trend) {
        PrpsDraw draw = gen_prps_scenario(sc, replicate_index);
        Index k = sc.k_choice.resolve(fast_k_max(draw.extended));
        Ruv3Fit f = fast_fit(draw.extended, k);
        return rel_error_q_factored(f.w_hat, f.alpha_hat, draw.w_truth, draw.alpha_truth);
    }
    SimDraw draw = gen_dataset(sc, replicate_index);
    Index k = sc.k_choice.resolve(k_max(draw.dataset.mapping));
    Ruv3Fit f = fit(draw.dataset, k);
    return rel_error_q_factored(f.w_hat, f.alpha_hat, draw.w_truth, draw.alpha_truth);
}

/**
 * Runs the scenario over a grid of m values with `reps` replicates each.
 * Cells execute concurrently when threads > 1; results are identical for any
 * thread count because every cell has its own RNG stream and a fixed slot.
 * Fit failures are counted and excluded from the mean.
 */
inline SimResult run_grid(const SimScenario& base, const std::vector<Index>& m_values,
                          int reps, int threads = 1) {
    if (reps < 2) {
        throw validation_error("run_grid: reps must be at least 2");
    }
    struct Cell {
        Index m;
        Index rep;
        double q = std::numeric_limits<double>::quiet_NaN();
        bool failed = false;
    };
    std::vector<Cell> cells;
    for (Index m : m_values) {
        for (Index r = 0; r < reps; ++r) cells.push_back({m, r});
    }

    auto work = [&](std::size_t begin, std::size_t stride) {
        for (std::size_t c = begin; c < cells.size(); c += stride) {
            SimScenario sc = base;
            sc.m = cells[c].m;
            try {
                cells[c].q = run_cell(sc, cells[c].rep);
            } catch (const numerical_error&) {
                cells[c].failed = true;
            }
        }
    };
    if (threads <= 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back(work, static_cast<std::size_t>(t), static_cast<std::size_t>(threads));
        }
        for (auto& t : pool) t.join();
    }

    SimResult out;
    std::size_t c = 0;
    for (Index m : m_values) {
        MSummary lvl;
        lvl.m = m;
        for (Index r = 0; r < reps; ++r, ++c) {
            if (cells[c].failed) {
                ++lvl.failures;
            } else {
                lvl.q.push_back(cells[c].q);
            }
        }
        const std::size_t cnt = lvl.q.size();
        if (cnt > 0) {
            double sum = 0.0;
            for (double v : lvl.q) sum += v;
            lvl.mean_q = sum / static_cast<double>(cnt);
            double ss = 0.0;
            for (double v : lvl.q) ss += (v - lvl.mean_q) * (v - lvl.mean_q);
            if (cnt > 1) {
                lvl.se_q = std::sqrt(ss / static_cast<double>(cnt - 1)) / std::sqrt(static_cast<double>(cnt));
            }
        }
        out.levels.push_back(std::move(lvl));
    }
    if (out.levels.size() >= 2 && out.levels[out.levels.size() - 2].mean_q > 0.0 &&
        out.levels.back().mean_q > 0.0) {
        auto [slope, se] = decay_slope(out.levels);
        out.slope = slope;
        out.slope_se = se;
    }
    return out;
}

} // namespace ruv

#endif
