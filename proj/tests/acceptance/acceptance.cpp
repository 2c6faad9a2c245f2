// Acceptance suite: one pass/fail line per criterion, exit 0 only if all pass.
//
// The scenario grids are shared across criteria where the settings coincide,
// so each (scenario, m, replicate) cell is simulated exactly once.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ruv/ruv.hpp"
#include "oracle.hpp"

using namespace ruv;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::vector<double> means(const SimResult& r) {
    std::vector<double> out;
    for (const auto& lvl : r.levels) out.push_back(lvl.mean_q);
    return out;
}

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] < v[i - 1])) return false;
    }
    return true;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += " ";
        s += fmt(v[i]);
    }
    return s;
}

SimResult run(const SimScenario& base, const std::vector<Index>& ms, int reps) {
    return run_grid(base, ms, reps, 1);
}

// Noiseless rank-k0 instance: Y = W*alpha with W centered, no noise term.
Dataset noiseless_instance(Index m, Index k0, Index n, Index nc, std::mt19937_64& rng,
                           Matrix* w_out, Matrix* a_out) {
    Matrix W = oracle::random_matrix(m, k0, rng);
    for (Index j = 0; j < k0; ++j) W.col(j).array() -= W.col(j).mean();
    Matrix alpha = oracle::random_matrix(k0, n, rng);
    Dataset d;
    d.matrix.values = W * alpha;
    for (Index i = 0; i < m; ++i) d.matrix.assay_ids.push_back("a" + std::to_string(i));
    for (Index j = 0; j < n; ++j) d.matrix.variable_ids.push_back("v" + std::to_string(j));
    std::vector<std::pair<std::string, std::string>> pairs;
    for (Index i = 0; i < m; ++i) {
        pairs.emplace_back("a" + std::to_string(i), "s" + std::to_string(i / 2));
    }
    d.mapping = build_mapping(pairs);
    for (Index j = 0; j < nc; ++j) d.controls.indices.push_back(j);
    *w_out = W;
    *a_out = alpha;
    return d;
}

} // namespace

int main() {
    const std::vector<Index> grid_m = {16, 32, 64, 128, 256};
    const int reps = 20;

    SimScenario base;
    base.nc_rule = NcRule::MSquaredOver8;
    base.replication = Replication::SamplesIncreasing;
    base.distribution = NoiseDistribution::Normal;
    base.k0 = 3;
    base.seed = 1;

    // ---- shared grids ------------------------------------------------------
    SimScenario sc_k3 = base;
    sc_k3.k_choice = KPolicy::fixed(3);
    SimResult g_k3 = run(sc_k3, grid_m, reps);

    SimScenario sc_k10 = base;
    sc_k10.k_choice = KPolicy::fixed(10);
    SimResult g_k10 = run(sc_k10, grid_m, reps);

    SimScenario sc_kmax = base;
    sc_kmax.k_choice = KPolicy::max();
    SimResult g_kmax = run(sc_kmax, grid_m, reps);

    SimScenario sc_k1 = base;
    sc_k1.k_choice = KPolicy::fixed(1);
    SimResult g_k1 = run(sc_k1, grid_m, reps);

    SimScenario sc_k2 = base;
    sc_k2.k_choice = KPolicy::fixed(2);
    SimResult g_k2 = run(sc_k2, grid_m, reps);

    SimScenario sc_2m_kmax = base;
    sc_2m_kmax.nc_rule = NcRule::TwoTimesM;
    sc_2m_kmax.k_choice = KPolicy::max();
    SimResult g_2m_kmax = run(sc_2m_kmax, grid_m, reps);

    SimScenario sc_32_k3 = base;
    sc_32_k3.nc_rule = NcRule::MThreeHalvesOver2;
    SimResult g_32_k3 = run(sc_32_k3, grid_m, reps);

    SimScenario sc_2m_k3 = base;
    sc_2m_k3.nc_rule = NcRule::TwoTimesM;
    SimResult g_2m_k3 = run(sc_2m_k3, grid_m, reps);

    SimScenario sc_prps = base;
    sc_prps.trend = TrendSpec{};
    SimResult g_prps = run(sc_prps, grid_m, reps);

    // ---- 1: convergence rate at k = 3 --------------------------------------
    {
        auto q = means(g_k3);
        bool dec = strictly_decreasing(q);
        bool slope_ok = g_k3.slope >= -0.65 && g_k3.slope <= -0.35;
        report(1, dec && slope_ok,
               "mean q [" + join(q) + "] decreasing=" + (dec ? "yes" : "no") +
                   ", slope " + fmt(g_k3.slope) + " (se " + fmt(g_k3.slope_se) + ") in [-0.65,-0.35]");
    }

    // ---- 2: overestimated k ------------------------------------------------
    {
        bool s10 = g_k10.slope >= -0.65 && g_k10.slope <= -0.35;
        bool smax = g_kmax.slope >= -0.65 && g_kmax.slope <= -0.35;
        double q3 = g_k3.levels.back().mean_q;
        double r10 = g_k10.levels.back().mean_q / q3;
        double rmax = g_kmax.levels.back().mean_q / q3;
        bool ratio_ok = std::max(r10, 1.0 / r10) <= 2.0 && std::max(rmax, 1.0 / rmax) <= 2.0;
        report(2, s10 && smax && ratio_ok,
               "slope k=10 " + fmt(g_k10.slope) + ", k=m-s " + fmt(g_kmax.slope) +
                   "; q(256) ratio vs k=3: " + fmt(r10) + " (k=10), " + fmt(rmax) + " (k=m-s)");
    }

    // ---- 3: underestimated k -----------------------------------------------
    {
        auto q1 = means(g_k1);
        auto q2 = means(g_k2);
        bool floor_ok = true;
        for (double v : q1) floor_ok = floor_ok && v > 0.1;
        for (double v : q2) floor_ok = floor_ok && v > 0.1;
        auto last3_not_decreasing = [](const std::vector<double>& q) {
            std::vector<double> tail(q.end() - 3, q.end());
            return !strictly_decreasing(tail);
        };
        bool no_dec = last3_not_decreasing(q1) && last3_not_decreasing(q2);
        report(3, floor_ok && no_dec,
               "k=1 mean q [" + join(q1) + "], k=2 [" + join(q2) +
                   "]; all > 0.1 and no strict decrease over the last three m");
    }

    // ---- 4: scarce controls ------------------------------------------------
    {
        auto q = means(g_2m_kmax);
        bool dec = strictly_decreasing(q);
        bool neg = g_2m_kmax.slope < 0.0;
        bool agree = true;
        double worst = 0.0;
        for (std::size_t l = 0; l < grid_m.size(); ++l) {
            double a = g_k3.levels[l].mean_q;
            double b = g_32_k3.levels[l].mean_q;
            double c = g_2m_k3.levels[l].mean_q;
            double hi = std::max({a, b, c});
            double lo = std::min({a, b, c});
            worst = std::max(worst, hi / lo - 1.0);
            if (hi > 1.2 * lo) agree = false;
        }
        report(4, dec && neg && agree,
               "nc=2m k=m-s mean q [" + join(q) + "] decreasing=" + (dec ? "yes" : "no") +
                   ", slope " + fmt(g_2m_kmax.slope) + "; k=3 nc-rule spread max " +
                   fmt(100.0 * worst) + "% (limit 20%)");
    }

    // ---- 5: PRPS decay -----------------------------------------------------
    {
        bool slope_ok = g_prps.slope >= -0.65 && g_prps.slope <= -0.35;
        report(5, slope_ok,
               "mean q [" + join(means(g_prps)) + "], slope " + fmt(g_prps.slope) +
                   " (se " + fmt(g_prps.slope_se) + ") in [-0.65,-0.35]");
    }

    // ---- 6: norm gap at the true dimension ---------------------------------
    {
        bool all_gaps = true;
        std::vector<double> mean_gap;
        for (Index m : {16, 32, 64}) {
            SimScenario sc = base;
            sc.m = m;
            double gap_sum = 0.0;
            for (Index r = 0; r < 50; ++r) {
                auto draw = gen_dataset(sc, r);
                auto scan = k_scan(draw.dataset, 3);
                if (!(scan.ok[0] && scan.ok[1] && scan.ok[2])) {
                    all_gaps = false;
                    continue;
                }
                double lower = std::max(scan.norms_sq[0], scan.norms_sq[1]);
                if (!(scan.norms_sq[2] > lower)) all_gaps = false;
                gap_sum += scan.norms_sq[2] - lower;
            }
            mean_gap.push_back(gap_sum / 50.0);
        }
        bool growing = strictly_decreasing({mean_gap[2], mean_gap[1], mean_gap[0]});
        report(6, all_gaps && growing,
               "norms_sq[3] > norms_sq[1..2] in all 150 runs=" + std::string(all_gaps ? "yes" : "no") +
                   ", mean gap [" + join(mean_gap) + "] increasing=" + (growing ? "yes" : "no"));
    }

    // ---- 7: scan picks at least the true dimension -------------------------
    {
        SimScenario sc = base;
        sc.m = 64;
        int hits = 0;
        for (Index r = 0; r < 100; ++r) {
            auto draw = gen_dataset(sc, r);
            auto scan = k_scan(draw.dataset, k_max(draw.dataset.mapping));
            if (scan.k_hat >= 3) ++hits;
        }
        report(7, hits >= 95, "k_hat >= 3 in " + std::to_string(hits) + "/100 runs at m=64, K=m-s");
    }

    // ---- 8: dense oracle equivalence ---------------------------------------
    {
        std::mt19937_64 rng(808);
        std::uniform_int_distribution<Index> md(6, 12), nd(10, 20);
        int ok = 0;
        double worst = 0.0;
        for (int t = 0; t < 50; ++t) {
            Index m = md(rng), n = nd(rng), nc = std::max<Index>(4, n / 3);
            auto d = oracle::random_dataset(m, n, nc, 3, rng);
            Index cap = k_max(d.mapping);
            if (cap < 1) {
                --t;
                continue;
            }
            Index k = std::min<Index>(2, cap);
            try {
                auto f = fit(d, k);
                auto dense = oracle::dense_ruv3(d, k);
                double rel = (f.removed() - dense.removed).cwiseAbs().maxCoeff() /
                             dense.removed.cwiseAbs().maxCoeff();
                worst = std::max(worst, rel);
                if (rel < 1e-9) ++ok;
            } catch (const numerical_error&) {
                --t; // ill-conditioned draw; resample
            }
        }
        report(8, ok == 50,
               std::to_string(ok) + "/50 instances match the dense route; worst relative diff " + fmt(worst));
    }

    // ---- 9: noiseless exact recovery ---------------------------------------
    {
        std::mt19937_64 rng(909);
        int ok = 0;
        double worst = 0.0;
        for (int t = 0; t < 20; ++t) {
            Matrix W, alpha;
            auto d = noiseless_instance(16, 3, 64, 16, rng, &W, &alpha);
            auto f = fit(d, 3);
            double q = rel_error_q(f.removed(), W * alpha, 1e-12);
            worst = std::max(worst, q);
            if (q <= 1e-8) ++ok;
        }
        report(9, ok == 20, std::to_string(ok) + "/20 instances with q <= 1e-8; worst q " + fmt(worst));
    }

    // ---- 10: fast path equals the full fit ---------------------------------
    {
        int ok = 0;
        double worst = 0.0;
        for (int t = 0; t < 50; ++t) {
            SimScenario sc = base;
            sc.m = (t % 2 == 0) ? 16 : 32;
            sc.trend = TrendSpec{};
            sc.seed = 1000 + static_cast<std::uint64_t>(t);
            auto draw = gen_prps_scenario(sc, 0);
            Index k = 1 + static_cast<Index>(t) % fast_k_max(draw.extended);
            auto f_fast = fast_fit(draw.extended, k);
            auto f_full = fit(draw.extended.data, k);
            double rel = (f_fast.removed() - f_full.removed()).cwiseAbs().maxCoeff() /
                         f_full.removed().cwiseAbs().maxCoeff();
            worst = std::max(worst, rel);
            if (rel < 1e-9) ++ok;
        }
        report(10, ok == 50,
               std::to_string(ok) + "/50 extended datasets identical; worst relative diff " + fmt(worst));
    }

    // ---- 11: structural invariants -----------------------------------------
    {
        std::mt19937_64 rng(1111);
        bool basis_ok = true;
        for (int t = 0; t < 20; ++t) {
            auto d = oracle::random_dataset(12, 30, 10, 3, rng);
            Index cap = k_max(d.mapping);
            if (cap < 1) continue;
            Index k = std::min<Index>(3, cap);
            Ruv3Fit f;
            try {
                f = fit(d, k);
            } catch (const numerical_error&) {
                continue;
            }
            Matrix Md = d.mapping.dense();
            for (Index j = 0; j < k; ++j) {
                if (std::abs(f.basis.col(j).sum()) > 1e-8) basis_ok = false;
            }
            if ((f.basis.transpose() * Md).cwiseAbs().maxCoeff() > 1e-8) basis_ok = false;
        }

        bool avg_ok = true;
        std::uniform_int_distribution<int> bp(0, 3), up(0, 2);
        int built = 0;
        while (built < 50) {
            std::vector<std::string> bio, unw;
            for (int i = 0; i < 20; ++i) {
                bio.push_back("b" + std::to_string(bp(rng)));
                unw.push_back("u" + std::to_string(up(rng)));
            }
            PrpsPlan plan;
            try {
                plan = build_prps_plan(bio, unw, 2);
            } catch (const validation_error&) {
                continue;
            }
            ++built;
            auto A = averaging_matrix(plan, 20);
            Vector rowsums = A.dense().rowwise().sum();
            for (Index g = 0; g < rowsums.size(); ++g) {
                // one rounding per accumulated member
                double tol = static_cast<double>(plan.b1) * std::numeric_limits<double>::epsilon();
                if (std::abs(rowsums[g] - 1.0) > tol) avg_ok = false;
            }
            double bound = std::sqrt(static_cast<double>(plan.b1) * static_cast<double>(plan.b2)) / 2.0;
            if (spectral_norm(A.dense()) > bound + 1e-10) avg_ok = false;
        }

        bool weyl_ok = true;
        for (int t = 0; t < 1000; ++t) {
            Matrix A = oracle::random_symmetric(6, rng);
            Matrix B = A + 0.5 * oracle::random_symmetric(6, rng);
            auto [disp, norm] = weyl_gap(A, B);
            if (disp > norm * (1.0 + 1e-12) + 1e-12) weyl_ok = false;
        }

        bool signal_ok = true;
        for (Index r = 0; r < 10; ++r) {
            SimScenario sc = base;
            sc.m = 16;
            auto plain = gen_dataset(sc, r);
            sc.with_signal = true;
            auto rich = gen_dataset(sc, r);
            auto f0 = fit(plain.dataset, 3);
            auto f1 = fit(rich.dataset, 3);
            double rel = (f1.removed() - f0.removed()).cwiseAbs().maxCoeff() /
                         f0.removed().cwiseAbs().maxCoeff();
            if (rel > 1e-10) signal_ok = false;
        }

        report(11, basis_ok && avg_ok && weyl_ok && signal_ok,
               std::string("basis orthogonality ") + (basis_ok ? "ok" : "FAILED") +
                   ", averaging rows/norm " + (avg_ok ? "ok" : "FAILED") +
                   ", Weyl x1000 " + (weyl_ok ? "ok" : "FAILED") +
                   ", signal invariance " + (signal_ok ? "ok" : "FAILED"));
    }

    // ---- 12: CLI ingests the 84x12600 fixture ------------------------------
    {
        const char* cli = std::getenv("RUV_CLI");
        if (!cli || !*cli) {
            report(12, false, "RUV_CLI not set; cannot locate the CLI binary");
        } else {
            fs::path dir = fs::temp_directory_path() / "ruv_acceptance_fixture";
            fs::create_directories(dir);

            const Index m = 84, n = 12600, nc = 33, k0 = 10, s = 30;
            std::mt19937_64 rng(1212);
            Matrix W = oracle::random_matrix(m, k0, rng);
            Matrix alpha = oracle::random_matrix(k0, n, rng);
            AssayMatrix mat;
            mat.values = W * alpha + oracle::random_matrix(m, n, rng);
            for (Index i = 0; i < m; ++i) mat.assay_ids.push_back("assay" + std::to_string(i));
            for (Index j = 0; j < n; ++j) mat.variable_ids.push_back("gene" + std::to_string(j));
            // 30 samples: 24 in triplicate, 6 in duplicate (24*3 + 6*2 = 84)
            std::vector<std::pair<std::string, std::string>> pairs;
            Index i = 0;
            for (Index h = 0; h < s; ++h) {
                Index sz = h < 24 ? 3 : 2;
                for (Index r = 0; r < sz; ++r, ++i) {
                    pairs.emplace_back(mat.assay_ids[static_cast<std::size_t>(i)], "sample" + std::to_string(h));
                }
            }
            auto mapping = build_mapping(pairs);
            write_matrix_tsv((dir / "matrix.tsv").string(), mat);
            write_mapping_csv((dir / "mapping.csv").string(), mapping);
            {
                std::ofstream c(dir / "controls.txt");
                for (Index j = 0; j < nc; ++j) c << "gene" << j << "\n";
            }

            std::ostringstream cmd;
            cmd << '"' << cli << '"' << " adjust --matrix " << (dir / "matrix.tsv")
                << " --mapping " << (dir / "mapping.csv") << " --controls " << (dir / "controls.txt")
                << " --k 10 --out " << (dir / "out") << " > " << (dir / "stdout.txt") << " 2>&1";
            auto t0 = std::chrono::steady_clock::now();
            int rc = std::system(cmd.str().c_str());
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            bool ok = rc == 0 && secs < 30.0;
            if (ok) {
                auto adjusted = read_matrix_tsv((dir / "out" / "adjusted.tsv").string());
                ok = adjusted.values.rows() == m && adjusted.values.cols() == n &&
                     adjusted.assay_ids == mat.assay_ids;
            }
            report(12, ok,
                   "adjust of the 84x12600 fixture: exit " + std::to_string(rc) + ", " + fmt(secs) +
                       " s (limit 30 s)");
            fs::remove_all(dir);
        }
    }

    if (g_failures == 0) {
        std::printf("all criteria passed\n");
        return 0;
    }
    std::printf("%d criteria failed\n", g_failures);
    return 1;
}
