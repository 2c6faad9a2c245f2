#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ruv/prps.hpp"
#include "ruv/simulate.hpp"
#include "oracle.hpp"

using namespace ruv;

namespace {

Dataset singleton_dataset(Index m, Index n, Index nc, std::mt19937_64& rng) {
    Dataset d;
    d.matrix.values = oracle::random_matrix(m, n, rng);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (Index i = 0; i < m; ++i) {
        std::string id = "a" + std::to_string(i);
        d.matrix.assay_ids.push_back(id);
        pairs.emplace_back(id, "u" + std::to_string(i));
    }
    for (Index j = 0; j < n; ++j) d.matrix.variable_ids.push_back("v" + std::to_string(j));
    d.mapping = build_mapping(pairs);
    for (Index j = 0; j < nc; ++j) d.controls.indices.push_back(j);
    return d;
}

} // namespace

TEST_CASE("build_prps_plan on two biologies with two batches each") {
    std::vector<std::string> bio = {"b", "b", "b", "b", "a", "a", "a", "a"};
    std::vector<std::string> unw = {"1", "1", "2", "2", "1", "1", "2", "2"};
    auto plan = build_prps_plan(bio, unw, 2);
    REQUIRE(plan.groups.size() == 4);
    REQUIRE(plan.warnings.empty());

    REQUIRE(plan.groups[0].pseudo_sample_id == "b.1");
    REQUIRE(plan.groups[0].members == std::vector<Index>{0, 1});
    REQUIRE(plan.groups[0].replicate_set_id == "b");
    REQUIRE(plan.groups[1].pseudo_sample_id == "b.2");
    REQUIRE(plan.groups[2].pseudo_sample_id == "a.1");
    REQUIRE(plan.groups[3].members == std::vector<Index>{6, 7});

    std::set<std::string> sets;
    for (const auto& g : plan.groups) sets.insert(g.replicate_set_id);
    REQUIRE(sets.size() == 2);
}

TEST_CASE("build_prps_plan drops small cells with a warning") {
    std::vector<std::string> bio = {"a", "a", "a", "a", "a", "b", "b", "b", "b", "b", "b"};
    std::vector<std::string> unw = {"1", "1", "1", "2", "2", "1", "1", "1", "2", "2", "2"};
    // cell (a,2) has 2 assays, below min_group_size 3; biology 'a' then has a
    // single pseudo-sample, so only biology 'b' survives
    auto plan = build_prps_plan(bio, unw, 3);
    REQUIRE(plan.groups.size() == 2);
    for (const auto& g : plan.groups) {
        REQUIRE(g.replicate_set_id == "b");
    }
    REQUIRE(plan.warnings.size() == 2);
}

TEST_CASE("build_prps_plan drops unreplicable biologies") {
    std::vector<std::string> bio = {"a", "a", "a", "a", "b", "b", "c", "c", "c", "c"};
    std::vector<std::string> unw = {"1", "1", "2", "2", "1", "1", "1", "1", "2", "2"};
    auto plan = build_prps_plan(bio, unw, 2);
    REQUIRE(plan.groups.size() == 4);
    for (const auto& g : plan.groups) {
        REQUIRE(g.replicate_set_id != "b");
    }
    REQUIRE(plan.warnings.size() == 1);
}

TEST_CASE("build_prps_plan error cases") {
    REQUIRE_THROWS_AS(build_prps_plan({"a"}, {"1", "2"}), validation_error);
    REQUIRE_THROWS_AS(build_prps_plan({"a", "a"}, {"1", "1"}, 1), validation_error);
    // empty plan: all cells singletons
    REQUIRE_THROWS_AS(build_prps_plan({"a", "a"}, {"1", "2"}, 2), validation_error);
    // b1 cap exceeded
    std::vector<std::string> bio(5, "a"), unw(5, "1");
    REQUIRE_THROWS_AS(build_prps_plan(bio, unw, 2, /*b1=*/4), validation_error);
}

TEST_CASE("averaging_matrix rows average the group members") {
    std::vector<std::string> bio = {"b", "b", "b", "b"};
    std::vector<std::string> unw = {"1", "1", "2", "2"};
    auto plan = build_prps_plan(bio, unw, 2);
    auto A = averaging_matrix(plan, 4);
    Matrix D = A.dense();
    REQUIRE(D.rows() == 2);
    REQUIRE(D.cols() == 4);
    REQUIRE(D(0, 0) == 0.5);
    REQUIRE(D(0, 1) == 0.5);
    REQUIRE(D(0, 2) == 0.0);
    REQUIRE(D(1, 2) == 0.5);
    REQUIRE(D(1, 3) == 0.5);
}

TEST_CASE("averaging_matrix rows sum to one and the norm bound holds") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> bio_pick(0, 3), unw_pick(0, 2);
    int built = 0;
    while (built < 100) {
        std::vector<std::string> bio, unw;
        for (int i = 0; i < 24; ++i) {
            bio.push_back("b" + std::to_string(bio_pick(rng)));
            unw.push_back("u" + std::to_string(unw_pick(rng)));
        }
        PrpsPlan plan;
        try {
            plan = build_prps_plan(bio, unw, 2);
        } catch (const validation_error&) {
            continue;
        }
        ++built;
        auto A = averaging_matrix(plan, 24);
        Vector rowsums = A.dense().rowwise().sum();
        for (Index g = 0; g < rowsums.size(); ++g) {
            REQUIRE(rowsums[g] == Catch::Approx(1.0).epsilon(1e-12));
        }
        double bound = std::sqrt(static_cast<double>(plan.b1) * static_cast<double>(plan.b2)) / 2.0;
        REQUIRE(spectral_norm(A.dense()) <= bound + 1e-10);
    }
}

TEST_CASE("averaging_matrix validation") {
    PrpsPlan plan;
    plan.b1 = 2;
    plan.b2 = 1;
    plan.groups.push_back({"g0", {0, 1}, "r"});
    plan.groups.push_back({"g1", {1, 2}, "r"});
    // assay 1 appears in two groups but b2 = 1
    REQUIRE_THROWS_AS(averaging_matrix(plan, 3), validation_error);
    plan.b2 = 2;
    REQUIRE_NOTHROW(averaging_matrix(plan, 3));
    plan.groups.push_back({"g2", {5}, "r"});
    REQUIRE_THROWS_AS(averaging_matrix(plan, 3), validation_error);
}

TEST_CASE("extend_dataset stacks pseudo rows above the originals") {
    std::mt19937_64 rng(5);
    auto d0 = singleton_dataset(4, 6, 2, rng);
    auto plan = build_prps_plan({"b", "b", "b", "b"}, {"1", "1", "2", "2"}, 2);
    auto e = extend_dataset(d0, plan);

    REQUIRE(e.num_pseudo == 2);
    REQUIRE(e.data.matrix.num_assays() == 6);
    REQUIRE(e.data.matrix.assay_ids[0] == "ps:b.1");
    REQUIRE(e.data.matrix.assay_ids[1] == "ps:b.2");
    REQUIRE(e.data.matrix.assay_ids[2] == "a0");

    Matrix expect0 = 0.5 * (d0.matrix.values.row(0) + d0.matrix.values.row(1));
    REQUIRE((e.data.matrix.values.row(0) - expect0).cwiseAbs().maxCoeff() < 1e-14);
    REQUIRE(e.data.matrix.values.bottomRows(4) == d0.matrix.values);

    // the two pseudo rows share one sample; originals stay singletons
    REQUIRE(e.data.mapping.assay_to_sample[0] == e.data.mapping.assay_to_sample[1]);
    REQUIRE(e.replicated_rows == std::vector<Index>{0, 1});
    REQUIRE(e.reduced_mapping.num_samples() == 1);
    REQUIRE(e.provenance.size() == 2);
    REQUIRE(e.provenance[0] == std::vector<Index>{0, 1});

    REQUIRE(fast_k_max(e) == 1);
}

TEST_CASE("full residual Gram of an extended dataset is supported on the replicated block") {
    SimScenario sc;
    sc.m = 16;
    sc.trend = TrendSpec{};
    sc.seed = 7;
    auto draw = gen_prps_scenario(sc, 0);
    const auto& e = draw.extended;
    Matrix S = residual_gram(e.data.matrix.values, e.data.mapping);

    std::vector<bool> replicated(static_cast<std::size_t>(S.rows()), false);
    for (Index i : e.replicated_rows) replicated[static_cast<std::size_t>(i)] = true;
    double scale = S.cwiseAbs().maxCoeff();
    for (Index i = 0; i < S.rows(); ++i) {
        for (Index j = 0; j < S.cols(); ++j) {
            if (!replicated[static_cast<std::size_t>(i)] || !replicated[static_cast<std::size_t>(j)]) {
                REQUIRE(std::abs(S(i, j)) <= 1e-12 * scale);
            }
        }
    }
}

TEST_CASE("fast_fit equals the full fit on the extended dataset") {
    for (int trial = 0; trial < 10; ++trial) {
        SimScenario sc;
        sc.m = 16;
        sc.trend = TrendSpec{};
        sc.seed = 100 + static_cast<std::uint64_t>(trial);
        auto draw = gen_prps_scenario(sc, 0);
        const auto& e = draw.extended;
        Index k = std::min<Index>(3, fast_k_max(e));
        auto f_fast = fast_fit(e, k);
        auto f_full = fit(e.data, k);
        double scale = f_full.removed().cwiseAbs().maxCoeff();
        REQUIRE((f_fast.removed() - f_full.removed()).cwiseAbs().maxCoeff() < 1e-9 * scale);
        REQUIRE((f_fast.w_hat - f_full.w_hat).cwiseAbs().maxCoeff() < 1e-9);
        REQUIRE((f_fast.alpha_hat - f_full.alpha_hat).cwiseAbs().maxCoeff() <
                1e-9 * f_full.alpha_hat.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("fast_fit rejects k beyond the reduced-block cap") {
    SimScenario sc;
    sc.m = 16;
    sc.trend = TrendSpec{};
    auto draw = gen_prps_scenario(sc, 0);
    REQUIRE_THROWS_AS(fast_fit(draw.extended, fast_k_max(draw.extended) + 1), validation_error);
    REQUIRE_THROWS_AS(fast_fit(draw.extended, 0), validation_error);
}

TEST_CASE("drop_pseudo_rows returns the original assay block") {
    std::mt19937_64 rng(11);
    auto d0 = singleton_dataset(8, 10, 3, rng);
    std::vector<std::string> bio = {"a", "a", "a", "a", "b", "b", "b", "b"};
    std::vector<std::string> unw = {"1", "1", "2", "2", "1", "1", "2", "2"};
    auto e = extend_dataset(d0, build_prps_plan(bio, unw, 2));
    auto f = fast_fit(e, 1);
    Matrix adj = f.adjusted(e.data.matrix.values);
    auto out = drop_pseudo_rows(e, adj);
    REQUIRE(out.values.rows() == 8);
    REQUIRE(out.assay_ids == d0.matrix.assay_ids);
    REQUIRE(out.values == adj.bottomRows(8));
}

TEST_CASE("gen_prps_scenario shapes and truth structure") {
    SimScenario sc;
    sc.m = 16;
    sc.trend = TrendSpec{};
    sc.seed = 13;
    auto draw = gen_prps_scenario(sc, 0);
    const auto& e = draw.extended;

    // m0 = 16 singletons, s = 4 subtypes, 2 pseudo rows each
    REQUIRE(e.num_pseudo == 8);
    REQUIRE(e.data.matrix.num_assays() == 24);
    REQUIRE(e.replicated_rows.size() == 8);
    REQUIRE(e.reduced_mapping.num_samples() == 4);
    REQUIRE(fast_k_max(e) == 4);
    REQUIRE(draw.w_truth.rows() == 24);
    REQUIRE(draw.alpha_truth.cols() == 16 * 16);

    // the pseudo-row truth is the average of its members' truth
    for (Index g = 0; g < e.num_pseudo; ++g) {
        Vector avg = Vector::Zero(draw.w_truth.cols());
        for (Index i : e.provenance[static_cast<std::size_t>(g)]) {
            avg += draw.w_truth.row(e.num_pseudo + i).transpose();
        }
        avg /= static_cast<double>(e.provenance[static_cast<std::size_t>(g)].size());
        REQUIRE((draw.w_truth.row(g).transpose() - avg).cwiseAbs().maxCoeff() < 1e-12);
    }

    // determinism
    auto again = gen_prps_scenario(sc, 0);
    REQUIRE(again.extended.data.matrix.values == e.data.matrix.values);
    REQUIRE(again.w_truth == draw.w_truth);
}
