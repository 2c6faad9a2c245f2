// Command-line driver: adjust, kscan, prps, simulate.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ruv/ruv.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace ruv;

namespace {

double env_double(const char* name, double fallback) {
    const char* v = std::getenv(name);
    if (!v || !*v) return fallback;
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw validation_error(std::string(name) + " is not a number: '" + v + "'");
    }
}

int env_int(const char* name, int fallback) {
    const char* v = std::getenv(name);
    if (!v || !*v) return fallback;
    try {
        return std::stoi(v);
    } catch (const std::exception&) {
        throw validation_error(std::string(name) + " is not an integer: '" + v + "'");
    }
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw io_error("cannot create output directory '" + out + "': " + ec.message());
}

Dataset load_dataset(const std::string& matrix_path, const std::string& mapping_path,
                     const std::string& controls_path) {
    Dataset d;
    d.matrix = read_matrix_tsv(matrix_path);
    d.mapping = build_mapping(read_mapping_csv(mapping_path));
    d.controls = read_controls(controls_path, d.matrix.variable_ids);
    validate_dataset(d);
    return d;
}

json fit_manifest(const Ruv3Fit& f, const Dataset& d, bool k_defaulted, const FitOptions& opt) {
    json manifest;
    manifest["command"] = "adjust";
    manifest["m"] = d.matrix.num_assays();
    manifest["n"] = d.matrix.num_variables();
    manifest["num_samples"] = d.mapping.num_samples();
    manifest["num_controls"] = static_cast<Index>(d.controls.indices.size());
    manifest["k"] = f.k;
    manifest["k_max"] = k_max(d.mapping);
    manifest["k_defaulted_to_k_max"] = k_defaulted;
    manifest["eigenvalues"] = std::vector<double>(f.eigenvalues.data(), f.eigenvalues.data() + f.k);
    manifest["control_system_rcond"] = f.rcond;
    manifest["rcond_min"] = opt.rcond_min;
    return manifest;
}

void write_fit_outputs(const std::string& out, const Ruv3Fit& f, const AssayMatrix& adjusted,
                       const std::vector<std::string>& w_row_ids, const json& manifest) {
    AssayMatrix w;
    w.values = f.w_hat;
    w.assay_ids = w_row_ids;
    for (Index j = 0; j < f.k; ++j) w.variable_ids.push_back("factor" + std::to_string(j));
    AssayMatrix a;
    a.values = f.alpha_hat;
    for (Index j = 0; j < f.k; ++j) a.assay_ids.push_back("factor" + std::to_string(j));
    a.variable_ids = adjusted.variable_ids;

    write_matrix_tsv((fs::path(out) / "adjusted.tsv").string(), adjusted);
    write_matrix_tsv((fs::path(out) / "w_hat.tsv").string(), w);
    write_matrix_tsv((fs::path(out) / "alpha_hat.tsv").string(), a);
    std::ofstream mf(fs::path(out) / "manifest.json");
    if (!mf) throw io_error("cannot write manifest in '" + out + "'");
    mf << manifest.dump(2) << '\n';
}

struct AdjustArgs {
    std::string matrix, mapping, controls, out;
    Index k = 0; // 0 means default to k_max
};

int cmd_adjust(const AdjustArgs& args, const FitOptions& opt) {
    Dataset d = load_dataset(args.matrix, args.mapping, args.controls);
    bool k_defaulted = args.k == 0;
    Index k = k_defaulted ? k_max(d.mapping) : args.k;
    Ruv3Fit f = fit(d, k, opt);

    AssayMatrix adjusted;
    adjusted.values = f.adjusted(d.matrix.values);
    adjusted.assay_ids = d.matrix.assay_ids;
    adjusted.variable_ids = d.matrix.variable_ids;

    ensure_out_dir(args.out);
    write_fit_outputs(args.out, f, adjusted, adjusted.assay_ids, fit_manifest(f, d, k_defaulted, opt));
    std::cout << "adjusted " << adjusted.values.rows() << "x" << adjusted.values.cols()
              << " with k=" << k << " (rcond " << f.rcond << ")\n";
    return 0;
}

struct KscanArgs {
    std::string matrix, mapping, controls, out;
    Index K = 0; // 0 means k_max
};

int cmd_kscan(const KscanArgs& args, const FitOptions& opt) {
    Dataset d = load_dataset(args.matrix, args.mapping, args.controls);
    Index K = args.K == 0 ? k_max(d.mapping) : args.K;
    KScanResult scan = k_scan(d, K, opt);

    ensure_out_dir(args.out);
    std::ofstream csv(fs::path(args.out) / "kscan.csv");
    if (!csv) throw io_error("cannot write kscan.csv in '" + args.out + "'");
    csv << "k,norm_sq,status\n";
    char buf[32];
    for (Index k = 1; k <= K; ++k) {
        std::size_t i = static_cast<std::size_t>(k - 1);
        csv << k << ',';
        if (scan.ok[i]) {
            std::snprintf(buf, sizeof(buf), "%.17g", scan.norms_sq[i]);
            csv << buf << ",ok\n";
        } else {
            csv << "-inf,singular\n";
        }
    }
    std::cout << "k_hat=" << scan.k_hat << "\n";
    return 0;
}

struct PrpsArgs {
    std::string matrix, annotation, out;
    std::string controls; // only needed with --adjust
    Index min_group_size = 3, b1 = 32, b2 = 4;
    bool adjust = false;
    Index k = 0;
};

int cmd_prps(const PrpsArgs& args, const FitOptions& opt) {
    AssayMatrix mat = read_matrix_tsv(args.matrix);
    PrpsAnnotation ann = read_annotation_csv(args.annotation);
    if (ann.assay_ids != mat.assay_ids) {
        throw validation_error("annotation assay ids do not match the matrix rows (same ids, same order required)");
    }
    PrpsPlan plan = build_prps_plan(ann.biology, ann.unwanted, args.min_group_size, args.b1, args.b2);
    for (const auto& w : plan.warnings) std::cerr << "warning: " << w << "\n";

    Dataset d0;
    d0.matrix = mat;
    {
        // originals are singletons; real replicates, if any, come back through
        // the extended mapping the user feeds to `adjust`
        std::vector<std::pair<std::string, std::string>> pairs;
        for (const auto& id : mat.assay_ids) pairs.emplace_back(id, id);
        d0.mapping = build_mapping(pairs);
    }
    if (!args.controls.empty()) {
        d0.controls = read_controls(args.controls, mat.variable_ids);
    }
    ExtendedDataset e = extend_dataset(d0, plan);

    ensure_out_dir(args.out);
    write_prps_plan((fs::path(args.out) / "prps_plan.txt").string(), plan);
    write_matrix_tsv((fs::path(args.out) / "extended_matrix.tsv").string(), e.data.matrix);
    write_mapping_csv((fs::path(args.out) / "extended_mapping.csv").string(), e.data.mapping);
    std::cout << plan.groups.size() << " pseudo-samples over "
              << e.reduced_mapping.num_samples() << " pseudo-replicate sets\n";

    if (args.adjust) {
        if (args.controls.empty()) {
            throw validation_error("--adjust requires --controls");
        }
        bool k_defaulted = args.k == 0;
        Index k = k_defaulted ? fast_k_max(e) : args.k;
        Ruv3Fit f = fast_fit(e, k, opt);
        AssayMatrix adjusted = drop_pseudo_rows(e, f.adjusted(e.data.matrix.values));
        json manifest = fit_manifest(f, e.data, k_defaulted, opt);
        manifest["command"] = "prps";
        manifest["num_pseudo"] = e.num_pseudo;
        manifest["k_max"] = fast_k_max(e);
        write_fit_outputs(args.out, f, adjusted, e.data.matrix.assay_ids, manifest);
        std::cout << "adjusted with k=" << k << " (rcond " << f.rcond << ")\n";
    }
    return 0;
}

struct SimConfig {
    SimScenario base;
    std::vector<Index> m_values;
    int reps = 2;
    int threads = 1;
};

SimConfig parse_sim_config(const std::string& path, int default_threads) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file '" + path + "'");
    json cfg;
    try {
        in >> cfg;
    } catch (const json::parse_error& e) {
        throw io_error("config file '" + path + "' is not valid JSON: " + e.what());
    }

    std::vector<std::string> errors;
    auto bad = [&](const std::string& msg) { errors.push_back(msg); };

    SimConfig out;
    out.threads = default_threads;

    static const std::vector<std::string> known = {
        "m_values", "reps", "nc_rule", "replication", "distribution",
        "k", "k0", "seed", "with_mu", "with_signal", "trend_segments", "threads"};
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
            bad("unknown key '" + it.key() + "'");
        }
    }

    if (!cfg.contains("m_values") || !cfg["m_values"].is_array() || cfg["m_values"].empty()) {
        bad("'m_values' must be a non-empty array of integers");
    } else {
        for (const auto& v : cfg["m_values"]) {
            if (!v.is_number_integer()) {
                bad("'m_values' must contain only integers");
                break;
            }
            out.m_values.push_back(v.get<Index>());
        }
    }
    if (!cfg.contains("reps") || !cfg["reps"].is_number_integer() || cfg["reps"].get<int>() < 2) {
        bad("'reps' must be an integer >= 2");
    } else {
        out.reps = cfg["reps"].get<int>();
    }
    if (cfg.contains("nc_rule")) {
        std::string r = cfg["nc_rule"].is_string() ? cfg["nc_rule"].get<std::string>() : "";
        if (r == "m_squared_over_8") out.base.nc_rule = NcRule::MSquaredOver8;
        else if (r == "m_three_halves_over_2") out.base.nc_rule = NcRule::MThreeHalvesOver2;
        else if (r == "two_times_m") out.base.nc_rule = NcRule::TwoTimesM;
        else bad("'nc_rule' must be one of m_squared_over_8, m_three_halves_over_2, two_times_m");
    }
    if (cfg.contains("replication")) {
        std::string r = cfg["replication"].is_string() ? cfg["replication"].get<std::string>() : "";
        if (r == "samples_increasing") out.base.replication = Replication::SamplesIncreasing;
        else if (r == "replicates_increasing") out.base.replication = Replication::ReplicatesIncreasing;
        else bad("'replication' must be samples_increasing or replicates_increasing");
    }
    if (cfg.contains("distribution")) {
        std::string r = cfg["distribution"].is_string() ? cfg["distribution"].get<std::string>() : "";
        if (r == "normal") out.base.distribution = NoiseDistribution::Normal;
        else if (r == "pareto") out.base.distribution = NoiseDistribution::ParetoStd;
        else bad("'distribution' must be normal or pareto");
    }
    if (cfg.contains("k")) {
        if (cfg["k"].is_string() && cfg["k"].get<std::string>() == "max") {
            out.base.k_choice = KPolicy::max();
        } else if (cfg["k"].is_number_integer() && cfg["k"].get<Index>() >= 1) {
            out.base.k_choice = KPolicy::fixed(cfg["k"].get<Index>());
        } else {
            bad("'k' must be a positive integer or the string \"max\"");
        }
    }
    if (cfg.contains("k0")) {
        if (!cfg["k0"].is_number_integer() || cfg["k0"].get<Index>() < 1) bad("'k0' must be a positive integer");
        else out.base.k0 = cfg["k0"].get<Index>();
    }
    if (cfg.contains("seed")) {
        if (!cfg["seed"].is_number_unsigned()) bad("'seed' must be a non-negative integer");
        else out.base.seed = cfg["seed"].get<std::uint64_t>();
    }
    if (cfg.contains("with_mu")) {
        if (!cfg["with_mu"].is_boolean()) bad("'with_mu' must be a boolean");
        else out.base.with_mu = cfg["with_mu"].get<bool>();
    }
    if (cfg.contains("with_signal")) {
        if (!cfg["with_signal"].is_boolean()) bad("'with_signal' must be a boolean");
        else out.base.with_signal = cfg["with_signal"].get<bool>();
    }
    if (cfg.contains("trend_segments")) {
        if (!cfg["trend_segments"].is_number_integer() || cfg["trend_segments"].get<Index>() < 1) {
            bad("'trend_segments' must be a positive integer");
        } else {
            out.base.trend = TrendSpec{cfg["trend_segments"].get<Index>()};
        }
    }
    if (cfg.contains("threads")) {
        if (!cfg["threads"].is_number_integer() || cfg["threads"].get<int>() < 1) bad("'threads' must be a positive integer");
        else out.threads = cfg["threads"].get<int>();
    }

    for (Index m : out.m_values) {
        SimScenario sc = out.base;
        sc.m = m;
        try {
            validate_scenario(sc);
        } catch (const validation_error& e) {
            bad("m = " + std::to_string(m) + ": " + e.what());
        }
    }

    if (!errors.empty()) {
        std::string msg = "config file '" + path + "' is invalid:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw validation_error(msg);
    }
    return out;
}

int cmd_simulate(const std::string& config_path, const std::string& out, int default_threads) {
    SimConfig cfg = parse_sim_config(config_path, default_threads);
    SimResult res = run_grid(cfg.base, cfg.m_values, cfg.reps, cfg.threads);

    ensure_out_dir(out);
    char buf[32];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };

    std::ofstream qt(fs::path(out) / "qtable.csv");
    if (!qt) throw io_error("cannot write qtable.csv in '" + out + "'");
    qt << "m,rep,q\n";
    for (const auto& lvl : res.levels) {
        for (std::size_t r = 0; r < lvl.q.size(); ++r) {
            qt << lvl.m << ',' << r << ',' << fmt(lvl.q[r]) << '\n';
        }
    }

    std::ofstream sm(fs::path(out) / "summary.csv");
    if (!sm) throw io_error("cannot write summary.csv in '" + out + "'");
    sm << "m,mean_q,se_q,failures\n";
    for (const auto& lvl : res.levels) {
        sm << lvl.m << ',' << fmt(lvl.mean_q) << ',' << fmt(lvl.se_q) << ',' << lvl.failures << '\n';
    }

    std::ofstream sl(fs::path(out) / "slope.txt");
    if (!sl) throw io_error("cannot write slope.txt in '" + out + "'");
    sl << "slope\t" << fmt(res.slope) << "\nse\t" << fmt(res.slope_se) << "\n";

    std::cout << "slope=" << res.slope << " se=" << res.slope_se << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RUV-III normalization: remove unwanted variation using replicates and negative controls"};
    app.require_subcommand(1);

    FitOptions opt;
    int threads = 1;
    try {
        opt.rcond_min = env_double("RUV_RCOND_MIN", opt.rcond_min);
        threads = env_int("RUV_THREADS", 1);
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    AdjustArgs adj;
    auto* adjust = app.add_subcommand("adjust", "Fit RUV-III and write the adjusted matrix");
    adjust->add_option("--matrix", adj.matrix, "assay matrix TSV")->required();
    adjust->add_option("--mapping", adj.mapping, "assay-to-sample CSV")->required();
    adjust->add_option("--controls", adj.controls, "negative-control ids, one per line")->required();
    adjust->add_option("--k", adj.k, "unwanted-variation dimension (default m - s)");
    adjust->add_option("--out", adj.out, "output directory")->required();

    KscanArgs ks;
    auto* kscan = app.add_subcommand("kscan", "Scan the removed-component norm over k = 1..K");
    kscan->add_option("--matrix", ks.matrix, "assay matrix TSV")->required();
    kscan->add_option("--mapping", ks.mapping, "assay-to-sample CSV")->required();
    kscan->add_option("--controls", ks.controls, "negative-control ids, one per line")->required();
    kscan->add_option("--K", ks.K, "scan upper bound (default m - s)");
    kscan->add_option("--out", ks.out, "output directory")->required();

    PrpsArgs pr;
    auto* prps = app.add_subcommand("prps", "Build pseudo-replicates of pseudo-samples");
    prps->add_option("--matrix", pr.matrix, "assay matrix TSV")->required();
    prps->add_option("--annotation", pr.annotation, "assay_id,biology,unwanted CSV")->required();
    prps->add_option("--controls", pr.controls, "negative-control ids (required with --adjust)");
    prps->add_option("--min-group-size", pr.min_group_size, "minimum assays per pseudo-sample");
    prps->add_option("--b1", pr.b1, "cap on assays per pseudo-sample");
    prps->add_option("--b2", pr.b2, "cap on pseudo-samples per assay");
    prps->add_flag("--adjust", pr.adjust, "also fit and write the adjusted matrix");
    prps->add_option("--k", pr.k, "dimension for --adjust (default fast-path m_r - s_r)");
    prps->add_option("--out", pr.out, "output directory")->required();

    std::string sim_config, sim_out;
    auto* simulate = app.add_subcommand("simulate", "Run a seeded simulation grid");
    simulate->add_option("--config", sim_config, "scenario config JSON")->required();
    simulate->add_option("--out", sim_out, "output directory")->required();
    simulate->add_option("--threads", threads, "worker threads");

    double rcond_flag = opt.rcond_min;
    for (auto* sub : {adjust, kscan, prps}) {
        sub->add_option("--rcond-min", rcond_flag, "reciprocal-condition floor for the control system");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    opt.rcond_min = rcond_flag;
    try {
        if (*adjust) return cmd_adjust(adj, opt);
        if (*kscan) return cmd_kscan(ks, opt);
        if (*prps) return cmd_prps(pr, opt);
        if (*simulate) return cmd_simulate(sim_config, sim_out, threads);
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
