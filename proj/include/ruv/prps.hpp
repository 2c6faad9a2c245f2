#ifndef RUV_PRPS_HPP
#define RUV_PRPS_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "projections.hpp"
#include "ruv3.hpp"

/**
 * @file prps.hpp
 *
 * @brief Pseudo-replicates of pseudo-samples.
 *
 * For studies without technical replicates: assays that share partially
 * known biology and partially known unwanted variation are averaged into
 * pseudo-samples, and pseudo-samples sharing biology but differing unwanted
 * variation are declared replicates in an enlarged mapping matrix.  The
 * enlarged dataset then goes through ordinary RUV-III; a fast path restricts
 * the eigendecomposition to the rows participating in any replicate set.
 */

namespace ruv {

struct PseudoSampleGroup {
    std::string pseudo_sample_id;
    std::vector<Index> members;          // original assay row indices
    std::string replicate_set_id;
};

struct PrpsPlan {
    std::vector<PseudoSampleGroup> groups;
    Index min_group_size = 3;
    Index b1 = 32; // cap on members per group
    Index b2 = 4;  // cap on groups per original assay
    std::vector<std::string> warnings;
};

/**
 * Groups assays by (biology, unwanted) label cell.  Each cell with at least
 * min_group_size members becomes a pseudo-sample; pseudo-samples sharing a
 * biology label form a pseudo-replicate set.  Biology labels with fewer than
 * two pseudo-samples are dropped with a warning, since no replication is
 * possible for them.
 *
 * @throws validation_error if no valid group remains.
 */
inline PrpsPlan build_prps_plan(const std::vector<std::string>& biology,
                                const std::vector<std::string>& unwanted,
                                Index min_group_size = 3,
                                Index b1 = 32, Index b2 = 4) {
    if (biology.size() != unwanted.size()) {
        throw validation_error("build_prps_plan: biology and unwanted label lists differ in length");
    }
    if (min_group_size < 2) {
        throw validation_error("build_prps_plan: min_group_size must be at least 2");
    }

    // cells keyed by (biology, unwanted), in first-appearance order
    std::vector<std::pair<std::string, std::string>> cell_order;
    std::map<std::pair<std::string, std::string>, std::vector<Index>> cells;
    for (std::size_t i = 0; i < biology.size(); ++i) {
        auto key = std::make_pair(biology[i], unwanted[i]);
        auto [it, inserted] = cells.try_emplace(key);
        if (inserted) cell_order.push_back(key);
        it->second.push_back(static_cast<Index>(i));
    }

    PrpsPlan plan;
    plan.min_group_size = min_group_size;
    plan.b1 = b1;
    plan.b2 = b2;

    std::map<std::string, std::vector<std::size_t>> by_biology; // group indices per biology label
    for (const auto& key : cell_order) {
        const auto& members = cells[key];
        if (static_cast<Index>(members.size()) < min_group_size) {
            plan.warnings.push_back("cell (" + key.first + "," + key.second + ") has " +
                                    std::to_string(members.size()) + " assays, below min_group_size " +
                                    std::to_string(min_group_size) + "; dropped");
            continue;
        }
        if (static_cast<Index>(members.size()) > b1) {
            throw validation_error("build_prps_plan: cell (" + key.first + "," + key.second + ") has " +
                                   std::to_string(members.size()) + " assays, above the b1 cap " +
                                   std::to_string(b1));
        }
        PseudoSampleGroup g;
        g.pseudo_sample_id = key.first + "." + key.second;
        g.members = members;
        g.replicate_set_id = key.first;
        by_biology[key.first].push_back(plan.groups.size());
        plan.groups.push_back(std::move(g));
    }

    // drop biology labels that yielded fewer than two pseudo-samples
    std::vector<bool> keep(plan.groups.size(), true);
    for (const auto& [bio, idx] : by_biology) {
        if (idx.size() < 2) {
            for (std::size_t g : idx) keep[g] = false;
            plan.warnings.push_back("biology '" + bio + "' yields only " + std::to_string(idx.size()) +
                                    " pseudo-sample(s); no replication possible, dropped");
        }
    }
    std::vector<PseudoSampleGroup> kept;
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        if (keep[g]) kept.push_back(std::move(plan.groups[g]));
    }
    plan.groups = std::move(kept);

    if (plan.groups.empty()) {
        throw validation_error("build_prps_plan: empty plan; no (biology, unwanted) cell meets min_group_size "
                               "with at least two cells per biology label");
    }
    // build_prps_plan partitions assays across cells, so b2 holds trivially;
    // plans assembled by hand are validated in averaging_matrix.
    return plan;
}

/// Row-stochastic sparse averaging matrix: row g has 1/n_g on group g's members.
struct AveragingMatrix {
    Eigen::SparseMatrix<double> weights; // m_pa x m0

    Index num_pseudo() const { return weights.rows(); }
    Matrix apply(const Matrix& Y0) const { return weights * Y0; }
    Matrix dense() const { return Matrix(weights); }
};

inline AveragingMatrix averaging_matrix(const PrpsPlan& plan, Index m0) {
    std::vector<Index> usage(static_cast<std::size_t>(m0), 0);
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t g = 0; g < plan.groups.size(); ++g) {
        const auto& members = plan.groups[g].members;
        if (members.empty()) {
            throw validation_error("averaging_matrix: group '" + plan.groups[g].pseudo_sample_id + "' is empty");
        }
        if (static_cast<Index>(members.size()) > plan.b1) {
            throw validation_error("averaging_matrix: group '" + plan.groups[g].pseudo_sample_id +
                                   "' exceeds the b1 cap");
        }
        double w = 1.0 / static_cast<double>(members.size());
        for (Index i : members) {
            if (i < 0 || i >= m0) {
                throw validation_error("averaging_matrix: member index " + std::to_string(i) +
                                       " out of range [0," + std::to_string(m0) + ")");
            }
            if (++usage[static_cast<std::size_t>(i)] > plan.b2) {
                throw validation_error("averaging_matrix: assay " + std::to_string(i) +
                                       " appears in more than b2 = " + std::to_string(plan.b2) + " groups");
            }
            trips.emplace_back(static_cast<int>(g), static_cast<int>(i), w);
        }
    }
    AveragingMatrix A;
    A.weights.resize(static_cast<Index>(plan.groups.size()), m0);
    A.weights.setFromTriplets(trips.begin(), trips.end());
    return A;
}

/**
 * @brief The enlarged dataset of pseudo-assays stacked above the originals.
 *
 * replicated_rows lists the rows (in the extended matrix) that participate
 * in any replicate or pseudo-replicate set; reduced_mapping is the mapping
 * restricted to those rows.  The eigenvectors of the full residual Gram are
 * supported on exactly these rows.
 */
struct ExtendedDataset {
    Dataset data;
    Index num_pseudo = 0;
    std::vector<Index> replicated_rows;
    MappingMatrix reduced_mapping;
    std::vector<std::vector<Index>> provenance; // per pseudo row, original members
};

/**
 * Stacks the pseudo-assay rows A_a*Y0 above Y0 and extends the mapping:
 * pseudo rows map to their pseudo-replicate set, original rows keep their
 * sample.  The control mask is untouched.
 */
inline ExtendedDataset extend_dataset(const Dataset& d0, const PrpsPlan& plan) {
    const Index m0 = d0.matrix.num_assays();
    AveragingMatrix A = averaging_matrix(plan, m0);
    const Index mpa = A.num_pseudo();

    ExtendedDataset out;
    out.num_pseudo = mpa;
    out.data.controls = d0.controls;

    out.data.matrix.values.resize(m0 + mpa, d0.matrix.num_variables());
    out.data.matrix.values.topRows(mpa) = A.apply(d0.matrix.values);
    out.data.matrix.values.bottomRows(m0) = d0.matrix.values;
    out.data.matrix.variable_ids = d0.matrix.variable_ids;

    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(static_cast<std::size_t>(m0 + mpa));
    for (const auto& g : plan.groups) {
        pairs.emplace_back("ps:" + g.pseudo_sample_id, "pr:" + g.replicate_set_id);
        out.provenance.push_back(g.members);
    }
    for (Index i = 0; i < m0; ++i) {
        pairs.emplace_back(d0.mapping.assay_ids[static_cast<std::size_t>(i)],
                           d0.mapping.sample_ids[static_cast<std::size_t>(
                               d0.mapping.assay_to_sample[static_cast<std::size_t>(i)])]);
    }
    out.data.mapping = build_mapping(pairs);
    out.data.matrix.assay_ids = out.data.mapping.assay_ids;

    // rows in replicate sets of size >= 2; the rest contribute zero residuals
    std::vector<std::pair<std::string, std::string>> reduced_pairs;
    for (const auto& set : out.data.mapping.replicate_sets) {
        if (set.size() < 2) continue;
        for (Index i : set) {
            out.replicated_rows.push_back(i);
        }
    }
    std::sort(out.replicated_rows.begin(), out.replicated_rows.end());
    for (Index i : out.replicated_rows) {
        reduced_pairs.emplace_back(pairs[static_cast<std::size_t>(i)]);
    }
    if (!reduced_pairs.empty()) {
        out.reduced_mapping = build_mapping(reduced_pairs);
    }
    return out;
}

/// k bound of the fast path: m_r - s_r over the replicated block.
inline Index fast_k_max(const ExtendedDataset& e) {
    return static_cast<Index>(e.replicated_rows.size()) - e.reduced_mapping.num_samples();
}

/**
 * RUV-III on the extended dataset, with the eigendecomposition restricted to
 * the replicated block (the m_r-by-m_r Gram).  The eigenvectors are embedded
 * with zeros on the non-replicated rows; regression and adjustment run over
 * all m rows.  Equals the full fit on the extended dataset.
 */
inline Ruv3Fit fast_fit(const ExtendedDataset& e, Index k, const FitOptions& opt = {}) {
    const Index m = e.data.matrix.num_assays();
    const Index mr = static_cast<Index>(e.replicated_rows.size());
    const Index kmax = fast_k_max(e);
    if (k < 1 || k > kmax) {
        throw validation_error("fast_fit: k = " + std::to_string(k) +
                               " out of range [1, m_r - s_r = " + std::to_string(kmax) + "]");
    }
    const Matrix& Y = e.data.matrix.values;

    Matrix Yr(mr, Y.cols());
    for (Index r = 0; r < mr; ++r) {
        Yr.row(r) = Y.row(e.replicated_rows[static_cast<std::size_t>(r)]);
    }
    Matrix Sr = residual_gram(Yr, e.reduced_mapping);
    SymmetricEigen er = sym_eigen_desc(Sr, k);

    SymmetricEigen embedded;
    embedded.values = er.values;
    embedded.zero_threshold = er.zero_threshold;
    embedded.vectors = Matrix::Zero(m, k);
    for (Index r = 0; r < mr; ++r) {
        embedded.vectors.row(e.replicated_rows[static_cast<std::size_t>(r)]) = er.vectors.row(r);
    }
    return fit_with_basis(Y, e.data.controls, embedded, k, opt);
}

/// Adjusted matrix with the pseudo-assay scaffolding rows removed.
inline AssayMatrix drop_pseudo_rows(const ExtendedDataset& e, const Matrix& adjusted) {
    AssayMatrix out;
    const Index m0 = adjusted.rows() - e.num_pseudo;
    out.values = adjusted.bottomRows(m0);
    out.variable_ids = e.data.matrix.variable_ids;
    out.assay_ids.assign(e.data.matrix.assay_ids.begin() + e.num_pseudo, e.data.matrix.assay_ids.end());
    return out;
}

} // namespace ruv

#endif
