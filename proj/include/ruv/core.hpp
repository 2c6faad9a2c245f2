#ifndef RUV_CORE_HPP
#define RUV_CORE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errors.hpp"

/**
 * @file core.hpp
 *
 * @brief Domain types for assay datasets, replicate structure and negative
 * controls.
 *
 * The data matrix is assays-by-variables (rows are assays, columns are genes
 * or other measured variables).  The mapping matrix links each assay to the
 * distinct sample it was run on; assays sharing a sample form a replicate
 * set.  All types are immutable after construction and safe to share across
 * concurrent readers.
 */

namespace ruv {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense m-by-n data matrix with row (assay) and column (variable) labels.
struct AssayMatrix {
    Matrix values;
    std::vector<std::string> assay_ids;
    std::vector<std::string> variable_ids;

    Index num_assays() const { return values.rows(); }
    Index num_variables() const { return values.cols(); }
};

/**
 * @brief Assay-to-sample structure, the m-by-s 0/1 mapping matrix in sparse
 * form.
 *
 * Rather than storing the indicator matrix, each assay carries the index of
 * its sample and `replicate_sets[h]` holds the preimage of sample h.  Sample
 * indices follow first appearance in the construction input, so results are
 * deterministic across runs.
 */
struct MappingMatrix {
    std::vector<Index> assay_to_sample;           // length m, values in [0, s)
    std::vector<std::string> assay_ids;           // length m
    std::vector<std::string> sample_ids;          // length s
    std::vector<std::vector<Index>> replicate_sets; // s sets, sizes m_h

    Index num_assays() const { return static_cast<Index>(assay_to_sample.size()); }
    Index num_samples() const { return static_cast<Index>(sample_ids.size()); }

    /// Reads back the (assay_id, sample_id) pairs used to build this mapping.
    std::vector<std::pair<std::string, std::string>> pairs() const {
        std::vector<std::pair<std::string, std::string>> out;
        out.reserve(assay_to_sample.size());
        for (std::size_t i = 0; i < assay_to_sample.size(); ++i) {
            out.emplace_back(assay_ids[i], sample_ids[static_cast<std::size_t>(assay_to_sample[i])]);
        }
        return out;
    }

    /// Dense m-by-s indicator, for tests and small-scale checks only.
    Matrix dense() const {
        Matrix M = Matrix::Zero(num_assays(), num_samples());
        for (Index i = 0; i < num_assays(); ++i) {
            M(i, assay_to_sample[static_cast<std::size_t>(i)]) = 1.0;
        }
        return M;
    }
};

/// Sorted, duplicate-free column indices of the negative-control variables.
struct ControlMask {
    std::vector<Index> indices;

    Index size() const { return static_cast<Index>(indices.size()); }

    /// Complement of the mask in [0, n), original order.
    std::vector<Index> complement(Index n) const {
        std::vector<bool> in_mask(static_cast<std::size_t>(n), false);
        for (Index c : indices) {
            if (c >= 0 && c < n) in_mask[static_cast<std::size_t>(c)] = true;
        }
        std::vector<Index> out;
        out.reserve(static_cast<std::size_t>(n) - indices.size());
        for (Index j = 0; j < n; ++j) {
            if (!in_mask[static_cast<std::size_t>(j)]) out.push_back(j);
        }
        return out;
    }
};

/// Bundle of the model inputs: data, replicate structure, control mask.
struct Dataset {
    AssayMatrix matrix;
    MappingMatrix mapping;
    ControlMask controls;
};

/**
 * Builds a MappingMatrix from (assay_id, sample_id) pairs.  Samples are
 * indexed in order of first appearance; replicate sets are the preimage
 * partition of the assay-to-sample map.
 *
 * @throws validation_error on empty input or duplicate assay ids.
 */
inline MappingMatrix build_mapping(const std::vector<std::pair<std::string, std::string>>& pairs) {
    if (pairs.empty()) {
        throw validation_error("build_mapping: empty input");
    }
    MappingMatrix out;
    std::unordered_map<std::string, Index> sample_index;
    std::unordered_set<std::string> seen_assays;
    out.assay_to_sample.reserve(pairs.size());
    out.assay_ids.reserve(pairs.size());
    for (const auto& [assay, sample] : pairs) {
        if (!seen_assays.insert(assay).second) {
            throw validation_error("build_mapping: duplicate assay_id '" + assay + "'");
        }
        auto it = sample_index.find(sample);
        Index h;
        if (it == sample_index.end()) {
            h = static_cast<Index>(out.sample_ids.size());
            sample_index.emplace(sample, h);
            out.sample_ids.push_back(sample);
            out.replicate_sets.emplace_back();
        } else {
            h = it->second;
        }
        out.replicate_sets[static_cast<std::size_t>(h)].push_back(static_cast<Index>(out.assay_to_sample.size()));
        out.assay_to_sample.push_back(h);
        out.assay_ids.push_back(assay);
    }
    return out;
}

namespace detail {

inline void check_unique(const std::vector<std::string>& ids, const char* what,
                         std::vector<std::string>& violations) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!seen.insert(ids[i]).second) {
            violations.push_back(std::string("duplicate ") + what + " '" + ids[i] + "' at position " + std::to_string(i));
        }
    }
}

} // namespace detail

/// Collects every violated invariant; empty result means the dataset is valid.
inline std::vector<std::string> collect_violations(const Dataset& d) {
    std::vector<std::string> v;
    const Index m = d.matrix.num_assays();
    const Index n = d.matrix.num_variables();

    if (m < 2) v.push_back("matrix must have at least 2 assay rows, got " + std::to_string(m));
    if (n < 1) v.push_back("matrix must have at least 1 variable column, got " + std::to_string(n));
    if (static_cast<Index>(d.matrix.assay_ids.size()) != m) {
        v.push_back("assay_ids length " + std::to_string(d.matrix.assay_ids.size()) +
                    " does not match row count " + std::to_string(m));
    }
    if (static_cast<Index>(d.matrix.variable_ids.size()) != n) {
        v.push_back("variable_ids length " + std::to_string(d.matrix.variable_ids.size()) +
                    " does not match column count " + std::to_string(n));
    }
    detail::check_unique(d.matrix.assay_ids, "assay_id", v);
    detail::check_unique(d.matrix.variable_ids, "variable_id", v);

    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (!std::isfinite(d.matrix.values(i, j))) {
                v.push_back("non-finite value at (" + std::to_string(i) + "," + std::to_string(j) + ")");
                goto finite_done; // one report is enough to fail validation
            }
        }
    }
finite_done:

    if (d.mapping.num_assays() != m) {
        v.push_back("mapping covers " + std::to_string(d.mapping.num_assays()) +
                    " assays but matrix has " + std::to_string(m) + " rows");
    }
    const Index s = d.mapping.num_samples();
    for (std::size_t i = 0; i < d.mapping.assay_to_sample.size(); ++i) {
        Index h = d.mapping.assay_to_sample[i];
        if (h < 0 || h >= s) {
            v.push_back("assay " + std::to_string(i) + " maps to out-of-range sample index " + std::to_string(h));
        }
    }
    // replicate_sets must be exactly the preimage partition
    {
        Index covered = 0;
        for (Index h = 0; h < s; ++h) {
            const auto& set = d.mapping.replicate_sets[static_cast<std::size_t>(h)];
            if (set.empty()) {
                v.push_back("sample '" + d.mapping.sample_ids[static_cast<std::size_t>(h)] + "' has no assays");
            }
            for (Index i : set) {
                ++covered;
                if (i < 0 || i >= d.mapping.num_assays() ||
                    d.mapping.assay_to_sample[static_cast<std::size_t>(i)] != h) {
                    v.push_back("replicate set " + std::to_string(h) + " is not the preimage of assay_to_sample");
                    break;
                }
            }
        }
        if (covered != d.mapping.num_assays()) {
            v.push_back("replicate sets cover " + std::to_string(covered) + " assays, expected " +
                        std::to_string(d.mapping.num_assays()));
        }
    }

    if (d.controls.indices.empty()) {
        v.push_back("control mask is empty");
    }
    Index prev = -1;
    for (Index c : d.controls.indices) {
        if (c < 0 || c >= n) {
            v.push_back("control index " + std::to_string(c) + " out of range [0," + std::to_string(n) + ")");
        }
        if (c <= prev) {
            v.push_back("control indices not strictly increasing at " + std::to_string(c));
        }
        prev = c;
    }
    return v;
}

/// @throws validation_error naming every violated invariant.
inline void validate_dataset(const Dataset& d) {
    auto v = collect_violations(d);
    if (!v.empty()) {
        std::string msg = "invalid dataset:";
        for (const auto& s : v) {
            msg += "\n  - " + s;
        }
        throw validation_error(msg);
    }
}

/// Control columns (mask order) and the complement columns (original order).
inline std::pair<Matrix, Matrix> split_columns(const Matrix& Y, const ControlMask& mask) {
    const Index n = Y.cols();
    Matrix Yc(Y.rows(), mask.size());
    for (Index j = 0; j < mask.size(); ++j) {
        Index c = mask.indices[static_cast<std::size_t>(j)];
        if (c < 0 || c >= n) {
            throw validation_error("split_columns: control index " + std::to_string(c) + " out of range");
        }
        Yc.col(j) = Y.col(c);
    }
    auto rest = mask.complement(n);
    Matrix Yd(Y.rows(), static_cast<Index>(rest.size()));
    for (std::size_t j = 0; j < rest.size(); ++j) {
        Yd.col(static_cast<Index>(j)) = Y.col(rest[j]);
    }
    return {std::move(Yc), std::move(Yd)};
}

/// Just the control columns, in mask order.
inline Matrix control_columns(const Matrix& Y, const ControlMask& mask) {
    Matrix Yc(Y.rows(), mask.size());
    for (Index j = 0; j < mask.size(); ++j) {
        Index c = mask.indices[static_cast<std::size_t>(j)];
        if (c < 0 || c >= Y.cols()) {
            throw validation_error("control_columns: index " + std::to_string(c) + " out of range");
        }
        Yc.col(j) = Y.col(c);
    }
    return Yc;
}

} // namespace ruv

#endif
