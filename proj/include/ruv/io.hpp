#ifndef RUV_IO_HPP
#define RUV_IO_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "prps.hpp"

/**
 * @file io.hpp
 *
 * @brief File formats: TSV matrices, mapping/annotation CSV, control lists,
 * PRPS plan text.
 *
 * Matrix TSV: first row holds the variable ids (the leading cell is a
 * corner label), each following row starts with its assay id.  UTF-8, '.'
 * decimal separator.  Values are serialized with 17 significant digits so a
 * write/read round trip is numerically exact.
 */

namespace ruv {

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, sep)) out.push_back(field);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

inline std::string rstrip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
    return s;
}

inline double parse_double(const std::string& s, std::size_t line, std::size_t col) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw io_error("bad numeric value '" + s + "' at line " + std::to_string(line) +
                       ", column " + std::to_string(col));
    }
}

inline std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline AssayMatrix read_matrix_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open matrix file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw io_error("matrix file '" + path + "' is empty");
    auto header = detail::split(detail::rstrip(line), '\t');
    if (header.size() < 2) throw io_error("matrix header in '" + path + "' needs at least one variable column");

    AssayMatrix out;
    out.variable_ids.assign(header.begin() + 1, header.end());
    const std::size_t n = out.variable_ids.size();

    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::rstrip(line);
        if (line.empty()) continue;
        auto fields = detail::split(line, '\t');
        if (fields.size() != n + 1) {
            throw io_error("line " + std::to_string(lineno) + " of '" + path + "' has " +
                           std::to_string(fields.size()) + " fields, expected " + std::to_string(n + 1));
        }
        out.assay_ids.push_back(fields[0]);
        std::vector<double> vals(n);
        for (std::size_t j = 0; j < n; ++j) {
            vals[j] = detail::parse_double(fields[j + 1], lineno, j + 2);
        }
        rows.push_back(std::move(vals));
    }
    out.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(n));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
        }
    }
    return out;
}

inline void write_matrix_tsv(const std::string& path, const AssayMatrix& mat,
                             const std::string& corner = "id") {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write matrix file '" + path + "'");
    out << corner;
    for (const auto& v : mat.variable_ids) out << '\t' << v;
    out << '\n';
    for (Index i = 0; i < mat.num_assays(); ++i) {
        out << mat.assay_ids[static_cast<std::size_t>(i)];
        for (Index j = 0; j < mat.num_variables(); ++j) {
            out << '\t' << detail::format_value(mat.values(i, j));
        }
        out << '\n';
    }
    if (!out) throw io_error("write to '" + path + "' failed");
}

/// Unlabeled numeric matrix convenience writer (w_hat, alpha_hat outputs).
inline void write_matrix_tsv(const std::string& path, const Matrix& values,
                             const std::string& row_prefix, const std::string& col_prefix) {
    AssayMatrix mat;
    mat.values = values;
    for (Index i = 0; i < values.rows(); ++i) mat.assay_ids.push_back(row_prefix + std::to_string(i));
    for (Index j = 0; j < values.cols(); ++j) mat.variable_ids.push_back(col_prefix + std::to_string(j));
    write_matrix_tsv(path, mat);
}

/// Two-column "assay_id,sample_id" CSV.
inline std::vector<std::pair<std::string, std::string>> read_mapping_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open mapping file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw io_error("mapping file '" + path + "' is empty");
    if (detail::rstrip(line) != "assay_id,sample_id") {
        throw io_error("mapping file '" + path + "' must start with header 'assay_id,sample_id'");
    }
    std::vector<std::pair<std::string, std::string>> pairs;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::rstrip(line);
        if (line.empty()) continue;
        auto fields = detail::split(line, ',');
        if (fields.size() != 2) {
            throw io_error("line " + std::to_string(lineno) + " of '" + path + "' has " +
                           std::to_string(fields.size()) + " fields, expected 2");
        }
        pairs.emplace_back(fields[0], fields[1]);
    }
    return pairs;
}

inline void write_mapping_csv(const std::string& path, const MappingMatrix& mapping) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write mapping file '" + path + "'");
    out << "assay_id,sample_id\n";
    for (const auto& [assay, sample] : mapping.pairs()) {
        out << assay << ',' << sample << '\n';
    }
}

/// One variable id per line; resolved against the matrix column labels.
inline ControlMask read_controls(const std::string& path, const std::vector<std::string>& variable_ids) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open controls file '" + path + "'");
    std::unordered_map<std::string, Index> index;
    for (std::size_t j = 0; j < variable_ids.size(); ++j) {
        index.emplace(variable_ids[j], static_cast<Index>(j));
    }
    std::vector<Index> found;
    std::vector<std::string> unknown;
    std::string line;
    while (std::getline(in, line)) {
        line = detail::rstrip(line);
        if (line.empty()) continue;
        auto it = index.find(line);
        if (it == index.end()) unknown.push_back(line);
        else found.push_back(it->second);
    }
    if (!unknown.empty()) {
        std::string msg = "controls file '" + path + "' names unknown variable ids:";
        for (const auto& u : unknown) msg += " '" + u + "'";
        throw validation_error(msg);
    }
    std::sort(found.begin(), found.end());
    found.erase(std::unique(found.begin(), found.end()), found.end());
    return ControlMask{std::move(found)};
}

/// PRPS annotation: "assay_id,biology,unwanted".
struct PrpsAnnotation {
    std::vector<std::string> assay_ids;
    std::vector<std::string> biology;
    std::vector<std::string> unwanted;
};

inline PrpsAnnotation read_annotation_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open annotation file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw io_error("annotation file '" + path + "' is empty");
    if (detail::rstrip(line) != "assay_id,biology,unwanted") {
        throw io_error("annotation file '" + path + "' must start with header 'assay_id,biology,unwanted'");
    }
    PrpsAnnotation out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::rstrip(line);
        if (line.empty()) continue;
        auto fields = detail::split(line, ',');
        if (fields.size() != 3) {
            throw io_error("line " + std::to_string(lineno) + " of '" + path + "' has " +
                           std::to_string(fields.size()) + " fields, expected 3");
        }
        out.assay_ids.push_back(fields[0]);
        out.biology.push_back(fields[1]);
        out.unwanted.push_back(fields[2]);
    }
    return out;
}

/// Auditable plan text; round-trips through read_prps_plan.
inline void write_prps_plan(const std::string& path, const PrpsPlan& plan) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write plan file '" + path + "'");
    out << "min_group_size\t" << plan.min_group_size << '\n';
    out << "b1\t" << plan.b1 << '\n';
    out << "b2\t" << plan.b2 << '\n';
    for (const auto& g : plan.groups) {
        out << "group\t" << g.pseudo_sample_id << '\t' << g.replicate_set_id << '\t';
        for (std::size_t i = 0; i < g.members.size(); ++i) {
            if (i) out << ',';
            out << g.members[i];
        }
        out << '\n';
    }
    for (const auto& w : plan.warnings) {
        out << "# " << w << '\n';
    }
}

inline PrpsPlan read_prps_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open plan file '" + path + "'");
    PrpsPlan plan;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = detail::rstrip(line);
        if (line.empty() || line[0] == '#') continue;
        auto fields = detail::split(line, '\t');
        if (fields[0] == "min_group_size" && fields.size() == 2) {
            plan.min_group_size = std::stol(fields[1]);
        } else if (fields[0] == "b1" && fields.size() == 2) {
            plan.b1 = std::stol(fields[1]);
        } else if (fields[0] == "b2" && fields.size() == 2) {
            plan.b2 = std::stol(fields[1]);
        } else if (fields[0] == "group" && fields.size() == 4) {
            PseudoSampleGroup g;
            g.pseudo_sample_id = fields[1];
            g.replicate_set_id = fields[2];
            for (const auto& tok : detail::split(fields[3], ',')) {
                g.members.push_back(std::stol(tok));
            }
            plan.groups.push_back(std::move(g));
        } else {
            throw io_error("unrecognized plan line " + std::to_string(lineno) + " in '" + path + "'");
        }
    }
    return plan;
}

} // namespace ruv

#endif
