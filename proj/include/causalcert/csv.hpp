#pragma once

// CSV ingestion and export for CausalDataset. Numeric data only, comma
// separated, header row required, no quoting beyond optional quotes around
// header names.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "causalcert/data.hpp"
#include "causalcert/detail/spec_string.hpp"
#include "causalcert/errors.hpp"

namespace causalcert {

struct CsvSchema {
    // Empty means: every column not mapped below.
    std::vector<std::string> covariates;
    std::string treatment = "t";
    std::string outcome = "y";
    // Oracle columns. All three or none.
    std::optional<std::string> y1;
    std::optional<std::string> y0;
    std::optional<std::string> propensity;
    double consistency_tolerance = 1e-9;
    // When no oracle column is mapped, map y1/y0/ps if all three exist in the header.
    bool detect_oracle = false;

    static CsvSchema with_oracle(std::vector<std::string> covariates = {}) {
        CsvSchema s;
        s.covariates = std::move(covariates);
        s.y1 = "y1";
        s.y0 = "y0";
        s.propensity = "ps";
        return s;
    }
};

namespace detail {

inline std::string unquote(std::string s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size())
        throw ParseError("unparseable value '" + cell + "' at row " + std::to_string(row) + ", column '" + column + "'",
                         row, column);
    if (!std::isfinite(v))
        throw ParseError("non-finite value at row " + std::to_string(row) + ", column '" + column + "'", row, column);
    return v;
}

inline std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline CausalDataset read_csv(std::istream& in, const CsvSchema& requested) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("CSV input is empty (header row required)", "");
    std::vector<std::string> header;
    for (auto& h : detail::split(line, ',')) header.push_back(detail::unquote(h));
    std::map<std::string, std::size_t> col;
    for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;

    const auto require = [&](const std::string& name) {
        const auto it = col.find(name);
        if (it == col.end()) throw SchemaError("missing column '" + name + "'", name);
        return it->second;
    };

    CsvSchema schema = requested;
    if (schema.detect_oracle && !schema.y1 && !schema.y0 && !schema.propensity && col.count("y1") && col.count("y0") &&
        col.count("ps")) {
        schema.y1 = "y1";
        schema.y0 = "y0";
        schema.propensity = "ps";
    }

    const int mapped_oracle = int(schema.y1.has_value()) + int(schema.y0.has_value()) + int(schema.propensity.has_value());
    if (mapped_oracle != 0 && mapped_oracle != 3)
        throw SchemaError("partial oracle mapping: y1, y0 and propensity columns must be mapped together",
                          schema.y1.value_or(schema.y0.value_or(schema.propensity.value_or(""))));
    const bool with_oracle = mapped_oracle == 3;

    const std::size_t t_col = require(schema.treatment);
    const std::size_t y_col = require(schema.outcome);
    std::size_t y1_col = 0, y0_col = 0, ps_col = 0;
    if (with_oracle) {
        y1_col = require(*schema.y1);
        y0_col = require(*schema.y0);
        ps_col = require(*schema.propensity);
    }

    std::vector<std::size_t> x_cols;
    if (schema.covariates.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) {
            const bool mapped = j == t_col || j == y_col || (with_oracle && (j == y1_col || j == y0_col || j == ps_col));
            if (!mapped) x_cols.push_back(j);
        }
    } else {
        for (const auto& name : schema.covariates) x_cols.push_back(require(name));
    }

    std::vector<ObservedSample> rows;
    std::optional<std::vector<OracleFields>> oracle;
    if (with_oracle) oracle.emplace();
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split(line, ',');
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) + " fields, header has " +
                                 std::to_string(header.size()),
                             row, "");
        ObservedSample s;
        s.x.reserve(x_cols.size());
        for (auto j : x_cols) s.x.push_back(detail::parse_cell(cells[j], row, header[j]));
        const double t = detail::parse_cell(cells[t_col], row, header[t_col]);
        if (t != 0.0 && t != 1.0)
            throw ParseError("non-binary treatment value '" + cells[t_col] + "' at row " + std::to_string(row), row,
                             header[t_col]);
        s.t = static_cast<int>(t);
        s.y = detail::parse_cell(cells[y_col], row, header[y_col]);
        if (with_oracle) {
            oracle->push_back({detail::parse_cell(cells[y1_col], row, header[y1_col]),
                               detail::parse_cell(cells[y0_col], row, header[y0_col]),
                               detail::parse_cell(cells[ps_col], row, header[ps_col])});
        }
        rows.push_back(std::move(s));
        ++row;
    }
    return CausalDataset(x_cols.size(), std::move(rows), std::move(oracle), schema.consistency_tolerance);
}

/// Reads a dataset from `path`. d equals the number of covariate columns; the
/// oracle is populated iff all oracle columns are mapped.
inline CausalDataset ingest_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return read_csv(in, schema);
}

/// Header x1..xd,t,y[,y1,y0,ps]; floats with 17 significant digits.
inline void write_csv(std::ostream& out, const CausalDataset& ds) {
    for (std::size_t j = 0; j < ds.dim(); ++j) out << 'x' << (j + 1) << ',';
    out << "t,y";
    if (ds.has_oracle()) out << ",y1,y0,ps";
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds[i];
        for (double v : s.x) out << detail::format_float(v) << ',';
        out << s.t << ',' << detail::format_float(s.y);
        if (ds.has_oracle()) {
            const auto& o = ds.oracle(i);
            out << ',' << detail::format_float(o.y1) << ',' << detail::format_float(o.y0) << ','
                << detail::format_float(o.true_propensity);
        }
        out << '\n';
    }
}

inline void export_csv(const std::string& path, const CausalDataset& ds) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    write_csv(out, ds);
}

}  // namespace causalcert
