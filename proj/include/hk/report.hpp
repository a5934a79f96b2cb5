#pragma once

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace hk {

using json = nlohmann::ordered_json;

/// Outcome of one verification: a per-point table plus a summary.
struct CheckReport {
    std::string operation;
    json params = json::object();
    std::vector<double> grid;
    std::vector<double> values;
    std::vector<double> residuals;
    double max_residual = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    json extra = json::object();

    void add(double x, double value, double residual) {
        grid.push_back(x);
        values.push_back(value);
        residuals.push_back(residual);
        if (!std::isfinite(residual)) max_residual = residual;
        else if (std::isfinite(max_residual)) max_residual = std::max(max_residual, residual);
    }

    void finish() { pass = std::isfinite(max_residual) && max_residual < tolerance; }

    json to_json() const {
        json j;
        j["operation"] = operation;
        j["params"] = params;
        j["grid"] = grid;
        j["max_residual"] = max_residual;
        j["tolerance"] = tolerance;
        j["pass"] = pass;
        json table = json::array();
        for (std::size_t i = 0; i < grid.size(); ++i)
            table.push_back({{"x", grid[i]}, {"value", values[i]}, {"residual", residuals[i]}});
        j["table"] = table;
        if (!extra.empty()) j["extra"] = extra;
        return j;
    }
};

/// Sweep report: a table with named columns plus summary statistics.
struct BoundReport {
    std::string operation;
    json params = json::object();
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    json summary = json::object();
    bool pass = false;
    std::string note;

    void add_row(std::vector<double> row) { rows.push_back(std::move(row)); }

    json to_json() const {
        json j;
        j["operation"] = operation;
        j["params"] = params;
        j["pass"] = pass;
        j["summary"] = summary;
        if (!note.empty()) j["note"] = note;
        j["columns"] = columns;
        j["rows"] = rows;
        return j;
    }

    void write_csv(std::ostream& os) const {
        for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
        os << "\n";
        char buf[40];
        for (const auto& r : rows) {
            for (std::size_t c = 0; c < r.size(); ++c) {
                std::snprintf(buf, sizeof buf, "%.10g", r[c]);
                os << (c ? "," : "") << buf;
            }
            os << "\n";
        }
    }
};

} // namespace hk
