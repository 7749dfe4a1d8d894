#include "ebmgeo/io/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ebmgeo/common.hpp"

namespace ebmgeo::io {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot open '" + path + "' for writing");
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (j) f << ',';
        f << columns[j];
    }
    f << '\n';
    for (const auto& row : rows) {
        if (row.size() != columns.size())
            throw ConfigError("csv row width " + std::to_string(row.size()) +
                              " != header width " + std::to_string(columns.size()));
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) f << ',';
            f << row[j];
        }
        f << '\n';
    }
    if (!f) throw ConfigError("short write to '" + path + "'");
}

Csv read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw MissingArtifactError("csv '" + path + "' not found");
    Csv out;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        if (first) {
            out.columns = std::move(cells);
            first = false;
        } else {
            out.rows.push_back(std::move(cells));
        }
    }
    if (first) throw MissingArtifactError("csv '" + path + "' is empty");
    return out;
}

void write_matrix_csv(const std::string& path, const std::vector<std::string>& columns,
                      const ad::Matrix& rows) {
    std::vector<std::vector<std::string>> cells(static_cast<std::size_t>(rows.rows()));
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        auto& r = cells[static_cast<std::size_t>(i)];
        r.reserve(static_cast<std::size_t>(rows.cols()));
        for (Eigen::Index j = 0; j < rows.cols(); ++j) r.push_back(fmt_g17(rows(i, j)));
    }
    write_csv(path, columns, cells);
}

std::pair<std::vector<std::string>, ad::Matrix> read_matrix_csv(const std::string& path) {
    Csv csv = read_csv(path);
    ad::Matrix m(static_cast<Eigen::Index>(csv.rows.size()),
                 static_cast<Eigen::Index>(csv.columns.size()));
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        if (csv.rows[i].size() != csv.columns.size())
            throw ConfigError("'" + path + "' row " + std::to_string(i + 2) +
                              " has " + std::to_string(csv.rows[i].size()) +
                              " cells, header has " + std::to_string(csv.columns.size()));
        for (std::size_t j = 0; j < csv.columns.size(); ++j) {
            char* end = nullptr;
            const std::string& cell = csv.rows[i][j];
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || (end && *end != '\0'))
                throw ConfigError("'" + path + "' row " + std::to_string(i + 2) +
                                  " column '" + csv.columns[j] + "': non-numeric cell '" +
                                  cell + "'");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return {std::move(csv.columns), std::move(m)};
}

}  // namespace ebmgeo::io
