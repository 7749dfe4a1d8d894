// CSV reading/writing. Doubles are rendered with "%.17g" so files are
// byte-stable and round-trip exactly.
#pragma once

#include <string>
#include <vector>

#include "ebmgeo/tensor.hpp"

namespace ebmgeo::io {

std::string fmt_g17(double v);

struct Csv {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::string& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<std::string>>& rows);
Csv read_csv(const std::string& path);

// Numeric conveniences.
void write_matrix_csv(const std::string& path, const std::vector<std::string>& columns,
                      const ad::Matrix& rows);
std::pair<std::vector<std::string>, ad::Matrix> read_matrix_csv(const std::string& path);

}  // namespace ebmgeo::io
