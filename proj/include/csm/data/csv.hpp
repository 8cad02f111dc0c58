#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "csm/core/types.hpp"

namespace csm {

/// Headerless comma-separated rows, 17 significant digits.
void write_matrix_csv(const std::filesystem::path& path, const Batch& data);
Batch read_matrix_csv(const std::filesystem::path& path);

/// Headered table; cells are written as given.
void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);

/// Shortest form that reads back to the same double.
std::string format_double(double v);

}  // namespace csm
