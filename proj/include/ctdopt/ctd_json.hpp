#pragma once

// CTD interchange format:
//
//   {"dims": d, "modes": [M_1, ...], "svalues": [...],
//    "factors": [[M_1 * r column-major reals], ...]}
//
// Reals are written with 17 significant digits, so a write/read cycle is
// bit-exact. Multi-indices in any serialized output are 1-based.

#include "ctdopt/ctd.hpp"

#include <filesystem>
#include <string>

#include <json.hpp>

namespace ctdopt {

/// `x` printed as %.17g.
std::string format_real(double x);

std::string ctd_to_json_string(const CTD& u);
CTD ctd_from_json(const nlohmann::json& j);
CTD ctd_from_json_string(const std::string& text);

void write_ctd_file(const std::filesystem::path& path, const CTD& u);
CTD read_ctd_file(const std::filesystem::path& path);

nlohmann::json multi_index_to_json(const MultiIndex& i);
MultiIndex multi_index_from_json(const nlohmann::json& j);

}  // namespace ctdopt
