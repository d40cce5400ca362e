#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "dafm/estimator.hpp"

namespace dafm {

/// Writes a fit as a directory:
///   F.csv          T x r, header f1..fr
///   Lambda_k.csv   N x r for k = 1..K
///   meta           key = value lines (see below)
/// meta keys: format, T, N, r, K, levels, weights, k_star, converged,
/// iterations, trace, normalization_H, normalization_U, normalization_D.
/// Lists are comma separated; matrices are row-major with ';' between rows.
/// Every number is written with 17 significant digits so load_fit
/// reproduces the fit exactly.
void save_fit(const FactorFit& fit, const std::filesystem::path& dir);
FactorFit load_fit(const std::filesystem::path& dir);

/// Parses "key = value" lines; '#' starts a comment, blank lines are ignored.
/// Throws DataError on a line without '=' or a duplicated key.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& source);
std::map<std::string, std::string> load_key_values(const std::filesystem::path& path);

}  // namespace dafm
