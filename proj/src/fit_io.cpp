#include "dafm/fit_io.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "dafm/error.hpp"
#include "dafm/panel.hpp"

namespace dafm {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, sep)) out.push_back(trim(cell));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

std::string matrix_text(const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += ';';
    std::vector<double> row(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    out += join(row);
  }
  return out;
}

double parse_number(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw DataError("meta: key '" + key + "' holds a non-numeric value '" + text + "'");
  }
}

std::vector<double> parse_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  if (text.empty()) return out;
  for (const auto& cell : split(text, ',')) out.push_back(parse_number(cell, key));
  return out;
}

Eigen::MatrixXd parse_matrix(const std::string& text, const std::string& key) {
  if (text.empty()) return {};
  const auto rows = split(text, ';');
  std::vector<std::vector<double>> cells;
  for (const auto& row : rows) cells.push_back(parse_list(row, key));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(cells.front().size()));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].size() != cells.front().size()) throw DataError("meta: key '" + key + "' holds a ragged matrix");
    for (std::size_t j = 0; j < cells[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cells[i][j];
    }
  }
  return m;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw DataError("meta: missing key '" + key + "'");
  return it->second;
}

long parse_count(const std::map<std::string, std::string>& kv, const std::string& key) {
  const double v = parse_number(require(kv, key), key);
  if (v < 0 || v != static_cast<double>(static_cast<long>(v))) {
    throw DataError("meta: key '" + key + "' must be a non-negative integer");
  }
  return static_cast<long>(v);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& source) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second) {
      throw DataError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

std::map<std::string, std::string> load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str(), path.string());
}

void save_fit(const FactorFit& fit, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Eigen::Index r = fit.F.cols();
  std::vector<std::string> header;
  for (Eigen::Index j = 0; j < r; ++j) header.push_back("f" + std::to_string(j + 1));
  save_matrix_csv(fit.F, header, dir / "F.csv");
  for (std::size_t k = 0; k < fit.loadings.size(); ++k) {
    save_matrix_csv(fit.loadings[k], header, dir / ("Lambda_" + std::to_string(k + 1) + ".csv"));
  }
  std::ofstream meta(dir / "meta");
  if (!meta) throw DataError("cannot write " + (dir / "meta").string());
  meta << "format = dafm-fit-1\n";
  meta << "T = " << fit.F.rows() << "\n";
  meta << "N = " << (fit.loadings.empty() ? 0 : fit.loadings.front().rows()) << "\n";
  meta << "r = " << r << "\n";
  meta << "K = " << fit.grid.size() << "\n";
  meta << "levels = " << join(fit.grid.levels()) << "\n";
  meta << "weights = " << join(fit.grid.weights()) << "\n";
  meta << "k_star = " << fit.normalization.k_star << "\n";
  meta << "converged = " << (fit.converged ? "true" : "false") << "\n";
  meta << "iterations = " << fit.objective_trace.size() << "\n";
  meta << "trace = " << join(fit.objective_trace) << "\n";
  meta << "normalization_H = " << matrix_text(fit.normalization.H) << "\n";
  meta << "normalization_U = " << matrix_text(fit.normalization.U) << "\n";
  meta << "normalization_D = "
       << join(std::vector<double>(fit.normalization.D.data(), fit.normalization.D.data() + fit.normalization.D.size()))
       << "\n";
  if (!meta) throw DataError("failed writing " + (dir / "meta").string());
}

FactorFit load_fit(const std::filesystem::path& dir) {
  const auto kv = load_key_values(dir / "meta");
  if (require(kv, "format") != "dafm-fit-1") throw DataError("meta: unsupported format '" + kv.at("format") + "'");
  const long T = parse_count(kv, "T");
  const long N = parse_count(kv, "N");
  const long r = parse_count(kv, "r");
  const long K = parse_count(kv, "K");

  FactorFit fit;
  fit.grid = QuantileGrid(parse_list(require(kv, "levels"), "levels"), parse_list(require(kv, "weights"), "weights"));
  if (static_cast<long>(fit.grid.size()) != K) throw DataError("meta: K does not match the number of levels");
  fit.F = load_matrix_csv(dir / "F.csv");
  if (fit.F.rows() != T || fit.F.cols() != r) throw DataError("F.csv does not match T x r from meta");
  for (long k = 1; k <= K; ++k) {
    const auto path = dir / ("Lambda_" + std::to_string(k) + ".csv");
    Eigen::MatrixXd l = load_matrix_csv(path);
    if (l.rows() != N || l.cols() != r) throw DataError(path.string() + " does not match N x r from meta");
    fit.loadings.push_back(std::move(l));
  }
  const std::string& conv = require(kv, "converged");
  if (conv != "true" && conv != "false") throw DataError("meta: converged must be true or false");
  fit.converged = conv == "true";
  fit.objective_trace = parse_list(require(kv, "trace"), "trace");
  if (static_cast<long>(fit.objective_trace.size()) != parse_count(kv, "iterations")) {
    throw DataError("meta: trace length does not match iterations");
  }
  fit.normalization.k_star = static_cast<std::size_t>(parse_count(kv, "k_star"));
  fit.normalization.H = parse_matrix(require(kv, "normalization_H"), "normalization_H");
  fit.normalization.U = parse_matrix(require(kv, "normalization_U"), "normalization_U");
  const auto d = parse_list(require(kv, "normalization_D"), "normalization_D");
  fit.normalization.D = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
  return fit;
}

}  // namespace dafm
