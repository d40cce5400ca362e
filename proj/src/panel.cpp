#include "dafm/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dafm/error.hpp"

namespace dafm {
namespace {

std::vector<std::string> index_labels(Eigen::Index n) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out.push_back(std::to_string(i + 1));
  return out;
}

void require_unique(const std::vector<std::string>& labels, const char* what) {
  std::set<std::string> seen(labels.begin(), labels.end());
  if (seen.size() != labels.size()) {
    throw DataError(std::string("duplicate ") + what + " label");
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

bool parse_number(std::string_view cell, double& out) {
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << content;
}

}  // namespace

Panel::Panel(Eigen::MatrixXd values, std::vector<std::string> time_labels,
             std::vector<std::string> series_ids)
    : values_(std::move(values)), time_labels_(std::move(time_labels)), series_ids_(std::move(series_ids)) {
  if (values_.rows() < 1 || values_.cols() < 1) throw DataError("panel must have T >= 1 and N >= 1");
  if (!values_.allFinite()) throw DataError("panel contains non-finite values");
  if (time_labels_.empty()) time_labels_ = index_labels(values_.rows());
  if (series_ids_.empty()) series_ids_ = index_labels(values_.cols());
  if (static_cast<Eigen::Index>(time_labels_.size()) != values_.rows()) {
    throw DataError("time label count does not match T");
  }
  if (static_cast<Eigen::Index>(series_ids_.size()) != values_.cols()) {
    throw DataError("series id count does not match N");
  }
  require_unique(time_labels_, "time");
  require_unique(series_ids_, "series");
}

Panel Panel::slice_rows(Eigen::Index begin, Eigen::Index count) const {
  if (begin < 0 || count < 1 || begin + count > periods()) throw InvalidArgument("row slice out of range");
  std::vector<std::string> labels(time_labels_.begin() + begin, time_labels_.begin() + begin + count);
  return Panel(values_.middleRows(begin, count), std::move(labels), series_ids_);
}

Panel parse_panel(std::string_view text, Orientation orientation, std::string_view source) {
  std::vector<std::string_view> lines;
  {
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      std::string_view line = text.substr(start, nl - start);
      if (!trim(line).empty()) lines.push_back(line);
      start = nl + 1;
    }
  }
  const std::string where(source);
  if (lines.empty()) throw DataError(where + ": empty file");
  if (lines.size() < 2) throw DataError(where + ": no data rows after header");

  const auto header = split_fields(lines[0]);
  const std::string first = lower(header[0]);
  const bool label_col = first == "time" || (orientation == Orientation::series_rows && first == "series");
  const std::size_t width = header.size();
  const std::size_t numeric_cols = label_col ? width - 1 : width;
  if (numeric_cols == 0) throw DataError(where + ": header has no data columns");

  std::vector<std::string> col_labels;
  for (std::size_t j = label_col ? 1 : 0; j < width; ++j) col_labels.emplace_back(header[j]);
  std::vector<std::string> row_labels;

  const std::size_t rows = lines.size() - 1;
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(numeric_cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const auto fields = split_fields(lines[r + 1]);
    if (fields.size() != width) {
      throw DataError(where + ": ragged row " + std::to_string(r + 2) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(width));
    }
    if (label_col) row_labels.emplace_back(fields[0]);
    for (std::size_t j = 0; j < numeric_cols; ++j) {
      const std::size_t col = label_col ? j + 1 : j;
      double v = 0.0;
      if (!parse_number(fields[col], v)) {
        throw DataError(where + ": non-numeric cell '" + std::string(fields[col]) + "' at row " +
                        std::to_string(r + 2) + ", column " + std::to_string(col + 1));
      }
      raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = v;
    }
  }

  if (orientation == Orientation::time_rows) {
    return Panel(std::move(raw), std::move(row_labels), std::move(col_labels));
  }
  return Panel(raw.transpose(), std::move(col_labels), std::move(row_labels));
}

Panel load_panel(const std::filesystem::path& path, Orientation orientation) {
  return parse_panel(read_file(path), orientation, path.string());
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  (void)ec;
  return std::string(buf, ptr);
}

std::string format_panel(const Panel& panel) {
  std::string out = "time";
  for (const auto& id : panel.series_ids()) out += "," + id;
  out += '\n';
  const auto& x = panel.values();
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    out += panel.time_labels()[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      out += ',';
      out += format_double(x(t, i));
    }
    out += '\n';
  }
  return out;
}

void save_panel(const Panel& panel, const std::filesystem::path& path) { write_file(path, format_panel(panel)); }

void save_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header,
                     const std::filesystem::path& path) {
  if (static_cast<Eigen::Index>(header.size()) != m.cols()) throw InvalidArgument("header width mismatch");
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
  out += '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  write_file(path, out);
}

Eigen::MatrixXd load_matrix_csv(const std::filesystem::path& path) {
  return load_panel(path, Orientation::time_rows).values();
}

TransformCode parse_transform_code(std::string_view name) {
  const std::string n = lower(name);
  if (n == "level") return TransformCode::level;
  if (n == "diff") return TransformCode::diff;
  if (n == "diff2") return TransformCode::diff2;
  if (n == "log") return TransformCode::log;
  if (n == "log-diff") return TransformCode::log_diff;
  if (n == "log-diff2") return TransformCode::log_diff2;
  if (n == "pct-diff") return TransformCode::pct_diff;
  throw InvalidArgument("unknown transform code: " + std::string(name));
}

std::string_view to_string(TransformCode code) {
  switch (code) {
    case TransformCode::level: return "level";
    case TransformCode::diff: return "diff";
    case TransformCode::diff2: return "diff2";
    case TransformCode::log: return "log";
    case TransformCode::log_diff: return "log-diff";
    case TransformCode::log_diff2: return "log-diff2";
    case TransformCode::pct_diff: return "pct-diff";
  }
  return "level";
}

namespace {

Eigen::VectorXd difference(const Eigen::VectorXd& x) {
  if (x.size() < 2) throw DataError("differencing needs at least two observations");
  return x.tail(x.size() - 1) - x.head(x.size() - 1);
}

Eigen::VectorXd log_of(const Eigen::VectorXd& x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) > 0.0)) {
      throw DataError("log transform requires positive values (index " + std::to_string(i) + ")");
    }
  }
  return x.array().log();
}

}  // namespace

Eigen::VectorXd apply_transform(const Eigen::VectorXd& series, TransformCode code) {
  switch (code) {
    case TransformCode::level: return series;
    case TransformCode::diff: return difference(series);
    case TransformCode::diff2: return difference(difference(series));
    case TransformCode::log: return log_of(series);
    case TransformCode::log_diff: return difference(log_of(series));
    case TransformCode::log_diff2: return difference(difference(log_of(series)));
    case TransformCode::pct_diff: {
      if (series.size() < 2) throw DataError("differencing needs at least two observations");
      Eigen::VectorXd out(series.size() - 1);
      for (Eigen::Index t = 1; t < series.size(); ++t) {
        if (series(t - 1) == 0.0) throw DataError("pct-diff undefined after a zero value");
        out(t - 1) = series(t) / series(t - 1) - 1.0;
      }
      return out;
    }
  }
  return series;
}

Eigen::VectorXd integrate_diff(const Eigen::VectorXd& diffs, double initial) {
  Eigen::VectorXd out(diffs.size() + 1);
  out(0) = initial;
  for (Eigen::Index t = 0; t < diffs.size(); ++t) out(t + 1) = out(t) + diffs(t);
  return out;
}

Standardized standardize(const Panel& panel) {
  const auto& x = panel.values();
  const Eigen::Index T = x.rows();
  if (T < 2) throw DataError("standardize needs T >= 2");
  ColumnScaling scaling;
  scaling.mean = x.colwise().mean().transpose();
  scaling.sd.resize(x.cols());
  Eigen::MatrixXd z(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const Eigen::VectorXd centered = x.col(i).array() - scaling.mean(i);
    const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(T - 1));
    if (!(sd > 0.0)) throw DataError("series '" + panel.series_ids()[static_cast<std::size_t>(i)] + "' is constant");
    scaling.sd(i) = sd;
    z.col(i) = centered / sd;
  }
  return {Panel(std::move(z), panel.time_labels(), panel.series_ids()), std::move(scaling)};
}

Panel unstandardize(const Panel& panel, const ColumnScaling& scaling) {
  if (scaling.mean.size() != panel.series() || scaling.sd.size() != panel.series()) {
    throw InvalidArgument("scaling does not match panel width");
  }
  Eigen::MatrixXd x = panel.values();
  for (Eigen::Index i = 0; i < x.cols(); ++i) x.col(i) = x.col(i).array() * scaling.sd(i) + scaling.mean(i);
  return Panel(std::move(x), panel.time_labels(), panel.series_ids());
}

}  // namespace dafm
