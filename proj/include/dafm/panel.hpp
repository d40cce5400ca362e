#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace dafm {

/// A complete T x N panel in time-rows orientation: row t is one time point,
/// column i is one series. Entries are always finite.
class Panel {
 public:
  Panel() = default;

  /// Validates finiteness, non-empty shape and label uniqueness. Empty label
  /// vectors are replaced by 1-based index labels.
  Panel(Eigen::MatrixXd values, std::vector<std::string> time_labels = {},
        std::vector<std::string> series_ids = {});

  const Eigen::MatrixXd& values() const { return values_; }
  const std::vector<std::string>& time_labels() const { return time_labels_; }
  const std::vector<std::string>& series_ids() const { return series_ids_; }

  Eigen::Index periods() const { return values_.rows(); }  // T
  Eigen::Index series() const { return values_.cols(); }   // N

  /// Rows [begin, begin + count) as a new panel.
  Panel slice_rows(Eigen::Index begin, Eigen::Index count) const;

  /// Exact equality of shape, values and labels.
  friend bool operator==(const Panel& a, const Panel& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           a.values_ == b.values_ && a.time_labels_ == b.time_labels_ && a.series_ids_ == b.series_ids_;
  }

 private:
  Eigen::MatrixXd values_;
  std::vector<std::string> time_labels_;
  std::vector<std::string> series_ids_;
};

enum class Orientation { time_rows, series_rows };

/// Reads a comma-separated file with one header row. In time-rows files the
/// header holds series ids; in series-rows files it holds time labels. A
/// leading label column is recognised by a header cell of "time" (or
/// "series" for series-rows files). Errors carry the 1-based row/column of
/// the offending cell.
Panel load_panel(const std::filesystem::path& path, Orientation orientation = Orientation::time_rows);

/// Parses CSV text; `source` is only used in error messages.
Panel parse_panel(std::string_view text, Orientation orientation = Orientation::time_rows,
                  std::string_view source = "<memory>");

/// Writes the panel in time-rows orientation with a leading "time" column.
/// Values use 17 significant digits, so load_panel(save_panel(p)) == p.
void save_panel(const Panel& panel, const std::filesystem::path& path);
std::string format_panel(const Panel& panel);

/// Writes a plain numeric matrix with the given header (no label column).
void save_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& header,
                     const std::filesystem::path& path);
Eigen::MatrixXd load_matrix_csv(const std::filesystem::path& path);

/// Shortest representation that round-trips: 17 significant digits.
std::string format_double(double v);

enum class TransformCode { level, diff, diff2, log, log_diff, log_diff2, pct_diff };

TransformCode parse_transform_code(std::string_view name);
std::string_view to_string(TransformCode code);

/// Applies a stationarity transform. Differencing codes shorten the series by
/// their order; log codes require strictly positive input.
Eigen::VectorXd apply_transform(const Eigen::VectorXd& series, TransformCode code);

/// Inverse of first differencing: cumulative sum anchored at `initial`.
Eigen::VectorXd integrate_diff(const Eigen::VectorXd& diffs, double initial);

struct ColumnScaling {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;  // sample sd, divisor T - 1
};

struct Standardized {
  Panel panel;
  ColumnScaling scaling;
};

/// Centers each series and scales it to unit sample sd. Throws DataError on a
/// constant series or T < 2.
Standardized standardize(const Panel& panel);
Panel unstandardize(const Panel& panel, const ColumnScaling& scaling);

}  // namespace dafm
