// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "reskmd/types.hpp"

namespace reskmd {

/// Sampled multivariate series: `values` is T x N (one row per sample).
/// Construction validates T >= 2, strictly increasing times and finite values.
class RawSeries {
 public:
  RawSeries(VectorXd times, MatrixXd values, std::string meta = {});

  const VectorXd& times() const { return times_; }
  const MatrixXd& values() const { return values_; }
  const std::string& meta() const { return meta_; }

  Index length() const { return values_.rows(); }
  Index dims() const { return values_.cols(); }
  double start_time() const { return times_(0); }
  double end_time() const { return times_(times_.size() - 1); }

  /// True when all sample spacings agree with the mean spacing to `rel_tol`.
  bool is_uniform(double rel_tol = 1e-9) const;

  /// Contiguous sub-series [first, first + count).
  RawSeries slice(Index first, Index count) const;

 private:
  VectorXd times_;
  MatrixXd values_;
  std::string meta_;
};

/// Snapshot pairs: row i of `y` is the one-step successor of row i of `x`.
struct SnapshotSet {
  MatrixXd x;
  MatrixXd y;
  VectorXd weights;

  SnapshotSet(MatrixXd x_rows, MatrixXd y_rows, VectorXd w);
  /// Uniform weights 1/T.
  SnapshotSet(MatrixXd x_rows, MatrixXd y_rows);

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }
};

struct DelayConfig {
  Index d_hankel = 1;
  Index t_window = 2;
  Index stride = 1;

  void validate() const;
};

/// Default delay depth for a window: min(300, t_window / 2).
Index default_delay_depth(Index t_window);

struct ColumnSpec {
  /// Column holding timestamps; nullopt means implicit unit spacing 0,1,2,...
  std::optional<int> time_column;
  /// State columns; empty selects every non-time column.
  std::vector<int> value_columns;
  /// nullopt detects a header from a non-numeric first row.
  std::optional<bool> has_header;
};

RawSeries load_csv(const std::filesystem::path& path, const ColumnSpec& columns = {});

/// Writes `time,x0,x1,...` with a header row and round-trip precision.
void write_csv(const std::filesystem::path& path, const RawSeries& series);

/// Natural cubic spline onto a uniform grid of (T-1)*factor+1 samples over
/// the original time range. Exact on linear data; knots of a uniform input
/// are reproduced bit-exactly.
RawSeries spline_interpolate(const RawSeries& series, int factor);

/// Delay embedding: X row i = (x_i, ..., x_{i+d-1}), Y row i = X row i+1.
/// Requires uniform timestamps.
SnapshotSet hankel_embed(const RawSeries& series, Index d_hankel);

/// Sliding windows of cfg.t_window samples advanced by cfg.stride. Each
/// window's end_time() is its signal timestamp.
std::vector<RawSeries> windows(const RawSeries& series, const DelayConfig& cfg);

/// Preprocessing applied to each window before indicators see it.
using Detrender = std::function<RawSeries(const RawSeries&)>;

/// No-op detrender; the default.
RawSeries no_detrend(const RawSeries& series);

}  // namespace reskmd
