// SPDX-License-Identifier: Apache-2.0
#include "reskmd/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string_view>

#include <Eigen/SparseLU>

#include "reskmd/error.hpp"

namespace reskmd {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view field) {
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    return std::nullopt;
  return value;
}

// Second derivatives of the natural cubic spline through (t, y).
VectorXd natural_moments(const VectorXd& t, const VectorXd& y) {
  const Index n = t.size();
  const VectorXd h = t.tail(n - 1) - t.head(n - 1);
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> entries;
  entries.reserve(3 * n);
  VectorXd rhs = VectorXd::Zero(n);

  entries.emplace_back(0, 0, 1.0);
  for (Index i = 1; i + 1 < n; ++i) {
    entries.emplace_back(i, i - 1, h(i - 1));
    entries.emplace_back(i, i, 2.0 * (h(i - 1) + h(i)));
    entries.emplace_back(i, i + 1, h(i));
    rhs(i) = 6.0 * ((y(i + 1) - y(i)) / h(i) - (y(i) - y(i - 1)) / h(i - 1));
  }
  entries.emplace_back(n - 1, n - 1, 1.0);

  Eigen::SparseMatrix<double> system(n, n);
  system.setFromTriplets(entries.begin(), entries.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(system);
  if (lu.info() != Eigen::Success)
    throw Error(ErrorKind::NumericalInconsistency, "spline system is singular");
  return lu.solve(rhs);
}

double eval_spline(const VectorXd& t, const VectorXd& y, const VectorXd& m, double at) {
  const Index n = t.size();
  auto it = std::upper_bound(t.data(), t.data() + n, at);
  Index i = std::clamp<Index>(static_cast<Index>(it - t.data()) - 1, 0, n - 2);
  const double h = t(i + 1) - t(i);
  const double a = t(i + 1) - at;
  const double b = at - t(i);
  return m(i) * a * a * a / (6.0 * h) + m(i + 1) * b * b * b / (6.0 * h) +
         (y(i) / h - m(i) * h / 6.0) * a + (y(i + 1) / h - m(i + 1) * h / 6.0) * b;
}

}  // namespace

RawSeries::RawSeries(VectorXd times, MatrixXd values, std::string meta)
    : times_(std::move(times)), values_(std::move(values)), meta_(std::move(meta)) {
  if (times_.size() != values_.rows())
    throw Error(ErrorKind::Shape, "times and values disagree on sample count");
  if (values_.rows() < 2)
    throw Error(ErrorKind::InsufficientData, "a series needs at least 2 samples");
  if (values_.cols() < 1) throw Error(ErrorKind::Shape, "a series needs at least 1 dimension");
  for (Index i = 1; i < times_.size(); ++i) {
    if (!(times_(i) > times_(i - 1)))
      throw Error(ErrorKind::Ordering,
                  "timestamps not strictly increasing at sample " + std::to_string(i));
  }
  if (!times_.allFinite() || !values_.allFinite())
    throw Error(ErrorKind::Parse, "series contains non-finite values");
}

bool RawSeries::is_uniform(double rel_tol) const {
  const Index n = times_.size();
  const double mean_step = (end_time() - start_time()) / static_cast<double>(n - 1);
  for (Index i = 1; i < n; ++i) {
    if (std::abs((times_(i) - times_(i - 1)) - mean_step) > rel_tol * std::abs(mean_step))
      return false;
  }
  return true;
}

RawSeries RawSeries::slice(Index first, Index count) const {
  if (first < 0 || count < 2 || first + count > length())
    throw Error(ErrorKind::InsufficientData, "slice out of range");
  return RawSeries(times_.segment(first, count), values_.middleRows(first, count), meta_);
}

SnapshotSet::SnapshotSet(MatrixXd x_rows, MatrixXd y_rows, VectorXd w)
    : x(std::move(x_rows)), y(std::move(y_rows)), weights(std::move(w)) {
  if (x.rows() != y.rows() || x.cols() != y.cols() || weights.size() != x.rows())
    throw Error(ErrorKind::Shape, "snapshot matrices and weights disagree in shape");
  if (x.rows() < 1) throw Error(ErrorKind::InsufficientData, "empty snapshot set");
  if ((weights.array() < 0.0).any())
    throw Error(ErrorKind::Configuration, "snapshot weights must be nonnegative");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw Error(ErrorKind::Configuration, "snapshot weights must sum to 1");
}

SnapshotSet::SnapshotSet(MatrixXd x_rows, MatrixXd y_rows)
    : SnapshotSet(x_rows, std::move(y_rows),
                  VectorXd::Constant(x_rows.rows(), 1.0 / static_cast<double>(x_rows.rows()))) {}

void DelayConfig::validate() const {
  if (d_hankel < 1) throw Error(ErrorKind::Configuration, "d_hankel must be >= 1");
  if (t_window <= d_hankel)
    throw Error(ErrorKind::Configuration, "t_window must exceed d_hankel");
  if (stride < 1) throw Error(ErrorKind::Configuration, "stride must be >= 1");
}

Index default_delay_depth(Index t_window) {
  return std::max<Index>(1, std::min<Index>(300, t_window / 2));
}

RawSeries load_csv(const std::filesystem::path& path, const ColumnSpec& columns) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());

  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  bool first_content_row = true;
  std::vector<int> value_cols = columns.value_columns;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (first_content_row && line_no == 1 && view.size() >= 3 &&
        view.substr(0, 3) == "\xEF\xBB\xBF")
      view.remove_prefix(3);
    auto fields = split_fields(view);

    if (first_content_row) {
      first_content_row = false;
      bool header = false;
      if (columns.has_header) {
        header = *columns.has_header;
      } else {
        header = std::any_of(fields.begin(), fields.end(),
                             [](std::string_view f) { return !parse_double(f); }) &&
                 std::none_of(fields.begin(), fields.end(), [](std::string_view f) {
                   return f == "NaN" || f == "nan" || f == "inf" || f == "-inf";
                 });
      }
      if (value_cols.empty()) {
        for (int c = 0; c < static_cast<int>(fields.size()); ++c)
          if (!columns.time_column || c != *columns.time_column) value_cols.push_back(c);
      }
      if (value_cols.empty())
        throw ParseError(line_no, "no value columns selected");
      if (header) continue;
    }

    auto read = [&](int col) {
      if (col < 0 || col >= static_cast<int>(fields.size()))
        throw ParseError(line_no, "missing column " + std::to_string(col));
      auto v = parse_double(fields[col]);
      if (!v) throw ParseError(line_no, "cannot parse '" + std::string(fields[col]) + "'");
      if (!std::isfinite(*v)) throw ParseError(line_no, "non-finite value");
      return *v;
    };

    std::vector<double> row;
    row.reserve(value_cols.size());
    for (int c : value_cols) row.push_back(read(c));
    double t = columns.time_column ? read(*columns.time_column)
                                   : static_cast<double>(rows.size());
    if (!times.empty() && !(t > times.back()))
      throw Error(ErrorKind::Ordering,
                  "row " + std::to_string(line_no) + ": time column not strictly increasing");
    times.push_back(t);
    rows.push_back(std::move(row));
  }

  if (rows.size() < 2)
    throw Error(ErrorKind::InsufficientData, path.string() + ": fewer than 2 data rows");
  VectorXd tv = Eigen::Map<VectorXd>(times.data(), static_cast<Index>(times.size()));
  MatrixXd values(static_cast<Index>(rows.size()), static_cast<Index>(value_cols.size()));
  for (Index i = 0; i < values.rows(); ++i)
    for (Index j = 0; j < values.cols(); ++j) values(i, j) = rows[i][j];
  return RawSeries(std::move(tv), std::move(values), path.filename().string());
}

void write_csv(const std::filesystem::path& path, const RawSeries& series) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "time";
  for (Index j = 0; j < series.dims(); ++j) out << ",x" << j;
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index i = 0; i < series.length(); ++i) {
    out << series.times()(i);
    for (Index j = 0; j < series.dims(); ++j) out << ',' << series.values()(i, j);
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

RawSeries spline_interpolate(const RawSeries& series, int factor) {
  if (factor < 1) throw Error(ErrorKind::Configuration, "interpolation factor must be >= 1");
  const Index n = series.length();
  if (n < 4) throw Error(ErrorKind::InsufficientData, "cubic spline needs at least 4 knots");
  if (factor == 1 && series.is_uniform()) return series;

  const Index out_n = (n - 1) * factor + 1;
  const double t0 = series.start_time();
  const double span = series.end_time() - t0;
  const bool uniform = series.is_uniform();
  const VectorXd& t = series.times();

  VectorXd grid(out_n);
  for (Index k = 0; k < out_n; ++k) grid(k) = t0 + span * static_cast<double>(k) / static_cast<double>(out_n - 1);
  grid(out_n - 1) = series.end_time();

  MatrixXd out(out_n, series.dims());
  for (Index j = 0; j < series.dims(); ++j) {
    const VectorXd y = series.values().col(j);
    const VectorXd m = natural_moments(t, y);
    for (Index k = 0; k < out_n; ++k) out(k, j) = eval_spline(t, y, m, grid(k));
  }
  if (uniform) {
    for (Index i = 0; i < n; ++i) {
      grid(i * factor) = t(i);
      out.row(i * factor) = series.values().row(i);
    }
  }
  return RawSeries(std::move(grid), std::move(out), series.meta());
}

SnapshotSet hankel_embed(const RawSeries& series, Index d_hankel) {
  if (d_hankel < 1) throw Error(ErrorKind::Configuration, "d_hankel must be >= 1");
  const Index n = series.length();
  if (n <= d_hankel)
    throw Error(ErrorKind::InsufficientData, "series too short for delay depth " +
                                                 std::to_string(d_hankel));
  if (!series.is_uniform())
    throw Error(ErrorKind::Configuration,
                "delay embedding needs uniform timestamps; resample with spline_interpolate");
  const Index dims = series.dims();
  const Index rows = n - d_hankel;
  MatrixXd x(rows, d_hankel * dims);
  MatrixXd y(rows, d_hankel * dims);
  const MatrixXd& v = series.values();
  for (Index i = 0; i < rows; ++i) {
    for (Index k = 0; k < d_hankel; ++k) {
      x.block(i, k * dims, 1, dims) = v.row(i + k);
      y.block(i, k * dims, 1, dims) = v.row(i + k + 1);
    }
  }
  return SnapshotSet(std::move(x), std::move(y));
}

std::vector<RawSeries> windows(const RawSeries& series, const DelayConfig& cfg) {
  if (cfg.t_window < 2 || cfg.stride < 1)
    throw Error(ErrorKind::Configuration, "window length must be >= 2 and stride >= 1");
  const Index n = series.length();
  if (n < cfg.t_window)
    throw Error(ErrorKind::InsufficientData, "series shorter than the window");
  std::vector<RawSeries> out;
  const Index count = (n - cfg.t_window) / cfg.stride + 1;
  out.reserve(static_cast<size_t>(count));
  for (Index w = 0; w < count; ++w) out.push_back(series.slice(w * cfg.stride, cfg.t_window));
  return out;
}

RawSeries no_detrend(const RawSeries& series) { return series; }

}  // namespace reskmd
