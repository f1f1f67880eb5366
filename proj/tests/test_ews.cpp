#include <algorithm>
#include <cmath>
#include <numeric>

#include "reskmd/dynamics.hpp"
#include "reskmd/ews.hpp"
#include "test_util.hpp"

using namespace reskmd;

namespace {

RawSeries indexed(const MatrixXd& values) {
  return RawSeries(VectorXd::LinSpaced(values.rows(), 0.0, static_cast<double>(values.rows() - 1)),
                   values);
}

VectorXd ar1(double lambda, double sigma, Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, sigma);
  VectorXd x(n);
  x(0) = eps(rng) / std::sqrt(1.0 - lambda * lambda);
  for (Index t = 1; t < n; ++t) x(t) = lambda * x(t - 1) + eps(rng);
  return x;
}

// Kendall tau-b from tie-group counts: (nc - nd) / sqrt((n0 - n1)(n0 - n2)).
double tau_b_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double n0 = n * (n - 1) / 2;
  auto tie_pairs = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double pairs = 0;
    for (size_t i = 0; i < v.size();) {
      size_t j = i;
      while (j < v.size() && v[j] == v[i]) ++j;
      const double k = static_cast<double>(j - i);
      pairs += k * (k - 1) / 2;
      i = j;
    }
    return pairs;
  };
  double s = 0;
  for (size_t i = 0; i < x.size(); ++i)
    for (size_t j = i + 1; j < x.size(); ++j) {
      const double sx = (x[i] < x[j]) - (x[i] > x[j]);
      const double sy = (y[i] < y[j]) - (y[i] > y[j]);
      s += sx * sy;
    }
  return s / std::sqrt((n0 - tie_pairs(x)) * (n0 - tie_pairs(y)));
}

EwsSeries trace(const std::vector<double>& values) {
  EwsSeries s;
  s.indicator = "test";
  s.values = values;
  for (size_t i = 0; i < values.size(); ++i) s.times.push_back(static_cast<double>(i));
  return s;
}

}  // namespace

TEST_SUITE("ews") {

TEST_CASE("variance_ews") {
  CHECK(variance_ews(indexed(VectorXd::Constant(10, 3.0))) == 0.0);
  CHECK(variance_ews(indexed((VectorXd(2) << 0.0, 2.0).finished())) == doctest::Approx(2.0).epsilon(1e-15));
  const double v = variance_ews(indexed(ar1(0.9, 0.1, 100000, 31)));
  CHECK(std::abs(v - 0.01 / 0.19) < 0.05 * 0.01 / 0.19);
  const VectorXd base = ar1(0.5, 1.0, 200, 32);
  CHECK(variance_ews(indexed(VectorXd(3.0 * base.array() + 7.0))) ==
        doctest::Approx(9.0 * variance_ews(indexed(base))).epsilon(1e-12));
  MatrixXd two(4, 2);
  two << 0, 0, 2, 0, 0, 4, 2, 4;
  // Per-dimension variances 4/3 and 16/3.
  CHECK(variance_ews(indexed(two)) == doctest::Approx(10.0 / 3.0));
  CHECK_ERROR_KIND(variance_ews(RawSeries(VectorXd::Zero(1), MatrixXd::Zero(1, 1))),
                   ErrorKind::InsufficientData);
}

TEST_CASE("lag1_autocorr") {
  VectorXd alt(50);
  for (Index i = 0; i < 50; ++i) alt(i) = i % 2 ? -1.0 : 1.0;
  CHECK(std::abs(lag1_autocorr(indexed(alt)) + 1.0) < 1e-12);
  CHECK(std::abs(lag1_autocorr(indexed(ar1(0.9, 0.1, 100000, 33))) - 0.9) < 0.01);
  std::mt19937_64 rng(34);
  const VectorXd noise = testutil::gaussian_matrix(100000, 1, rng);
  CHECK(std::abs(lag1_autocorr(indexed(noise))) < 0.01);
  const VectorXd base = ar1(0.7, 1.0, 300, 35);
  CHECK(std::abs(lag1_autocorr(indexed(VectorXd(2.5 * base.array() - 4.0))) -
                 lag1_autocorr(indexed(base))) < 1e-10);
  CHECK_ERROR_KIND(lag1_autocorr(indexed(VectorXd::Constant(10, 1.0))), ErrorKind::DegenerateWindow);
  CHECK_ERROR_KIND(lag1_autocorr(indexed(VectorXd::Ones(2))), ErrorKind::InsufficientData);
}

TEST_CASE("dmd_max_eig") {
  VectorXd geo(60);
  for (Index t = 0; t < 60; ++t) geo(t) = std::pow(0.9, static_cast<double>(t));
  CHECK(std::abs(dmd_max_eig(indexed(geo), 1, RankPolicy{}) - 0.9) < 1e-6);
  VectorXd osc(60);
  for (Index t = 0; t < 60; ++t) osc(t) = std::pow(0.95, static_cast<double>(t)) * std::cos(0.4 * t);
  CHECK(std::abs(dmd_max_eig(indexed(osc), 2, RankPolicy{}) - 0.95) < 1e-6);
  CHECK_ERROR_KIND(dmd_max_eig(indexed(geo.head(5)), 4, RankPolicy{}), ErrorKind::InsufficientData);

  // Along one ramp run the fluctuation decay slows toward the fold. Windows
  // are mean-removed: the equilibrium offset otherwise contributes a
  // lambda ~ 1 mode that dominates both ends.
  SimConfig cfg;
  cfg.sigma = 0.01;
  cfg.seed = 36;
  const auto run = make_ensemble(saddle_node(), RampSchedule{1.0, -0.005, 200.0, std::nullopt}, {-0.005}, 1, cfg);
  const RawSeries& s = run.front().pre_tipping;
  auto max_eig_from = [&](Index start) {
    MatrixXd v = s.values().middleRows(start, 400);
    v.rowwise() -= v.colwise().mean();
    return dmd_max_eig(RawSeries(s.times().segment(start, 400), v), 1, RankPolicy{});
  };
  const double far = max_eig_from(0);
  const double near = max_eig_from(s.length() - 400);
  CHECK(far < 1.0);
  CHECK(near > far);
}

TEST_CASE("reskmd_exact_pipeline on linear and AR(1) data") {
  // Noise-free data from a stable 2x2 rotation-contraction.
  MatrixXd lin(400, 2);
  VectorXd x(2);
  x << 1.0, 0.0;
  for (Index t = 0; t < 400; ++t) {
    lin.row(t) = x.transpose();
    x = 0.99 * (MatrixXd(2, 2) << std::cos(0.1), -std::sin(0.1), std::sin(0.1), std::cos(0.1)).finished() * x;
  }
  const DelayConfig cfg{2, 100, 20};
  const EwsSeries flat = reskmd_exact_pipeline(indexed(lin), cfg, RankPolicy{});
  REQUIRE(flat.size() == 16);
  CHECK(flat.gaps == 0);
  for (double v : flat.values) CHECK(v < 1e-8);
  CHECK(flat.times.front() == 99.0);
  CHECK(flat.times.back() == 399.0);

  const EwsSeries ar = reskmd_exact_pipeline(indexed(ar1(0.9, 0.1, 200000, 37)),
                                             DelayConfig{1, 50000, 50000}, RankPolicy{});
  REQUIRE(ar.size() == 4);
  for (double v : ar.values) CHECK(std::abs(v - 0.19) < 0.05 * 0.19);
}

TEST_CASE("reskmd_exact_pipeline is rotation invariant") {
  std::mt19937_64 rng(38);
  MatrixXd data(300, 3);
  for (Index j = 0; j < 3; ++j) data.col(j) = ar1(0.6 + 0.1 * j, 1.0, 300, 39 + j);
  const Eigen::HouseholderQR<MatrixXd> qr(testutil::gaussian_matrix(3, 3, rng));
  const MatrixXd q = qr.householderQ();
  const DelayConfig cfg{5, 120, 30};
  const EwsSeries a = reskmd_exact_pipeline(indexed(data), cfg, RankPolicy{});
  const EwsSeries b = reskmd_exact_pipeline(indexed(MatrixXd(data * q.transpose())), cfg, RankPolicy{});
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.values[i] - b.values[i]) < 1e-8);
}

TEST_CASE("reskmd_kernel_pipeline") {
  VectorXd data = ar1(0.8, 1.0, 240, 40);
  const DelayConfig cfg{3, 80, 40};
  KernelSpec linear{KernelKind::Polynomial, 1.0, 1, 0.0};
  const EwsSeries k = reskmd_kernel_pipeline(indexed(data), cfg, linear, RankPolicy::fixed_rank(3));
  const EwsSeries e = reskmd_exact_pipeline(indexed(data), cfg, RankPolicy::fixed_rank(3));
  REQUIRE(k.size() == e.size());
  for (size_t i = 0; i < k.size(); ++i) CHECK(std::abs(k.values[i] - e.values[i]) < 1e-6);

  for (double gamma : {0.01, 0.001}) {
    const EwsSeries r = reskmd_kernel_pipeline(indexed(data), cfg, KernelSpec{KernelKind::Rbf, gamma},
                                               RankPolicy{});
    CHECK(r.size() == e.size());
    CHECK(r.indicator == "reskmd_kernel:rbf," + std::string(gamma == 0.01 ? "0.01" : "0.001"));
    for (double v : r.values) CHECK(v >= 0.0);
  }

  // Constant data: the constant function is an exact eigenfunction.
  const EwsSeries frozen = reskmd_kernel_pipeline(indexed(VectorXd::Constant(120, 2.0)),
                                                  DelayConfig{2, 60, 20}, KernelSpec{}, RankPolicy{});
  REQUIRE(frozen.size() == 4);
  for (double v : frozen.values) CHECK(v < 1e-10);
}

TEST_CASE("compute_indicator skips degenerate windows") {
  VectorXd data = VectorXd::Zero(200);
  data.tail(100) = ar1(0.5, 1.0, 100, 41);
  PipelineOptions opt{DelayConfig{2, 50, 50}, RankPolicy{}};
  const EwsSeries lag = compute_indicator(indexed(data), Indicator::parse("lag1_ac"), opt);
  CHECK(lag.gaps == 2);
  CHECK(lag.size() == 2);
  const EwsSeries exact = compute_indicator(indexed(data), Indicator::parse("reskmd_exact"), opt);
  CHECK(exact.gaps == 2);
  CHECK_NOTHROW(exact.validate());
  PipelineOptions bad{DelayConfig{60, 50, 50}, RankPolicy{}};
  CHECK_ERROR_KIND(compute_indicator(indexed(data), Indicator::parse("reskmd_exact"), bad),
                   ErrorKind::Configuration);
}

TEST_CASE("indicators are causal") {
  VectorXd data = ar1(0.7, 1.0, 400, 42);
  PipelineOptions opt{DelayConfig{4, 100, 25}, RankPolicy{}};
  for (const char* id : {"reskmd_exact", "variance", "lag1_ac", "dmd_max_eig"}) {
    const EwsSeries full = compute_indicator(indexed(data), Indicator::parse(id), opt);
    VectorXd altered = data;
    altered.tail(50).setConstant(100.0);
    const EwsSeries changed = compute_indicator(indexed(altered), Indicator::parse(id), opt);
    for (size_t i = 0; i < full.size(); ++i)
      if (full.times[i] < 350.0) CHECK(full.values[i] == changed.values[i]);
  }
}

TEST_CASE("indicator ids") {
  for (const char* id : {"reskmd_exact", "variance", "lag1_ac", "dmd_max_eig", "reskmd_kernel:rbf,0.01",
                         "reskmd_kernel:laplacian,0.001"})
    CHECK(Indicator::parse(id).id() == id);
  CHECK_ERROR_KIND(Indicator::parse("entropy"), ErrorKind::Configuration);
}

TEST_CASE("kendall tau-b matches the tie-count oracle") {
  std::mt19937_64 rng(43);
  std::uniform_int_distribution<int> small(0, 5);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 30; ++trial) {
    const size_t n = 3 + trial * 7;
    std::vector<double> x(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = trial % 2 ? small(rng) : gauss(rng);
      y[i] = trial % 3 ? small(rng) : gauss(rng);
    }
    CHECK(std::abs(kendall_tau_b(x, y) - tau_b_oracle(x, y)) < 1e-12);
  }
}

TEST_CASE("trend_score") {
  std::vector<double> up(20);
  std::iota(up.begin(), up.end(), 0.0);
  CHECK(trend_score(trace(up)).score == 1.0);
  std::vector<double> down(up.rbegin(), up.rend());
  CHECK(trend_score(trace(down)).score == -1.0);
  CHECK(trend_score(trace(std::vector<double>(10, 4.0))).score == 0.0);
  CHECK(trend_score(trace(up)).method == "kendall_tau_b");

  std::vector<double> perm(1000);
  std::iota(perm.begin(), perm.end(), 0.0);
  std::mt19937_64 rng(44);
  std::shuffle(perm.begin(), perm.end(), rng);
  CHECK(std::abs(trend_score(trace(perm)).score) < 0.07);

  std::vector<double> noisy(60);
  std::normal_distribution<double> gauss;
  for (size_t i = 0; i < noisy.size(); ++i) noisy[i] = 0.05 * i + gauss(rng);
  std::vector<double> affine(noisy.size());
  for (size_t i = 0; i < noisy.size(); ++i) affine[i] = 3.0 * noisy[i] - 11.0;
  CHECK(std::abs(trend_score(trace(noisy)).score - trend_score(trace(affine)).score) < 1e-10);
  CHECK_ERROR_KIND(trend_score(trace({1.0, 2.0})), ErrorKind::InsufficientData);
}

TEST_CASE("WindowPolicy") {
  const WindowPolicy p;
  const DelayConfig big = p.resolve(2000);
  CHECK(big.t_window == 1000);
  CHECK(big.d_hankel == 300);
  CHECK(big.stride == 1000 / 39);
  const size_t count = windows(RawSeries(VectorXd::LinSpaced(2000, 0, 1999), MatrixXd::Zero(2000, 1)), big).size();
  CHECK(count >= 40);
  CHECK(count <= 41);
  const DelayConfig small = p.resolve(100);
  CHECK(small.t_window == 50);
  CHECK(small.d_hankel == 25);
  WindowPolicy fixed;
  fixed.stride = 7;
  fixed.d_hankel = 10;
  CHECK(fixed.resolve(500).stride == 7);
  CHECK(fixed.resolve(500).d_hankel == 10);
  WindowPolicy broken;
  broken.window_fraction = 1.5;
  CHECK_ERROR_KIND(broken.resolve(100), ErrorKind::Configuration);
}

TEST_CASE("EWS CSV round trip") {
  testutil::TempDir dir("ews");
  EwsSeries s = trace({0.1, 1.0 / 3.0, 2e-17});
  s.indicator = "reskmd_kernel:rbf,0.01";
  write_ews_csv(dir.path() / "a.csv", s);
  const std::string text = testutil::read_text(dir.path() / "a.csv");
  CHECK(text.rfind("time,indicator,value\n", 0) == 0);
  const EwsSeries back = read_ews_csv(dir.path() / "a.csv");
  CHECK(back.indicator == s.indicator);
  CHECK(back.times == s.times);
  CHECK(back.values == s.values);
  CHECK_ERROR_KIND(read_ews_csv(dir.path() / "missing.csv"), ErrorKind::Io);

  EwsSeries bad = trace({1.0, 2.0});
  bad.times = {1.0, 1.0};
  CHECK_ERROR_KIND(bad.validate(), ErrorKind::Ordering);
}

TEST_CASE("ResKMD trends up on tipping saddle-node runs") {
  const OdeSystem sys = saddle_node();
  RampSchedule ramp{1.0, 0.0, 200.0, std::nullopt};
  SimConfig cfg;
  cfg.seed = 45;
  const std::vector<double> rates{-0.005, -0.01, -0.015, -0.02, 0.0, 0.0, 0.0, 0.0};
  const auto members = make_ensemble(sys, ramp, rates, 1, cfg);
  WindowPolicy windows_policy;
  windows_policy.target_windows = 15;
  double tip = 0.0;
  double null = 0.0;
  for (const auto& m : members) {
    PipelineOptions opt{windows_policy.resolve(m.pre_tipping.length()), RankPolicy{}};
    const double tau = trend_score(compute_indicator(m.pre_tipping, Indicator::parse("reskmd_exact"), opt)).score;
    (m.tipping ? tip : null) += tau / 4.0;
  }
  CHECK(tip > null);
}

}
