#include <doctest.h>

#include <cmath>
#include <random>

#include "dypro/error.hpp"
#include "dypro/metrics.hpp"
#include "oracles.hpp"

using namespace dypro;

namespace {

using Labels = std::vector<SurvivalLabel>;

std::vector<double> shuffled_scores(std::mt19937_64& rng, std::size_t n, int levels) {
  std::uniform_int_distribution<int> level(0, levels - 1);
  std::vector<double> s(n);
  for (auto& v : s) v = 0.1 * level(rng);
  return s;
}

}  // namespace

TEST_CASE("C-index examples") {
  const Labels two = {{1, true}, {2, true}};
  CHECK(harrell_cindex(std::vector<double>{2, 1}, two) == 1.0);
  CHECK(harrell_cindex(std::vector<double>{1, 1}, two) == 0.5);
  const Labels three = {{1, true}, {2, false}, {3, true}};
  CHECK(harrell_cindex(std::vector<double>{3, 1, 2}, three) == 1.0);
  CHECK(oracle::cindex_pairs({3, 1, 2}, three).pairs == 2);
}

TEST_CASE("C-index without comparable pairs") {
  const Labels censored = {{1, false}, {2, false}};
  CHECK_THROWS_WITH_AS(harrell_cindex(std::vector<double>{1, 2}, censored),
                       doctest::Contains("no comparable pairs"), DomainError);
  const Labels tied = {{2, true}, {2, true}};
  CHECK_THROWS_AS(harrell_cindex(std::vector<double>{1, 2}, tied), DomainError);
}

TEST_CASE("C-index of negated risks is the complement") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Labels y = oracle::random_labels(rng, 15);
    if (oracle::cindex_pairs(std::vector<double>(15), y).pairs == 0) continue;
    std::vector<double> r(15), neg(15);
    for (std::size_t i = 0; i < 15; ++i) neg[i] = -(r[i] = n(rng));
    CHECK(harrell_cindex(r, y) + harrell_cindex(neg, y) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("AUC examples") {
  CHECK(time_dependent_auc(std::vector<double>{0.9, 0.1}, Labels{{1, true}, {3, true}}, 2.0) ==
        1.0);
  CHECK(time_dependent_auc(std::vector<double>{0.4, 0.4}, Labels{{1, true}, {3, true}}, 2.0) ==
        0.5);
  const Labels excl = {{1, true}, {1.5, false}, {3, true}};
  CHECK(time_dependent_auc(std::vector<double>{0.8, 0.99, 0.3}, excl, 2.0) == 1.0);
  CHECK_FALSE(time_dependent_auc(std::vector<double>{0.8, 0.3}, Labels{{5, true}, {3, true}}, 2.0));
  CHECK_FALSE(time_dependent_auc(std::vector<double>{0.8, 0.3}, Labels{{1, true}, {1, true}}, 2.0));
}

TEST_CASE("Kaplan-Meier censoring survival examples") {
  SUBCASE("no censoring") {
    const auto g = km_censoring_survival(Labels{{1, true}, {2, true}, {3, true}});
    for (double t : {0.0, 1.0, 2.5, 10.0}) CHECK(g.at(t) == 1.0);
  }
  SUBCASE("one censoring among two at risk") {
    const auto g = km_censoring_survival(Labels{{1, true}, {2, false}, {3, true}});
    CHECK(g.at(1.9) == 1.0);
    CHECK(g.at(2.0) == 0.5);
    CHECK(g.at(7.0) == 0.5);
    CHECK(g.before(2.0) == 1.0);
  }
  SUBCASE("two censored patients") {
    const auto g = km_censoring_survival(Labels{{1, false}, {2, false}});
    CHECK(g.at(0.5) == 1.0);
    CHECK(g.at(1.0) == 0.5);
    CHECK(g.at(2.0) == 0.0);
    CHECK(g.before(2.0) == 0.5);
  }
}

TEST_CASE("integrated Brier examples") {
  const TimeBins bins = TimeBins::annual(4);
  SUBCASE("perfect step predictions") {
    // Events on bin edges so the step curve can drop exactly there.
    const Labels y = {{1, true}, {2, true}, {3, true}};
    std::vector<SurvivalCurve> curves;
    for (const auto& l : y) {
      SurvivalCurve s(4);
      for (Eigen::Index k = 0; k < 4; ++k) s(k) = static_cast<double>(k) < l.time ? 1.0 : 0.0;
      curves.push_back(s);
    }
    CHECK(integrated_brier(curves, y, bins, 4.0).ibs == 0.0);
  }
  SUBCASE("constant one half") {
    const std::vector<SurvivalCurve> curves = {SurvivalCurve::Constant(4, 0.5)};
    const auto r = integrated_brier(curves, Labels{{1.5, true}}, bins, 3.0);
    CHECK(r.ibs == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r.capped_weights == 0);
  }
  SUBCASE("two patients with mixed censoring") {
    const Labels y = {{1.2, false}, {2.7, true}};
    const std::vector<SurvivalCurve> curves = {Eigen::Vector4d(0.9, 0.7, 0.4, 0.2),
                                               Eigen::Vector4d(0.8, 0.5, 0.3, 0.1)};
    const double expected = oracle::ibs(curves, y, bins, 4.0);
    CHECK(std::abs(integrated_brier(curves, y, bins, 4.0).ibs - expected) <= 1e-12);
  }
  SUBCASE("tau outside the grid") {
    const std::vector<SurvivalCurve> curves = {SurvivalCurve::Constant(4, 0.5)};
    CHECK_THROWS_AS(integrated_brier(curves, Labels{{1, true}}, bins, 4.5), DomainError);
    CHECK_THROWS_AS(integrated_brier(curves, Labels{{1, true}}, bins, 0.0), DomainError);
  }
}

TEST_CASE("uncensored IBS equals the unweighted integral") {
  std::mt19937_64 rng(4);
  const TimeBins bins = TimeBins::annual(6);
  for (int trial = 0; trial < 20; ++trial) {
    Labels y = oracle::random_labels(rng, 12);
    for (auto& l : y) l.event = true;
    std::vector<SurvivalCurve> curves;
    for (std::size_t i = 0; i < y.size(); ++i) curves.push_back(oracle::random_curve(rng, 6));
    double area = 0.0, prev = 0.0;
    for (std::size_t j = 0; j < 100; ++j) {
      const double t = 5.0 * static_cast<double>(j) / 99.0;
      double bs = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double s = oracle::step_value(curves[i], bins, t);
        bs += y[i].time <= t ? s * s : (1 - s) * (1 - s);
      }
      bs /= static_cast<double>(y.size());
      if (j > 0) area += 0.5 * (prev + bs) * (5.0 / 99.0);
      prev = bs;
    }
    CHECK(std::abs(integrated_brier(curves, y, bins, 5.0).ibs - area / 5.0) <= 1e-12);
  }
}

TEST_CASE("capped weights are counted") {
  const TimeBins bins = TimeBins::annual(4);
  // G falls to 1/2 at t = 1: weights stay under the cap.
  const Labels y = {{0.5, true}, {1.0, false}, {2.0, true}};
  const std::vector<SurvivalCurve> curves(3, SurvivalCurve::Constant(4, 0.5));
  const auto r = integrated_brier(curves, y, bins, 3.0, {100.0, 100});
  CHECK(r.capped_weights == 0);
  // G falls to 1/3: every weight past t = 1 hits a cap of 2.
  const Labels heavy = {{1.0, false}, {1.0, false}, {2.0, true}};
  const auto h = integrated_brier(curves, heavy, bins, 3.0, {2.0, 100});
  CHECK(h.capped_weights > 0);
  CHECK(std::abs(h.ibs - oracle::ibs(curves, heavy, bins, 3.0, 2.0)) <= 1e-12);
}

TEST_CASE("MAE on uncensored cases") {
  CHECK(mae_uncensored(std::vector<double>{2, 3}, Labels{{1, true}, {3, true}}) == 0.5);
  CHECK_FALSE(mae_uncensored(std::vector<double>{2, 3}, Labels{{1, false}, {3, false}}));
  CHECK(mae_uncensored(std::vector<double>{2, 99}, Labels{{1, true}, {5, false}}) == 1.0);
}

TEST_CASE("metrics match brute-force oracles on small instances") {
  std::mt19937_64 rng(2024);
  const TimeBins bins({0.0, 0.5, 1.0, 2.0, 3.0, 4.5, 6.0});
  std::uniform_int_distribution<std::size_t> size(2, 20);
  std::size_t checked_c = 0, checked_auc = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = size(rng);
    const Labels y = oracle::random_labels(rng, n);
    const auto risk = shuffled_scores(rng, n, 6);

    if (const auto c = oracle::cindex(risk, y)) {
      CHECK(std::abs(harrell_cindex(risk, y) - *c) <= 1e-12);
      ++checked_c;
    } else {
      CHECK_THROWS_AS(harrell_cindex(risk, y), DomainError);
    }
    for (double t : {1.0, 2.5, 4.0}) {
      const auto a = time_dependent_auc(risk, y, t);
      const auto o = oracle::auc(risk, y, t);
      REQUIRE(a.has_value() == o.has_value());
      if (a) {
        CHECK(std::abs(*a - *o) <= 1e-12);
        ++checked_auc;
      }
    }
    const auto g = km_censoring_survival(y);
    for (const auto& l : y) {
      for (double t : {l.time - 0.1, l.time, l.time + 0.1}) {
        CHECK(std::abs(g.at(t) - oracle::km_censoring(y, t)) <= 1e-12);
        CHECK(std::abs(g.before(t) - oracle::km_censoring(y, t, true)) <= 1e-12);
      }
    }
    std::vector<SurvivalCurve> curves;
    std::vector<double> pred;
    for (std::size_t i = 0; i < n; ++i) {
      curves.push_back(oracle::random_curve(rng, bins.size()));
      pred.push_back(point_estimate_time(curves.back(), bins));
    }
    const double tau = 5.0;
    CHECK(std::abs(integrated_brier(curves, y, bins, tau).ibs - oracle::ibs(curves, y, bins, tau)) <=
          1e-12);
    const auto m = mae_uncensored(pred, y);
    const auto mo = oracle::mae(pred, y);
    REQUIRE(m.has_value() == mo.has_value());
    if (m) CHECK(std::abs(*m - *mo) <= 1e-12);
  }
  CHECK(checked_c > 150);
  CHECK(checked_auc > 300);
}

TEST_CASE("rank metrics are invariant to increasing transforms") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Labels y = oracle::random_labels(rng, 18);
    if (oracle::cindex_pairs(std::vector<double>(18), y).pairs == 0) continue;
    const auto risk = shuffled_scores(rng, 18, 8);
    std::vector<double> mapped(risk.size());
    for (std::size_t i = 0; i < risk.size(); ++i) mapped[i] = std::exp(3.0 * risk[i]) - 7.0;
    CHECK(harrell_cindex(risk, y) == harrell_cindex(mapped, y));
    CHECK(time_dependent_auc(risk, y, 2.0) == time_dependent_auc(mapped, y, 2.0));
  }
}

TEST_CASE("bootstrap intervals") {
  SUBCASE("constant metric gives a zero-width interval") {
    const auto ci = bootstrap_ci([](std::span<const std::size_t>) { return 0.42; }, 30, 1000,
                                 0.95, 5);
    CHECK(ci.lo == 0.42);
    CHECK(ci.hi == 0.42);
    CHECK(ci.used == 1000);
  }
  SUBCASE("fixed seed repeats exactly") {
    std::vector<double> v(40);
    std::mt19937_64 rng(3);
    for (auto& x : v) x = std::uniform_real_distribution<double>(0, 1)(rng);
    auto mean = [&](std::span<const std::size_t> idx) -> std::optional<double> {
      double s = 0.0;
      for (auto i : idx) s += v[i];
      return s / static_cast<double>(idx.size());
    };
    const auto a = bootstrap_ci(mean, v.size(), 500, 0.9, 77);
    const auto b = bootstrap_ci(mean, v.size(), 500, 0.9, 77);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
    CHECK(a.lo < a.hi);
    const auto c = bootstrap_ci(mean, v.size(), 500, 0.9, 78);
    CHECK((c.lo != a.lo || c.hi != a.hi));
  }
  SUBCASE("undefined resamples are discarded and counted") {
    std::size_t calls = 0;
    const auto ci = bootstrap_ci(
        [&](std::span<const std::size_t>) -> std::optional<double> {
          return calls++ % 4 == 0 ? std::nullopt : std::optional<double>(1.0);
        },
        10, 400, 0.95, 1);
    CHECK(ci.discarded == 100);
    CHECK(ci.used == 300);
  }
  SUBCASE("errors") {
    auto undefined = [](std::span<const std::size_t>) -> std::optional<double> {
      return std::nullopt;
    };
    CHECK_THROWS_AS(bootstrap_ci(undefined, 10, 200, 0.95, 1), DomainError);
    CHECK_THROWS_AS(bootstrap_ci([](auto) { return 1.0; }, 10, 99, 0.95, 1), DomainError);
  }
}

TEST_CASE("interval text") {
  ConfidenceInterval ci;
  ci.lo = 0.711;
  ci.hi = 0.796;
  CHECK(format_ci("OS C-index", 0.755, ci, 0.95) ==
        "OS C-index of 0.755 with a 95% CI of [0.711, 0.796]");
}

TEST_CASE("linear quantiles") {
  const std::vector<double> v = {1, 2, 3, 4, 5};
  CHECK(sorted_quantile(v, 0.0) == 1);
  CHECK(sorted_quantile(v, 1.0) == 5);
  CHECK(sorted_quantile(v, 0.5) == 3);
  CHECK(sorted_quantile(v, 0.1) == doctest::Approx(1.4));
}
