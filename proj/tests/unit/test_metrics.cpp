#include <doctest.h>

#include "../support/helpers.hpp"
#include "cropcast/metrics.hpp"
#include "cropcast/rng.hpp"

using namespace cropcast;

namespace {

ForecastSeries series(std::initializer_list<double> pred,
                      std::initializer_list<double> truth = {}) {
    ForecastSeries f;
    f.predicted.resize(static_cast<Eigen::Index>(pred.size()));
    Eigen::Index i = 0;
    for (double v : pred) f.predicted(i++) = v;
    for (Eigen::Index d = 0; d < f.predicted.size(); ++d) f.dates.push_back(Date(d));
    if (truth.size() > 0) {
        Eigen::VectorXd t(static_cast<Eigen::Index>(truth.size()));
        i = 0;
        for (double v : truth) t(i++) = v;
        f.truth = t;
    }
    return f;
}

ForecastSeries random_series(Rng& rng, Eigen::Index n, const Eigen::VectorXd& truth) {
    ForecastSeries f;
    f.predicted.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        f.predicted(i) = truth(i) + rng.normal(0.0, 2.0);
        f.dates.push_back(Date(i));
    }
    f.truth = truth;
    return f;
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("averaging identical members reproduces the member") {
    const ForecastSeries m = series({1.0, 2.0, 3.0}, {1.5, 2.5, 3.5});
    const ForecastSeries out = average_ensemble({m, m, m});
    CHECK(out.predicted == m.predicted);
    CHECK(*out.truth == *m.truth);
}

TEST_CASE("averaging a and a+2c gives a+c") {
    const ForecastSeries a = series({1.0, 4.0}, {0.0, 0.0});
    ForecastSeries b = a;
    b.predicted.array() += 2.0 * 0.7;
    const ForecastSeries out = average_ensemble({a, b});
    CHECK(out.predicted(0) == doctest::Approx(1.7));
    CHECK(out.predicted(1) == doctest::Approx(4.7));
}

TEST_CASE("ensemble equals the element-wise mean of three random members") {
    Rng rng(81);
    Eigen::VectorXd truth(20);
    for (Eigen::Index i = 0; i < 20; ++i) truth(i) = rng.uniform(0.0, 50.0);
    const auto m0 = random_series(rng, 20, truth);
    const auto m1 = random_series(rng, 20, truth);
    const auto m2 = random_series(rng, 20, truth);
    const ForecastSeries out = average_ensemble({m0, m1, m2});
    for (Eigen::Index i = 0; i < 20; ++i)
        CHECK(out.predicted(i) ==
              doctest::Approx((m0.predicted(i) + m1.predicted(i) + m2.predicted(i)) / 3.0)
                  .epsilon(1e-12));
}

TEST_CASE("ensemble rejects mismatched members") {
    CHECK_THROWS_AS(average_ensemble({}), DataError);
    ForecastSeries a = series({1.0, 2.0});
    ForecastSeries b = series({1.0, 2.0});
    b.dates[1] = Date(7);
    CHECK_THROWS_AS(average_ensemble({a, b}), DataError);
}

TEST_CASE("perfect forecast scores 0/0/1 and agm 0") {
    const ForecastSeries f = series({3.0, 5.0, 7.0}, {3.0, 5.0, 7.0});
    CHECK(mae(f) == 0.0);
    CHECK(rmse(f) == 0.0);
    CHECK(r2(f) == 1.0);
    CHECK(agm(0.0, 0.0, 1.0) == 0.0);
}

TEST_CASE("predicting the truth mean gives r2 = 0") {
    const ForecastSeries f = series({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0});
    CHECK(r2(f) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("hand-computed metrics for truth (1,2,3) vs prediction (2,2,2)") {
    const ForecastSeries f = series({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0});
    CHECK(mae(f) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(rmse(f) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
    CHECK(r2(f) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("metrics demand a truth series and reject constant truth for r2") {
    const ForecastSeries no_truth = series({1.0, 2.0});
    CHECK_THROWS_AS(mae(no_truth), DataError);
    const ForecastSeries flat = series({1.0, 2.0}, {4.0, 4.0});
    CHECK_THROWS_AS(r2(flat), DataError);
}

TEST_CASE("agm reproduces the reference-table arithmetic") {
    // yields table, baseline column: rounds to the printed 13.6
    CHECK(agm(53.1, 70.8, 0.780) == doctest::Approx(13.629).epsilon(1e-12));
    // yields table, voting column: 5.9998 ~ printed 6.0
    CHECK(agm(37.0, 54.6, 0.869) == doctest::Approx(5.9998).epsilon(1e-9));
    // prices table, baseline column
    CHECK(agm(0.268, 0.341, 0.609) == doctest::Approx(0.1190595).epsilon(1e-9));
}

TEST_CASE("negative r2 pushes agm above the plain error mean") {
    const double value = agm(2.0, 4.0, -0.5);
    CHECK(value == doctest::Approx(4.5));
    CHECK(value > (2.0 + 4.0) / 2.0);
}

TEST_CASE("agm is monotone in each argument") {
    const double base = agm(2.0, 4.0, 0.5);
    CHECK(agm(2.5, 4.0, 0.5) > base);
    CHECK(agm(2.0, 4.5, 0.5) > base);
    CHECK(agm(2.0, 4.0, 0.6) < base);
}

TEST_CASE("report recomputation is self-consistent and rmse >= mae") {
    Rng rng(82);
    for (int trial = 0; trial < 200; ++trial) {
        Eigen::VectorXd truth(12);
        for (Eigen::Index i = 0; i < 12; ++i) truth(i) = rng.uniform(0.0, 100.0);
        const ForecastSeries f = random_series(rng, 12, truth);
        const MetricsReport r = MetricsReport::from_series(f);
        CHECK(r.agm == agm(r.mae, r.rmse, r.r2)); // exact, same arithmetic
        CHECK(r.rmse >= r.mae);
        CHECK(r.mae >= 0.0);
    }
}

TEST_CASE("mean ensembles never exceed the worst member error") {
    Rng rng(83);
    for (int trial = 0; trial < 1000; ++trial) {
        const Eigen::Index n = 4 + static_cast<Eigen::Index>(rng.uniform_int(0, 8));
        Eigen::VectorXd truth(n);
        for (Eigen::Index i = 0; i < n; ++i) truth(i) = rng.uniform(-10.0, 10.0);
        const int members = 2 + static_cast<int>(rng.uniform_int(0, 3));
        std::vector<ForecastSeries> ms;
        double worst_mae = 0.0, worst_rmse = 0.0;
        for (int m = 0; m < members; ++m) {
            ms.push_back(random_series(rng, n, truth));
            worst_mae = std::max(worst_mae, mae(ms.back()));
            worst_rmse = std::max(worst_rmse, rmse(ms.back()));
        }
        const ForecastSeries ens = average_ensemble(ms);
        CHECK(mae(ens) <= worst_mae + 1e-12);
        CHECK(rmse(ens) <= worst_rmse + 1e-12);
    }
}

TEST_CASE("metrics csv row format") {
    const MetricsReport r = MetricsReport::from_values(1.0, 2.0, 0.5);
    CHECK(r.csv_row("demo") == "demo,1,2,0.5,0.75");
    CHECK(std::string(kMetricsCsvHeader) == "model,mae,rmse,r2,agm");
}

TEST_CASE("forecast csv round trip") {
    testsup::TempDir dir("forecast_io");
    ForecastSeries f = series({1.25, 2.5, 3.75}, {1.0, 2.0, 4.0});
    f.dates = {Date::from_ymd(2019, 1, 1), Date::from_ymd(2019, 1, 2),
               Date::from_ymd(2019, 1, 3)};
    write_forecast_csv(dir.file("f.csv"), f);
    const ForecastSeries back = read_forecast_csv(dir.file("f.csv"));
    CHECK(back.predicted == f.predicted);
    CHECK(*back.truth == *f.truth);
    CHECK(back.dates == f.dates);
}

} // TEST_SUITE
