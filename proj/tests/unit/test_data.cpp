#include <doctest.h>

#include <Eigen/Dense>
#include <fstream>

#include "../support/helpers.hpp"
#include "cropcast/data.hpp"

using namespace cropcast;

namespace {

std::vector<DailyRecord> daily_series(int n, Date start = Date::from_ymd(2015, 1, 1)) {
    std::vector<DailyRecord> records;
    for (int i = 0; i < n; ++i) {
        DailyRecord r;
        r.date = start + i;
        r.soil_temperature = static_cast<double>(i + 1);
        r.soil_moisture = 0.2 + 0.001 * i;
        r.target = 100.0 + i;
        records.push_back(r);
    }
    return records;
}

/// Brute-force lag-window enumerator, independent of build_lag_matrix.
struct BruteWindow {
    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
};

BruteWindow brute_force_windows(const std::vector<DailyRecord>& recs, int lag, int horizon,
                                int n_params) {
    BruteWindow out;
    const int len = static_cast<int>(recs.size());
    for (int end = lag - 1; end + horizon < len; ++end) {
        std::vector<double> row;
        for (int p = 0; p < n_params; ++p)
            for (int i = end - lag + 1; i <= end; ++i)
                row.push_back(p == 0 ? recs[i].soil_temperature : recs[i].soil_moisture);
        out.rows.push_back(std::move(row));
        out.targets.push_back(recs[end + horizon].target);
    }
    return out;
}

} // namespace

TEST_SUITE("data") {

TEST_CASE("station csv round trip keeps records in date order") {
    testsup::TempDir dir("csv_basic");
    std::ofstream out(dir.file("s.csv"));
    out << "date,soil_temperature,soil_moisture,target\n";
    out << "2015-01-03,12.5,0.31,200\n";
    out << "2015-01-01,10.0,0.30,100\n";
    out << "2015-01-02,11.0,0.29,150\n";
    out.close();

    const auto recs = load_station_csv(dir.file("s.csv"), TargetKind::yield);
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].date.to_string() == "2015-01-01");
    CHECK(recs[1].date.to_string() == "2015-01-02");
    CHECK(recs[2].date.to_string() == "2015-01-03");
    CHECK(recs[0].target == doctest::Approx(100.0));
    CHECK(recs[2].soil_temperature == doctest::Approx(12.5));
}

TEST_CASE("duplicate date is rejected and named") {
    testsup::TempDir dir("csv_dup");
    std::ofstream out(dir.file("s.csv"));
    out << "date,soil_temperature,soil_moisture,target\n";
    out << "2015-01-01,10,0.3,100\n";
    out << "2015-01-02,11,0.3,100\n";
    out << "2015-01-01,12,0.3,100\n";
    out.close();

    CHECK_THROWS_WITH_AS(load_station_csv(dir.file("s.csv"), TargetKind::yield),
                         doctest::Contains("2015-01-01"), DataError);
}

TEST_CASE("malformed row reports its line number") {
    testsup::TempDir dir("csv_bad");
    std::ofstream out(dir.file("s.csv"));
    out << "date,soil_temperature,soil_moisture,target\n";
    out << "2015-01-01,10,0.3,100\n";
    out << "2015-01-02,oops,0.3,100\n";
    out.close();

    CHECK_THROWS_WITH_AS(load_station_csv(dir.file("s.csv"), TargetKind::yield),
                         doctest::Contains("line 3"), DataError);
    CHECK_THROWS_AS(load_station_csv(dir.file("missing.csv"), TargetKind::yield), DataError);
}

TEST_CASE("a 2812-row file yields 2812 records") {
    testsup::TempDir dir("csv_2812");
    write_station_csv(dir.file("s.csv"), daily_series(2812));
    CHECK(load_station_csv(dir.file("s.csv"), TargetKind::yield).size() == 2812);
}

TEST_CASE("lag matrix with defaults is 280 wide") {
    const LagConfig cfg; // 140 / 35 / 2
    auto [fm, y] = build_lag_matrix(daily_series(400), cfg);
    CHECK(fm.cols() == 280);
    CHECK(fm.rows() == 400 - 140 - 35 + 1);
    CHECK(fm.feature_names.size() == 280);
    CHECK(fm.feature_names.front() == "soil_temperature_lag139");
    CHECK(fm.feature_names[140] == "soil_moisture_lag139");
}

TEST_CASE("a 175-day series with defaults gives exactly one sample") {
    auto [fm, y] = build_lag_matrix(daily_series(175), LagConfig{});
    CHECK(fm.rows() == 1);
}

TEST_CASE("small lag example matches the hand enumeration") {
    LagConfig cfg;
    cfg.lag_days = 3;
    cfg.horizon_days = 1;
    cfg.n_params = 1;
    auto recs = daily_series(10); // temperature 1..10
    for (auto& r : recs) r.target = r.soil_temperature;
    auto [fm, y] = build_lag_matrix(recs, cfg);

    REQUIRE(fm.rows() == 7);
    CHECK(fm.values(0, 0) == doctest::Approx(1));
    CHECK(fm.values(0, 1) == doctest::Approx(2));
    CHECK(fm.values(0, 2) == doctest::Approx(3));
    CHECK(y(0) == doctest::Approx(4)); // value at day 4
}

TEST_CASE("lag matrix agrees with brute-force enumeration over small sizes") {
    for (int len = 2; len <= 50; len += 7) {
        for (int lag = 1; lag <= 10; lag += 3) {
            for (int horizon = 1; horizon <= 5; horizon += 2) {
                if (len < lag + horizon) continue;
                LagConfig cfg;
                cfg.lag_days = lag;
                cfg.horizon_days = horizon;
                cfg.n_params = 2;
                const auto recs = daily_series(len);
                auto [fm, y] = build_lag_matrix(recs, cfg);
                const auto brute = brute_force_windows(recs, lag, horizon, 2);

                REQUIRE(fm.rows() == static_cast<Eigen::Index>(brute.rows.size()));
                REQUIRE(fm.rows() == len - lag - horizon + 1);
                for (Eigen::Index r = 0; r < fm.rows(); ++r) {
                    for (Eigen::Index c = 0; c < fm.cols(); ++c)
                        REQUIRE(fm.values(r, c) ==
                                brute.rows[static_cast<std::size_t>(r)]
                                          [static_cast<std::size_t>(c)]);
                    REQUIRE(y(r) == brute.targets[static_cast<std::size_t>(r)]);
                }
            }
        }
    }
}

TEST_CASE("lag matrix rejects short series and date gaps") {
    CHECK_THROWS_AS(build_lag_matrix(daily_series(100), LagConfig{}), DataError);

    auto recs = daily_series(200);
    recs.erase(recs.begin() + 60); // hole
    CHECK_THROWS_WITH_AS(build_lag_matrix(recs, LagConfig{}), doctest::Contains("gap"),
                         DataError);
}

TEST_CASE("scaler maps training columns onto [0,1]") {
    FeatureMatrix fm;
    fm.values.resize(3, 1);
    fm.values << 2, 4, 6;
    fm.sample_dates = {Date(0), Date(1), Date(2)};
    const Scaler s = fit_scaler(fm);
    const FeatureMatrix scaled = apply_scaler(s, fm);
    CHECK(scaled.values(0, 0) == doctest::Approx(0.0));
    CHECK(scaled.values(1, 0) == doctest::Approx(0.5));
    CHECK(scaled.values(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("constant columns scale to zero") {
    FeatureMatrix fm;
    fm.values.resize(2, 1);
    fm.values << 5, 5;
    fm.sample_dates = {Date(0), Date(1)};
    const FeatureMatrix scaled = apply_scaler(fit_scaler(fm), fm);
    CHECK(scaled.values(0, 0) == 0.0);
    CHECK(scaled.values(1, 0) == 0.0);
}

TEST_CASE("scaler matches the (x-min)/(max-min) oracle on random data") {
    Rng rng(11);
    FeatureMatrix fm;
    fm.values = testsup::random_matrix(rng, 4, 3, 10.0);
    fm.sample_dates = {Date(0), Date(1), Date(2), Date(3)};
    const Scaler s = fit_scaler(fm);
    const FeatureMatrix scaled = apply_scaler(s, fm);
    for (Eigen::Index c = 0; c < 3; ++c) {
        const double lo = fm.values.col(c).minCoeff();
        const double hi = fm.values.col(c).maxCoeff();
        for (Eigen::Index r = 0; r < 4; ++r)
            CHECK(scaled.values(r, c) ==
                  doctest::Approx((fm.values(r, c) - lo) / (hi - lo)).epsilon(1e-12));
    }
}

TEST_CASE("scaler does not clip unseen data") {
    FeatureMatrix train;
    train.values.resize(2, 1);
    train.values << 0, 1;
    train.sample_dates = {Date(0), Date(1)};
    const Scaler s = fit_scaler(train);

    FeatureMatrix unseen;
    unseen.values.resize(2, 1);
    unseen.values << -1, 3;
    unseen.sample_dates = {Date(2), Date(3)};
    const FeatureMatrix scaled = apply_scaler(s, unseen);
    CHECK(scaled.values(0, 0) == doctest::Approx(-1.0));
    CHECK(scaled.values(1, 0) == doctest::Approx(3.0));
}

TEST_CASE("pca on collinear points explains everything with one component") {
    FeatureMatrix fm;
    fm.values.resize(6, 3);
    for (int i = 0; i < 6; ++i) {
        fm.values(i, 0) = i * 1.0;
        fm.values(i, 1) = i * -2.0;
        fm.values(i, 2) = i * 0.5;
        fm.sample_dates.push_back(Date(i));
    }
    const PCAModel model = fit_pca(fm, 2);
    CHECK(model.explained_variance_ratio(0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pca matches a covariance-eigendecomposition oracle") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        FeatureMatrix fm;
        fm.values = testsup::random_matrix(rng, 8, 5, 2.0);
        for (int i = 0; i < 8; ++i) fm.sample_dates.push_back(Date(i));
        const int k = 3;
        const PCAModel model = fit_pca(fm, k);
        const FeatureMatrix proj = pca_transform(model, fm);

        // oracle: eigendecomposition of the sample covariance
        const Eigen::RowVectorXd mean = fm.values.colwise().mean();
        const Eigen::MatrixXd centered = fm.values.rowwise() - mean;
        const Eigen::MatrixXd cov = centered.transpose() * centered / 7.0;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        REQUIRE(eig.info() == Eigen::Success);

        for (int i = 0; i < k; ++i) {
            const Eigen::VectorXd oracle_axis = eig.eigenvectors().col(4 - i); // descending
            const Eigen::VectorXd oracle_proj = centered * oracle_axis;
            const Eigen::VectorXd got = proj.values.col(i);
            const double sign = got.dot(oracle_proj) < 0 ? -1.0 : 1.0;
            CHECK((got - sign * oracle_proj).cwiseAbs().maxCoeff() < 1e-8);

            const double oracle_ratio = eig.eigenvalues()(4 - i) / eig.eigenvalues().sum();
            CHECK(model.explained_variance_ratio(i) == doctest::Approx(oracle_ratio).epsilon(1e-9));
        }
    }
}

TEST_CASE("pca invariants: orthonormal basis, ordered ratios, contracting variance") {
    Rng rng(37);
    FeatureMatrix fm;
    fm.values = testsup::random_matrix(rng, 20, 7, 3.0);
    for (int i = 0; i < 20; ++i) fm.sample_dates.push_back(Date(i));
    const PCAModel model = fit_pca(fm, 5);

    const Eigen::MatrixXd gram = model.components.transpose() * model.components;
    CHECK((gram - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
    for (int i = 1; i < 5; ++i)
        CHECK(model.explained_variance_ratio(i) <= model.explained_variance_ratio(i - 1) + 1e-15);
    CHECK(model.explained_variance_ratio.sum() <= 1.0 + 1e-9);

    const FeatureMatrix proj = pca_transform(model, fm);
    const Eigen::MatrixXd centered = fm.values.rowwise() - model.mean.transpose();
    CHECK(proj.values.squaredNorm() <= centered.squaredNorm() + 1e-9);

    // reconstruction error is non-increasing in k
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 5; ++k) {
        const PCAModel mk = fit_pca(fm, k);
        const FeatureMatrix pk = pca_transform(mk, fm);
        const double err = (pca_inverse_transform(mk, pk.values) - fm.values).squaredNorm();
        CHECK(err <= prev + 1e-9);
        prev = err;
    }
}

TEST_CASE("pca rejects too many components") {
    FeatureMatrix fm;
    fm.values = Eigen::MatrixXd::Random(4, 3);
    fm.sample_dates = {Date(0), Date(1), Date(2), Date(3)};
    CHECK_THROWS_AS(fit_pca(fm, 4), DataError);
}

TEST_CASE("chronological split arithmetic") {
    auto make = [](Eigen::Index n) {
        FeatureMatrix fm;
        fm.values = Eigen::MatrixXd::Zero(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) fm.sample_dates.push_back(Date(i));
        return fm;
    };

    SUBCASE("n=10") {
        const auto r = chronological_split(make(10), Eigen::VectorXd::Zero(10), 0.8);
        CHECK(r.train_x.rows() == 8);
        CHECK(r.test_x.rows() == 2);
    }
    SUBCASE("n=2812, the station sample count") {
        const auto r = chronological_split(make(2812), Eigen::VectorXd::Zero(2812), 0.8);
        CHECK(r.train_x.rows() == 2249);
        CHECK(r.test_x.rows() == 563);
    }
    SUBCASE("n=2977, the satellite sample count") {
        const auto r = chronological_split(make(2977), Eigen::VectorXd::Zero(2977), 0.8);
        CHECK(r.train_x.rows() == 2381);
        CHECK(r.test_x.rows() == 596);
    }
    SUBCASE("order is preserved") {
        const auto r = chronological_split(make(10), Eigen::VectorXd::Zero(10), 0.8);
        CHECK(r.train_x.sample_dates.back() < r.test_x.sample_dates.front());
    }
    SUBCASE("degenerate sides are rejected") {
        CHECK_THROWS_AS(chronological_split(make(1), Eigen::VectorXd::Zero(1), 0.8), DataError);
        CHECK_THROWS_AS(chronological_split(make(10), Eigen::VectorXd::Zero(10), 1.5),
                        ConfigError);
    }
}

TEST_CASE("permutation importance finds the planted column") {
    Rng rng(5);
    FeatureMatrix fm;
    fm.values = testsup::random_matrix(rng, 60, 2, 1.0);
    for (int i = 0; i < 60; ++i) fm.sample_dates.push_back(Date(i));
    const Eigen::VectorXd y = 3.0 * fm.values.col(0);

    LinearRegressor model;
    model.fit(fm.values, y);
    const auto ranking = rank_feature_importance(fm, y, model, 5, 99);
    REQUIRE(ranking.size() == 2);
    CHECK(ranking[0].first == 0);
    CHECK(ranking[0].second > ranking[1].second);
}

TEST_CASE("importance of irrelevant features stays near zero") {
    Rng rng(6);
    FeatureMatrix fm;
    fm.values = testsup::random_matrix(rng, 80, 3, 1.0);
    for (int i = 0; i < 80; ++i) fm.sample_dates.push_back(Date(i));
    Eigen::VectorXd y(80);
    for (int i = 0; i < 80; ++i) y(i) = rng.uniform(-1.0, 1.0); // independent of X

    LinearRegressor model;
    model.fit(fm.values, y);
    for (const auto& [col, score] : rank_feature_importance(fm, y, model, 8, 4))
        CHECK(std::abs(score) < 0.15); // noise band around zero
}

TEST_CASE("permutation ranking matches a leave-one-column-out oracle") {
    Rng rng(7);
    FeatureMatrix fm;
    fm.values = testsup::random_matrix(rng, 120, 3, 1.0);
    for (int i = 0; i < 120; ++i) fm.sample_dates.push_back(Date(i));
    const Eigen::VectorXd y =
        4.0 * fm.values.col(0) + 2.0 * fm.values.col(1) + 0.5 * fm.values.col(2);

    LinearRegressor model;
    model.fit(fm.values, y);
    const auto ranking = rank_feature_importance(fm, y, model, 10, 13);

    // oracle: refit without each column, rank by the MSE increase
    std::vector<std::pair<int, double>> oracle;
    const double base =
        (model.predict(fm.values) - y).squaredNorm() / static_cast<double>(y.size());
    for (int drop = 0; drop < 3; ++drop) {
        Eigen::MatrixXd reduced(fm.rows(), 2);
        int at = 0;
        for (int c = 0; c < 3; ++c)
            if (c != drop) reduced.col(at++) = fm.values.col(c);
        LinearRegressor refit;
        refit.fit(reduced, y);
        const double err =
            (refit.predict(reduced) - y).squaredNorm() / static_cast<double>(y.size());
        oracle.emplace_back(drop, err - base);
    }
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    REQUIRE(ranking.size() == oracle.size());
    for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(ranking[i].first == oracle[i].first);
}

TEST_CASE("feature ranking rejects bad inputs") {
    FeatureMatrix fm;
    fm.values = Eigen::MatrixXd::Random(10, 2);
    for (int i = 0; i < 10; ++i) fm.sample_dates.push_back(Date(i));
    const Eigen::VectorXd y = Eigen::VectorXd::Zero(10);
    LinearRegressor unfitted;
    CHECK_THROWS_AS(rank_feature_importance(fm, y, unfitted, 3, 0), DataError);
    LinearRegressor fitted;
    fitted.fit(fm.values, y);
    CHECK_THROWS_AS(rank_feature_importance(fm, y, fitted, 0, 0), ConfigError);
}

TEST_CASE("contiguous block splitting") {
    auto recs = daily_series(10);
    recs.erase(recs.begin() + 4, recs.begin() + 6);
    const auto blocks = split_contiguous_blocks(recs);
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[0].size() == 4);
    CHECK(blocks[1].size() == 4);
}

} // TEST_SUITE
