#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "../support/helpers.hpp"
#include "cropcast/pipeline.hpp"

using namespace cropcast;
namespace fs = std::filesystem;

namespace {

/// Small but fully wired configuration for pipeline tests.
PipelineConfig tiny_config(const std::string& out_dir, std::uint64_t seed = 3) {
    PipelineConfig cfg = PipelineConfig::from_json_text(R"({
        "lag": {"lag_days": 12, "horizon_days": 4},
        "pca_components": 5,
        "sequence_window": 10,
        "histogram": {"n_bins": 8},
        "train": {"max_epochs": 2, "batch_size": 16, "validation_fraction": 0.15},
        "ensemble": {"sim_members": 2},
        "synth": {"n_days": 150, "image_width": 8, "image_height": 8, "noise_std": 4.0}
    })");
    cfg.out_dir = out_dir;
    cfg.station_csv.clear();
    cfg.raster_dir.clear();
    cfg.mask_path.clear();
    cfg.resolve_paths();
    cfg.train.seed = seed;
    cfg.synth.seed = seed;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing applies defaults and round trips identically") {
    const PipelineConfig defaults = PipelineConfig::from_json_text("{}");
    CHECK(defaults.lag.lag_days == 140);
    CHECK(defaults.lag.horizon_days == 35);
    CHECK(defaults.lag.feature_width() == 280);
    CHECK(defaults.pca_components == 36);
    CHECK(defaults.histogram_bins == 32);
    CHECK(defaults.train_fraction == 0.8);
    CHECK(defaults.sequence_window == 140);
    CHECK(defaults.sim_members == 5);
    CHECK(defaults.station_csv == "out/station.csv");

    const std::string once = defaults.to_json();
    const std::string twice = PipelineConfig::from_json_text(once).to_json();
    CHECK(once == twice);

    const PipelineConfig partial = PipelineConfig::from_json_text(
        R"({"target_kind":"price","lag":{"lag_days":30},"train":{"seed":9}})");
    CHECK(partial.target_kind == TargetKind::price);
    CHECK(partial.lag.lag_days == 30);
    CHECK(partial.lag.horizon_days == 35); // untouched default
    CHECK(partial.train.seed == 9);
    CHECK(partial.synth.target_kind == TargetKind::price);
    CHECK(PipelineConfig::from_json_text(partial.to_json()).to_json() == partial.to_json());
}

TEST_CASE("bad configs are rejected as config errors") {
    CHECK_THROWS_AS(PipelineConfig::from_json_text("not json"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"train_fraction": 1.5})"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"lag":{"lag_days":0}})"), ConfigError);
    CHECK_THROWS_AS(PipelineConfig::from_json_text(R"({"target_kind":"wheat"})"), ConfigError);
}

TEST_CASE("synth and preprocess build aligned branch samples") {
    testsup::TempDir dir("pipe_samples");
    const PipelineConfig cfg = tiny_config(dir.str());
    cmd_synth(cfg);
    cmd_preprocess(cfg);

    CHECK(fs::exists(cfg.features_csv()));
    CHECK(fs::exists(cfg.preproc_weights()));
    CHECK(fs::exists(cfg.cube_manifest()));
    CHECK(fs::exists(cfg.histogram_config_json()));
    CHECK(fs::exists(cfg.importance_csv()));

    const SampleSet station = station_samples(cfg);
    // rows = n_days - lag - horizon + 1, sequences = rows - window + 1
    const int rows = 150 - 12 - 4 + 1;
    CHECK(static_cast<int>(station.size()) == rows - 10 + 1);
    CHECK(station.x.front().rows() == 10);
    CHECK(station.x.front().cols() == 5);

    const SampleSet raster = raster_samples(cfg);
    CHECK(raster.size() > 0);
    CHECK(raster.x.front().rows() == 10);
    CHECK(raster.x.front().cols() == 16); // 8 bins x 2 bands

    // branch target dates overlap so their forecasts can be ensembled
    std::set<std::int64_t> st, ra;
    for (const auto& d : station.dates) st.insert(d.serial());
    for (const auto& d : raster.dates) ra.insert(d.serial());
    std::vector<std::int64_t> common;
    std::set_intersection(st.begin(), st.end(), ra.begin(), ra.end(),
                          std::back_inserter(common));
    CHECK(common.size() > 50);

    // targets agree with the station csv on shared dates
    const auto recs = load_station_csv(cfg.station_csv, cfg.target_kind);
    std::map<std::int64_t, double> truth;
    for (const auto& r : recs) truth[r.date.serial()] = r.target;
    for (std::size_t i = 0; i < raster.size(); ++i)
        CHECK(raster.y(static_cast<Eigen::Index>(i)) ==
              doctest::Approx(truth.at(raster.dates[i].serial())).epsilon(1e-12));
}

TEST_CASE("commands rewrite their outputs byte-identically") {
    testsup::TempDir dir("pipe_idempotent");
    const PipelineConfig cfg = tiny_config(dir.str());
    cmd_synth(cfg);
    const std::string station_once = slurp(cfg.station_csv);
    cmd_synth(cfg);
    CHECK(slurp(cfg.station_csv) == station_once);

    cmd_preprocess(cfg);
    const std::string features_once = slurp(cfg.features_csv());
    const std::string cube_once = slurp(dir.str() + "/cube.bin");
    cmd_preprocess(cfg);
    CHECK(slurp(cfg.features_csv()) == features_once);
    CHECK(slurp(dir.str() + "/cube.bin") == cube_once);
}

TEST_CASE("train, forecast, evaluate and report produce their artifacts") {
    testsup::TempDir dir("pipe_e2e");
    const PipelineConfig cfg = tiny_config(dir.str());
    cmd_synth(cfg);
    cmd_preprocess(cfg);
    cmd_train(cfg, "lstm_baseline");
    cmd_train(cfg, "att_cnn_lstm");
    cmd_train(cfg, "seriesnet_gru");
    cmd_train(cfg, "sim_cnn_lstm_yield", 2);

    CHECK(fs::exists(cfg.models_dir() + "/lstm_baseline.weights.json"));
    CHECK(fs::exists(cfg.models_dir() + "/sim_cnn_lstm_yield.m0.weights.json"));
    CHECK(fs::exists(cfg.models_dir() + "/sim_cnn_lstm_yield.m1.weights.json"));
    CHECK(fs::exists(cfg.models_dir() + "/lstm_baseline.train.csv"));

    cmd_forecast(cfg);
    CHECK(fs::exists(cfg.forecasts_dir() + "/lstm_baseline.csv"));
    CHECK(fs::exists(cfg.forecasts_dir() + "/station_ensemble.csv"));
    CHECK(fs::exists(cfg.forecasts_dir() + "/sim_ensemble.csv"));
    CHECK(fs::exists(cfg.forecasts_dir() + "/voting_ensemble.csv"));

    // every forecast shares one date axis
    const auto voting = read_forecast_csv(cfg.forecasts_dir() + "/voting_ensemble.csv");
    const auto baseline = read_forecast_csv(cfg.forecasts_dir() + "/lstm_baseline.csv");
    const auto sim = read_forecast_csv(cfg.forecasts_dir() + "/sim_ensemble.csv");
    CHECK(voting.dates == baseline.dates);
    CHECK(voting.dates == sim.dates);
    REQUIRE(voting.truth.has_value());

    // the voting series is the mean of its two branch ensembles
    const auto station_ens = read_forecast_csv(cfg.forecasts_dir() + "/station_ensemble.csv");
    for (Eigen::Index i = 0; i < voting.size(); ++i)
        CHECK(voting.predicted(i) ==
              doctest::Approx((station_ens.predicted(i) + sim.predicted(i)) / 2.0)
                  .epsilon(1e-12));

    cmd_evaluate(cfg);
    const std::string metrics = slurp(cfg.metrics_csv());
    CHECK(metrics.rfind("model,mae,rmse,r2,agm\n", 0) == 0);
    CHECK(metrics.find("lstm_baseline,") != std::string::npos);
    CHECK(metrics.find("voting_ensemble,") != std::string::npos);
    // rows follow the reference-table column order
    CHECK(metrics.find("lstm_baseline,") < metrics.find("sim_ensemble,"));
    CHECK(metrics.find("sim_ensemble,") < metrics.find("station_ensemble,"));
    CHECK(metrics.find("station_ensemble,") < metrics.find("voting_ensemble,"));

    cmd_report(cfg);
    const std::string svg = slurp(cfg.report_svg());
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(fs::exists(cfg.report_md()));
}

TEST_CASE("a perfect forecast evaluates to the 0,0,1,0 row") {
    testsup::TempDir dir("pipe_perfect");
    PipelineConfig cfg = tiny_config(dir.str());
    fs::create_directories(cfg.forecasts_dir());

    ForecastSeries f;
    for (int i = 0; i < 5; ++i) f.dates.push_back(Date(i));
    f.predicted.resize(5);
    f.predicted << 10, 20, 15, 30, 25;
    f.truth = f.predicted;
    const std::string path = cfg.forecasts_dir() + "/perfect.csv";
    write_forecast_csv(path, f);

    cmd_evaluate(cfg, {path});
    CHECK(slurp(cfg.metrics_csv()).find("perfect,0,0,1,0") != std::string::npos);
}

TEST_CASE("evaluating the reference voting-ensemble triple lands on its printed agm") {
    // construct a series whose (mae, rmse, r2) equal the reference
    // voting-ensemble triple, then push it through evaluate
    const double target_mae = 37.0, target_rmse = 54.6, target_r2 = 0.869;
    const double sum_sq = 3.0 * target_rmse * target_rmse; // errors (a, -(110-a), 1)
    const double a =
        (110.0 + std::sqrt(110.0 * 110.0 - 4.0 * (12100.0 - (sum_sq - 1.0)) / 2.0)) / 2.0;
    const double e[3] = {a, -(110.0 - a), 1.0};
    const double sse = e[0] * e[0] + e[1] * e[1] + e[2] * e[2];
    const double sst = sse / (1.0 - target_r2);
    const double spread = std::sqrt(sst / 2.0);

    ForecastSeries f;
    f.dates = {Date(0), Date(1), Date(2)};
    Eigen::VectorXd truth(3);
    truth << 500.0 - spread, 500.0, 500.0 + spread;
    f.truth = truth;
    f.predicted.resize(3);
    for (int i = 0; i < 3; ++i) f.predicted(i) = truth(i) + e[i];

    CHECK(mae(f) == doctest::Approx(target_mae).epsilon(1e-9));
    CHECK(rmse(f) == doctest::Approx(target_rmse).epsilon(1e-9));
    CHECK(r2(f) == doctest::Approx(target_r2).epsilon(1e-9));

    testsup::TempDir dir("pipe_agm");
    PipelineConfig cfg = tiny_config(dir.str());
    fs::create_directories(cfg.forecasts_dir());
    const std::string path = cfg.forecasts_dir() + "/voting_triple.csv";
    write_forecast_csv(path, f);
    cmd_evaluate(cfg, {path});

    const std::string metrics = slurp(cfg.metrics_csv());
    const auto line_at = metrics.find("voting_triple,");
    REQUIRE(line_at != std::string::npos);
    double got_mae, got_rmse, got_r2, got_agm;
    REQUIRE(std::sscanf(metrics.c_str() + line_at, "voting_triple,%lf,%lf,%lf,%lf", &got_mae,
                        &got_rmse, &got_r2, &got_agm) == 4);
    CHECK(std::abs(got_agm - 6.0) <= 0.15);
    CHECK(got_agm == doctest::Approx(5.9998).epsilon(1e-6));
}

TEST_CASE("missing upstream artifacts name the producing command") {
    testsup::TempDir dir("pipe_missing");
    const PipelineConfig cfg = tiny_config(dir.str());
    CHECK_THROWS_WITH_AS(cmd_preprocess(cfg), doctest::Contains("cropcast synth"), DataError);
    CHECK_THROWS_WITH_AS(cmd_train(cfg, "lstm_baseline"), doctest::Contains("cropcast preprocess"),
                         DataError);
    CHECK_THROWS_WITH_AS(cmd_forecast(cfg), doctest::Contains("cropcast train"), DataError);
    CHECK_THROWS_WITH_AS(cmd_evaluate(cfg), doctest::Contains("cropcast forecast"), DataError);
    CHECK_THROWS_AS(cmd_train(cfg, "unknown_kind"), ConfigError);
}

TEST_CASE("noiseless synthetic data trains the baseline past the sanity floor") {
    // with no noise and the full working geometry, the simplest model
    // must explain the planted signal well on the chronological test
    // split; every stronger model is expected to clear the same floor
    testsup::TempDir dir("pipe_floor");
    PipelineConfig cfg = PipelineConfig::from_json_text(R"({
        "train": {"max_epochs": 12, "batch_size": 32, "validation_fraction": 0.1,
                  "early_stop_patience": 3, "learning_rate": 0.003, "seed": 1},
        "synth": {"n_days": 1200, "noise_std": 0.0, "image_width": 16,
                  "image_height": 16, "seed": 777}
    })");
    cfg.out_dir = dir.str();
    cfg.station_csv.clear();
    cfg.raster_dir.clear();
    cfg.mask_path.clear();
    cfg.resolve_paths();
    cmd_synth(cfg);
    cmd_preprocess(cfg);

    const SampleSet all = station_samples(cfg);
    auto [train_set, test_set] = chronological_split_samples(all, cfg.train_fraction);

    nn::ModelSpec spec;
    spec.kind = nn::ModelKind::lstm_baseline;
    spec.time_steps = static_cast<int>(train_set.x.front().rows());
    spec.features = static_cast<int>(train_set.x.front().cols());
    spec.seed = 42;
    Model model = make_model(spec);
    train(model, train_set, cfg.train);

    ForecastSeries f;
    f.dates = test_set.dates;
    f.predicted = predict(model, test_set.x);
    f.truth = test_set.y;
    CHECK(r2(f) >= 0.9);
}

TEST_CASE("all four station model kinds run the full pipeline cleanly") {
    testsup::TempDir dir("pipe_kinds");
    PipelineConfig cfg = tiny_config(dir.str(), 13);
    cfg.train.max_epochs = 1;
    cmd_synth(cfg);
    cmd_preprocess(cfg);

    const SampleSet all = station_samples(cfg);
    auto [train_set, test_set] = chronological_split_samples(all, cfg.train_fraction);
    for (nn::ModelKind kind : {nn::ModelKind::att_cnn_lstm, nn::ModelKind::seriesnet_gru,
                               nn::ModelKind::sim_cnn_lstm_yield, nn::ModelKind::lstm_baseline}) {
        nn::ModelSpec spec;
        spec.kind = kind;
        spec.time_steps = static_cast<int>(train_set.x.front().rows());
        spec.features = static_cast<int>(train_set.x.front().cols());
        spec.seed = 31;
        Model model = make_model(spec);
        const TrainReport report = train(model, train_set, cfg.train);
        CHECK(report.stopped_epoch == 1);
        const Eigen::VectorXd pred = predict(model, test_set.x);
        CHECK(pred.size() == static_cast<Eigen::Index>(test_set.size()));
        CHECK(pred.allFinite());
    }
}

} // TEST_SUITE
