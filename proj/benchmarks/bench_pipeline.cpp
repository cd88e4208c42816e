#include <benchmark/benchmark.h>

#include "cropcast/data.hpp"
#include "cropcast/raster.hpp"
#include "cropcast/rng.hpp"
#include "cropcast/synth.hpp"

using namespace cropcast;

static void LagMatrixBuild(benchmark::State& state) {
    SynthConfig cfg = SynthConfig::defaults(TargetKind::yield);
    cfg.n_days = static_cast<int>(state.range(0));
    const auto records = gen_station_data(cfg);
    const LagConfig lag;
    for (auto _ : state) {
        auto out = build_lag_matrix(records, lag);
        benchmark::DoNotOptimize(out);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(LagMatrixBuild)->RangeMultiplier(2)->Range(300, 2400)->Complexity();

static void PcaFit(benchmark::State& state) {
    SynthConfig cfg = SynthConfig::defaults(TargetKind::yield);
    cfg.n_days = 1200;
    const auto records = gen_station_data(cfg);
    auto [fm, y] = build_lag_matrix(records, LagConfig{});
    const Scaler scaler = fit_scaler(fm);
    const FeatureMatrix scaled = apply_scaler(scaler, fm);
    for (auto _ : state) {
        PCAModel model = fit_pca(scaled, 36);
        benchmark::DoNotOptimize(model);
    }
}
BENCHMARK(PcaFit)->Unit(benchmark::kMillisecond);

static void HistogramImage(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    Rng rng(5);
    RasterImage img;
    img.width = side;
    img.height = side;
    img.band = Band::surface_temperature;
    img.date = Date::from_ymd(2018, 1, 1);
    img.pixels.resize(static_cast<std::size_t>(side) * side);
    for (auto& px : img.pixels)
        px = rng.uniform() < 0.2 ? img.nodata : static_cast<float>(rng.uniform(0.0, 40.0));

    HistogramConfig cfg;
    cfg.n_bins = 32;
    for (int b = 0; b < kNumBands; ++b) {
        cfg.edges[b].resize(33);
        for (int i = 0; i <= 32; ++i) cfg.edges[b][i] = 40.0 * i / 32.0;
    }
    for (auto _ : state) {
        Eigen::VectorXd h = compute_histogram(img, cfg, true);
        benchmark::DoNotOptimize(h);
    }
    state.SetComplexityN(side);
}
BENCHMARK(HistogramImage)->RangeMultiplier(2)->Range(16, 256)->Complexity();
