#include "cropcast/synth.hpp"

#include <cmath>

#include "cropcast/rng.hpp"

namespace cropcast {

SynthConfig SynthConfig::defaults(TargetKind kind) {
    SynthConfig cfg;
    cfg.target_kind = kind;
    // recent-lag profiles, strongest influence on the newest readings
    cfg.temperature_weights.resize(20);
    for (int j = 0; j < 20; ++j) cfg.temperature_weights[j] = 2.0 * (1.0 - j / 20.0);
    cfg.moisture_weights.resize(10);
    for (int j = 0; j < 10; ++j) cfg.moisture_weights[j] = 400.0 * (1.0 - j / 10.0);
    cfg.base_level = 800.0;
    cfg.seasonal_amplitude = 60.0;
    if (kind == TargetKind::price) {
        // dollars instead of pounds/acre
        for (auto& w : cfg.temperature_weights) w *= 0.004;
        for (auto& w : cfg.moisture_weights) w *= 0.004;
        cfg.base_level = 2.0;
        cfg.seasonal_amplitude = 0.24;
    }
    return cfg;
}

void SynthConfig::validate() const {
    if (n_days < 2) throw ConfigError("synth n_days must be >= 2");
    if (horizon_days < 1) throw ConfigError("synth horizon_days must be >= 1");
    if (temperature_weights.empty() || moisture_weights.empty())
        throw ConfigError("synth lag-profile weights must be non-empty");
    if (noise_std < 0.0) throw ConfigError("synth noise_std must be >= 0");
    if (seasonal_period <= 0.0) throw ConfigError("synth seasonal_period must be positive");
}

namespace {

struct Drivers {
    // index 0 corresponds to day -pad; emitted day d sits at pad + d
    int pad = 0;
    std::vector<double> temperature;
    std::vector<double> moisture;
};

Drivers gen_drivers(const SynthConfig& cfg, Rng& rng) {
    Drivers drv;
    drv.pad = cfg.horizon_days +
              static_cast<int>(std::max(cfg.temperature_weights.size(), cfg.moisture_weights.size()));
    const int total = drv.pad + cfg.n_days;
    drv.temperature.resize(total);
    drv.moisture.resize(total);

    double ar_t = 0.0, ar_m = 0.0;
    for (int i = 0; i < total; ++i) {
        const double day = static_cast<double>(i - drv.pad);
        ar_t = 0.92 * ar_t + rng.normal(0.0, 0.8);
        ar_m = 0.9 * ar_m + rng.normal(0.0, 0.012);
        drv.temperature[i] = 15.0 + 8.0 * std::sin(2.0 * M_PI * day / 365.0) + ar_t;
        drv.moisture[i] =
            std::max(0.01, 0.25 + 0.08 * std::sin(2.0 * M_PI * day / 365.0 + 1.3) + ar_m);
    }
    return drv;
}

} // namespace

std::vector<DailyRecord> gen_station_data(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const Drivers drv = gen_drivers(cfg, rng);

    std::vector<DailyRecord> records;
    records.reserve(cfg.n_days);
    for (int d = 0; d < cfg.n_days; ++d) {
        const int t = d - cfg.horizon_days; // anchor day of this target
        double target = cfg.base_level +
                        cfg.seasonal_amplitude *
                            std::sin(2.0 * M_PI * static_cast<double>(t) / cfg.seasonal_period);
        for (std::size_t j = 0; j < cfg.temperature_weights.size(); ++j)
            target += cfg.temperature_weights[j] *
                      drv.temperature[static_cast<std::size_t>(drv.pad + t) - j];
        for (std::size_t j = 0; j < cfg.moisture_weights.size(); ++j)
            target +=
                cfg.moisture_weights[j] * drv.moisture[static_cast<std::size_t>(drv.pad + t) - j];
        if (cfg.noise_std > 0.0) target += rng.normal(0.0, cfg.noise_std);

        DailyRecord rec;
        rec.date = cfg.start_date + d;
        rec.soil_temperature = drv.temperature[static_cast<std::size_t>(drv.pad + d)];
        rec.soil_moisture = drv.moisture[static_cast<std::size_t>(drv.pad + d)];
        rec.target = std::max(0.0, target);
        rec.target_kind = cfg.target_kind;
        records.push_back(rec);
    }
    return records;
}

SynthRasters gen_raster_series(const SynthConfig& cfg, const std::vector<DailyRecord>& station) {
    cfg.validate();
    if (cfg.image_width < 8 || cfg.image_height < 8)
        throw ConfigError("synth images must be at least 8x8");
    if (station.empty()) throw DataError("synth rasters need a station series");

    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    const int w = cfg.image_width, h = cfg.image_height;
    const std::size_t n_pix = static_cast<std::size_t>(w) * h;

    SynthRasters out;
    out.mask.width = w;
    out.mask.height = h;
    out.mask.keep.resize(n_pix);
    for (auto& k : out.mask.keep) k = rng.uniform() < 0.75 ? 1 : 0;
    out.mask.keep[n_pix / 2] = 1; // at least one cropland pixel

    auto make_image = [&](Band band, const Date& date, double mean, double spread) {
        RasterImage img;
        img.width = w;
        img.height = h;
        img.band = band;
        img.date = date;
        img.pixels.resize(n_pix);
        for (auto& px : img.pixels)
            px = static_cast<float>(spread > 0.0 ? rng.normal(mean, spread) : mean);
        return img;
    };

    for (std::size_t i = 0; i < station.size(); ++i) {
        const auto& rec = station[i];
        out.temperature.push_back(make_image(Band::surface_temperature, rec.date,
                                             rec.soil_temperature,
                                             cfg.pixel_spread_temperature));
        if (i % 3 == 0)
            out.moisture.push_back(make_image(Band::moisture, rec.date, rec.soil_moisture,
                                              cfg.pixel_spread_moisture));
    }
    return out;
}

} // namespace cropcast
