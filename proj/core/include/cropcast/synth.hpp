#pragma once

#include <cstdint>
#include <vector>

#include "cropcast/data.hpp"
#include "cropcast/raster.hpp"

namespace cropcast {

/// Generator settings for station series and raster series with a
/// planted, learnable target relationship. With anchor day t = d - horizon,
/// the target emitted for day d is
///
///   base_level
///   + sum_j temperature_weights[j] * temp(t - j)
///   + sum_j moisture_weights[j]    * moist(t - j)
///   + seasonal_amplitude * sin(2*pi * t / seasonal_period)
///   + noise_std * N(0, 1)
///
/// Drivers are generated with a warm-up margin so the formula is defined
/// for every emitted day; days whose formula reaches before the emitted
/// span depend on warm-up values that never leave the generator.
struct SynthConfig {
    std::uint64_t seed = 42;
    int n_days = 1200;
    int horizon_days = 35;
    std::vector<double> temperature_weights;
    std::vector<double> moisture_weights;
    double base_level = 0.0;
    double seasonal_amplitude = 0.0;
    double seasonal_period = 365.0;
    double noise_std = 0.0;
    int image_width = 16;
    int image_height = 16;
    double pixel_spread_temperature = 2.0;
    double pixel_spread_moisture = 0.02;
    TargetKind target_kind = TargetKind::yield;
    Date start_date = Date::from_ymd(2014, 1, 1);

    /// Scales the planted signal to the unit conventions of the target:
    /// whole pounds/acre for yields, dollars for prices.
    static SynthConfig defaults(TargetKind kind);
    void validate() const;
};

/// Deterministic daily station series. With zero noise the target is an
/// exact linear-plus-seasonal function of the emitted readings.
std::vector<DailyRecord> gen_station_data(const SynthConfig& cfg);

/// Raster series mirroring one station series: each day's pixels are
/// drawn around that day's reading with a fixed spread, temperature
/// daily and moisture every third day.
struct SynthRasters {
    std::vector<RasterImage> temperature;
    std::vector<RasterImage> moisture;
    LandMask mask;
};

SynthRasters gen_raster_series(const SynthConfig& cfg, const std::vector<DailyRecord>& station);

} // namespace cropcast
