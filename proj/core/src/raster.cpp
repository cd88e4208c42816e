#include "cropcast/raster.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "io_util.hpp"

namespace cropcast {

using nlohmann::json;

std::string to_string(Band b) {
    return b == Band::surface_temperature ? "surface_temperature" : "moisture";
}

Band band_from_string(const std::string& s) {
    if (s == "surface_temperature") return Band::surface_temperature;
    if (s == "moisture") return Band::moisture;
    throw DataError("unknown band '" + s + "'");
}

void HistogramConfig::validate() const {
    if (n_bins < 1) throw ConfigError("histogram n_bins must be >= 1");
    for (int b = 0; b < kNumBands; ++b) {
        const auto& e = edges[b];
        if (e.size() != static_cast<std::size_t>(n_bins) + 1)
            throw ConfigError("band " + to_string(static_cast<Band>(b)) + " needs " +
                              std::to_string(n_bins + 1) + " bin edges, has " +
                              std::to_string(e.size()));
        for (std::size_t i = 1; i < e.size(); ++i)
            if (!(e[i] > e[i - 1]))
                throw ConfigError("bin edges must be strictly increasing");
    }
}

// --- operations --------------------------------------------------------

RasterImage apply_mask(const RasterImage& img, const LandMask& mask) {
    if (img.width != mask.width || img.height != mask.height)
        throw DataError("mask dimensions " + std::to_string(mask.width) + "x" +
                        std::to_string(mask.height) + " do not match image " +
                        std::to_string(img.width) + "x" + std::to_string(img.height));
    RasterImage out = img;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        if (!mask.keep[i]) out.pixels[i] = img.nodata;
    return out;
}

std::vector<RasterImage> fill_moisture_gaps(const std::vector<RasterImage>& series) {
    if (series.empty()) return {};
    for (std::size_t i = 1; i < series.size(); ++i)
        if (!(series[i].date > series[i - 1].date))
            throw DataError("moisture series dates must be strictly increasing");

    const Date first = series.front().date - 1;
    const Date last = series.back().date + 1;
    std::vector<RasterImage> out;
    out.reserve(static_cast<std::size_t>(last - first) + 1);

    std::size_t src = 0;
    for (Date day = first; day <= last; day = day + 1) {
        while (src + 1 < series.size() &&
               std::llabs(series[src + 1].date - day) < std::llabs(series[src].date - day))
            ++src;
        // ties keep the current (earlier) source
        const std::int64_t dist = std::llabs(series[src].date - day);
        if (dist > 1)
            throw DataError("moisture gap too wide to fill by duplication near " +
                            day.to_string());
        RasterImage copy = series[src];
        copy.date = day;
        out.push_back(std::move(copy));
    }
    return out;
}

namespace {

void collect_unmasked(const RasterImage& img, std::vector<float>& sink) {
    for (float v : img.pixels)
        if (v != img.nodata) sink.push_back(v);
}

double percentile(std::vector<float>& values, double pct) {
    // linear interpolation between order statistics
    std::sort(values.begin(), values.end());
    const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return (1.0 - frac) * values[lo] + frac * values[hi];
}

std::vector<double> band_edges(const std::vector<RasterImage>& train, Band b, int n_bins,
                               double lo_pct, double hi_pct) {
    std::vector<float> pool;
    for (const auto& img : train) {
        if (img.band != b)
            throw DataError("image band does not match the " + to_string(b) + " training set");
        collect_unmasked(img, pool);
    }
    if (pool.empty())
        throw DataError("no unmasked pixels in the " + to_string(b) + " training images");

    double lo = percentile(pool, lo_pct);
    double hi = percentile(pool, hi_pct);
    if (!(hi > lo)) { // zero-spread band
        lo -= 0.5;
        hi += 0.5;
    }
    std::vector<double> edges(n_bins + 1);
    for (int i = 0; i <= n_bins; ++i)
        edges[i] = lo + (hi - lo) * static_cast<double>(i) / n_bins;
    return edges;
}

} // namespace

HistogramConfig derive_bin_edges(const std::vector<RasterImage>& temperature_train,
                                 const std::vector<RasterImage>& moisture_train,
                                 int n_bins, double lo_pct, double hi_pct) {
    if (n_bins < 1) throw ConfigError("histogram n_bins must be >= 1");
    if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
        throw ConfigError("percentile clip range must satisfy 0 <= lo < hi <= 100");
    HistogramConfig cfg;
    cfg.n_bins = n_bins;
    cfg.edges[static_cast<int>(Band::surface_temperature)] =
        band_edges(temperature_train, Band::surface_temperature, n_bins, lo_pct, hi_pct);
    cfg.edges[static_cast<int>(Band::moisture)] =
        band_edges(moisture_train, Band::moisture, n_bins, lo_pct, hi_pct);
    cfg.validate();
    return cfg;
}

Eigen::VectorXd compute_histogram(const RasterImage& img, const HistogramConfig& cfg,
                                  bool normalize) {
    cfg.validate();
    const auto& edges = cfg.edges_for(img.band);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(cfg.n_bins);

    std::size_t counted = 0;
    for (float v : img.pixels) {
        if (v == img.nodata) continue;
        // out-of-range pixels clip into the edge bins
        int bin;
        if (v < edges.front()) {
            bin = 0;
        } else if (v >= edges.back()) {
            bin = cfg.n_bins - 1;
        } else {
            const auto it = std::upper_bound(edges.begin(), edges.end(), static_cast<double>(v));
            bin = static_cast<int>(it - edges.begin()) - 1;
        }
        counts(bin) += 1.0;
        ++counted;
    }
    if (counted == 0) throw DataError("image has zero unmasked pixels: " + img.date.to_string());
    if (normalize) counts /= static_cast<double>(counted);
    return counts;
}

HistogramCube build_cube(const std::vector<DayHistograms>& days, int window) {
    if (window < 1) throw ConfigError("cube window must be >= 1");
    if (days.size() != static_cast<std::size_t>(window))
        throw DataError("cube expects " + std::to_string(window) + " days, got " +
                        std::to_string(days.size()));

    HistogramCube cube;
    cube.n_bands = kNumBands;
    for (std::size_t t = 0; t < days.size(); ++t) {
        if (t > 0 && days[t].date - days[t - 1].date != 1)
            throw DataError("cube days must be consecutive; gap before " +
                            days[t].date.to_string());
        for (int b = 0; b < kNumBands; ++b)
            if (!days[t].bands[b])
                throw DataError("missing " + to_string(static_cast<Band>(b)) +
                                " histogram for " + days[t].date.to_string());

        const auto& first = *days[t].bands[0];
        if (cube.n_bins == 0) cube.n_bins = static_cast<int>(first.size());
        Eigen::MatrixXd slice(cube.n_bins, cube.n_bands);
        for (int b = 0; b < kNumBands; ++b) {
            const auto& h = *days[t].bands[b];
            if (h.size() != cube.n_bins)
                throw DataError("histogram width mismatch for " + days[t].date.to_string());
            slice.col(b) = h;
        }
        cube.values.push_back(std::move(slice));
        cube.dates.push_back(days[t].date);
    }
    return cube;
}

Eigen::MatrixXd flatten_cube(const HistogramCube& cube) {
    Eigen::MatrixXd flat(static_cast<Eigen::Index>(cube.time_steps()),
                         static_cast<Eigen::Index>(cube.n_bins) * cube.n_bands);
    for (std::size_t t = 0; t < cube.time_steps(); ++t)
        for (int b = 0; b < cube.n_bands; ++b)
            flat.row(static_cast<Eigen::Index>(t)).segment(b * cube.n_bins, cube.n_bins) =
                cube.values[t].col(b).transpose();
    return flat;
}

HistogramCube unflatten_cube(const Eigen::MatrixXd& flat, int n_bins, int n_bands,
                             const std::vector<Date>& dates) {
    if (flat.cols() != static_cast<Eigen::Index>(n_bins) * n_bands)
        throw DataError("flattened cube width does not factor into bins x bands");
    if (static_cast<Eigen::Index>(dates.size()) != flat.rows())
        throw DataError("flattened cube date axis mismatch");
    HistogramCube cube;
    cube.n_bins = n_bins;
    cube.n_bands = n_bands;
    cube.dates = dates;
    for (Eigen::Index t = 0; t < flat.rows(); ++t) {
        Eigen::MatrixXd slice(n_bins, n_bands);
        for (int b = 0; b < n_bands; ++b)
            slice.col(b) = flat.row(t).segment(b * n_bins, n_bins).transpose();
        cube.values.push_back(std::move(slice));
    }
    return cube;
}

// --- portable container io ---------------------------------------------

void write_raster(const std::string& manifest_path, const RasterImage& img) {
    if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height)
        throw DataError("raster pixel buffer does not match its dimensions");
    json manifest = {
        {"width", img.width},
        {"height", img.height},
        {"band", to_string(img.band)},
        {"date", img.date.to_string()},
        {"nodata", img.nodata},
        {"data_file", detail::sibling_bin_name(manifest_path)},
    };
    detail::write_text_file(manifest_path, manifest.dump(2) + "\n");
    detail::write_f32_blob(detail::sibling_bin_path(manifest_path), img.pixels.data(),
                           img.pixels.size());
}

RasterImage read_raster(const std::string& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(detail::read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw DataError("bad raster manifest " + manifest_path + ": " + e.what());
    }
    RasterImage img;
    try {
        img.width = manifest.at("width").get<int>();
        img.height = manifest.at("height").get<int>();
        img.band = band_from_string(manifest.at("band").get<std::string>());
        img.date = Date::parse(manifest.at("date").get<std::string>());
        img.nodata = manifest.at("nodata").get<float>();
    } catch (const json::exception& e) {
        throw DataError("bad raster manifest " + manifest_path + ": " + e.what());
    }
    if (img.width < 1 || img.height < 1)
        throw DataError("bad raster dimensions in " + manifest_path);
    img.pixels = detail::read_f32_blob(detail::sibling_bin_path(manifest_path),
                                       static_cast<std::size_t>(img.width) * img.height);
    return img;
}

void write_mask(const std::string& manifest_path, const LandMask& mask) {
    if (mask.keep.size() != static_cast<std::size_t>(mask.width) * mask.height)
        throw DataError("mask buffer does not match its dimensions");
    json manifest = {
        {"width", mask.width},
        {"height", mask.height},
        {"band", "mask"},
        {"nodata", 0.0f},
        {"data_file", detail::sibling_bin_name(manifest_path)},
    };
    detail::write_text_file(manifest_path, manifest.dump(2) + "\n");
    std::vector<float> as_float(mask.keep.begin(), mask.keep.end());
    detail::write_f32_blob(detail::sibling_bin_path(manifest_path), as_float.data(),
                           as_float.size());
}

LandMask read_mask(const std::string& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(detail::read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw DataError("bad mask manifest " + manifest_path + ": " + e.what());
    }
    LandMask mask;
    try {
        mask.width = manifest.at("width").get<int>();
        mask.height = manifest.at("height").get<int>();
    } catch (const json::exception& e) {
        throw DataError("bad mask manifest " + manifest_path + ": " + e.what());
    }
    if (mask.width < 1 || mask.height < 1)
        throw DataError("bad mask dimensions in " + manifest_path);
    const auto values = detail::read_f32_blob(detail::sibling_bin_path(manifest_path),
                                              static_cast<std::size_t>(mask.width) * mask.height);
    mask.keep.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) mask.keep[i] = values[i] != 0.0f ? 1 : 0;
    return mask;
}

} // namespace cropcast
