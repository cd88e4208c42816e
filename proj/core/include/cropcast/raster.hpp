#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cropcast/common.hpp"
#include "cropcast/date.hpp"

namespace cropcast {

enum class Band { surface_temperature = 0, moisture = 1 };
inline constexpr int kNumBands = 2;

std::string to_string(Band b);
Band band_from_string(const std::string& s);

/// Single-band raster for one day. Pixels are stored row-major
/// (row * width + col); masked/no-data pixels carry the sentinel value
/// and never a valid reading.
struct RasterImage {
    int width = 0;
    int height = 0;
    Band band = Band::surface_temperature;
    Date date;
    float nodata = -9999.0f;
    std::vector<float> pixels;

    std::size_t pixel_count() const { return pixels.size(); }
    float at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
    float& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
};

/// Boolean keep-grid; dimensions must match the images it is applied to.
struct LandMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> keep; // row-major, nonzero = keep

    bool at(int row, int col) const { return keep[static_cast<std::size_t>(row) * width + col] != 0; }
};

/// Per-band histogram bin edges (n_bins + 1 strictly increasing values).
struct HistogramConfig {
    int n_bins = 32;
    std::array<std::vector<double>, kNumBands> edges;

    const std::vector<double>& edges_for(Band b) const { return edges[static_cast<int>(b)]; }
    void validate() const;
};

/// time x bins x bands pixel-frequency tensor. values[t] is an
/// n_bins x n_bands matrix for the day dates[t].
struct HistogramCube {
    int n_bins = 0;
    int n_bands = 0;
    std::vector<Eigen::MatrixXd> values;
    std::vector<Date> dates;

    std::size_t time_steps() const { return values.size(); }
};

/// Per-day histogram pair used to assemble cubes; a band may be missing
/// when the source imagery has no coverage for that day.
struct DayHistograms {
    Date date;
    std::array<std::optional<Eigen::VectorXd>, kNumBands> bands;
};

// --- operations --------------------------------------------------------

/// Keeps pixel values inside the mask, sets the rest to the image's
/// no-data sentinel.
RasterImage apply_mask(const RasterImage& img, const LandMask& mask);

/// Expands a ~3-day moisture cadence to a daily series by copying each
/// source image to the day before and after it. Days claimed by two
/// sources resolve to the nearer one; equidistant ties resolve to the
/// earlier source. Gaps wider than the duplication reach are an error.
std::vector<RasterImage> fill_moisture_gaps(const std::vector<RasterImage>& series);

/// Uniform bin edges between the lo/hi percentiles of unmasked training
/// pixel values, derived independently per band. A zero-spread band is
/// widened by +-0.5 around its single value.
HistogramConfig derive_bin_edges(const std::vector<RasterImage>& temperature_train,
                                 const std::vector<RasterImage>& moisture_train,
                                 int n_bins, double lo_pct, double hi_pct);

/// Pixel-frequency counts over unmasked (non-sentinel) pixels.
/// Below-range pixels land in bin 0 and above-range in the last bin, so
/// every unmasked pixel is counted. With `normalize` the vector sums to 1.
Eigen::VectorXd compute_histogram(const RasterImage& img, const HistogramConfig& cfg,
                                  bool normalize);

/// Assembles one model input from `window` consecutive days of per-band
/// histograms. Every day must carry both bands.
HistogramCube build_cube(const std::vector<DayHistograms>& days, int window);

/// Flattens bins and bands into one dimension: row t is band 0's bins
/// followed by band 1's bins.
Eigen::MatrixXd flatten_cube(const HistogramCube& cube);
HistogramCube unflatten_cube(const Eigen::MatrixXd& flat, int n_bins, int n_bands,
                             const std::vector<Date>& dates);

// --- portable container io ---------------------------------------------

/// Images travel as a JSON manifest plus a sibling little-endian float32
/// row-major blob; masks use the same container with 0/1 values.
void write_raster(const std::string& manifest_path, const RasterImage& img);
RasterImage read_raster(const std::string& manifest_path);

void write_mask(const std::string& manifest_path, const LandMask& mask);
LandMask read_mask(const std::string& manifest_path);

} // namespace cropcast
