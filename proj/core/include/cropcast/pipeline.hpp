#pragma once

#include <string>
#include <vector>

#include "cropcast/data.hpp"
#include "cropcast/metrics.hpp"
#include "cropcast/raster.hpp"
#include "cropcast/synth.hpp"
#include "cropcast/train.hpp"

namespace cropcast {

/// Full pipeline settings. Every constant of the method appears here as
/// a named default (lag 140, horizon 35, 36 principal components,
/// 32 histogram bins, 0.8 train fraction, 5 ensemble members) so runs
/// are auditable from their config document alone.
struct PipelineConfig {
    TargetKind target_kind = TargetKind::yield;

    std::string out_dir = "out";
    std::string station_csv; // defaults to <out_dir>/station.csv
    std::string raster_dir;  // defaults to <out_dir>/rasters
    std::string mask_path;   // defaults to <raster_dir>/mask.json

    LagConfig lag; // 140 days, 35 ahead, 2 parameters
    int pca_components = 36;
    double train_fraction = 0.8;
    int sequence_window = 140;

    int histogram_bins = 32;
    double histogram_lo_percentile = 1.0;
    double histogram_hi_percentile = 99.0;

    TrainConfig train;
    int sim_members = 5;
    int importance_trials = 5;

    SynthConfig synth = SynthConfig::defaults(TargetKind::yield);

    static PipelineConfig from_json_text(const std::string& text);
    static PipelineConfig from_json_file(const std::string& path);
    std::string to_json() const;

    void resolve_paths();
    void validate() const;

    // derived artifact locations
    std::string features_csv() const { return out_dir + "/features.csv"; }
    std::string preproc_weights() const { return out_dir + "/preproc.weights.json"; }
    std::string importance_csv() const { return out_dir + "/feature_importance.csv"; }
    std::string cube_manifest() const { return out_dir + "/cube.json"; }
    std::string histogram_config_json() const { return out_dir + "/histogram_config.json"; }
    std::string models_dir() const { return out_dir + "/models"; }
    std::string forecasts_dir() const { return out_dir + "/forecasts"; }
    std::string metrics_csv() const { return out_dir + "/metrics.csv"; }
    std::string metrics_json() const { return out_dir + "/metrics.json"; }
    std::string report_svg() const { return out_dir + "/report.svg"; }
    std::string report_md() const { return out_dir + "/report.md"; }
};

// --- commands ----------------------------------------------------------
// Each command is idempotent given identical inputs and rewrites its
// outputs byte-identically (wall time never lands in an artifact).

/// Writes a synthetic station CSV plus raster containers for both bands.
void cmd_synth(const PipelineConfig& cfg);

/// Station branch: lag matrix -> scaler -> PCA -> features.csv (plus the
/// fitted scaler/PCA container and a permutation-importance ranking).
/// Raster branch: mask -> moisture gap fill -> histograms -> cube file.
void cmd_preprocess(const PipelineConfig& cfg);

/// Trains one model kind. Station kinds read features.csv; SIM kinds
/// read the histogram cube. `members > 1` trains that many seed-varied
/// copies (SIM ensemble); pass 0 to use the configured default.
void cmd_train(const PipelineConfig& cfg, const std::string& model_kind, int members = 0);

/// Predicts the chronological test split for every trained model, then
/// writes per-model forecasts plus the station, SIM and final voting
/// ensembles, all restricted to a shared date axis.
void cmd_forecast(const PipelineConfig& cfg, const std::vector<std::string>& weight_files = {});

/// Scores forecast files (per-model rows plus ensembles) into
/// metrics.csv / metrics.json.
void cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& forecast_files = {});

/// Forecast-vs-truth SVG plot plus a markdown metrics table.
void cmd_report(const PipelineConfig& cfg, const std::vector<std::string>& forecast_files = {});

// --- shared assembly (exposed for tests) ------------------------------

/// Station feature rows -> windowed model samples, ready to split.
SampleSet station_samples(const PipelineConfig& cfg);

/// Cube days -> windowed model samples with targets looked up from the
/// station series at day + horizon.
SampleSet raster_samples(const PipelineConfig& cfg);

/// Canonical name for ensemble outputs.
inline constexpr const char* kStationEnsembleName = "station_ensemble";
inline constexpr const char* kSimEnsembleName = "sim_ensemble";
inline constexpr const char* kVotingEnsembleName = "voting_ensemble";

} // namespace cropcast
