#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "cropcast/common.hpp"
#include "cropcast/date.hpp"

namespace cropcast {

/// Dated prediction series, optionally paired with ground truth.
struct ForecastSeries {
    std::vector<Date> dates;
    Eigen::VectorXd predicted;
    std::optional<Eigen::VectorXd> truth;

    Eigen::Index size() const { return predicted.size(); }
    void check_consistent() const;
};

/// MAE / RMSE / R^2 / AGM for one forecast series. AGM is the composite
/// (RMSE + MAE) / 2 * (1 - R^2); lower is better, and a negative R^2
/// pushes it above the plain error mean.
struct MetricsReport {
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    double agm = 0.0;

    static MetricsReport from_series(const ForecastSeries& f);
    static MetricsReport from_values(double mae, double rmse, double r2);

    std::string csv_row(const std::string& model_name) const;
    std::string json_record(const std::string& model_name) const;
};

inline constexpr const char* kMetricsCsvHeader = "model,mae,rmse,r2,agm";

// --- ensembling ----------------------------------------------------------

/// Unweighted voting ensemble: the per-date arithmetic mean of member
/// predictions. Members must share one date axis (and truth, if present).
ForecastSeries average_ensemble(const std::vector<ForecastSeries>& members);

// --- metrics ---------------------------------------------------------------

double mae(const ForecastSeries& f);
double rmse(const ForecastSeries& f);

/// 1 - SSE/SST with SST about the truth mean; a constant truth series
/// has no variance to explain and is rejected.
double r2(const ForecastSeries& f);

double agm(double mae_value, double rmse_value, double r2_value);

// --- series io ---------------------------------------------------------

/// CSV with header `date,predicted[,truth]`.
void write_forecast_csv(const std::string& path, const ForecastSeries& f);
ForecastSeries read_forecast_csv(const std::string& path);

} // namespace cropcast
