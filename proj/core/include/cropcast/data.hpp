#pragma once

#include <Eigen/Core>
#include <string>
#include <utility>
#include <vector>

#include "cropcast/common.hpp"
#include "cropcast/date.hpp"

namespace cropcast {

enum class TargetKind { yield, price };

std::string to_string(TargetKind k);
TargetKind target_kind_from_string(const std::string& s);

/// One calendar day of station soil readings plus the forecast target
/// (pounds/acre for yield, US dollars for price).
struct DailyRecord {
    Date date;
    double soil_temperature = 0.0;
    double soil_moisture = 0.0;
    double target = 0.0;
    TargetKind target_kind = TargetKind::yield;
};

/// Lag-window geometry. The raw feature width is n_params * lag_days.
struct LagConfig {
    int lag_days = 140;
    int horizon_days = 35;
    int n_params = 2; // 1 = temperature only, 2 = temperature + moisture

    void validate() const;
    int feature_width() const { return n_params * lag_days; }
};

/// Samples-by-features matrix with a per-row forecast-target date and
/// per-column label.
struct FeatureMatrix {
    Eigen::MatrixXd values;
    std::vector<Date> sample_dates;
    std::vector<std::string> feature_names;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    void check_consistent() const;
};

/// Per-feature min-max normalizer fit on training rows; maps the training
/// min to 0 and max to 1. Constant columns map to 0. Values outside the
/// training range are not clipped.
struct Scaler {
    Eigen::VectorXd min;
    Eigen::VectorXd max;
};

/// Principal component basis fit on training rows. Columns of
/// `components` are orthonormal; `explained_variance_ratio` is
/// non-increasing and sums to at most 1.
struct PCAModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;               // cols x k
    Eigen::VectorXd explained_variance_ratio; // k

    int input_width() const { return static_cast<int>(components.rows()); }
    int n_components() const { return static_cast<int>(components.cols()); }
};

/// Minimal fitted-regressor interface used by permutation feature ranking.
class Forecaster {
  public:
    virtual ~Forecaster() = default;
    virtual bool fitted() const = 0;
    virtual Eigen::VectorXd predict(const Eigen::MatrixXd& x) const = 0;
};

/// Ordinary least squares with a small ridge term, fit via normal
/// equations. Serves as the probe model for feature ranking.
class LinearRegressor : public Forecaster {
  public:
    explicit LinearRegressor(double ridge = 1e-8) : ridge_(ridge) {}

    void fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
    bool fitted() const override { return fitted_; }
    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override;
    const Eigen::VectorXd& coef() const { return coef_; }
    double intercept() const { return intercept_; }

  private:
    double ridge_;
    bool fitted_ = false;
    Eigen::VectorXd coef_;
    double intercept_ = 0.0;
};

// --- station ingestion -----------------------------------------------------

/// Reads a station CSV with header `date,soil_temperature,soil_moisture,target`.
/// Records come back sorted ascending by date; duplicate dates and
/// malformed rows (reported with their line number) are rejected.
std::vector<DailyRecord> load_station_csv(const std::string& path, TargetKind kind);

void write_station_csv(const std::string& path, const std::vector<DailyRecord>& records);

/// Splits a date-sorted record series into maximal runs of consecutive
/// days. Station archives often cover growing seasons only, so each run
/// is lagged independently downstream.
std::vector<std::vector<DailyRecord>> split_contiguous_blocks(const std::vector<DailyRecord>& records);

// --- lag features ----------------------------------------------------------

/// Builds the lag feature matrix from a gap-free daily series. The row
/// for target date t+horizon holds temperature for days t-lag+1..t
/// (oldest first) followed by moisture for the same days. Sample count
/// is L - lag - horizon + 1.
std::pair<FeatureMatrix, Eigen::VectorXd> build_lag_matrix(const std::vector<DailyRecord>& records,
                                                           const LagConfig& cfg);

// --- normalization ---------------------------------------------------------

Scaler fit_scaler(const FeatureMatrix& train);
FeatureMatrix apply_scaler(const Scaler& scaler, const FeatureMatrix& x);

// --- principal components --------------------------------------------------

PCAModel fit_pca(const FeatureMatrix& x, int k);
FeatureMatrix pca_transform(const PCAModel& model, const FeatureMatrix& x);

/// Maps k-dimensional projections back to the input space (for
/// reconstruction-error diagnostics).
Eigen::MatrixXd pca_inverse_transform(const PCAModel& model, const Eigen::MatrixXd& projected);

// --- chronological split ---------------------------------------------------

template <typename X, typename Y>
struct SplitResult {
    X train_x;
    Y train_y;
    X test_x;
    Y test_y;
};

/// First floor(fraction * N) rows train, remainder test; no shuffling.
SplitResult<FeatureMatrix, Eigen::VectorXd> chronological_split(const FeatureMatrix& x,
                                                                const Eigen::VectorXd& y,
                                                                double train_fraction);

/// Split point shared by every chronological split in the pipeline.
Eigen::Index split_point(Eigen::Index n, double train_fraction);

// --- feature ranking -------------------------------------------------------

/// Permutation importance: mean increase in MSE over `trials` random
/// shuffles of each column, descending. Deterministic given the seed.
std::vector<std::pair<int, double>> rank_feature_importance(const FeatureMatrix& x,
                                                            const Eigen::VectorXd& y,
                                                            const Forecaster& model,
                                                            int trials,
                                                            std::uint64_t seed);

} // namespace cropcast
