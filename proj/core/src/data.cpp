#include "cropcast/data.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cropcast/rng.hpp"

namespace cropcast {

std::string to_string(TargetKind k) {
    return k == TargetKind::yield ? "yield" : "price";
}

TargetKind target_kind_from_string(const std::string& s) {
    if (s == "yield") return TargetKind::yield;
    if (s == "price") return TargetKind::price;
    throw ConfigError("unknown target kind '" + s + "' (expected yield|price)");
}

void LagConfig::validate() const {
    if (lag_days < 1) throw ConfigError("lag_days must be >= 1");
    if (horizon_days < 1) throw ConfigError("horizon_days must be >= 1");
    if (n_params < 1 || n_params > 2) throw ConfigError("n_params must be 1 or 2");
}

void FeatureMatrix::check_consistent() const {
    if (static_cast<Eigen::Index>(sample_dates.size()) != values.rows())
        throw DataError("feature matrix: row count does not match date count");
    if (!feature_names.empty() &&
        static_cast<Eigen::Index>(feature_names.size()) != values.cols())
        throw DataError("feature matrix: column count does not match name count");
    if (!values.allFinite())
        throw NumericError("feature matrix contains non-finite entries");
}

// --- station ingestion -----------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double_field(const std::string& s, const char* what, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || !std::isfinite(v))
        throw DataError("station csv line " + std::to_string(line_no) + ": bad " +
                        std::string(what) + " value '" + s + "'");
    return v;
}

} // namespace

std::vector<DailyRecord> load_station_csv(const std::string& path, TargetKind kind) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open station csv: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw DataError("station csv is empty: " + path);
    {
        auto header = split_csv_line(line);
        const std::vector<std::string> expect = {"date", "soil_temperature",
                                                 "soil_moisture", "target"};
        if (std::vector<std::string>(header.begin(), header.end()) != expect)
            throw DataError("station csv header must be "
                            "'date,soil_temperature,soil_moisture,target': " +
                            path);
    }

    std::vector<DailyRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 4)
            throw DataError("station csv line " + std::to_string(line_no) +
                            ": expected 4 fields, got " + std::to_string(fields.size()));
        DailyRecord rec;
        try {
            rec.date = Date::parse(fields[0]);
        } catch (const DataError& e) {
            throw DataError("station csv line " + std::to_string(line_no) + ": " + e.what());
        }
        rec.soil_temperature = parse_double_field(fields[1], "soil_temperature", line_no);
        rec.soil_moisture = parse_double_field(fields[2], "soil_moisture", line_no);
        rec.target = parse_double_field(fields[3], "target", line_no);
        rec.target_kind = kind;
        if (rec.soil_moisture < 0.0)
            throw DataError("station csv line " + std::to_string(line_no) +
                            ": soil_moisture must be >= 0");
        if (rec.target < 0.0)
            throw DataError("station csv line " + std::to_string(line_no) +
                            ": target must be >= 0");
        records.push_back(rec);
    }

    std::stable_sort(records.begin(), records.end(),
                     [](const DailyRecord& a, const DailyRecord& b) { return a.date < b.date; });
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].date == records[i - 1].date)
            throw DataError("duplicate date in station csv: " + records[i].date.to_string());
    return records;
}

void write_station_csv(const std::string& path, const std::vector<DailyRecord>& records) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write station csv: " + path);
    out << "date,soil_temperature,soil_moisture,target\n";
    for (const auto& r : records)
        out << r.date.to_string() << ',' << fmt_double(r.soil_temperature) << ','
            << fmt_double(r.soil_moisture) << ',' << fmt_double(r.target) << '\n';
    if (!out) throw DataError("failed writing station csv: " + path);
}

std::vector<std::vector<DailyRecord>> split_contiguous_blocks(const std::vector<DailyRecord>& records) {
    std::vector<std::vector<DailyRecord>> blocks;
    for (const auto& rec : records) {
        if (blocks.empty() || rec.date - blocks.back().back().date != 1)
            blocks.emplace_back();
        blocks.back().push_back(rec);
    }
    return blocks;
}

// --- lag features ----------------------------------------------------------

std::pair<FeatureMatrix, Eigen::VectorXd> build_lag_matrix(const std::vector<DailyRecord>& records,
                                                           const LagConfig& cfg) {
    cfg.validate();
    const auto len = static_cast<Eigen::Index>(records.size());
    const Eigen::Index need = cfg.lag_days + cfg.horizon_days;
    if (len < need)
        throw DataError("series too short for lagging: " + std::to_string(len) +
                        " days, need at least " + std::to_string(need));
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].date - records[i - 1].date != 1)
            throw DataError("gap in station series between " + records[i - 1].date.to_string() +
                            " and " + records[i].date.to_string());

    const Eigen::Index n_samples = len - cfg.lag_days - cfg.horizon_days + 1;
    FeatureMatrix fm;
    fm.values.resize(n_samples, cfg.feature_width());
    fm.sample_dates.reserve(n_samples);
    Eigen::VectorXd y(n_samples);

    const char* param_names[] = {"soil_temperature", "soil_moisture"};
    for (int p = 0; p < cfg.n_params; ++p)
        for (int j = 0; j < cfg.lag_days; ++j)
            fm.feature_names.push_back(std::string(param_names[p]) + "_lag" +
                                       std::to_string(cfg.lag_days - 1 - j));

    for (Eigen::Index s = 0; s < n_samples; ++s) {
        // window covers records [s, s+lag), target at s+lag-1+horizon
        for (int j = 0; j < cfg.lag_days; ++j) {
            const DailyRecord& r = records[s + j];
            fm.values(s, j) = r.soil_temperature;
            if (cfg.n_params == 2) fm.values(s, cfg.lag_days + j) = r.soil_moisture;
        }
        const DailyRecord& tgt = records[s + cfg.lag_days - 1 + cfg.horizon_days];
        fm.sample_dates.push_back(tgt.date);
        y(s) = tgt.target;
    }
    return {std::move(fm), std::move(y)};
}

// --- normalization ---------------------------------------------------------

Scaler fit_scaler(const FeatureMatrix& train) {
    if (train.rows() == 0) throw DataError("cannot fit scaler on an empty matrix");
    Scaler s;
    s.min = train.values.colwise().minCoeff();
    s.max = train.values.colwise().maxCoeff();
    return s;
}

FeatureMatrix apply_scaler(const Scaler& scaler, const FeatureMatrix& x) {
    if (scaler.min.size() != x.cols())
        throw DataError("scaler width " + std::to_string(scaler.min.size()) +
                        " does not match matrix width " + std::to_string(x.cols()));
    FeatureMatrix out;
    out.sample_dates = x.sample_dates;
    out.feature_names = x.feature_names;
    out.values.resize(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double span = scaler.max(c) - scaler.min(c);
        if (span > 0.0)
            out.values.col(c) = (x.values.col(c).array() - scaler.min(c)) / span;
        else
            out.values.col(c).setZero(); // constant training column
    }
    return out;
}

// --- principal components --------------------------------------------------

PCAModel fit_pca(const FeatureMatrix& x, int k) {
    const Eigen::Index n = x.rows(), p = x.cols();
    if (n == 0 || p == 0) throw DataError("cannot fit PCA on an empty matrix");
    if (k < 1 || k > std::min(n, p))
        throw DataError("PCA component count " + std::to_string(k) +
                        " out of range for a " + std::to_string(n) + "x" +
                        std::to_string(p) + " matrix");

    PCAModel model;
    model.mean = x.values.colwise().mean();
    Eigen::MatrixXd centered = x.values.rowwise() - model.mean.transpose();

    // SVD of the centered data; the right singular vectors are the
    // principal axes and s^2/(n-1) the component variances.
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();

    const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
    const double total_var = sv.squaredNorm() / denom;

    model.components = svd.matrixV().leftCols(k);
    model.explained_variance_ratio.resize(k);
    for (int i = 0; i < k; ++i) {
        const double var_i = sv(i) * sv(i) / denom;
        model.explained_variance_ratio(i) = total_var > 0.0 ? var_i / total_var : 0.0;
    }

    // Fix component signs so a refit reproduces the same basis.
    for (int i = 0; i < k; ++i) {
        Eigen::Index arg = 0;
        model.components.col(i).cwiseAbs().maxCoeff(&arg);
        if (model.components(arg, i) < 0.0) model.components.col(i) = -model.components.col(i);
    }

    if (model.explained_variance_ratio(k - 1) < 1e-12)
        std::cerr << "warning: PCA input is rank-deficient, trailing components "
                     "explain no variance\n";
    return model;
}

FeatureMatrix pca_transform(const PCAModel& model, const FeatureMatrix& x) {
    if (x.cols() != model.input_width())
        throw DataError("PCA input width " + std::to_string(model.input_width()) +
                        " does not match matrix width " + std::to_string(x.cols()));
    FeatureMatrix out;
    out.sample_dates = x.sample_dates;
    out.values = (x.values.rowwise() - model.mean.transpose()) * model.components;
    out.feature_names.reserve(model.n_components());
    for (int i = 0; i < model.n_components(); ++i)
        out.feature_names.push_back("pc_" + std::to_string(i + 1));
    return out;
}

Eigen::MatrixXd pca_inverse_transform(const PCAModel& model, const Eigen::MatrixXd& projected) {
    if (projected.cols() != model.n_components())
        throw DataError("PCA projection width mismatch");
    return (projected * model.components.transpose()).rowwise() + model.mean.transpose();
}

// --- chronological split ---------------------------------------------------

Eigen::Index split_point(Eigen::Index n, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train fraction must be in (0, 1)");
    return static_cast<Eigen::Index>(std::floor(train_fraction * static_cast<double>(n)));
}

SplitResult<FeatureMatrix, Eigen::VectorXd> chronological_split(const FeatureMatrix& x,
                                                                const Eigen::VectorXd& y,
                                                                double train_fraction) {
    if (x.rows() != y.size()) throw DataError("split: feature/target row mismatch");
    const Eigen::Index n = x.rows();
    const Eigen::Index n_train = split_point(n, train_fraction);
    if (n_train == 0 || n_train == n)
        throw DataError("split leaves an empty side (n=" + std::to_string(n) + ")");

    SplitResult<FeatureMatrix, Eigen::VectorXd> r;
    r.train_x.values = x.values.topRows(n_train);
    r.test_x.values = x.values.bottomRows(n - n_train);
    r.train_x.feature_names = x.feature_names;
    r.test_x.feature_names = x.feature_names;
    r.train_x.sample_dates.assign(x.sample_dates.begin(), x.sample_dates.begin() + n_train);
    r.test_x.sample_dates.assign(x.sample_dates.begin() + n_train, x.sample_dates.end());
    r.train_y = y.head(n_train);
    r.test_y = y.tail(n - n_train);
    return r;
}

// --- feature ranking -------------------------------------------------------

namespace {

double mse(const Eigen::VectorXd& truth, const Eigen::VectorXd& pred) {
    return (truth - pred).squaredNorm() / static_cast<double>(truth.size());
}

} // namespace

std::vector<std::pair<int, double>> rank_feature_importance(const FeatureMatrix& x,
                                                            const Eigen::VectorXd& y,
                                                            const Forecaster& model,
                                                            int trials,
                                                            std::uint64_t seed) {
    if (!model.fitted()) throw DataError("feature ranking requires a fitted model");
    if (trials < 1) throw ConfigError("feature ranking trials must be >= 1");
    if (x.rows() != y.size()) throw DataError("feature ranking: row mismatch");

    const double base = mse(y, model.predict(x.values));
    Rng rng(seed);
    std::vector<std::pair<int, double>> scores;
    scores.reserve(x.cols());

    std::vector<Eigen::Index> perm(x.rows());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double total = 0.0;
        for (int t = 0; t < trials; ++t) {
            for (Eigen::Index i = 0; i < x.rows(); ++i) perm[i] = i;
            rng.shuffle(perm);
            Eigen::MatrixXd shuffled = x.values;
            for (Eigen::Index i = 0; i < x.rows(); ++i)
                shuffled(i, c) = x.values(perm[i], c);
            total += mse(y, model.predict(shuffled)) - base;
        }
        scores.emplace_back(static_cast<int>(c), total / trials);
    }
    std::stable_sort(scores.begin(), scores.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return scores;
}

void LinearRegressor::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    if (x.rows() != y.size() || x.rows() == 0)
        throw DataError("linear regressor: bad training shapes");
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += ridge_;
    coef_ = gram.ldlt().solve(xc.transpose() * yc);
    intercept_ = y_mean - x_mean * coef_;
    fitted_ = true;
}

Eigen::VectorXd LinearRegressor::predict(const Eigen::MatrixXd& x) const {
    if (!fitted_) throw DataError("linear regressor used before fit");
    return (x * coef_).array() + intercept_;
}

} // namespace cropcast
