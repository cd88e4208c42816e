#include "cropcast/metrics.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace cropcast {

void ForecastSeries::check_consistent() const {
    if (static_cast<Eigen::Index>(dates.size()) != predicted.size())
        throw DataError("forecast series: date/prediction length mismatch");
    if (truth && truth->size() != predicted.size())
        throw DataError("forecast series: truth length mismatch");
    for (std::size_t i = 1; i < dates.size(); ++i)
        if (!(dates[i] > dates[i - 1]))
            throw DataError("forecast series dates must be strictly increasing");
}

// --- ensembling ----------------------------------------------------------

ForecastSeries average_ensemble(const std::vector<ForecastSeries>& members) {
    if (members.empty()) throw DataError("ensemble needs at least one member");
    for (const auto& m : members) m.check_consistent();

    const auto& first = members.front();
    for (const auto& m : members) {
        if (m.dates != first.dates)
            throw DataError("ensemble members disagree on the date axis");
        if (m.truth.has_value() != first.truth.has_value() ||
            (m.truth && *m.truth != *first.truth))
            throw DataError("ensemble members disagree on the truth series");
    }

    ForecastSeries out;
    out.dates = first.dates;
    out.truth = first.truth;
    out.predicted = Eigen::VectorXd::Zero(first.size());
    for (const auto& m : members) out.predicted += m.predicted;
    out.predicted /= static_cast<double>(members.size());
    return out;
}

// --- metrics ---------------------------------------------------------------

namespace {

const Eigen::VectorXd& require_truth(const ForecastSeries& f) {
    f.check_consistent();
    if (!f.truth) throw DataError("metric requires a truth series");
    return *f.truth;
}

} // namespace

double mae(const ForecastSeries& f) {
    const auto& t = require_truth(f);
    if (t.size() == 0) throw DataError("metric on empty series");
    return (f.predicted - t).cwiseAbs().mean();
}

double rmse(const ForecastSeries& f) {
    const auto& t = require_truth(f);
    if (t.size() == 0) throw DataError("metric on empty series");
    return std::sqrt((f.predicted - t).squaredNorm() / static_cast<double>(t.size()));
}

double r2(const ForecastSeries& f) {
    const auto& t = require_truth(f);
    if (t.size() < 2) throw DataError("r2 needs at least two samples");
    const double sse = (f.predicted - t).squaredNorm();
    const double sst = (t.array() - t.mean()).matrix().squaredNorm();
    if (sst == 0.0)
        throw DataError("r2 undefined for a constant truth series");
    return 1.0 - sse / sst;
}

double agm(double mae_value, double rmse_value, double r2_value) {
    if (mae_value < 0.0 || rmse_value < 0.0)
        throw DataError("agm requires non-negative error inputs");
    return (rmse_value + mae_value) / 2.0 * (1.0 - r2_value);
}

MetricsReport MetricsReport::from_series(const ForecastSeries& f) {
    MetricsReport r;
    r.mae = cropcast::mae(f);
    r.rmse = cropcast::rmse(f);
    r.r2 = cropcast::r2(f);
    r.agm = cropcast::agm(r.mae, r.rmse, r.r2);
    return r;
}

MetricsReport MetricsReport::from_values(double mae_value, double rmse_value, double r2_value) {
    MetricsReport r;
    r.mae = mae_value;
    r.rmse = rmse_value;
    r.r2 = r2_value;
    r.agm = cropcast::agm(mae_value, rmse_value, r2_value);
    return r;
}

std::string MetricsReport::csv_row(const std::string& model_name) const {
    return model_name + "," + fmt_double(mae) + "," + fmt_double(rmse) + "," + fmt_double(r2) +
           "," + fmt_double(agm);
}

std::string MetricsReport::json_record(const std::string& model_name) const {
    nlohmann::json j = {
        {"model", model_name}, {"mae", mae}, {"rmse", rmse}, {"r2", r2}, {"agm", agm}};
    return j.dump();
}

// --- series io ---------------------------------------------------------

void write_forecast_csv(const std::string& path, const ForecastSeries& f) {
    f.check_consistent();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write forecast csv: " + path);
    out << (f.truth ? "date,predicted,truth\n" : "date,predicted\n");
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        out << f.dates[i].to_string() << ',' << fmt_double(f.predicted(i));
        if (f.truth) out << ',' << fmt_double((*f.truth)(i));
        out << '\n';
    }
    if (!out) throw DataError("failed writing forecast csv: " + path);
}

ForecastSeries read_forecast_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open forecast csv: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("forecast csv is empty: " + path);
    while (!line.empty() && line.back() == '\r') line.pop_back();

    bool has_truth;
    if (line == "date,predicted,truth")
        has_truth = true;
    else if (line == "date,predicted")
        has_truth = false;
    else
        throw DataError("bad forecast csv header in " + path);

    std::vector<Date> dates;
    std::vector<double> pred, truth;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string date_s, pred_s, truth_s;
        if (!std::getline(row, date_s, ',') || !std::getline(row, pred_s, ',') ||
            (has_truth && !std::getline(row, truth_s, ',')))
            throw DataError("forecast csv line " + std::to_string(line_no) + ": too few fields");
        dates.push_back(Date::parse(date_s));
        pred.push_back(std::stod(pred_s));
        if (has_truth) truth.push_back(std::stod(truth_s));
    }

    ForecastSeries f;
    f.dates = std::move(dates);
    f.predicted = Eigen::Map<Eigen::VectorXd>(pred.data(), static_cast<Eigen::Index>(pred.size()));
    if (has_truth)
        f.truth = Eigen::Map<Eigen::VectorXd>(truth.data(), static_cast<Eigen::Index>(truth.size()));
    f.check_consistent();
    return f;
}

} // namespace cropcast
