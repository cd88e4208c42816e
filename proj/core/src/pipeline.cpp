#include "cropcast/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "cropcast/plot.hpp"
#include "io_util.hpp"

namespace cropcast {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config ------------------------------------------------------------

namespace {

template <typename T>
T take(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config field '" + std::string(key) + "': " + e.what());
    }
}

} // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid json: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a json object");

    PipelineConfig cfg;
    cfg.target_kind = target_kind_from_string(take<std::string>(j, "target_kind", "yield"));
    cfg.synth = SynthConfig::defaults(cfg.target_kind);

    const json paths = take<json>(j, "paths", json::object());
    cfg.out_dir = take<std::string>(paths, "out_dir", cfg.out_dir);
    cfg.station_csv = take<std::string>(paths, "station_csv", "");
    cfg.raster_dir = take<std::string>(paths, "raster_dir", "");
    cfg.mask_path = take<std::string>(paths, "mask", "");

    const json lag = take<json>(j, "lag", json::object());
    cfg.lag.lag_days = take<int>(lag, "lag_days", cfg.lag.lag_days);
    cfg.lag.horizon_days = take<int>(lag, "horizon_days", cfg.lag.horizon_days);
    cfg.lag.n_params = take<int>(lag, "n_params", cfg.lag.n_params);

    cfg.pca_components = take<int>(j, "pca_components", cfg.pca_components);
    cfg.train_fraction = take<double>(j, "train_fraction", cfg.train_fraction);
    cfg.sequence_window = take<int>(j, "sequence_window", cfg.sequence_window);

    const json hist = take<json>(j, "histogram", json::object());
    cfg.histogram_bins = take<int>(hist, "n_bins", cfg.histogram_bins);
    cfg.histogram_lo_percentile = take<double>(hist, "lo_percentile", cfg.histogram_lo_percentile);
    cfg.histogram_hi_percentile = take<double>(hist, "hi_percentile", cfg.histogram_hi_percentile);

    const json train = take<json>(j, "train", json::object());
    cfg.train.loss = take<std::string>(train, "loss", cfg.train.loss);
    cfg.train.optimizer = take<std::string>(train, "optimizer", cfg.train.optimizer);
    cfg.train.learning_rate = take<double>(train, "learning_rate", cfg.train.learning_rate);
    cfg.train.max_epochs = take<int>(train, "max_epochs", cfg.train.max_epochs);
    cfg.train.batch_size = take<int>(train, "batch_size", cfg.train.batch_size);
    cfg.train.early_stop_patience =
        take<int>(train, "early_stop_patience", cfg.train.early_stop_patience);
    cfg.train.validation_fraction =
        take<double>(train, "validation_fraction", cfg.train.validation_fraction);
    cfg.train.weight_decay = take<double>(train, "weight_decay", cfg.train.weight_decay);
    cfg.train.seed = take<std::uint64_t>(train, "seed", cfg.train.seed);

    const json ens = take<json>(j, "ensemble", json::object());
    cfg.sim_members = take<int>(ens, "sim_members", cfg.sim_members);

    cfg.importance_trials = take<int>(j, "importance_trials", cfg.importance_trials);

    const json synth = take<json>(j, "synth", json::object());
    cfg.synth.seed = take<std::uint64_t>(synth, "seed", cfg.synth.seed);
    cfg.synth.n_days = take<int>(synth, "n_days", cfg.synth.n_days);
    cfg.synth.horizon_days = cfg.lag.horizon_days;
    cfg.synth.temperature_weights = take<std::vector<double>>(synth, "temperature_weights",
                                                              cfg.synth.temperature_weights);
    cfg.synth.moisture_weights =
        take<std::vector<double>>(synth, "moisture_weights", cfg.synth.moisture_weights);
    cfg.synth.base_level = take<double>(synth, "base_level", cfg.synth.base_level);
    cfg.synth.seasonal_amplitude =
        take<double>(synth, "seasonal_amplitude", cfg.synth.seasonal_amplitude);
    cfg.synth.seasonal_period = take<double>(synth, "seasonal_period", cfg.synth.seasonal_period);
    cfg.synth.noise_std = take<double>(synth, "noise_std", cfg.synth.noise_std);
    cfg.synth.image_width = take<int>(synth, "image_width", cfg.synth.image_width);
    cfg.synth.image_height = take<int>(synth, "image_height", cfg.synth.image_height);
    cfg.synth.pixel_spread_temperature =
        take<double>(synth, "pixel_spread_temperature", cfg.synth.pixel_spread_temperature);
    cfg.synth.pixel_spread_moisture =
        take<double>(synth, "pixel_spread_moisture", cfg.synth.pixel_spread_moisture);
    if (synth.contains("start_date"))
        cfg.synth.start_date = Date::parse(synth.at("start_date").get<std::string>());
    cfg.synth.target_kind = cfg.target_kind;

    cfg.resolve_paths();
    cfg.validate();
    return cfg;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    return from_json_text(detail::read_text_file(path));
}

void PipelineConfig::resolve_paths() {
    if (station_csv.empty()) station_csv = out_dir + "/station.csv";
    if (raster_dir.empty()) raster_dir = out_dir + "/rasters";
    if (mask_path.empty()) mask_path = raster_dir + "/mask.json";
}

void PipelineConfig::validate() const {
    lag.validate();
    train.validate();
    if (pca_components < 1) throw ConfigError("pca_components must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must be in (0, 1)");
    if (sequence_window < 1) throw ConfigError("sequence_window must be >= 1");
    if (histogram_bins < 1) throw ConfigError("histogram n_bins must be >= 1");
    if (sim_members < 1) throw ConfigError("ensemble sim_members must be >= 1");
    if (importance_trials < 1) throw ConfigError("importance_trials must be >= 1");
    synth.validate();
}

std::string PipelineConfig::to_json() const {
    json j = {
        {"target_kind", cropcast::to_string(target_kind)},
        {"paths",
         {{"out_dir", out_dir},
          {"station_csv", station_csv},
          {"raster_dir", raster_dir},
          {"mask", mask_path}}},
        {"lag",
         {{"lag_days", lag.lag_days},
          {"horizon_days", lag.horizon_days},
          {"n_params", lag.n_params}}},
        {"pca_components", pca_components},
        {"train_fraction", train_fraction},
        {"sequence_window", sequence_window},
        {"histogram",
         {{"n_bins", histogram_bins},
          {"lo_percentile", histogram_lo_percentile},
          {"hi_percentile", histogram_hi_percentile}}},
        {"train",
         {{"loss", train.loss},
          {"optimizer", train.optimizer},
          {"learning_rate", train.learning_rate},
          {"max_epochs", train.max_epochs},
          {"batch_size", train.batch_size},
          {"early_stop_patience", train.early_stop_patience},
          {"validation_fraction", train.validation_fraction},
          {"weight_decay", train.weight_decay},
          {"seed", train.seed}}},
        {"ensemble", {{"sim_members", sim_members}}},
        {"importance_trials", importance_trials},
        {"synth",
         {{"seed", synth.seed},
          {"n_days", synth.n_days},
          {"temperature_weights", synth.temperature_weights},
          {"moisture_weights", synth.moisture_weights},
          {"base_level", synth.base_level},
          {"seasonal_amplitude", synth.seasonal_amplitude},
          {"seasonal_period", synth.seasonal_period},
          {"noise_std", synth.noise_std},
          {"image_width", synth.image_width},
          {"image_height", synth.image_height},
          {"pixel_spread_temperature", synth.pixel_spread_temperature},
          {"pixel_spread_moisture", synth.pixel_spread_moisture},
          {"start_date", synth.start_date.to_string()}}},
    };
    return j.dump(2);
}

// --- synth ---------------------------------------------------------------

void cmd_synth(const PipelineConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    fs::create_directories(cfg.raster_dir);

    const auto station = gen_station_data(cfg.synth);
    write_station_csv(cfg.station_csv, station);

    const auto rasters = gen_raster_series(cfg.synth, station);
    write_mask(cfg.mask_path, rasters.mask);
    for (const auto& img : rasters.temperature)
        write_raster(cfg.raster_dir + "/temperature_" + img.date.to_string() + ".json", img);
    for (const auto& img : rasters.moisture)
        write_raster(cfg.raster_dir + "/moisture_" + img.date.to_string() + ".json", img);
}

// --- feature file io ------------------------------------------------------

namespace {

void require_upstream(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw DataError("missing " + path + "; run `cropcast " + producer + "` first");
}

void write_features_csv(const std::string& path, const FeatureMatrix& fm,
                        const Eigen::VectorXd& y) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write features file: " + path);
    out << "date,target";
    for (const auto& name : fm.feature_names) out << ',' << name;
    out << '\n';
    for (Eigen::Index r = 0; r < fm.rows(); ++r) {
        out << fm.sample_dates[r].to_string() << ',' << fmt_double(y(r));
        for (Eigen::Index c = 0; c < fm.cols(); ++c) out << ',' << fmt_double(fm.values(r, c));
        out << '\n';
    }
    if (!out) throw DataError("failed writing features file: " + path);
}

std::pair<FeatureMatrix, Eigen::VectorXd> read_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open features file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("features file is empty: " + path);
    while (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string f;
        while (std::getline(hs, f, ',')) header.push_back(f);
    }
    if (header.size() < 3 || header[0] != "date" || header[1] != "target")
        throw DataError("bad features file header in " + path);

    FeatureMatrix fm;
    fm.feature_names.assign(header.begin() + 2, header.end());
    std::vector<std::vector<double>> rows;
    std::vector<double> targets;
    while (std::getline(in, line)) {
        while (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string field;
        std::getline(row, field, ',');
        fm.sample_dates.push_back(Date::parse(field));
        std::getline(row, field, ',');
        targets.push_back(std::stod(field));
        std::vector<double> vals;
        while (std::getline(row, field, ',')) vals.push_back(std::stod(field));
        if (vals.size() != fm.feature_names.size())
            throw DataError("features file row width mismatch in " + path);
        rows.push_back(std::move(vals));
    }
    fm.values.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(fm.feature_names.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            fm.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    Eigen::VectorXd y =
        Eigen::Map<Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
    fm.check_consistent();
    return {std::move(fm), std::move(y)};
}

void write_cube_file(const std::string& manifest_path, const HistogramCube& cube) {
    const Eigen::MatrixXd flat = flatten_cube(cube);
    json dates = json::array();
    for (const auto& d : cube.dates) dates.push_back(d.to_string());
    json manifest = {
        {"format", "cropcast-cube"},
        {"time", static_cast<int>(cube.time_steps())},
        {"n_bins", cube.n_bins},
        {"n_bands", cube.n_bands},
        {"bands", {to_string(Band::surface_temperature), to_string(Band::moisture)}},
        {"dates", dates},
        {"data_file", detail::sibling_bin_name(manifest_path)},
    };
    detail::write_text_file(manifest_path, manifest.dump(2) + "\n");
    std::vector<float> blob;
    blob.reserve(static_cast<std::size_t>(flat.size()));
    for (Eigen::Index r = 0; r < flat.rows(); ++r)
        for (Eigen::Index c = 0; c < flat.cols(); ++c)
            blob.push_back(static_cast<float>(flat(r, c)));
    detail::write_f32_blob(detail::sibling_bin_path(manifest_path), blob.data(), blob.size());
}

HistogramCube read_cube_file(const std::string& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(detail::read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw DataError("corrupt cube manifest " + manifest_path + ": " + e.what());
    }
    if (manifest.value("format", "") != "cropcast-cube")
        throw DataError("not a cube file: " + manifest_path);
    const int time = manifest.at("time").get<int>();
    const int n_bins = manifest.at("n_bins").get<int>();
    const int n_bands = manifest.at("n_bands").get<int>();
    std::vector<Date> dates;
    for (const auto& d : manifest.at("dates")) dates.push_back(Date::parse(d.get<std::string>()));
    if (static_cast<int>(dates.size()) != time)
        throw DataError("cube date axis mismatch in " + manifest_path);

    const auto blob = detail::read_f32_blob(
        detail::sibling_bin_path(manifest_path),
        static_cast<std::size_t>(time) * n_bins * n_bands);
    Eigen::MatrixXd flat(time, n_bins * n_bands);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < flat.rows(); ++r)
        for (Eigen::Index c = 0; c < flat.cols(); ++c) flat(r, c) = blob[i++];
    return unflatten_cube(flat, n_bins, n_bands, dates);
}

} // namespace

// --- preprocess ----------------------------------------------------------

namespace {

struct StationFeatures {
    FeatureMatrix raw;
    Eigen::VectorXd y;
};

StationFeatures build_station_lag_features(const PipelineConfig& cfg) {
    const auto records = load_station_csv(cfg.station_csv, cfg.target_kind);
    const auto blocks = split_contiguous_blocks(records);

    StationFeatures out;
    std::vector<std::pair<FeatureMatrix, Eigen::VectorXd>> parts;
    Eigen::Index total = 0;
    for (const auto& block : blocks) {
        if (static_cast<int>(block.size()) < cfg.lag.lag_days + cfg.lag.horizon_days)
            continue; // season block too short to lag
        parts.push_back(build_lag_matrix(block, cfg.lag));
        total += parts.back().first.rows();
    }
    if (parts.empty())
        throw DataError("no station block is long enough for lag " +
                        std::to_string(cfg.lag.lag_days) + " + horizon " +
                        std::to_string(cfg.lag.horizon_days));

    out.raw.feature_names = parts.front().first.feature_names;
    out.raw.values.resize(total, parts.front().first.cols());
    out.y.resize(total);
    Eigen::Index at = 0;
    for (auto& [fm, y] : parts) {
        out.raw.values.middleRows(at, fm.rows()) = fm.values;
        out.y.segment(at, fm.rows()) = y;
        out.raw.sample_dates.insert(out.raw.sample_dates.end(), fm.sample_dates.begin(),
                                    fm.sample_dates.end());
        at += fm.rows();
    }
    return out;
}

} // namespace

void cmd_preprocess(const PipelineConfig& cfg) {
    require_upstream(cfg.station_csv, "synth");
    fs::create_directories(cfg.out_dir);

    // station branch: lag -> scale -> project
    StationFeatures station = build_station_lag_features(cfg);
    const Eigen::Index n_train = split_point(station.raw.rows(), cfg.train_fraction);
    if (n_train < cfg.pca_components)
        throw DataError("training rows (" + std::to_string(n_train) +
                        ") must be >= pca_components (" + std::to_string(cfg.pca_components) +
                        ")");

    FeatureMatrix train_rows;
    train_rows.values = station.raw.values.topRows(n_train);
    train_rows.feature_names = station.raw.feature_names;
    train_rows.sample_dates.assign(station.raw.sample_dates.begin(),
                                   station.raw.sample_dates.begin() + n_train);

    const Scaler scaler = fit_scaler(train_rows);
    const FeatureMatrix scaled_train = apply_scaler(scaler, train_rows);
    const PCAModel pca = fit_pca(scaled_train, cfg.pca_components);
    const FeatureMatrix features = pca_transform(pca, apply_scaler(scaler, station.raw));
    features.check_consistent();

    write_features_csv(cfg.features_csv(), features, station.y);

    std::vector<NamedTensor> preproc;
    preproc.push_back({"scaler/min", {static_cast<int>(scaler.min.size())}, scaler.min});
    preproc.push_back({"scaler/max", {static_cast<int>(scaler.max.size())}, scaler.max});
    preproc.push_back({"pca/mean", {pca.input_width()}, pca.mean});
    preproc.push_back({"pca/components",
                       {pca.input_width(), pca.n_components()},
                       Eigen::Map<const Eigen::VectorXd>(pca.components.data(),
                                                         pca.components.size())});
    preproc.push_back({"pca/explained_variance_ratio",
                       {pca.n_components()},
                       pca.explained_variance_ratio});
    save_tensor_container(cfg.preproc_weights(), preproc);

    // permutation ranking of the projected features, probed with a
    // closed-form linear model
    {
        FeatureMatrix train_feat;
        train_feat.values = features.values.topRows(n_train);
        train_feat.feature_names = features.feature_names;
        train_feat.sample_dates.assign(features.sample_dates.begin(),
                                       features.sample_dates.begin() + n_train);
        LinearRegressor probe;
        probe.fit(train_feat.values, station.y.head(n_train));
        const auto ranking = rank_feature_importance(train_feat, station.y.head(n_train), probe,
                                                     cfg.importance_trials, cfg.train.seed);
        std::ofstream out(cfg.importance_csv());
        if (!out) throw DataError("cannot write " + cfg.importance_csv());
        out << "feature,importance\n";
        for (const auto& [col, score] : ranking)
            out << features.feature_names[static_cast<std::size_t>(col)] << ','
                << fmt_double(score) << '\n';
    }

    // raster branch: mask -> daily moisture -> histograms -> cube
    require_upstream(cfg.mask_path, "synth");
    const LandMask mask = read_mask(cfg.mask_path);

    std::vector<RasterImage> temperature, moisture;
    for (const auto& entry : fs::directory_iterator(cfg.raster_dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.path().extension() != ".json" || name == "mask.json") continue;
        RasterImage img = read_raster(entry.path().string());
        (img.band == Band::surface_temperature ? temperature : moisture).push_back(std::move(img));
    }
    if (temperature.empty() || moisture.empty())
        throw DataError("no raster images under " + cfg.raster_dir + "; run `cropcast synth` first");
    auto by_date = [](const RasterImage& a, const RasterImage& b) { return a.date < b.date; };
    std::sort(temperature.begin(), temperature.end(), by_date);
    std::sort(moisture.begin(), moisture.end(), by_date);

    moisture = fill_moisture_gaps(moisture);
    for (auto& img : temperature) img = apply_mask(img, mask);
    for (auto& img : moisture) img = apply_mask(img, mask);

    // common contiguous span covered by both bands
    std::map<std::int64_t, const RasterImage*> temp_by_day, moist_by_day;
    for (const auto& img : temperature) temp_by_day[img.date.serial()] = &img;
    for (const auto& img : moisture) moist_by_day[img.date.serial()] = &img;
    std::vector<std::int64_t> days;
    for (const auto& [day, img] : temp_by_day)
        if (moist_by_day.count(day)) days.push_back(day);
    if (days.empty()) throw DataError("temperature and moisture series never overlap");
    for (std::size_t i = 1; i < days.size(); ++i)
        if (days[i] - days[i - 1] != 1)
            throw DataError("raster day coverage has a gap at " + Date(days[i]).to_string());

    const auto n_hist_train =
        static_cast<std::size_t>(split_point(static_cast<Eigen::Index>(days.size()),
                                             cfg.train_fraction));
    std::vector<RasterImage> temp_train, moist_train;
    for (std::size_t i = 0; i < n_hist_train; ++i) {
        temp_train.push_back(*temp_by_day[days[i]]);
        moist_train.push_back(*moist_by_day[days[i]]);
    }
    const HistogramConfig hist_cfg =
        derive_bin_edges(temp_train, moist_train, cfg.histogram_bins, cfg.histogram_lo_percentile,
                         cfg.histogram_hi_percentile);
    {
        json edges = {
            {to_string(Band::surface_temperature),
             hist_cfg.edges_for(Band::surface_temperature)},
            {to_string(Band::moisture), hist_cfg.edges_for(Band::moisture)},
        };
        json doc = {{"n_bins", hist_cfg.n_bins},
                    {"lo_percentile", cfg.histogram_lo_percentile},
                    {"hi_percentile", cfg.histogram_hi_percentile},
                    {"edges", edges}};
        detail::write_text_file(cfg.histogram_config_json(), doc.dump(2) + "\n");
    }

    std::vector<DayHistograms> day_hists;
    for (std::int64_t day : days) {
        DayHistograms dh;
        dh.date = Date(day);
        dh.bands[static_cast<int>(Band::surface_temperature)] =
            compute_histogram(*temp_by_day[day], hist_cfg, true);
        dh.bands[static_cast<int>(Band::moisture)] =
            compute_histogram(*moist_by_day[day], hist_cfg, true);
        day_hists.push_back(std::move(dh));
    }
    const HistogramCube cube = build_cube(day_hists, static_cast<int>(day_hists.size()));
    write_cube_file(cfg.cube_manifest(), cube);
}

// --- sample assembly -------------------------------------------------------

SampleSet station_samples(const PipelineConfig& cfg) {
    require_upstream(cfg.features_csv(), "preprocess");
    auto [features, y] = read_features_csv(cfg.features_csv());
    return make_sequences(features, y, cfg.sequence_window);
}

SampleSet raster_samples(const PipelineConfig& cfg) {
    require_upstream(cfg.cube_manifest(), "preprocess");
    require_upstream(cfg.station_csv, "synth");
    const HistogramCube cube = read_cube_file(cfg.cube_manifest());
    const auto records = load_station_csv(cfg.station_csv, cfg.target_kind);
    std::map<std::int64_t, double> target_by_day;
    for (const auto& rec : records) target_by_day[rec.date.serial()] = rec.target;

    // feature row for cube day x forecasts the target at x + horizon
    FeatureMatrix fm;
    const Eigen::MatrixXd flat = flatten_cube(cube);
    std::vector<Eigen::Index> keep;
    for (std::size_t t = 0; t < cube.dates.size(); ++t)
        if (target_by_day.count((cube.dates[t] + cfg.lag.horizon_days).serial()))
            keep.push_back(static_cast<Eigen::Index>(t));
    if (keep.empty()) throw DataError("no cube day has a station target at day + horizon");

    fm.values.resize(static_cast<Eigen::Index>(keep.size()), flat.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        fm.values.row(static_cast<Eigen::Index>(i)) = flat.row(keep[i]);
        const Date target_date = cube.dates[static_cast<std::size_t>(keep[i])] +
                                 cfg.lag.horizon_days;
        fm.sample_dates.push_back(target_date);
        y(static_cast<Eigen::Index>(i)) = target_by_day[target_date.serial()];
    }
    for (int b = 0; b < cube.n_bands; ++b)
        for (int k = 0; k < cube.n_bins; ++k)
            fm.feature_names.push_back(to_string(static_cast<Band>(b)) + "_bin" +
                                       std::to_string(k));
    return make_sequences(fm, y, cfg.sequence_window);
}

// --- train ---------------------------------------------------------------

namespace {

int kind_index(nn::ModelKind kind) { return static_cast<int>(kind); }

std::uint64_t derive_model_seed(const PipelineConfig& cfg, nn::ModelKind kind, int member) {
    return cfg.train.seed * 1000003ULL + static_cast<std::uint64_t>(kind_index(kind)) * 101ULL +
           static_cast<std::uint64_t>(member);
}

bool is_sim_kind(nn::ModelKind kind) {
    return kind == nn::ModelKind::sim_cnn_lstm_yield || kind == nn::ModelKind::sim_cnn_lstm_price;
}

std::string member_stem(nn::ModelKind kind, int member, int members) {
    std::string stem = nn::to_string(kind);
    if (members > 1) stem += ".m" + std::to_string(member);
    return stem;
}

} // namespace

void cmd_train(const PipelineConfig& cfg, const std::string& model_kind, int members) {
    const nn::ModelKind kind = nn::model_kind_from_string(model_kind);
    if (members <= 0) members = is_sim_kind(kind) ? cfg.sim_members : 1;

    const SampleSet all = is_sim_kind(kind) ? raster_samples(cfg) : station_samples(cfg);
    auto [train_set, test_set] = chronological_split_samples(all, cfg.train_fraction);
    (void)test_set;

    fs::create_directories(cfg.models_dir());
    for (int member = 0; member < members; ++member) {
        nn::ModelSpec spec;
        spec.kind = kind;
        spec.time_steps = static_cast<int>(train_set.x.front().rows());
        spec.features = static_cast<int>(train_set.x.front().cols());
        spec.seed = derive_model_seed(cfg, kind, member);

        Model model = make_model(spec);
        TrainConfig tc = cfg.train;
        tc.seed = spec.seed + 17;
        const TrainReport report = train(model, train_set, tc);

        const std::string stem = member_stem(kind, member, members);
        save_weights(model, cfg.models_dir() + "/" + stem + ".weights.json");
        write_train_report_csv(cfg.models_dir() + "/" + stem + ".train.csv", report);
    }
}

// --- forecast ----------------------------------------------------------

namespace {

ForecastSeries restrict_to_dates(const ForecastSeries& f, const std::set<std::int64_t>& days) {
    ForecastSeries out;
    std::vector<double> pred, truth;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        if (!days.count(f.dates[i].serial())) continue;
        out.dates.push_back(f.dates[i]);
        pred.push_back(f.predicted(i));
        if (f.truth) truth.push_back((*f.truth)(i));
    }
    out.predicted =
        Eigen::Map<Eigen::VectorXd>(pred.data(), static_cast<Eigen::Index>(pred.size()));
    if (f.truth)
        out.truth =
            Eigen::Map<Eigen::VectorXd>(truth.data(), static_cast<Eigen::Index>(truth.size()));
    return out;
}

} // namespace

void cmd_forecast(const PipelineConfig& cfg, const std::vector<std::string>& weight_files) {
    std::vector<std::string> files = weight_files;
    if (files.empty()) {
        require_upstream(cfg.models_dir(), "train");
        for (const auto& entry : fs::directory_iterator(cfg.models_dir())) {
            const std::string name = entry.path().filename().string();
            if (name.size() > 13 && name.substr(name.size() - 13) == ".weights.json")
                files.push_back(entry.path().string());
        }
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw DataError("no weight files under " + cfg.models_dir() +
                            "; run `cropcast train` first");
    }

    // test-split samples per branch, assembled lazily
    std::optional<std::pair<SampleSet, SampleSet>> station_split, raster_split;
    auto test_for = [&](nn::ModelKind kind) -> const SampleSet& {
        if (is_sim_kind(kind)) {
            if (!raster_split)
                raster_split = chronological_split_samples(raster_samples(cfg), cfg.train_fraction);
            return raster_split->second;
        }
        if (!station_split)
            station_split = chronological_split_samples(station_samples(cfg), cfg.train_fraction);
        return station_split->second;
    };

    struct Entry {
        std::string stem;
        nn::ModelKind kind;
        ForecastSeries series;
    };
    std::vector<Entry> entries;
    for (const auto& file : files) {
        require_upstream(file, "train");
        const nn::ModelSpec spec = peek_weight_spec(file);
        const Model model = load_weights(spec, file);
        const SampleSet& test = test_for(spec.kind);

        ForecastSeries f;
        f.dates = test.dates;
        f.predicted = predict(model, test.x);
        f.truth = test.y;

        std::string stem = fs::path(file).filename().string();
        stem = stem.substr(0, stem.size() - 13); // drop ".weights.json"
        entries.push_back({stem, spec.kind, std::move(f)});
    }

    // one shared date axis across both branches
    std::set<std::int64_t> common;
    bool first = true;
    for (const auto& e : entries) {
        std::set<std::int64_t> days;
        for (const auto& d : e.series.dates) days.insert(d.serial());
        if (first) {
            common = std::move(days);
            first = false;
        } else {
            std::set<std::int64_t> inter;
            std::set_intersection(common.begin(), common.end(), days.begin(), days.end(),
                                  std::inserter(inter, inter.begin()));
            common = std::move(inter);
        }
    }
    if (common.empty()) throw DataError("forecast branches share no test dates");

    fs::create_directories(cfg.forecasts_dir());
    std::vector<ForecastSeries> station_members, sim_members;
    for (auto& e : entries) {
        e.series = restrict_to_dates(e.series, common);
        write_forecast_csv(cfg.forecasts_dir() + "/" + e.stem + ".csv", e.series);
        if (e.kind == nn::ModelKind::att_cnn_lstm || e.kind == nn::ModelKind::seriesnet_gru)
            station_members.push_back(e.series);
        else if (is_sim_kind(e.kind))
            sim_members.push_back(e.series);
    }

    std::optional<ForecastSeries> station_ens, sim_ens;
    if (station_members.size() >= 2) {
        station_ens = average_ensemble(station_members);
        write_forecast_csv(cfg.forecasts_dir() + "/" + std::string(kStationEnsembleName) + ".csv",
                           *station_ens);
    }
    if (!sim_members.empty()) {
        sim_ens = average_ensemble(sim_members);
        write_forecast_csv(cfg.forecasts_dir() + "/" + std::string(kSimEnsembleName) + ".csv",
                           *sim_ens);
    }
    if (station_ens && sim_ens) {
        const ForecastSeries voting = average_ensemble({*station_ens, *sim_ens});
        write_forecast_csv(cfg.forecasts_dir() + "/" + std::string(kVotingEnsembleName) + ".csv",
                           voting);
    }
}

// --- evaluate ----------------------------------------------------------

namespace {

std::vector<std::string> discover_forecasts(const PipelineConfig& cfg) {
    require_upstream(cfg.forecasts_dir(), "forecast");
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(cfg.forecasts_dir()))
        if (entry.path().extension() == ".csv") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw DataError("no forecasts under " + cfg.forecasts_dir() +
                        "; run `cropcast forecast` first");
    return files;
}

/// Row order: baseline first, then the SIM ensemble, the station
/// ensemble, and the final voting ensemble; member forecasts follow.
int row_rank(const std::string& stem) {
    if (stem == "lstm_baseline") return 0;
    if (stem == kSimEnsembleName) return 1;
    if (stem == kStationEnsembleName) return 2;
    if (stem == kVotingEnsembleName) return 3;
    return 4;
}

std::vector<std::pair<std::string, MetricsReport>> score_forecasts(
    const PipelineConfig& cfg, const std::vector<std::string>& forecast_files) {
    std::vector<std::string> files =
        forecast_files.empty() ? discover_forecasts(cfg) : forecast_files;

    std::vector<std::pair<std::string, MetricsReport>> rows;
    for (const auto& file : files) {
        require_upstream(file, "forecast");
        const ForecastSeries f = read_forecast_csv(file);
        if (!f.truth) throw DataError("forecast file has no truth column: " + file);
        rows.emplace_back(fs::path(file).stem().string(), MetricsReport::from_series(f));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        const int ra = row_rank(a.first), rb = row_rank(b.first);
        return ra != rb ? ra < rb : a.first < b.first;
    });
    return rows;
}

} // namespace

void cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& forecast_files) {
    const auto rows = score_forecasts(cfg, forecast_files);
    fs::create_directories(cfg.out_dir);

    std::ostringstream csv;
    csv << kMetricsCsvHeader << '\n';
    json records = json::array();
    for (const auto& [name, report] : rows) {
        csv << report.csv_row(name) << '\n';
        records.push_back(json::parse(report.json_record(name)));
    }
    detail::write_text_file(cfg.metrics_csv(), csv.str());
    detail::write_text_file(cfg.metrics_json(), records.dump(2) + "\n");
}

// --- report ------------------------------------------------------------

void cmd_report(const PipelineConfig& cfg, const std::vector<std::string>& forecast_files) {
    std::vector<std::string> files =
        forecast_files.empty() ? discover_forecasts(cfg) : forecast_files;

    // plot the ensembles when present, otherwise everything given
    std::vector<std::string> plot_files;
    for (const auto& f : files)
        if (row_rank(fs::path(f).stem().string()) < 4) plot_files.push_back(f);
    if (plot_files.empty()) plot_files = files;

    std::vector<PlotSeries> lines;
    for (const auto& file : plot_files) {
        const ForecastSeries f = read_forecast_csv(file);
        if (lines.empty() && f.truth)
            lines.push_back({"truth", f.dates, *f.truth});
        lines.push_back({fs::path(file).stem().string(), f.dates, f.predicted});
    }
    const std::string unit =
        cfg.target_kind == TargetKind::yield ? "pounds/acre" : "US dollars";
    write_forecast_svg(cfg.report_svg(),
                       std::string("Forecasted vs. true ") +
                           (cfg.target_kind == TargetKind::yield ? "yields" : "prices"),
                       unit, lines);

    const auto rows = score_forecasts(cfg, files);
    std::ostringstream md;
    md << "# Forecast report\n\n";
    md << "Target: " << cropcast::to_string(cfg.target_kind) << " (" << unit << ")\n\n";
    md << "| model | MAE | RMSE | R^2 | AGM |\n";
    md << "|---|---|---|---|---|\n";
    for (const auto& [name, r] : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "| %s | %.4g | %.4g | %.4g | %.4g |\n", name.c_str(),
                      r.mae, r.rmse, r.r2, r.agm);
        md << buf;
    }
    md << "\n![forecast plot](report.svg)\n";
    detail::write_text_file(cfg.report_md(), md.str());
}

} // namespace cropcast
