#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "cropcast/pipeline.hpp"

namespace {

// exit codes: 0 ok, 2 config, 3 data, 4 numeric, 1 anything else
constexpr int kOk = 0;
constexpr int kOtherError = 1;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericError = 4;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;
};

cropcast::PipelineConfig load_config(const GlobalOpts& g) {
    nlohmann::json doc = nlohmann::json::object();
    if (!g.config_path.empty()) {
        std::ifstream in(g.config_path);
        if (!in) throw cropcast::ConfigError("config file not found: " + g.config_path);
        std::stringstream buf;
        buf << in.rdbuf();
        try {
            doc = nlohmann::json::parse(buf.str());
        } catch (const nlohmann::json::exception& e) {
            throw cropcast::ConfigError(std::string("config is not valid json: ") + e.what());
        }
    }
    if (!g.out_dir.empty()) doc["paths"]["out_dir"] = g.out_dir;
    if (g.seed >= 0) {
        doc["train"]["seed"] = static_cast<std::uint64_t>(g.seed);
        doc["synth"]["seed"] = static_cast<std::uint64_t>(g.seed);
    }
    return cropcast::PipelineConfig::from_json_text(doc.dump());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cropcast: daily crop yield/price forecasting from soil series and "
                 "satellite histogram series"};
    app.require_subcommand(1);

    GlobalOpts global;
    app.add_option("--config", global.config_path, "pipeline config (json)")->configurable(false);
    app.add_option("--seed", global.seed, "override the training and synth seeds");
    app.add_option("--out", global.out_dir, "override the output directory");
    app.fallthrough();

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    auto* preprocess =
        app.add_subcommand("preprocess", "build lag/PCA features and histogram cube");

    std::string model_kind;
    int members = 0;
    auto* train = app.add_subcommand("train", "train one model kind");
    train->add_option("--model", model_kind,
                      "att_cnn_lstm | seriesnet_gru | sim_cnn_lstm_yield | "
                      "sim_cnn_lstm_price | lstm_baseline")
        ->required();
    train->add_option("--members", members, "seed-varied copies to train (SIM ensemble)");

    std::vector<std::string> weight_files;
    auto* forecast = app.add_subcommand("forecast", "predict the chronological test split");
    forecast->add_option("--weights", weight_files, "weight manifests (default: all trained)");

    std::vector<std::string> forecast_files;
    auto* evaluate = app.add_subcommand("evaluate", "score forecasts into metrics.csv/json");
    evaluate->add_option("--forecasts", forecast_files, "forecast csv files (default: all)");

    std::vector<std::string> report_files;
    auto* report = app.add_subcommand("report", "forecast-vs-truth plot and metrics table");
    report->add_option("--forecasts", report_files, "forecast csv files (default: all)");

    CLI11_PARSE(app, argc, argv);

    try {
        const cropcast::PipelineConfig cfg = load_config(global);
        if (synth->parsed()) {
            cropcast::cmd_synth(cfg);
            std::cout << "synth: wrote " << cfg.station_csv << " and " << cfg.raster_dir << "\n";
        } else if (preprocess->parsed()) {
            cropcast::cmd_preprocess(cfg);
            std::cout << "preprocess: wrote " << cfg.features_csv() << " and "
                      << cfg.cube_manifest() << "\n";
        } else if (train->parsed()) {
            cropcast::cmd_train(cfg, model_kind, members);
            std::cout << "train: wrote weights under " << cfg.models_dir() << "\n";
        } else if (forecast->parsed()) {
            cropcast::cmd_forecast(cfg, weight_files);
            std::cout << "forecast: wrote series under " << cfg.forecasts_dir() << "\n";
        } else if (evaluate->parsed()) {
            cropcast::cmd_evaluate(cfg, forecast_files);
            std::cout << "evaluate: wrote " << cfg.metrics_csv() << "\n";
        } else if (report->parsed()) {
            cropcast::cmd_report(cfg, report_files);
            std::cout << "report: wrote " << cfg.report_svg() << " and " << cfg.report_md()
                      << "\n";
        }
    } catch (const cropcast::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const cropcast::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const cropcast::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumericError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOtherError;
    }
    return kOk;
}
