#include "cropcast/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "io_util.hpp"

namespace cropcast {

using nlohmann::json;
using nn::ParamVec;
using nn::Seq;

void TrainConfig::validate() const {
    if (loss != "mse") throw ConfigError("unsupported loss '" + loss + "'");
    if (optimizer != "adam") throw ConfigError("unsupported optimizer '" + optimizer + "'");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ConfigError("validation_fraction must be in (0, 1)");
}

void SampleSet::check_consistent() const {
    if (y.size() != static_cast<Eigen::Index>(x.size()) || dates.size() != x.size())
        throw DataError("sample set: feature/target/date count mismatch");
}

Model make_model(const nn::ModelSpec& spec) {
    Model m;
    m.net = nn::build_model(spec);
    return m;
}

namespace {

/// Time-major minibatch from sample-major storage.
Seq gather_batch(const std::vector<Eigen::MatrixXd>& samples, const std::vector<std::size_t>& idx,
                 std::size_t begin, std::size_t end) {
    const Eigen::Index steps = samples[idx[begin]].rows();
    const Eigen::Index feats = samples[idx[begin]].cols();
    Seq batch(steps);
    for (Eigen::Index t = 0; t < steps; ++t)
        batch[t].resize(static_cast<Eigen::Index>(end - begin), feats);
    for (std::size_t b = begin; b < end; ++b) {
        const Eigen::MatrixXd& s = samples[idx[b]];
        for (Eigen::Index t = 0; t < steps; ++t) batch[t].row(static_cast<Eigen::Index>(b - begin)) = s.row(t);
    }
    return batch;
}

double scaled_mse_over(const Model& model, const std::vector<Eigen::MatrixXd>& x,
                       const Eigen::VectorXd& y_scaled, std::size_t begin, std::size_t end,
                       int batch_size) {
    double total = 0.0;
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(idx.size(), at + static_cast<std::size_t>(batch_size));
        const Seq batch = gather_batch(x, idx, at, stop);
        const Eigen::VectorXd pred = model.net->forward(batch, nullptr, nullptr);
        for (std::size_t i = at; i < stop; ++i)
            total += std::pow(pred(static_cast<Eigen::Index>(i - at)) -
                                  y_scaled(static_cast<Eigen::Index>(idx[i])),
                              2.0);
    }
    return total / static_cast<double>(idx.size());
}

} // namespace

TrainReport train(Model& model, const SampleSet& data, const TrainConfig& cfg) {
    const auto t_start = std::chrono::steady_clock::now();
    cfg.validate();
    data.check_consistent();
    if (data.size() == 0) throw DataError("training data is empty");

    const std::size_t n = data.size();
    std::size_t n_val = static_cast<std::size_t>(
        std::floor(cfg.validation_fraction * static_cast<double>(n)));
    if (n_val == 0) n_val = 1;
    if (n_val >= n) throw DataError("not enough samples for a validation split");
    const std::size_t n_train = n - n_val;

    // min-max scale targets on the fitted portion only
    double y_min = data.y(0), y_max = data.y(0);
    for (std::size_t i = 0; i < n_train; ++i) {
        y_min = std::min(y_min, data.y(static_cast<Eigen::Index>(i)));
        y_max = std::max(y_max, data.y(static_cast<Eigen::Index>(i)));
    }
    model.target.min = y_min;
    model.target.span = y_max > y_min ? y_max - y_min : 1.0;
    Eigen::VectorXd y_scaled(data.y.size());
    for (Eigen::Index i = 0; i < data.y.size(); ++i) y_scaled(i) = model.target.scale(data.y(i));

    TrainReport report;
    if (cfg.max_epochs == 0) {
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        return report;
    }

    nn::ParamVec& params = model.net->params();
    ParamVec m = ParamVec::Zero(params.size());
    ParamVec v = ParamVec::Zero(params.size());
    ParamVec grad = ParamVec::Zero(params.size());
    ParamVec best_params = params;
    double best_val = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    long step = 0;

    Rng rng(cfg.seed);
    nn::TrainCtx train_ctx{&rng};
    std::vector<std::size_t> order(n_train);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        for (std::size_t i = 0; i < n_train; ++i) order[i] = i;
        rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t at = 0; at < n_train; at += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(n_train, at + static_cast<std::size_t>(cfg.batch_size));
            const auto bsz = static_cast<Eigen::Index>(stop - at);

            const Seq batch = gather_batch(data.x, order, at, stop);
            Eigen::VectorXd y_batch(bsz);
            for (Eigen::Index b = 0; b < bsz; ++b)
                y_batch(b) = y_scaled(static_cast<Eigen::Index>(order[at + b]));

            auto tape = model.net->make_tape();
            const Eigen::VectorXd pred = model.net->forward(batch, tape.get(), &train_ctx);
            const Eigen::VectorXd err = pred - y_batch;
            const double loss = err.squaredNorm() / static_cast<double>(bsz);
            if (!std::isfinite(loss))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
            epoch_loss += loss * static_cast<double>(bsz);

            grad.setZero();
            model.net->backward(2.0 * err / static_cast<double>(bsz), *tape, grad);

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
            v = cfg.adam_beta2 * v.array().matrix() +
                (1.0 - cfg.adam_beta2) * grad.array().square().matrix();
            params.array() -= cfg.learning_rate * (m.array() / bc1) /
                              ((v.array() / bc2).sqrt() + cfg.adam_eps);
            if (cfg.weight_decay > 0.0)
                params.array() -= cfg.learning_rate * cfg.weight_decay * params.array();
            nn::quantize_to_f32(params);
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(n_train));

        const double val_loss =
            scaled_mse_over(model, data.x, y_scaled, n_train, n, cfg.batch_size);
        if (!std::isfinite(val_loss))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        report.val_loss.push_back(val_loss);
        report.stopped_epoch = epoch;

        if (val_loss < best_val) {
            best_val = val_loss;
            best_params = params;
            epochs_since_best = 0;
        } else if (++epochs_since_best >= cfg.early_stop_patience) {
            break;
        }
    }

    params = best_params;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

Eigen::VectorXd predict(const Model& model, const std::vector<Eigen::MatrixXd>& x) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(x.size()));
    constexpr std::size_t kChunk = 128;
    std::vector<std::size_t> idx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) idx[i] = i;
    for (std::size_t at = 0; at < x.size(); at += kChunk) {
        const std::size_t stop = std::min(x.size(), at + kChunk);
        const Seq batch = gather_batch(x, idx, at, stop);
        const Eigen::VectorXd pred = model.net->forward(batch, nullptr, nullptr);
        for (std::size_t i = at; i < stop; ++i)
            out(static_cast<Eigen::Index>(i)) =
                model.target.unscale(pred(static_cast<Eigen::Index>(i - at)));
    }
    if (!out.allFinite()) throw NumericError("prediction produced non-finite values");
    return out;
}

// --- persistence ---------------------------------------------------------

void save_weights(const Model& model, const std::string& manifest_path) {
    const auto& layout = model.net->layout();
    const auto& params = model.net->params();

    json tensors = json::array();
    std::size_t offset_bytes = 0;
    for (const auto& t : layout.tensors()) {
        tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset_bytes", offset_bytes}});
        offset_bytes += t.size * sizeof(float);
    }
    json manifest = {
        {"format", "cropcast-weights"},
        {"dtype", "float32"},
        {"byte_order", "little"},
        {"layout", "column-major"},
        {"model_spec", json::parse(model.net->spec().to_json())},
        {"target_scale", {{"min", model.target.min}, {"span", model.target.span}}},
        {"tensors", tensors},
        {"total_bytes", offset_bytes},
        {"data_file", detail::sibling_bin_name(manifest_path)},
    };
    detail::write_text_file(manifest_path, manifest.dump(2) + "\n");

    std::vector<float> blob(params.size());
    for (Eigen::Index i = 0; i < params.size(); ++i) blob[i] = static_cast<float>(params(i));
    detail::write_f32_blob(detail::sibling_bin_path(manifest_path), blob.data(), blob.size());
}

namespace {

json parse_weight_manifest(const std::string& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(detail::read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw DataError("corrupt weight manifest " + manifest_path + ": " + e.what());
    }
    if (manifest.value("format", "") != "cropcast-weights")
        throw DataError("not a weight manifest: " + manifest_path);
    return manifest;
}

} // namespace

nn::ModelSpec peek_weight_spec(const std::string& manifest_path) {
    const json manifest = parse_weight_manifest(manifest_path);
    return nn::ModelSpec::from_json(manifest.at("model_spec").dump());
}

Model load_weights(const nn::ModelSpec& spec, const std::string& manifest_path) {
    const json manifest = parse_weight_manifest(manifest_path);

    Model model = make_model(spec);
    const auto& layout = model.net->layout();

    const json& tensors = manifest.at("tensors");
    std::size_t offset_bytes = 0;
    const auto& expected = layout.tensors();
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i >= tensors.size())
            throw DataError("weight file is missing tensor '" + expected[i].name + "'");
        const json& t = tensors[i];
        const auto name = t.at("name").get<std::string>();
        if (name != expected[i].name)
            throw DataError("weight tensor mismatch: expected '" + expected[i].name +
                            "', found '" + name + "'");
        const auto shape = t.at("shape").get<std::vector<int>>();
        if (shape != expected[i].shape)
            throw DataError("weight tensor shape mismatch for '" + name + "'");
        if (t.at("offset_bytes").get<std::size_t>() != offset_bytes)
            throw DataError("weight tensor offset mismatch for '" + name + "'");
        offset_bytes += expected[i].size * sizeof(float);
    }
    if (tensors.size() > expected.size())
        throw DataError("weight file has unexpected tensor '" +
                        tensors[expected.size()].at("name").get<std::string>() + "'");
    if (manifest.at("total_bytes").get<std::size_t>() != offset_bytes)
        throw DataError("weight manifest total size mismatch");

    const auto blob =
        detail::read_f32_blob(detail::sibling_bin_path(manifest_path), offset_bytes / sizeof(float));
    auto& params = model.net->params();
    for (Eigen::Index i = 0; i < params.size(); ++i)
        params(i) = static_cast<double>(blob[static_cast<std::size_t>(i)]);

    const json& ts = manifest.at("target_scale");
    model.target.min = ts.at("min").get<double>();
    model.target.span = ts.at("span").get<double>();
    return model;
}

void save_tensor_container(const std::string& manifest_path,
                           const std::vector<NamedTensor>& tensors) {
    json list = json::array();
    std::size_t offset_bytes = 0;
    std::vector<float> blob;
    for (const auto& t : tensors) {
        std::size_t expect = 1;
        for (int d : t.shape) expect *= static_cast<std::size_t>(d);
        if (expect != static_cast<std::size_t>(t.data.size()))
            throw DataError("tensor '" + t.name + "' data does not match its shape");
        list.push_back({{"name", t.name}, {"shape", t.shape}, {"offset_bytes", offset_bytes}});
        offset_bytes += expect * sizeof(float);
        for (Eigen::Index i = 0; i < t.data.size(); ++i)
            blob.push_back(static_cast<float>(t.data(i)));
    }
    json manifest = {
        {"format", "cropcast-tensors"},
        {"dtype", "float32"},
        {"byte_order", "little"},
        {"layout", "column-major"},
        {"tensors", list},
        {"total_bytes", offset_bytes},
        {"data_file", detail::sibling_bin_name(manifest_path)},
    };
    detail::write_text_file(manifest_path, manifest.dump(2) + "\n");
    detail::write_f32_blob(detail::sibling_bin_path(manifest_path), blob.data(), blob.size());
}

std::vector<NamedTensor> load_tensor_container(const std::string& manifest_path) {
    json manifest;
    try {
        manifest = json::parse(detail::read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw DataError("corrupt tensor manifest " + manifest_path + ": " + e.what());
    }
    if (manifest.value("format", "") != "cropcast-tensors")
        throw DataError("not a tensor container: " + manifest_path);

    const auto total_bytes = manifest.at("total_bytes").get<std::size_t>();
    const auto blob =
        detail::read_f32_blob(detail::sibling_bin_path(manifest_path), total_bytes / sizeof(float));

    std::vector<NamedTensor> tensors;
    for (const auto& t : manifest.at("tensors")) {
        NamedTensor nt;
        nt.name = t.at("name").get<std::string>();
        nt.shape = t.at("shape").get<std::vector<int>>();
        std::size_t count = 1;
        for (int d : nt.shape) count *= static_cast<std::size_t>(d);
        const auto offset = t.at("offset_bytes").get<std::size_t>() / sizeof(float);
        if (offset + count > blob.size())
            throw DataError("tensor '" + nt.name + "' overruns the blob in " + manifest_path);
        nt.data.resize(static_cast<Eigen::Index>(count));
        for (std::size_t i = 0; i < count; ++i)
            nt.data(static_cast<Eigen::Index>(i)) = static_cast<double>(blob[offset + i]);
        tensors.push_back(std::move(nt));
    }
    return tensors;
}

void write_train_report_csv(const std::string& path, const TrainReport& report) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write train report: " + path);
    out << "epoch,train_loss,val_loss\n";
    for (int e = 0; e < report.stopped_epoch; ++e)
        out << (e + 1) << ',' << fmt_double(report.train_loss[e]) << ','
            << fmt_double(report.val_loss[e]) << '\n';
    if (!out) throw DataError("failed writing train report: " + path);
}

// --- sample assembly -------------------------------------------------------

SampleSet make_sequences(const FeatureMatrix& features, const Eigen::VectorXd& y, int window) {
    if (window < 1) throw ConfigError("sequence window must be >= 1");
    features.check_consistent();
    if (features.rows() != y.size()) throw DataError("sequence assembly: row/target mismatch");
    if (features.rows() < window)
        throw DataError("not enough feature rows (" + std::to_string(features.rows()) +
                        ") for a window of " + std::to_string(window));

    SampleSet set;
    for (Eigen::Index j = window - 1; j < features.rows(); ++j) {
        bool contiguous = true;
        for (Eigen::Index i = j - window + 2; i <= j; ++i)
            if (features.sample_dates[i] - features.sample_dates[i - 1] != 1) {
                contiguous = false;
                break;
            }
        if (!contiguous) continue;
        set.x.push_back(features.values.middleRows(j - window + 1, window));
        set.dates.push_back(features.sample_dates[j]);
    }
    set.y.resize(static_cast<Eigen::Index>(set.x.size()));
    Eigen::Index k = 0;
    for (Eigen::Index j = window - 1; j < features.rows(); ++j) {
        bool contiguous = true;
        for (Eigen::Index i = j - window + 2; i <= j; ++i)
            if (features.sample_dates[i] - features.sample_dates[i - 1] != 1) {
                contiguous = false;
                break;
            }
        if (contiguous) set.y(k++) = y(j);
    }
    if (set.size() == 0) throw DataError("sequence assembly produced no samples");
    return set;
}

std::pair<SampleSet, SampleSet> chronological_split_samples(const SampleSet& data,
                                                            double train_fraction) {
    data.check_consistent();
    const auto n = static_cast<Eigen::Index>(data.size());
    const Eigen::Index n_train = split_point(n, train_fraction);
    if (n_train == 0 || n_train == n)
        throw DataError("sample split leaves an empty side (n=" + std::to_string(n) + ")");

    SampleSet train, test;
    train.x.assign(data.x.begin(), data.x.begin() + n_train);
    test.x.assign(data.x.begin() + n_train, data.x.end());
    train.dates.assign(data.dates.begin(), data.dates.begin() + n_train);
    test.dates.assign(data.dates.begin() + n_train, data.dates.end());
    train.y = data.y.head(n_train);
    test.y = data.y.tail(n - n_train);
    return {std::move(train), std::move(test)};
}

} // namespace cropcast
