#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cropcast/data.hpp"
#include "cropcast/nn/model.hpp"

namespace cropcast {

/// Training hyperparameters. Loss is mean squared error and the
/// optimizer adaptive-moment gradient descent; both are named here so a
/// config document states them explicitly.
struct TrainConfig {
    std::string loss = "mse";
    std::string optimizer = "adam";
    double learning_rate = 1e-3;
    int max_epochs = 100;
    int batch_size = 32;
    int early_stop_patience = 10;
    double validation_fraction = 0.1; // chronological tail of the training data
    std::uint64_t seed = 0;
    double weight_decay = 0.0; // decoupled, applied with the learning rate
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct TrainReport {
    std::vector<double> train_loss; // per epoch, on the scaled target
    std::vector<double> val_loss;
    int stopped_epoch = 0;
    double wall_seconds = 0.0;
};

/// samples x time x features plus aligned targets and forecast dates.
struct SampleSet {
    std::vector<Eigen::MatrixXd> x; // each time x features
    Eigen::VectorXd y;
    std::vector<Date> dates;

    std::size_t size() const { return x.size(); }
    void check_consistent() const;
};

/// Min-max map applied to targets during training and inverted at
/// prediction; identity for a freshly built model.
struct TargetScale {
    double min = 0.0;
    double span = 1.0;

    double scale(double y) const { return (y - min) / span; }
    double unscale(double s) const { return s * span + min; }
};

/// A network plus the target scaling it was trained with.
struct Model {
    std::unique_ptr<nn::Network> net;
    TargetScale target;
};

Model make_model(const nn::ModelSpec& spec);

/// Deterministic minibatch training with early stopping on the
/// chronological validation tail; the returned parameters always achieve
/// the best recorded validation loss.
TrainReport train(Model& model, const SampleSet& data, const TrainConfig& cfg);

/// One finite scalar per sample, in raw target units. Pure function of
/// (model, x).
Eigen::VectorXd predict(const Model& model, const std::vector<Eigen::MatrixXd>& x);

// --- persistence ---------------------------------------------------------

/// Writes a JSON manifest (tensor names, shapes, byte offsets, model
/// spec, target scale) plus a sibling little-endian float32 blob.
/// load(save(m)) restores bit-identical parameters.
void save_weights(const Model& model, const std::string& manifest_path);
Model load_weights(const nn::ModelSpec& spec, const std::string& manifest_path);

/// Reads just the embedded model spec, for tooling that discovers models
/// from their weight files.
nn::ModelSpec peek_weight_spec(const std::string& manifest_path);

/// The same manifest + float32-blob container, for named tensors that are
/// not model parameters (fitted scalers, PCA bases).
struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    Eigen::VectorXd data; // column-major flattening
};

void save_tensor_container(const std::string& manifest_path,
                           const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensor_container(const std::string& manifest_path);

void write_train_report_csv(const std::string& path, const TrainReport& report);

// --- sample assembly -------------------------------------------------------

/// Slides a `window`-row view over per-day feature rows: the sample for
/// row j stacks rows j-window+1..j and predicts y(j). Windows that would
/// straddle a date gap are skipped.
SampleSet make_sequences(const FeatureMatrix& features, const Eigen::VectorXd& y, int window);

std::pair<SampleSet, SampleSet> chronological_split_samples(const SampleSet& data,
                                                            double train_fraction);

} // namespace cropcast
