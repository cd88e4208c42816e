#pragma once

#include <memory>
#include <string>

#include "cropcast/nn/layers.hpp"
#include "cropcast/nn/params.hpp"

namespace cropcast::nn {

enum class ModelKind {
    att_cnn_lstm,
    seriesnet_gru,
    sim_cnn_lstm_yield,
    sim_cnn_lstm_price,
    lstm_baseline,
};

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

// Layer widths per architecture. The structures carry defaults so a
// spec document only needs to name the kind and input shape.

struct AttCnnLstmHyper {
    int conv1_filters = 64;
    int conv2_filters = 32;
    int kernel = 3;
    int pool = 2;
    int lstm1_units = 64;
    int attention_width = 64;
    int lstm2_units = 32;
    bool operator==(const AttCnnLstmHyper&) const = default;
};

struct SeriesNetHyper {
    int blocks = 8; // dilations 1, 2, 4, ... 2^(blocks-1)
    int filters = 32;
    int kernel = 2;
    int gru_units = 32;
    int attention_width = 32;
    bool operator==(const SeriesNetHyper&) const = default;
};

struct SimCnnLstmHyper {
    int conv1_filters = 64;
    int conv2_filters = 32;
    int kernel = 3;
    int lstm_units_yield = 64;
    int lstm_units_price = 32;
    int dense_units = 16;
    double dropout = 0.2; // price variant only
    bool operator==(const SimCnnLstmHyper&) const = default;
};

struct LstmBaselineHyper {
    int lstm_units = 64;
    bool operator==(const LstmBaselineHyper&) const = default;
};

/// Declarative architecture description. A spec fully determines every
/// parameter shape, and (kind, shapes, seed) fully determine the initial
/// parameter values.
struct ModelSpec {
    ModelKind kind = ModelKind::lstm_baseline;
    int time_steps = 140;
    int features = 36;
    std::uint64_t seed = 0;
    AttCnnLstmHyper att;
    SeriesNetHyper seriesnet;
    SimCnnLstmHyper sim;
    LstmBaselineHyper baseline;

    std::string to_json() const;
    static ModelSpec from_json(const std::string& text);
    bool operator==(const ModelSpec&) const = default;
};

/// Per-forward activation record. Models allocate their own concrete
/// tape; keeping it outside the network makes a frozen forward pass
/// read-only and safe to run from several threads.
struct Tape {
    virtual ~Tape() = default;
};

class Network {
  public:
    virtual ~Network() = default;

    const ModelSpec& spec() const { return spec_; }
    const ParamLayout& layout() const { return layout_; }
    ParamVec& params() { return params_; }
    const ParamVec& params() const { return params_; }

    virtual std::unique_ptr<Tape> make_tape() const = 0;

    /// One scalar per batch row. `tape`/`train` are only needed while
    /// training; inference passes null.
    virtual Eigen::VectorXd forward(const Seq& x, Tape* tape, TrainCtx* train) const = 0;

    /// Accumulates parameter gradients for the batch recorded on `tape`.
    virtual void backward(const Eigen::VectorXd& dpred, Tape& tape, ParamVec& grad) const = 0;

    void check_input(const Seq& x) const;

  protected:
    explicit Network(const ModelSpec& spec) : spec_(spec) {}
    void finalize_params() { params_ = init_params(layout_, spec_.seed); }

    ModelSpec spec_;
    ParamLayout layout_;
    ParamVec params_;
};

std::unique_ptr<Network> build_model(const ModelSpec& spec);

} // namespace cropcast::nn
