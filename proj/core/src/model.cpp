#include "cropcast/nn/model.hpp"

#include <json.hpp>
#include <optional>

namespace cropcast::nn {

using nlohmann::json;

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::att_cnn_lstm: return "att_cnn_lstm";
        case ModelKind::seriesnet_gru: return "seriesnet_gru";
        case ModelKind::sim_cnn_lstm_yield: return "sim_cnn_lstm_yield";
        case ModelKind::sim_cnn_lstm_price: return "sim_cnn_lstm_price";
        case ModelKind::lstm_baseline: return "lstm_baseline";
    }
    throw ConfigError("bad model kind value");
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "att_cnn_lstm") return ModelKind::att_cnn_lstm;
    if (s == "seriesnet_gru") return ModelKind::seriesnet_gru;
    if (s == "sim_cnn_lstm_yield") return ModelKind::sim_cnn_lstm_yield;
    if (s == "sim_cnn_lstm_price") return ModelKind::sim_cnn_lstm_price;
    if (s == "lstm_baseline") return ModelKind::lstm_baseline;
    throw ConfigError("unknown model kind '" + s + "'");
}

std::string ModelSpec::to_json() const {
    json j = {
        {"kind", nn::to_string(kind)},
        {"input_shape", {time_steps, features}},
        {"seed", seed},
        {"hyper",
         {{"att_cnn_lstm",
           {{"conv1_filters", att.conv1_filters},
            {"conv2_filters", att.conv2_filters},
            {"kernel", att.kernel},
            {"pool", att.pool},
            {"lstm1_units", att.lstm1_units},
            {"attention_width", att.attention_width},
            {"lstm2_units", att.lstm2_units}}},
          {"seriesnet_gru",
           {{"blocks", seriesnet.blocks},
            {"filters", seriesnet.filters},
            {"kernel", seriesnet.kernel},
            {"gru_units", seriesnet.gru_units},
            {"attention_width", seriesnet.attention_width}}},
          {"sim_cnn_lstm",
           {{"conv1_filters", sim.conv1_filters},
            {"conv2_filters", sim.conv2_filters},
            {"kernel", sim.kernel},
            {"lstm_units_yield", sim.lstm_units_yield},
            {"lstm_units_price", sim.lstm_units_price},
            {"dense_units", sim.dense_units},
            {"dropout", sim.dropout}}},
          {"lstm_baseline", {{"lstm_units", baseline.lstm_units}}}}},
    };
    return j.dump(2);
}

ModelSpec ModelSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model spec json: ") + e.what());
    }
    ModelSpec spec;
    try {
        spec.kind = model_kind_from_string(j.at("kind").get<std::string>());
        spec.time_steps = j.at("input_shape").at(0).get<int>();
        spec.features = j.at("input_shape").at(1).get<int>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        const json& h = j.at("hyper");
        const json& a = h.at("att_cnn_lstm");
        spec.att.conv1_filters = a.at("conv1_filters").get<int>();
        spec.att.conv2_filters = a.at("conv2_filters").get<int>();
        spec.att.kernel = a.at("kernel").get<int>();
        spec.att.pool = a.at("pool").get<int>();
        spec.att.lstm1_units = a.at("lstm1_units").get<int>();
        spec.att.attention_width = a.at("attention_width").get<int>();
        spec.att.lstm2_units = a.at("lstm2_units").get<int>();
        const json& s = h.at("seriesnet_gru");
        spec.seriesnet.blocks = s.at("blocks").get<int>();
        spec.seriesnet.filters = s.at("filters").get<int>();
        spec.seriesnet.kernel = s.at("kernel").get<int>();
        spec.seriesnet.gru_units = s.at("gru_units").get<int>();
        spec.seriesnet.attention_width = s.at("attention_width").get<int>();
        const json& m = h.at("sim_cnn_lstm");
        spec.sim.conv1_filters = m.at("conv1_filters").get<int>();
        spec.sim.conv2_filters = m.at("conv2_filters").get<int>();
        spec.sim.kernel = m.at("kernel").get<int>();
        spec.sim.lstm_units_yield = m.at("lstm_units_yield").get<int>();
        spec.sim.lstm_units_price = m.at("lstm_units_price").get<int>();
        spec.sim.dense_units = m.at("dense_units").get<int>();
        spec.sim.dropout = m.at("dropout").get<double>();
        spec.baseline.lstm_units = h.at("lstm_baseline").at("lstm_units").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model spec json: ") + e.what());
    }
    return spec;
}

void Network::check_input(const Seq& x) const {
    if (static_cast<int>(x.size()) != spec_.time_steps)
        throw DataError("model expects " + std::to_string(spec_.time_steps) +
                        " time steps, got " + std::to_string(x.size()));
    if (x.front().cols() != spec_.features)
        throw DataError("model expects " + std::to_string(spec_.features) + " features, got " +
                        std::to_string(x.front().cols()));
    if (x.front().rows() < 1) throw DataError("empty batch");
}

namespace {

void check_spec_common(const ModelSpec& spec) {
    if (spec.time_steps < 1 || spec.features < 1)
        throw ConfigError("model input shape must be positive");
}

// --- Att-CNN-LSTM -----------------------------------------------------------
// conv(64,k3) relu -> conv(32,k3) relu -> maxpool(2) -> lstm(64, sequence)
// -> additive attention -> lstm(32, last) -> dense(1)

class AttCnnLstmNet final : public Network {
  public:
    explicit AttCnnLstmNet(const ModelSpec& spec)
        : Network(spec),
          conv1_(layout_, "conv1", spec.features, spec.att.conv1_filters, spec.att.kernel, 1,
                 Activation::relu),
          conv2_(layout_, "conv2", spec.att.conv1_filters, spec.att.conv2_filters, spec.att.kernel,
                 1, Activation::relu),
          pool_(spec.att.pool),
          lstm1_(layout_, "lstm1", spec.att.conv2_filters, spec.att.lstm1_units),
          attn_(layout_, "attention", spec.att.lstm1_units, spec.att.attention_width),
          lstm2_(layout_, "lstm2", spec.att.lstm1_units, spec.att.lstm2_units),
          head_(layout_, "head", spec.att.lstm2_units, 1, Activation::linear) {
        if (spec.time_steps / spec.att.pool < 1)
            throw ConfigError("att_cnn_lstm needs at least one pooled time step");
        finalize_params();
    }

    struct TapeImpl final : Tape {
        Conv1D::Cache conv1, conv2;
        MaxPool1D::Cache pool;
        Lstm::Cache lstm1, lstm2;
        AdditiveAttention::Cache attn;
        Dense::Cache head;
    };

    std::unique_ptr<Tape> make_tape() const override { return std::make_unique<TapeImpl>(); }

    Eigen::VectorXd forward(const Seq& x, Tape* tape, TrainCtx*) const override {
        check_input(x);
        auto* t = static_cast<TapeImpl*>(tape);
        Seq h = conv1_.forward(params_, x, t ? &t->conv1 : nullptr);
        h = conv2_.forward(params_, h, t ? &t->conv2 : nullptr);
        h = pool_.forward(h, t ? &t->pool : nullptr);
        h = lstm1_.forward(params_, h, t ? &t->lstm1 : nullptr);
        h = attn_.forward(params_, h, t ? &t->attn : nullptr);
        h = lstm2_.forward(params_, h, t ? &t->lstm2 : nullptr);
        return head_.forward(params_, h.back(), t ? &t->head : nullptr).col(0);
    }

    void backward(const Eigen::VectorXd& dpred, Tape& tape, ParamVec& grad) const override {
        auto& t = static_cast<TapeImpl&>(tape);
        Eigen::MatrixXd dlast = head_.backward(params_, grad, dpred, t.head);
        Seq d = lstm2_.backward_last(params_, grad, dlast, t.lstm2);
        d = attn_.backward(params_, grad, d, t.attn);
        d = lstm1_.backward(params_, grad, d, t.lstm1);
        d = pool_.backward(d, t.pool);
        d = conv2_.backward(params_, grad, d, t.conv2);
        conv1_.backward(params_, grad, d, t.conv1);
    }

  private:
    Conv1D conv1_, conv2_;
    MaxPool1D pool_;
    Lstm lstm1_;
    AdditiveAttention attn_;
    Lstm lstm2_;
    Dense head_;
};

// --- SeriesNet with GRU -------------------------------------------------
// conv branch: residual blocks of dilated causal conv + batch norm + relu,
// dilations doubling per block; branch output is the last time step.
// gru branch: gru -> attention -> gru -> flatten -> dense(1).
// merge: concat -> dense(1).

class SeriesNetGruNet final : public Network {
  public:
    explicit SeriesNetGruNet(const ModelSpec& spec) : Network(spec) {
        const auto& h = spec.seriesnet;
        if (h.blocks < 1) throw ConfigError("seriesnet needs at least one block");
        int in_ch = spec.features;
        for (int b = 0; b < h.blocks; ++b) {
            const std::string name = "block" + std::to_string(b + 1);
            blocks_.emplace_back();
            auto& blk = blocks_.back();
            blk.conv.emplace(layout_, name + "/conv", in_ch, h.filters, h.kernel, 1 << b,
                             Activation::linear);
            blk.bn.emplace(layout_, name + "/bn", h.filters);
            if (in_ch != h.filters)
                blk.skip.emplace(layout_, name + "/skip", in_ch, h.filters, 1, 1,
                                 Activation::linear);
            in_ch = h.filters;
        }
        gru1_.emplace(layout_, "gru1", spec.features, h.gru_units);
        attn_.emplace(layout_, "attention", h.gru_units, h.attention_width);
        gru2_.emplace(layout_, "gru2", h.gru_units, h.gru_units);
        gru_dense_.emplace(layout_, "gru_dense", spec.time_steps * h.gru_units, 1,
                           Activation::linear);
        head_.emplace(layout_, "head", h.filters + 1, 1, Activation::linear);
        finalize_params();
    }

    struct BlockTape {
        Conv1D::Cache conv;
        TemporalBatchNorm::Cache bn;
        Seq bn_out;
        Conv1D::Cache skip;
    };

    struct TapeImpl final : Tape {
        std::vector<BlockTape> blocks;
        Gru::Cache gru1, gru2;
        AdditiveAttention::Cache attn;
        Dense::Cache gru_dense, head;
        Eigen::Index batch = 0;
    };

    std::unique_ptr<Tape> make_tape() const override { return std::make_unique<TapeImpl>(); }

    Eigen::VectorXd forward(const Seq& x, Tape* tape, TrainCtx*) const override {
        check_input(x);
        auto* t = static_cast<TapeImpl*>(tape);
        if (t) {
            t->blocks.clear();
            t->blocks.resize(blocks_.size());
            t->batch = x.front().rows();
        }

        Seq h = x;
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const auto& blk = blocks_[b];
            BlockTape* bt = t ? &t->blocks[b] : nullptr;
            Seq main = blk.conv->forward(params_, h, bt ? &bt->conv : nullptr);
            main = blk.bn->forward(params_, main, bt ? &bt->bn : nullptr);
            if (bt) bt->bn_out = main;
            for (auto& step : main) step = step.cwiseMax(0.0);
            Seq skip =
                blk.skip ? blk.skip->forward(params_, h, bt ? &bt->skip : nullptr) : std::move(h);
            for (std::size_t s = 0; s < main.size(); ++s) main[s] += skip[s];
            h = std::move(main);
        }
        const Eigen::MatrixXd conv_last = h.back();

        Seq g = gru1_->forward(params_, x, t ? &t->gru1 : nullptr);
        g = attn_->forward(params_, g, t ? &t->attn : nullptr);
        g = gru2_->forward(params_, g, t ? &t->gru2 : nullptr);
        const Eigen::MatrixXd gru_out =
            gru_dense_->forward(params_, flatten_seq(g), t ? &t->gru_dense : nullptr);

        Eigen::MatrixXd merged(conv_last.rows(), conv_last.cols() + 1);
        merged.leftCols(conv_last.cols()) = conv_last;
        merged.rightCols(1) = gru_out;
        return head_->forward(params_, merged, t ? &t->head : nullptr).col(0);
    }

    void backward(const Eigen::VectorXd& dpred, Tape& tape, ParamVec& grad) const override {
        auto& t = static_cast<TapeImpl&>(tape);
        const int filters = spec_.seriesnet.filters;
        const int gru_units = spec_.seriesnet.gru_units;

        const Eigen::MatrixXd dmerged = head_->backward(params_, grad, dpred, t.head);

        // gru branch
        const Eigen::MatrixXd dflat =
            gru_dense_->backward(params_, grad, dmerged.rightCols(1), t.gru_dense);
        Seq dg = unflatten_seq(dflat, spec_.time_steps, gru_units);
        dg = gru2_->backward(params_, grad, dg, t.gru2);
        dg = attn_->backward(params_, grad, dg, t.attn);
        gru1_->backward(params_, grad, dg, t.gru1);

        // conv branch: gradient enters at the last time step only
        Seq dh(spec_.time_steps);
        for (auto& step : dh) step = Eigen::MatrixXd::Zero(t.batch, filters);
        dh.back() = dmerged.leftCols(filters);

        for (std::size_t b = blocks_.size(); b-- > 0;) {
            const auto& blk = blocks_[b];
            BlockTape& bt = t.blocks[b];
            Seq dmain(dh.size());
            for (std::size_t s = 0; s < dh.size(); ++s)
                dmain[s] =
                    ((bt.bn_out[s].array() > 0.0).cast<double>() * dh[s].array()).matrix();
            dmain = blk.bn->backward(params_, grad, dmain, bt.bn);
            Seq dx = blk.conv->backward(params_, grad, dmain, bt.conv);
            if (blk.skip) {
                Seq dskip = blk.skip->backward(params_, grad, dh, bt.skip);
                for (std::size_t s = 0; s < dx.size(); ++s) dx[s] += dskip[s];
            } else {
                for (std::size_t s = 0; s < dx.size(); ++s) dx[s] += dh[s];
            }
            dh = std::move(dx);
        }
    }

  private:
    struct Block {
        std::optional<Conv1D> conv;
        std::optional<TemporalBatchNorm> bn;
        std::optional<Conv1D> skip;
    };

    std::vector<Block> blocks_;
    std::optional<Gru> gru1_, gru2_;
    std::optional<AdditiveAttention> attn_;
    std::optional<Dense> gru_dense_, head_;
};

// --- SIM CNN-LSTM ------------------------------------------------------------
// conv(64,k3) relu -> conv(32,k3) relu -> lstm(last) -> [dropout] ->
// dense(16) relu -> dense(1). The price variant narrows the LSTM and
// adds dropout before the dense head.

class SimCnnLstmNet final : public Network {
  public:
    explicit SimCnnLstmNet(const ModelSpec& spec)
        : Network(spec),
          price_variant_(spec.kind == ModelKind::sim_cnn_lstm_price),
          conv1_(layout_, "conv1", spec.features, spec.sim.conv1_filters, spec.sim.kernel, 1,
                 Activation::relu),
          conv2_(layout_, "conv2", spec.sim.conv1_filters, spec.sim.conv2_filters, spec.sim.kernel,
                 1, Activation::relu),
          lstm_(layout_, "lstm", spec.sim.conv2_filters,
                price_variant_ ? spec.sim.lstm_units_price : spec.sim.lstm_units_yield),
          dropout_(price_variant_ ? spec.sim.dropout : 0.0),
          dense1_(layout_, "dense1", lstm_.units(), spec.sim.dense_units, Activation::relu),
          dense2_(layout_, "dense2", spec.sim.dense_units, 1, Activation::linear) {
        finalize_params();
    }

    struct TapeImpl final : Tape {
        Conv1D::Cache conv1, conv2;
        Lstm::Cache lstm;
        Dropout::Cache dropout;
        Dense::Cache dense1, dense2;
    };

    std::unique_ptr<Tape> make_tape() const override { return std::make_unique<TapeImpl>(); }

    Eigen::VectorXd forward(const Seq& x, Tape* tape, TrainCtx* train) const override {
        check_input(x);
        auto* t = static_cast<TapeImpl*>(tape);
        Seq h = conv1_.forward(params_, x, t ? &t->conv1 : nullptr);
        h = conv2_.forward(params_, h, t ? &t->conv2 : nullptr);
        h = lstm_.forward(params_, h, t ? &t->lstm : nullptr);
        Eigen::MatrixXd v = h.back();
        if (price_variant_) v = dropout_.forward(v, t ? &t->dropout : nullptr, train);
        v = dense1_.forward(params_, v, t ? &t->dense1 : nullptr);
        return dense2_.forward(params_, v, t ? &t->dense2 : nullptr).col(0);
    }

    void backward(const Eigen::VectorXd& dpred, Tape& tape, ParamVec& grad) const override {
        auto& t = static_cast<TapeImpl&>(tape);
        Eigen::MatrixXd d = dense2_.backward(params_, grad, dpred, t.dense2);
        d = dense1_.backward(params_, grad, d, t.dense1);
        if (price_variant_) d = dropout_.backward(d, t.dropout);
        Seq ds = lstm_.backward_last(params_, grad, d, t.lstm);
        ds = conv2_.backward(params_, grad, ds, t.conv2);
        conv1_.backward(params_, grad, ds, t.conv1);
    }

  private:
    bool price_variant_;
    Conv1D conv1_, conv2_;
    Lstm lstm_;
    Dropout dropout_;
    Dense dense1_, dense2_;
};

// --- LSTM baseline -------------------------------------------------------

class LstmBaselineNet final : public Network {
  public:
    explicit LstmBaselineNet(const ModelSpec& spec)
        : Network(spec),
          lstm_(layout_, "lstm", spec.features, spec.baseline.lstm_units),
          head_(layout_, "head", spec.baseline.lstm_units, 1, Activation::linear) {
        finalize_params();
    }

    struct TapeImpl final : Tape {
        Lstm::Cache lstm;
        Dense::Cache head;
    };

    std::unique_ptr<Tape> make_tape() const override { return std::make_unique<TapeImpl>(); }

    Eigen::VectorXd forward(const Seq& x, Tape* tape, TrainCtx*) const override {
        check_input(x);
        auto* t = static_cast<TapeImpl*>(tape);
        Seq h = lstm_.forward(params_, x, t ? &t->lstm : nullptr);
        return head_.forward(params_, h.back(), t ? &t->head : nullptr).col(0);
    }

    void backward(const Eigen::VectorXd& dpred, Tape& tape, ParamVec& grad) const override {
        auto& t = static_cast<TapeImpl&>(tape);
        const Eigen::MatrixXd dlast = head_.backward(params_, grad, dpred, t.head);
        lstm_.backward_last(params_, grad, dlast, t.lstm);
    }

  private:
    Lstm lstm_;
    Dense head_;
};

} // namespace

std::unique_ptr<Network> build_model(const ModelSpec& spec) {
    check_spec_common(spec);
    switch (spec.kind) {
        case ModelKind::att_cnn_lstm: return std::make_unique<AttCnnLstmNet>(spec);
        case ModelKind::seriesnet_gru: return std::make_unique<SeriesNetGruNet>(spec);
        case ModelKind::sim_cnn_lstm_yield:
        case ModelKind::sim_cnn_lstm_price: return std::make_unique<SimCnnLstmNet>(spec);
        case ModelKind::lstm_baseline: return std::make_unique<LstmBaselineNet>(spec);
    }
    throw ConfigError("bad model kind value");
}

} // namespace cropcast::nn
