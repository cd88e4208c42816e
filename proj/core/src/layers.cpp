#include "cropcast/nn/layers.hpp"

#include <cmath>
#include <thread>

namespace cropcast::nn {

namespace {

// exp-based forms keep Eigen's vectorized exp on the hot paths; both are
// exact at 0 and saturate to the correct limits
template <typename Derived>
auto vtanh(const Eigen::ArrayBase<Derived>& x) {
    return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

template <typename Derived>
auto vsigmoid(const Eigen::ArrayBase<Derived>& x) {
    return 1.0 / (1.0 + (-x).exp());
}

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& z) {
    if (act == Activation::relu) return z.cwiseMax(0.0);
    return z;
}

Eigen::MatrixXd activation_grad(Activation act, const Eigen::MatrixXd& z,
                                const Eigen::MatrixXd& dy) {
    if (act == Activation::relu)
        return (z.array() > 0.0).cast<double>() * dy.array();
    return dy;
}

} // namespace

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
    return vsigmoid(x.array());
}

// --- attention core ----------------------------------------------------

namespace {

/// One sample's forward pass. Fills e_out/a_out (T x T) when given.
/// The attention value row l_t is accumulated position by position and
/// divided by the softmax mass once at the end.
Eigen::MatrixXd attention_sample_forward(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& w_t,
                                         const Eigen::MatrixXd& w_x, const Eigen::VectorXd& b_t,
                                         const Eigen::VectorXd& w_a, double b_a,
                                         Eigen::MatrixXd* a_proj_out, Eigen::MatrixXd* b_proj_out,
                                         Eigen::MatrixXd* e_out, Eigen::MatrixXd* a_out) {
    const Eigen::Index steps = xs.rows();
    const Eigen::MatrixXd a_proj = xs * w_t; // T x d_a, query-side term
    const Eigen::MatrixXd b_proj = xs * w_x; // T x d_a, key-side term
    const Eigen::MatrixXd keyed = b_proj.rowwise() + b_t.transpose();

    Eigen::MatrixXd out(steps, xs.cols());
    if (e_out) e_out->resize(steps, steps);
    if (a_out) a_out->resize(steps, steps);

    Eigen::MatrixXd hidden(steps, a_proj.cols());
    Eigen::VectorXd scores(steps), weights(steps);
    for (Eigen::Index t = 0; t < steps; ++t) {
        hidden = vtanh((keyed.rowwise() + a_proj.row(t)).array());
        scores.noalias() = hidden * w_a;
        scores = vsigmoid(scores.array() + b_a);
        if (e_out) e_out->row(t) = scores.transpose();

        const double peak = scores.maxCoeff();
        weights = (scores.array() - peak).exp();
        const double mass = weights.sum();

        Eigen::RowVectorXd combined = Eigen::RowVectorXd::Zero(xs.cols());
        for (Eigen::Index tp = 0; tp < steps; ++tp) combined += weights(tp) * xs.row(tp);
        out.row(t) = combined / mass;
        if (a_out) a_out->row(t) = (weights / mass).transpose();
    }
    if (a_proj_out) *a_proj_out = a_proj;
    if (b_proj_out) *b_proj_out = b_proj;
    return out;
}

} // namespace

Eigen::MatrixXd additive_attention(const Eigen::MatrixXd& x, const AttentionParams& p) {
    if (x.rows() < 1) throw DataError("attention input needs at least one time step");
    const Eigen::Index d = x.cols();
    if (p.w_t.rows() != d || p.w_x.rows() != d || p.w_t.cols() != p.w_x.cols() ||
        p.b_t.size() != p.w_t.cols() || p.w_a.size() != p.w_t.cols())
        throw DataError("attention parameter shapes do not match the input width");
    return attention_sample_forward(x, p.w_t, p.w_x, p.b_t, p.w_a, p.b_a, nullptr, nullptr,
                                    nullptr, nullptr);
}

Eigen::MatrixXd causal_conv(const Eigen::MatrixXd& x, const std::vector<Eigen::MatrixXd>& taps,
                            int dilation) {
    if (dilation < 1) throw ConfigError("conv dilation must be >= 1");
    if (taps.empty()) throw ConfigError("conv kernel needs at least one tap");
    const Eigen::Index channels = x.cols();
    const Eigen::Index filters = taps.front().cols();
    for (const auto& tap : taps)
        if (tap.rows() != channels || tap.cols() != filters)
            throw DataError("conv kernel tap shape mismatch");

    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(x.rows(), filters);
    for (Eigen::Index t = 0; t < x.rows(); ++t)
        for (std::size_t k = 0; k < taps.size(); ++k) {
            const Eigen::Index src = t - static_cast<Eigen::Index>(k) * dilation;
            if (src >= 0) y.row(t) += x.row(src) * taps[k];
        }
    return y;
}

int causal_stack_receptive_field(int kernel, const std::vector<int>& dilations) {
    int field = 1;
    for (int d : dilations) field += d * (kernel - 1);
    return field;
}

// --- Dense -----------------------------------------------------------------

Dense::Dense(ParamLayout& layout, const std::string& name, int in_dim, int out_dim,
             Activation act)
    : in_dim_(in_dim), out_dim_(out_dim), act_(act) {
    w_off_ = layout.add(name + "/weight", {in_dim, out_dim}, Init::uniform_fan_in, in_dim);
    b_off_ = layout.add(name + "/bias", {out_dim}, Init::zeros);
}

Eigen::MatrixXd Dense::forward(const ParamVec& p, const Eigen::MatrixXd& x, Cache* cache) const {
    if (x.cols() != in_dim_) throw DataError("dense input width mismatch");
    Eigen::MatrixXd z =
        (x * pmat(p, w_off_, in_dim_, out_dim_)).rowwise() + pvec(p, b_off_, out_dim_).transpose();
    if (cache) {
        cache->x = x;
        cache->z = z;
    }
    return apply_activation(act_, z);
}

Eigen::MatrixXd Dense::backward(const ParamVec& p, ParamVec& grad, const Eigen::MatrixXd& dy,
                                const Cache& cache) const {
    const Eigen::MatrixXd dz = activation_grad(act_, cache.z, dy);
    pmat(grad, w_off_, in_dim_, out_dim_) += cache.x.transpose() * dz;
    pvec(grad, b_off_, out_dim_) += dz.colwise().sum().transpose();
    return dz * pmat(p, w_off_, in_dim_, out_dim_).transpose();
}

// --- Conv1D ----------------------------------------------------------------

Conv1D::Conv1D(ParamLayout& layout, const std::string& name, int in_ch, int out_ch, int ksize,
               int dilation, Activation act)
    : in_ch_(in_ch), out_ch_(out_ch), ksize_(ksize), dilation_(dilation), act_(act) {
    if (ksize < 1) throw ConfigError("conv kernel size must be >= 1");
    if (dilation < 1) throw ConfigError("conv dilation must be >= 1");
    k_off_ = layout.add(name + "/kernel", {ksize, in_ch, out_ch}, Init::uniform_fan_in,
                        ksize * in_ch);
    b_off_ = layout.add(name + "/bias", {out_ch}, Init::zeros);
}

Eigen::Map<const Eigen::MatrixXd> Conv1D::tap(const ParamVec& p, int k) const {
    return pmat(p, k_off_ + static_cast<std::size_t>(k) * in_ch_ * out_ch_, in_ch_, out_ch_);
}

Eigen::Map<Eigen::MatrixXd> Conv1D::tap(ParamVec& p, int k) const {
    return pmat(p, k_off_ + static_cast<std::size_t>(k) * in_ch_ * out_ch_, in_ch_, out_ch_);
}

Seq Conv1D::forward(const ParamVec& p, const Seq& x, Cache* cache) const {
    const auto steps = static_cast<Eigen::Index>(x.size());
    if (steps == 0 || x.front().cols() != in_ch_) throw DataError("conv input shape mismatch");
    const auto bias = pvec(p, b_off_, out_ch_);

    Seq z(steps);
    for (Eigen::Index t = 0; t < steps; ++t) {
        z[t] = Eigen::MatrixXd::Zero(x[t].rows(), out_ch_);
        z[t].rowwise() += bias.transpose();
        for (int k = 0; k < ksize_; ++k) {
            const Eigen::Index src = t - static_cast<Eigen::Index>(k) * dilation_;
            if (src >= 0) z[t].noalias() += x[src] * tap(p, k);
        }
    }
    Seq y(steps);
    for (Eigen::Index t = 0; t < steps; ++t) y[t] = apply_activation(act_, z[t]);
    if (cache) {
        cache->x = x;
        cache->z = std::move(z);
    }
    return y;
}

Seq Conv1D::backward(const ParamVec& p, ParamVec& grad, const Seq& dy, const Cache& cache) const {
    const auto steps = static_cast<Eigen::Index>(dy.size());
    Seq dx(steps);
    for (Eigen::Index t = 0; t < steps; ++t)
        dx[t] = Eigen::MatrixXd::Zero(cache.x[t].rows(), in_ch_);

    auto bias_grad = pvec(grad, b_off_, out_ch_);
    for (Eigen::Index t = 0; t < steps; ++t) {
        const Eigen::MatrixXd dz = activation_grad(act_, cache.z[t], dy[t]);
        bias_grad += dz.colwise().sum().transpose();
        for (int k = 0; k < ksize_; ++k) {
            const Eigen::Index src = t - static_cast<Eigen::Index>(k) * dilation_;
            if (src < 0) continue;
            tap(grad, k).noalias() += cache.x[src].transpose() * dz;
            dx[src].noalias() += dz * tap(p, k).transpose();
        }
    }
    return dx;
}

// --- MaxPool1D ---------------------------------------------------------------

Seq MaxPool1D::forward(const Seq& x, Cache* cache) const {
    const auto in_steps = static_cast<Eigen::Index>(x.size());
    const Eigen::Index out_steps = in_steps / pool_;
    if (out_steps == 0) throw DataError("sequence too short for pooling");

    Seq y(out_steps);
    if (cache) {
        cache->pick.assign(out_steps, Eigen::MatrixXi());
        cache->in_steps = static_cast<int>(in_steps);
    }
    for (Eigen::Index j = 0; j < out_steps; ++j) {
        y[j] = x[j * pool_];
        Eigen::MatrixXi pick = Eigen::MatrixXi::Zero(y[j].rows(), y[j].cols());
        for (int w = 1; w < pool_; ++w) {
            const Eigen::MatrixXd& cand = x[j * pool_ + w];
            for (Eigen::Index r = 0; r < y[j].rows(); ++r)
                for (Eigen::Index c = 0; c < y[j].cols(); ++c)
                    if (cand(r, c) > y[j](r, c)) {
                        y[j](r, c) = cand(r, c);
                        pick(r, c) = w;
                    }
        }
        if (cache) cache->pick[j] = std::move(pick);
    }
    return y;
}

Seq MaxPool1D::backward(const Seq& dy, const Cache& cache) const {
    Seq dx(cache.in_steps);
    const Eigen::Index rows = dy.front().rows(), cols = dy.front().cols();
    for (auto& step : dx) step = Eigen::MatrixXd::Zero(rows, cols);
    for (std::size_t j = 0; j < dy.size(); ++j)
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                dx[j * pool_ + cache.pick[j](r, c)](r, c) += dy[j](r, c);
    return dx;
}

// --- Lstm --------------------------------------------------------------------

Lstm::Lstm(ParamLayout& layout, const std::string& name, int in_dim, int units)
    : in_dim_(in_dim), units_(units) {
    w_off_ = layout.add(name + "/w", {in_dim, 4 * units}, Init::uniform_fan_in, in_dim);
    r_off_ = layout.add(name + "/r", {units, 4 * units}, Init::uniform_fan_in, units);
    b_off_ = layout.add(name + "/b", {4 * units}, Init::zeros);
}

Seq Lstm::forward(const ParamVec& p, const Seq& x, Cache* cache) const {
    const auto steps = static_cast<Eigen::Index>(x.size());
    if (steps == 0 || x.front().cols() != in_dim_) throw DataError("lstm input shape mismatch");
    const Eigen::Index batch = x.front().rows();
    const auto w = pmat(p, w_off_, in_dim_, 4 * units_);
    const auto r = pmat(p, r_off_, units_, 4 * units_);
    const auto b = pvec(p, b_off_, 4 * units_);

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(batch, units_);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(batch, units_);
    Seq out(steps);
    if (cache) {
        cache->x = x;
        cache->i.resize(steps);
        cache->f.resize(steps);
        cache->g.resize(steps);
        cache->o.resize(steps);
        cache->c.resize(steps);
        cache->tanh_c.resize(steps);
        cache->h_prev.resize(steps);
    }
    Eigen::MatrixXd zall(batch, 4 * units_);
    for (Eigen::Index t = 0; t < steps; ++t) {
        zall.noalias() = x[t] * w;
        zall.noalias() += h * r;
        zall.rowwise() += b.transpose();
        Eigen::MatrixXd gi = sigmoid(zall.leftCols(units_));
        Eigen::MatrixXd gf = sigmoid(zall.middleCols(units_, units_));
        Eigen::MatrixXd gg = vtanh(zall.middleCols(2 * units_, units_).array());
        Eigen::MatrixXd go = sigmoid(zall.rightCols(units_));
        if (cache) cache->h_prev[t] = h;
        c = (gf.array() * c.array() + gi.array() * gg.array()).matrix();
        Eigen::MatrixXd tc = vtanh(c.array());
        h = (go.array() * tc.array()).matrix();
        out[t] = h;
        if (cache) {
            cache->i[t] = std::move(gi);
            cache->f[t] = std::move(gf);
            cache->g[t] = std::move(gg);
            cache->o[t] = std::move(go);
            cache->c[t] = c;
            cache->tanh_c[t] = std::move(tc);
        }
    }
    return out;
}

Seq Lstm::backward(const ParamVec& p, ParamVec& grad, const Seq& dy, const Cache& cache) const {
    const auto steps = static_cast<Eigen::Index>(dy.size());
    const Eigen::Index batch = dy.front().rows();
    const auto w = pmat(p, w_off_, in_dim_, 4 * units_);
    const auto r = pmat(p, r_off_, units_, 4 * units_);
    auto dw = pmat(grad, w_off_, in_dim_, 4 * units_);
    auto dr = pmat(grad, r_off_, units_, 4 * units_);
    auto db = pvec(grad, b_off_, 4 * units_);

    Seq dx(steps);
    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(batch, units_);
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(batch, units_);
    Eigen::MatrixXd dz(batch, 4 * units_);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const auto& gi = cache.i[t];
        const auto& gf = cache.f[t];
        const auto& gg = cache.g[t];
        const auto& go = cache.o[t];
        const auto& tc = cache.tanh_c[t];

        const Eigen::MatrixXd dh = dy[t] + dh_next;
        const Eigen::MatrixXd dc =
            (dh.array() * go.array() * (1.0 - tc.array().square())).matrix() + dc_next;

        const Eigen::ArrayXXd c_prev =
            t > 0 ? Eigen::ArrayXXd(cache.c[t - 1].array()) : Eigen::ArrayXXd::Zero(batch, units_);
        dz.leftCols(units_) = dc.array() * gg.array() * gi.array() * (1.0 - gi.array());
        dz.middleCols(units_, units_) = dc.array() * c_prev * gf.array() * (1.0 - gf.array());
        dz.middleCols(2 * units_, units_) = dc.array() * gi.array() * (1.0 - gg.array().square());
        dz.rightCols(units_) = dh.array() * tc.array() * go.array() * (1.0 - go.array());

        dw.noalias() += cache.x[t].transpose() * dz;
        dr.noalias() += cache.h_prev[t].transpose() * dz;
        db += dz.colwise().sum().transpose();

        dx[t] = dz * w.transpose();
        dh_next.noalias() = dz * r.transpose();
        dc_next = (dc.array() * gf.array()).matrix();
    }
    return dx;
}

Seq Lstm::backward_last(const ParamVec& p, ParamVec& grad, const Eigen::MatrixXd& dy_last,
                        const Cache& cache) const {
    Seq dy(cache.x.size());
    for (std::size_t t = 0; t + 1 < dy.size(); ++t)
        dy[t] = Eigen::MatrixXd::Zero(dy_last.rows(), units_);
    dy.back() = dy_last;
    return backward(p, grad, dy, cache);
}

// --- Gru ---------------------------------------------------------------------

Gru::Gru(ParamLayout& layout, const std::string& name, int in_dim, int units)
    : in_dim_(in_dim), units_(units) {
    w_off_ = layout.add(name + "/w", {in_dim, 3 * units}, Init::uniform_fan_in, in_dim);
    r_off_ = layout.add(name + "/r", {units, 3 * units}, Init::uniform_fan_in, units);
    b_off_ = layout.add(name + "/b", {3 * units}, Init::zeros);
}

Seq Gru::forward(const ParamVec& p, const Seq& x, Cache* cache) const {
    const auto steps = static_cast<Eigen::Index>(x.size());
    if (steps == 0 || x.front().cols() != in_dim_) throw DataError("gru input shape mismatch");
    const Eigen::Index batch = x.front().rows();
    const auto w = pmat(p, w_off_, in_dim_, 3 * units_);
    const auto r_all = pmat(p, r_off_, units_, 3 * units_);
    const auto b = pvec(p, b_off_, 3 * units_);
    const auto rz = r_all.leftCols(units_);
    const auto rr = r_all.middleCols(units_, units_);
    const auto rn = r_all.rightCols(units_);

    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(batch, units_);
    Seq out(steps);
    if (cache) {
        cache->x = x;
        cache->z.resize(steps);
        cache->r.resize(steps);
        cache->n.resize(steps);
        cache->h_prev.resize(steps);
        cache->rh.resize(steps);
    }
    for (Eigen::Index t = 0; t < steps; ++t) {
        Eigen::MatrixXd zx = x[t] * w;
        zx.rowwise() += b.transpose();
        Eigen::MatrixXd gz = sigmoid(zx.leftCols(units_) + h * rz);
        Eigen::MatrixXd gr = sigmoid(zx.middleCols(units_, units_) + h * rr);
        Eigen::MatrixXd rh = (gr.array() * h.array()).matrix();
        Eigen::MatrixXd gn = vtanh((zx.rightCols(units_) + rh * rn).array());
        if (cache) cache->h_prev[t] = h;
        h = ((1.0 - gz.array()) * gn.array() + gz.array() * h.array()).matrix();
        out[t] = h;
        if (cache) {
            cache->z[t] = std::move(gz);
            cache->r[t] = std::move(gr);
            cache->n[t] = std::move(gn);
            cache->rh[t] = std::move(rh);
        }
    }
    return out;
}

Seq Gru::backward(const ParamVec& p, ParamVec& grad, const Seq& dy, const Cache& cache) const {
    const auto steps = static_cast<Eigen::Index>(dy.size());
    const Eigen::Index batch = dy.front().rows();
    const auto w = pmat(p, w_off_, in_dim_, 3 * units_);
    const auto r_all = pmat(p, r_off_, units_, 3 * units_);
    const auto rz = r_all.leftCols(units_);
    const auto rr = r_all.middleCols(units_, units_);
    const auto rn = r_all.rightCols(units_);
    auto dw = pmat(grad, w_off_, in_dim_, 3 * units_);
    auto dr_all = pmat(grad, r_off_, units_, 3 * units_);
    auto db = pvec(grad, b_off_, 3 * units_);

    Seq dx(steps);
    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(batch, units_);
    Eigen::MatrixXd dz3(batch, 3 * units_);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const auto& gz = cache.z[t];
        const auto& gr = cache.r[t];
        const auto& gn = cache.n[t];
        const auto& hp = cache.h_prev[t];

        const Eigen::MatrixXd dh = dy[t] + dh_next;
        const Eigen::ArrayXXd dz_pre =
            dh.array() * (hp.array() - gn.array()) * gz.array() * (1.0 - gz.array());
        const Eigen::ArrayXXd dn_pre =
            dh.array() * (1.0 - gz.array()) * (1.0 - gn.array().square());
        const Eigen::MatrixXd drh = dn_pre.matrix() * rn.transpose();
        const Eigen::ArrayXXd dr_pre =
            drh.array() * hp.array() * gr.array() * (1.0 - gr.array());

        dz3.leftCols(units_) = dz_pre;
        dz3.middleCols(units_, units_) = dr_pre;
        dz3.rightCols(units_) = dn_pre;

        dw.noalias() += cache.x[t].transpose() * dz3;
        db += dz3.colwise().sum().transpose();
        dr_all.leftCols(units_).noalias() += hp.transpose() * dz_pre.matrix();
        dr_all.middleCols(units_, units_).noalias() += hp.transpose() * dr_pre.matrix();
        dr_all.rightCols(units_).noalias() += cache.rh[t].transpose() * dn_pre.matrix();

        dx[t] = dz3 * w.transpose();
        dh_next = (dh.array() * gz.array() + drh.array() * gr.array()).matrix();
        dh_next.noalias() += dz_pre.matrix() * rz.transpose();
        dh_next.noalias() += dr_pre.matrix() * rr.transpose();
    }
    return dx;
}

// --- AdditiveAttention ---------------------------------------------------

AdditiveAttention::AdditiveAttention(ParamLayout& layout, const std::string& name, int d, int d_a)
    : d_(d), d_a_(d_a) {
    wt_off_ = layout.add(name + "/w_t", {d, d_a}, Init::uniform_fan_in, d);
    wx_off_ = layout.add(name + "/w_x", {d, d_a}, Init::uniform_fan_in, d);
    bt_off_ = layout.add(name + "/b_t", {d_a}, Init::zeros);
    wa_off_ = layout.add(name + "/w_a", {d_a, 1}, Init::uniform_fan_in, d_a);
    ba_off_ = layout.add(name + "/b_a", {1}, Init::zeros);
}

AttentionParams AdditiveAttention::unpack(const ParamVec& p) const {
    AttentionParams params;
    params.w_t = pmat(p, wt_off_, d_, d_a_);
    params.w_x = pmat(p, wx_off_, d_, d_a_);
    params.b_t = pvec(p, bt_off_, d_a_);
    params.w_a = pvec(p, wa_off_, d_a_);
    params.b_a = p(static_cast<Eigen::Index>(ba_off_));
    return params;
}

Seq AdditiveAttention::forward(const ParamVec& p, const Seq& x, Cache* cache) const {
    const auto steps = static_cast<Eigen::Index>(x.size());
    if (steps == 0 || x.front().cols() != d_) throw DataError("attention input shape mismatch");
    const Eigen::Index batch = x.front().rows();
    const auto w_t = pmat(p, wt_off_, d_, d_a_);
    const auto w_x = pmat(p, wx_off_, d_, d_a_);
    const Eigen::VectorXd b_t = pvec(p, bt_off_, d_a_);
    const Eigen::VectorXd w_a = pvec(p, wa_off_, d_a_);
    const double b_a = p(static_cast<Eigen::Index>(ba_off_));

    Seq out(steps);
    for (Eigen::Index t = 0; t < steps; ++t) out[t].resize(batch, d_);
    if (cache) {
        cache->xs.resize(batch);
        cache->a_proj.resize(batch);
        cache->b_proj.resize(batch);
        cache->e.resize(batch);
        cache->attn.resize(batch);
    }

    auto run_range = [&](Eigen::Index begin, Eigen::Index end) {
        for (Eigen::Index b = begin; b < end; ++b) {
            Eigen::MatrixXd xs = sample_from_seq(x, b);
            Eigen::MatrixXd values = attention_sample_forward(
                xs, w_t, w_x, b_t, w_a, b_a, cache ? &cache->a_proj[b] : nullptr,
                cache ? &cache->b_proj[b] : nullptr, cache ? &cache->e[b] : nullptr,
                cache ? &cache->attn[b] : nullptr);
            for (Eigen::Index t = 0; t < steps; ++t) out[t].row(b) = values.row(t);
            if (cache) cache->xs[b] = std::move(xs);
        }
    };
    // samples are independent; a fixed halving keeps results identical on
    // any machine while using a second core when there is one
    if (batch >= 8) {
        const Eigen::Index half = batch / 2;
        std::thread worker([&] { run_range(0, half); });
        run_range(half, batch);
        worker.join();
    } else {
        run_range(0, batch);
    }
    return out;
}

Seq AdditiveAttention::backward(const ParamVec& p, ParamVec& grad, const Seq& dy,
                                const Cache& cache) const {
    const auto steps = static_cast<Eigen::Index>(dy.size());
    const Eigen::Index batch = dy.front().rows();
    const auto w_t = pmat(p, wt_off_, d_, d_a_);
    const auto w_x = pmat(p, wx_off_, d_, d_a_);
    const Eigen::VectorXd b_t = pvec(p, bt_off_, d_a_);
    const Eigen::VectorXd w_a = pvec(p, wa_off_, d_a_);

    Seq dx(steps);
    for (Eigen::Index t = 0; t < steps; ++t) dx[t].setZero(batch, d_);

    auto run_range = [&](Eigen::Index begin, Eigen::Index end, ParamVec& g) {
        auto dw_t = pmat(g, wt_off_, d_, d_a_);
        auto dw_x = pmat(g, wx_off_, d_, d_a_);
        auto db_t = pvec(g, bt_off_, d_a_);
        auto dw_a = pvec(g, wa_off_, d_a_);

        for (Eigen::Index b = begin; b < end; ++b) {
            const Eigen::MatrixXd& xs = cache.xs[b];
            const Eigen::MatrixXd& a_proj = cache.a_proj[b];
            const Eigen::MatrixXd& b_proj = cache.b_proj[b];
            const Eigen::MatrixXd& e = cache.e[b];
            const Eigen::MatrixXd& attn = cache.attn[b];

            Eigen::MatrixXd dl(steps, d_);
            for (Eigen::Index t = 0; t < steps; ++t) dl.row(t) = dy[t].row(b);

            // value route
            const Eigen::MatrixXd dattn = dl * xs.transpose(); // T x T
            Eigen::MatrixXd dxs = attn.transpose() * dl;

            // softmax rows, then the sigmoid scores
            Eigen::MatrixXd de(steps, steps);
            for (Eigen::Index t = 0; t < steps; ++t) {
                const double inner = dattn.row(t).dot(attn.row(t));
                de.row(t) = attn.row(t).array() * (dattn.row(t).array() - inner);
            }
            const Eigen::MatrixXd ds = de.array() * e.array() * (1.0 - e.array());

            // pairwise tanh states, recomputed per row in the forward's form
            const Eigen::MatrixXd keyed = b_proj.rowwise() + b_t.transpose();
            Eigen::MatrixXd da_rows(steps, d_a_);
            Eigen::MatrixXd db_rows = Eigen::MatrixXd::Zero(steps, d_a_);
            Eigen::MatrixXd hidden(steps, d_a_), dpre(steps, d_a_);
            for (Eigen::Index t = 0; t < steps; ++t) {
                hidden = vtanh((keyed.rowwise() + a_proj.row(t)).array());
                dw_a.noalias() += hidden.transpose() * ds.row(t).transpose();
                g(static_cast<Eigen::Index>(ba_off_)) += ds.row(t).sum();
                dpre = ((ds.row(t).transpose() * w_a.transpose()).array() *
                        (1.0 - hidden.array().square()))
                           .matrix();
                da_rows.row(t) = dpre.colwise().sum();
                db_rows += dpre;
            }
            db_t += db_rows.colwise().sum().transpose();
            dw_t.noalias() += xs.transpose() * da_rows;
            dw_x.noalias() += xs.transpose() * db_rows;
            dxs.noalias() += da_rows * w_t.transpose();
            dxs.noalias() += db_rows * w_x.transpose();

            for (Eigen::Index t = 0; t < steps; ++t) dx[t].row(b) = dxs.row(t);
        }
    };

    if (batch >= 8) {
        // two fixed halves with thread-local gradients, reduced in order
        ParamVec g_lo = ParamVec::Zero(grad.size());
        ParamVec g_hi = ParamVec::Zero(grad.size());
        const Eigen::Index half = batch / 2;
        std::thread worker([&] { run_range(0, half, g_lo); });
        run_range(half, batch, g_hi);
        worker.join();
        grad += g_lo;
        grad += g_hi;
    } else {
        run_range(0, batch, grad);
    }
    return dx;
}

// --- TemporalBatchNorm -----------------------------------------------------

TemporalBatchNorm::TemporalBatchNorm(ParamLayout& layout, const std::string& name, int channels)
    : channels_(channels) {
    gamma_off_ = layout.add(name + "/gamma", {channels}, Init::ones);
    beta_off_ = layout.add(name + "/beta", {channels}, Init::zeros);
}

Seq TemporalBatchNorm::forward(const ParamVec& p, const Seq& x, Cache* cache) const {
    const auto steps = static_cast<Eigen::Index>(x.size());
    if (steps == 0 || x.front().cols() != channels_)
        throw DataError("batch norm input shape mismatch");
    const Eigen::Index batch = x.front().rows();
    const auto gamma = pvec(p, gamma_off_, channels_);
    const auto beta = pvec(p, beta_off_, channels_);

    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(batch, channels_);
    for (const auto& step : x) mean += step;
    mean /= static_cast<double>(steps);

    Eigen::MatrixXd var = Eigen::MatrixXd::Zero(batch, channels_);
    for (const auto& step : x) var += (step - mean).array().square().matrix();
    var /= static_cast<double>(steps);

    const Eigen::MatrixXd inv_std = (var.array() + kEps).rsqrt();
    Seq y(steps);
    if (cache) {
        cache->xhat.resize(steps);
        cache->inv_std = inv_std;
    }
    for (Eigen::Index t = 0; t < steps; ++t) {
        Eigen::MatrixXd xhat = ((x[t] - mean).array() * inv_std.array()).matrix();
        y[t] = (xhat.array().rowwise() * gamma.transpose().array()).matrix();
        y[t].rowwise() += beta.transpose();
        if (cache) cache->xhat[t] = std::move(xhat);
    }
    return y;
}

Seq TemporalBatchNorm::backward(const ParamVec& p, ParamVec& grad, const Seq& dy,
                                const Cache& cache) const {
    const auto steps = static_cast<Eigen::Index>(dy.size());
    const Eigen::Index batch = dy.front().rows();
    const auto gamma = pvec(p, gamma_off_, channels_);
    auto dgamma = pvec(grad, gamma_off_, channels_);
    auto dbeta = pvec(grad, beta_off_, channels_);

    Eigen::MatrixXd sum_dxhat = Eigen::MatrixXd::Zero(batch, channels_);
    Eigen::MatrixXd sum_dxhat_xhat = Eigen::MatrixXd::Zero(batch, channels_);
    for (Eigen::Index t = 0; t < steps; ++t) {
        dgamma += (dy[t].array() * cache.xhat[t].array()).colwise().sum().matrix().transpose();
        dbeta += dy[t].colwise().sum().transpose();
        const Eigen::MatrixXd dxhat =
            (dy[t].array().rowwise() * gamma.transpose().array()).matrix();
        sum_dxhat += dxhat;
        sum_dxhat_xhat += (dxhat.array() * cache.xhat[t].array()).matrix();
    }

    const double inv_steps = 1.0 / static_cast<double>(steps);
    Seq dx(steps);
    for (Eigen::Index t = 0; t < steps; ++t) {
        const Eigen::ArrayXXd dxhat =
            dy[t].array().rowwise() * gamma.transpose().array();
        dx[t] = (cache.inv_std.array() *
                 (dxhat - inv_steps * sum_dxhat.array() -
                  cache.xhat[t].array() * inv_steps * sum_dxhat_xhat.array()))
                    .matrix();
    }
    return dx;
}

// --- Dropout -----------------------------------------------------------------

Eigen::MatrixXd Dropout::forward(const Eigen::MatrixXd& x, Cache* cache, TrainCtx* train) const {
    if (!train || !train->rng || rate_ <= 0.0) {
        if (cache) cache->mask = Eigen::MatrixXd::Ones(x.rows(), x.cols());
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate_);
    Eigen::MatrixXd mask(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        for (Eigen::Index r = 0; r < x.rows(); ++r)
            mask(r, c) = train->rng->uniform() >= rate_ ? keep_scale : 0.0;
    if (cache) cache->mask = mask;
    return (x.array() * mask.array()).matrix();
}

Eigen::MatrixXd Dropout::backward(const Eigen::MatrixXd& dy, const Cache& cache) const {
    return (dy.array() * cache.mask.array()).matrix();
}

// --- shape helpers ---------------------------------------------------------

Eigen::MatrixXd flatten_seq(const Seq& x) {
    const auto steps = static_cast<Eigen::Index>(x.size());
    const Eigen::Index batch = x.front().rows(), channels = x.front().cols();
    Eigen::MatrixXd flat(batch, steps * channels);
    for (Eigen::Index t = 0; t < steps; ++t)
        flat.middleCols(t * channels, channels) = x[t];
    return flat;
}

Seq unflatten_seq(const Eigen::MatrixXd& flat, int steps, int channels) {
    if (flat.cols() != static_cast<Eigen::Index>(steps) * channels)
        throw DataError("flattened sequence width mismatch");
    Seq x(steps);
    for (int t = 0; t < steps; ++t) x[t] = flat.middleCols(t * channels, channels);
    return x;
}

Eigen::MatrixXd sample_from_seq(const Seq& x, Eigen::Index b) {
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(x.size()), x.front().cols());
    for (std::size_t t = 0; t < x.size(); ++t) xs.row(static_cast<Eigen::Index>(t)) = x[t].row(b);
    return xs;
}

} // namespace cropcast::nn
