#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "cropcast/nn/params.hpp"
#include "cropcast/rng.hpp"

namespace cropcast::nn {

/// Time-major minibatch: steps[t] is a batch x channels matrix.
using Seq = std::vector<Eigen::MatrixXd>;

/// Mutable state available only while training (dropout draws from the
/// run's RNG stream; inference never touches it).
struct TrainCtx {
    Rng* rng = nullptr;
};

enum class Activation { linear, relu };

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x);

// --- free-function primitives -------------------------------------------

/// Attention weight tensors per the additive scheme: pairwise hidden
/// states h = tanh(x_t W_t + x_t' W_x + b_t), compatibility
/// e = sigmoid(h . w_a + b_a), softmax over t', then attention values
/// l_t = sum_t' a_{t,t'} x_t'.
struct AttentionParams {
    Eigen::MatrixXd w_t; // d x d_a
    Eigen::MatrixXd w_x; // d x d_a
    Eigen::VectorXd b_t; // d_a
    Eigen::VectorXd w_a; // d_a (column of the d_a x 1 score matrix)
    double b_a = 0.0;
};

/// Forward pass of the additive self-attention over one sequence
/// (time x d). Returns the time x d matrix of attention values.
Eigen::MatrixXd additive_attention(const Eigen::MatrixXd& x, const AttentionParams& p);

/// Causal convolution of a time x c input with a k-tap kernel
/// (taps[k] is c x f), left zero-padded so output length equals input
/// length and y[t] depends only on x[t' <= t].
Eigen::MatrixXd causal_conv(const Eigen::MatrixXd& x,
                            const std::vector<Eigen::MatrixXd>& taps, int dilation);

/// Receptive field of a stacked causal conv: 1 + sum dilation * (k - 1).
int causal_stack_receptive_field(int kernel, const std::vector<int>& dilations);

// --- layers --------------------------------------------------------------

class Dense {
  public:
    struct Cache {
        Eigen::MatrixXd x, z;
    };

    Dense(ParamLayout& layout, const std::string& name, int in_dim, int out_dim, Activation act);

    Eigen::MatrixXd forward(const ParamVec& p, const Eigen::MatrixXd& x, Cache* cache) const;
    Eigen::MatrixXd backward(const ParamVec& p, ParamVec& grad, const Eigen::MatrixXd& dy,
                             const Cache& cache) const;

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }
    std::size_t weight_offset() const { return w_off_; }
    std::size_t bias_offset() const { return b_off_; }

  private:
    int in_dim_, out_dim_;
    Activation act_;
    std::size_t w_off_, b_off_;
};

/// 1-D convolution over time, causal (left zero-padding of
/// (k-1)*dilation) so sequence length is preserved.
class Conv1D {
  public:
    struct Cache {
        Seq x, z;
    };

    Conv1D(ParamLayout& layout, const std::string& name, int in_ch, int out_ch, int ksize,
           int dilation, Activation act);

    Seq forward(const ParamVec& p, const Seq& x, Cache* cache) const;
    Seq backward(const ParamVec& p, ParamVec& grad, const Seq& dy, const Cache& cache) const;

    int out_ch() const { return out_ch_; }

  private:
    Eigen::Map<const Eigen::MatrixXd> tap(const ParamVec& p, int k) const;
    Eigen::Map<Eigen::MatrixXd> tap(ParamVec& p, int k) const;

    int in_ch_, out_ch_, ksize_, dilation_;
    Activation act_;
    std::size_t k_off_, b_off_;
};

/// Non-overlapping max pooling over time (stride = pool width); a
/// trailing partial window is dropped.
class MaxPool1D {
  public:
    struct Cache {
        std::vector<Eigen::MatrixXi> pick; // winning offset per (batch, channel)
        int in_steps = 0;
    };

    explicit MaxPool1D(int pool) : pool_(pool) {}

    Seq forward(const Seq& x, Cache* cache) const;
    Seq backward(const Seq& dy, const Cache& cache) const;

  private:
    int pool_;
};

/// Standard LSTM cell unrolled over the sequence; gate order [i, f, g, o].
class Lstm {
  public:
    struct Cache {
        Seq x, i, f, g, o, c, tanh_c, h_prev;
    };

    Lstm(ParamLayout& layout, const std::string& name, int in_dim, int units);

    Seq forward(const ParamVec& p, const Seq& x, Cache* cache) const;
    Seq backward(const ParamVec& p, ParamVec& grad, const Seq& dy, const Cache& cache) const;

    /// Backward when only the final step's output was consumed.
    Seq backward_last(const ParamVec& p, ParamVec& grad, const Eigen::MatrixXd& dy_last,
                      const Cache& cache) const;

    int units() const { return units_; }

  private:
    int in_dim_, units_;
    std::size_t w_off_, r_off_, b_off_;
};

/// Gated recurrent unit (reset/update gates, no cell state); gate order
/// [z, r, n] with the candidate built from the reset-scaled state.
class Gru {
  public:
    struct Cache {
        Seq x, z, r, n, h_prev, rh;
    };

    Gru(ParamLayout& layout, const std::string& name, int in_dim, int units);

    Seq forward(const ParamVec& p, const Seq& x, Cache* cache) const;
    Seq backward(const ParamVec& p, ParamVec& grad, const Seq& dy, const Cache& cache) const;

    int units() const { return units_; }

  private:
    int in_dim_, units_;
    std::size_t w_off_, r_off_, b_off_;
};

/// Additive self-attention layer over a batch of sequences.
class AdditiveAttention {
  public:
    struct Cache {
        // per-sample intermediates; pairwise tanh states are recomputed
        // in backward to keep the tape O(T^2) instead of O(T^2 * d_a)
        std::vector<Eigen::MatrixXd> xs, a_proj, b_proj, e, attn;
    };

    AdditiveAttention(ParamLayout& layout, const std::string& name, int d, int d_a);

    Seq forward(const ParamVec& p, const Seq& x, Cache* cache) const;
    Seq backward(const ParamVec& p, ParamVec& grad, const Seq& dy, const Cache& cache) const;

    AttentionParams unpack(const ParamVec& p) const;

  private:
    int d_, d_a_;
    std::size_t wt_off_, wx_off_, bt_off_, wa_off_, ba_off_;
};

/// Normalizes each sample's channels over the time axis (the batch-norm
/// realization for sequence inputs: statistics never cross samples, so
/// training and inference behave identically).
class TemporalBatchNorm {
  public:
    struct Cache {
        Seq xhat;
        Eigen::MatrixXd inv_std;
    };

    TemporalBatchNorm(ParamLayout& layout, const std::string& name, int channels);

    Seq forward(const ParamVec& p, const Seq& x, Cache* cache) const;
    Seq backward(const ParamVec& p, ParamVec& grad, const Seq& dy, const Cache& cache) const;

  private:
    int channels_;
    std::size_t gamma_off_, beta_off_;
    static constexpr double kEps = 1e-5;
};

/// Inverted dropout on a feature matrix; identity when no TrainCtx is
/// supplied.
class Dropout {
  public:
    struct Cache {
        Eigen::MatrixXd mask;
    };

    explicit Dropout(double rate) : rate_(rate) {}

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache, TrainCtx* train) const;
    Eigen::MatrixXd backward(const Eigen::MatrixXd& dy, const Cache& cache) const;

  private:
    double rate_;
};

// --- shape helpers ---------------------------------------------------------

/// Seq (T of B x C) -> B x (T*C), step-major.
Eigen::MatrixXd flatten_seq(const Seq& x);
Seq unflatten_seq(const Eigen::MatrixXd& flat, int steps, int channels);

/// One sample's time x channels matrix from a time-major batch.
Eigen::MatrixXd sample_from_seq(const Seq& x, Eigen::Index b);

} // namespace cropcast::nn
