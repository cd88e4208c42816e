#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "cropcast/common.hpp"
#include "cropcast/rng.hpp"

namespace cropcast::nn {

/// Flat parameter (or gradient) vector. Values are kept exactly
/// representable as float32 so persisting weights is lossless.
using ParamVec = Eigen::VectorXd;

enum class Init { uniform_fan_in, zeros, ones };

struct TensorInfo {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    Init init = Init::zeros;
    int fan_in = 0;
};

/// Names, shapes and offsets of every tensor in a model, in registration
/// order. The order doubles as the initialization draw order, so a model
/// kind always maps a seed to the same parameters.
class ParamLayout {
  public:
    std::size_t add(std::string name, std::vector<int> shape, Init init, int fan_in = 0) {
        TensorInfo info;
        info.name = std::move(name);
        info.shape = std::move(shape);
        info.size = 1;
        for (int d : info.shape) {
            if (d < 1) throw ConfigError("tensor '" + info.name + "' has a non-positive dim");
            info.size *= static_cast<std::size_t>(d);
        }
        info.offset = total_;
        info.init = init;
        info.fan_in = fan_in;
        total_ += info.size;
        tensors_.push_back(info);
        return tensors_.back().offset;
    }

    std::size_t total() const { return total_; }
    const std::vector<TensorInfo>& tensors() const { return tensors_; }

  private:
    std::vector<TensorInfo> tensors_;
    std::size_t total_ = 0;
};

inline Eigen::Map<const Eigen::MatrixXd> pmat(const ParamVec& v, std::size_t off, int rows,
                                              int cols) {
    return {v.data() + off, rows, cols};
}

inline Eigen::Map<Eigen::MatrixXd> pmat(ParamVec& v, std::size_t off, int rows, int cols) {
    return {v.data() + off, rows, cols};
}

inline Eigen::Map<const Eigen::VectorXd> pvec(const ParamVec& v, std::size_t off, int n) {
    return {v.data() + off, n};
}

inline Eigen::Map<Eigen::VectorXd> pvec(ParamVec& v, std::size_t off, int n) {
    return {v.data() + off, n};
}

/// Snaps every entry to the nearest float32 value. Called after
/// initialization and after each optimizer step, which keeps the
/// float32 weight files a bit-exact image of the live parameters.
inline void quantize_to_f32(ParamVec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v(i) = static_cast<double>(static_cast<float>(v(i)));
}

/// Fresh parameter vector for a layout: weights are uniform with
/// fan-in scaling (limit sqrt(3/fan_in)), biases zero, scale factors one.
inline ParamVec init_params(const ParamLayout& layout, std::uint64_t seed) {
    ParamVec v = ParamVec::Zero(static_cast<Eigen::Index>(layout.total()));
    Rng rng(seed);
    for (const auto& t : layout.tensors()) {
        switch (t.init) {
            case Init::zeros:
                break;
            case Init::ones:
                for (std::size_t i = 0; i < t.size; ++i) v(t.offset + i) = 1.0;
                break;
            case Init::uniform_fan_in: {
                if (t.fan_in < 1)
                    throw ConfigError("tensor '" + t.name + "' is missing its fan-in");
                const double limit = std::sqrt(3.0 / t.fan_in);
                for (std::size_t i = 0; i < t.size; ++i)
                    v(t.offset + i) = rng.uniform(-limit, limit);
                break;
            }
        }
    }
    quantize_to_f32(v);
    return v;
}

} // namespace cropcast::nn
