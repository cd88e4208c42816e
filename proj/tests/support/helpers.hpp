#pragma once

// Shared test utilities: finite-difference gradient checking and
// scratch directories.

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "cropcast/nn/model.hpp"
#include "cropcast/rng.hpp"

namespace testsup {

inline Eigen::MatrixXd random_matrix(cropcast::Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-scale, scale);
    return m;
}

inline cropcast::nn::Seq random_seq(cropcast::Rng& rng, int steps, Eigen::Index batch,
                                    Eigen::Index channels, double scale = 1.0) {
    cropcast::nn::Seq seq(steps);
    for (auto& step : seq) step = random_matrix(rng, batch, channels, scale);
    return seq;
}

/// Relative error with an absolute floor, so coordinates whose true
/// gradient is zero (dead relu paths) compare at absolute scale instead
/// of amplifying finite-difference noise.
inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-4});
    return std::abs(a - b) / denom;
}

/// Max relative error between the model's analytic parameter gradient
/// and central finite differences of the scalar loss c . forward(x).
inline double gradcheck_model(cropcast::nn::Network& net, const cropcast::nn::Seq& x,
                              std::uint64_t seed) {
    using namespace cropcast::nn;
    cropcast::Rng rng(seed);
    const Eigen::Index batch = x.front().rows();
    Eigen::VectorXd loss_w(batch);
    for (Eigen::Index b = 0; b < batch; ++b) loss_w(b) = rng.uniform(-1.0, 1.0);

    auto tape = net.make_tape();
    net.forward(x, tape.get(), nullptr);
    ParamVec analytic = ParamVec::Zero(net.params().size());
    net.backward(loss_w, *tape, analytic);

    ParamVec& params = net.params();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const double saved = params(i);
        const double h = 1e-6 * std::max(1.0, std::abs(saved));
        params(i) = saved + h;
        const double up = loss_w.dot(net.forward(x, nullptr, nullptr));
        params(i) = saved - h;
        const double down = loss_w.dot(net.forward(x, nullptr, nullptr));
        params(i) = saved;
        worst = std::max(worst, rel_err(analytic(i), (up - down) / (2.0 * h)));
    }
    return worst;
}

/// Fresh scratch directory under the build tree, wiped per construction.
class TempDir {
  public:
    explicit TempDir(const std::string& name)
        : path_(std::filesystem::temp_directory_path() / ("cropcast_test_" + name)) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }

    std::string str() const { return path_.string(); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

  private:
    std::filesystem::path path_;
};

} // namespace testsup
