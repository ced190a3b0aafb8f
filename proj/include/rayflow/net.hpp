#pragma once

#include "rayflow/denoiser.hpp"
#include "rayflow/gaussian.hpp"
#include "rayflow/schedule.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace rayflow {

using Mat = Eigen::MatrixXd;

struct Layer {
    Mat weight; // out x in
    Vec bias;
};

/// Fully connected network: tanh on hidden layers, identity on the output.
class Net {
public:
    Net() = default;
    /// Zero-initialized network with the given layer widths (input first).
    explicit Net(std::vector<int> dims);
    /// Glorot-uniform weights, zero biases.
    static Net random(std::vector<int> dims, Rng& rng);

    const std::vector<int>& dims() const { return dims_; }
    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    std::size_t num_layers() const { return layers.size(); }
    std::size_t num_parameters() const;

    std::vector<Layer> layers;

    friend bool operator==(const Net& a, const Net& b);

private:
    std::vector<int> dims_;
};

/// Parameter gradients with the same shapes as Net::layers.
struct Gradients {
    std::vector<Layer> layers;

    static Gradients zeros_like(const Net& net);
    Gradients& operator+=(const Gradients& other);
    Gradients& operator*=(double s);
    double squared_norm() const;
};

Vec forward(const Net& net, const Vec& input);
/// Column-wise batch evaluation.
Mat forward(const Net& net, const Mat& inputs);

/// Reverse-mode parameter gradients of <loss_grad, net(input)>.
Gradients backward(const Net& net, const Vec& input, const Vec& loss_grad);
/// Batch version; gradients are summed over columns in column order.
Gradients backward(const Net& net, const Mat& inputs, const Mat& loss_grads);

void sgd_step(Net& net, const Gradients& grads, double lr);

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

/// AdamW with bias-corrected moments and decoupled weight decay (weights only).
class AdamW {
public:
    AdamW(const Net& net, AdamWConfig cfg);
    void step(Net& net, const Gradients& grads);
    long steps() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    long t_ = 0;
    Gradients m_;
    Gradients v_;
};

/// Time features [t/T, sin(2 pi t/T), cos(2 pi t/T), sqrt(alpha_bar_t)] for a
/// continuous timestep in [0, T].
Vec time_embedding(const Schedule& sched, double t);
inline constexpr int kTimeEmbeddingDim = 4;

/// Student input: concat(x_t, time_embedding(t)).
Vec denoiser_input(const Schedule& sched, const Vec& x_t, double t);
/// Time-sampler input: concat(x0, eps_mu, time_embedding(t)).
Vec sampler_input(const Schedule& sched, const Vec& x0, const Vec& eps_mu, double t);

/// Wraps a student network as a Denoiser. The network is copied.
Denoiser make_net_denoiser(const Net& net, const Schedule& sched);

void save_net(const Net& net, std::ostream& os);
Net load_net(std::istream& is);
void save_net(const Net& net, const std::filesystem::path& path);
Net load_net(const std::filesystem::path& path);

} // namespace rayflow
