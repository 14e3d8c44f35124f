#pragma once

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

namespace rlfd {

enum class Activation { Relu, Tanh };

std::string to_string(Activation activation);
Activation parse_activation(const std::string& name);

/// Fully connected network, hidden layers use `activation`, output layer is linear.
/// Samples are columns.
struct Mlp {
    std::vector<int> sizes;  // input, hidden..., output
    Activation activation = Activation::Relu;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    int inputs() const { return sizes.front(); }
    int outputs() const { return sizes.back(); }
    int parameter_count() const;
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& flat);
};

/// Uniform Glorot init; the output layer is scaled by `output_scale`.
Mlp make_mlp(const std::vector<int>& sizes, Activation activation, std::mt19937_64& rng, double output_scale = 1.0);

struct MlpCache {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
};

Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& x, MlpCache* cache = nullptr);

/// Backpropagates d(loss)/d(output).  Adds the parameter gradient into `grad` (flat layout of
/// parameters()) when non-null and returns d(loss)/d(input).
Eigen::MatrixXd mlp_backward(const Mlp& net, const MlpCache& cache, const Eigen::MatrixXd& grad_out,
                             Eigen::VectorXd* grad);

struct Adam {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    Eigen::VectorXd m, v;
    long t = 0;

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

/// Adam step applied directly to a network.
void adam_step(Mlp& net, Adam& opt, const Eigen::VectorXd& grad);

/// target <- rho * online + (1 - rho) * target.
void soft_update(Mlp& target, const Mlp& online, double rho);

}  // namespace rlfd
