#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "mfc/rng.hpp"

namespace mfc {

/// Feedforward network with tanh hidden activations and identity output,
/// weights held in one flat parameter vector. Gradients are exact reverse-mode
/// accumulation, written out by hand.
///
/// Flat layout, layer by layer: weights of layer l (row-major, rows = layer
/// output size, cols = layer input size) followed by its biases.
class Mlp {
public:
    Mlp(std::vector<std::size_t> layer_sizes);

    /// [in, 10, 10, 10, out] with uniform +-sqrt(6/(fan_in+fan_out)) init.
    static Mlp standard(std::size_t in, std::size_t out, RngStream& rng);

    std::size_t input_dim() const { return sizes_.front(); }
    std::size_t output_dim() const { return sizes_.back(); }
    std::size_t param_count() const { return static_cast<std::size_t>(params_.size()); }

    Eigen::VectorXd& params() { return params_; }
    const Eigen::VectorXd& params() const { return params_; }

    void init_uniform(RngStream& rng);

    Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

    /// Forward pass plus d(output.dot(out_grad))/d(params); when in_grad is
    /// non-null it also receives the gradient with respect to the input.
    Eigen::VectorXd forward_backward(const Eigen::VectorXd& input,
                                     const Eigen::VectorXd& out_grad,
                                     Eigen::VectorXd& param_grad,
                                     Eigen::VectorXd* in_grad = nullptr) const;

    /// Scalar-output convenience: value and d(value)/d(params).
    double value_and_grad(const Eigen::VectorXd& input, Eigen::VectorXd& param_grad) const;

private:
    struct LayerView {
        std::size_t w_offset, b_offset, rows, cols;
    };

    std::vector<std::size_t> sizes_;
    std::vector<LayerView> layers_;
    Eigen::VectorXd params_;
};

} // namespace mfc
