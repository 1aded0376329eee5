#include "mfc/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace mfc {

Mlp::Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2)
        throw std::invalid_argument("Mlp: need at least input and output layers");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        LayerView v;
        v.rows = sizes_[l + 1];
        v.cols = sizes_[l];
        v.w_offset = offset;
        offset += v.rows * v.cols;
        v.b_offset = offset;
        offset += v.rows;
        layers_.push_back(v);
    }
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
}

Mlp Mlp::standard(std::size_t in, std::size_t out, RngStream& rng) {
    Mlp net({in, 10, 10, 10, out});
    net.init_uniform(rng);
    return net;
}

void Mlp::init_uniform(RngStream& rng) {
    for (const auto& l : layers_) {
        const double bound = std::sqrt(6.0 / static_cast<double>(l.cols + l.rows));
        for (std::size_t i = 0; i < l.rows * l.cols; ++i)
            params_(static_cast<Eigen::Index>(l.w_offset + i)) =
                bound * (2.0 * rng.uniform() - 1.0);
        for (std::size_t i = 0; i < l.rows; ++i)
            params_(static_cast<Eigen::Index>(l.b_offset + i)) = 0.0;
    }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
    if (static_cast<std::size_t>(input.size()) != sizes_.front())
        throw std::invalid_argument("Mlp::forward: input dimension mismatch");
    Eigen::VectorXd h = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& v = layers_[l];
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            W(params_.data() + v.w_offset, static_cast<Eigen::Index>(v.rows),
              static_cast<Eigen::Index>(v.cols));
        Eigen::Map<const Eigen::VectorXd> b(params_.data() + v.b_offset,
                                            static_cast<Eigen::Index>(v.rows));
        h = (W * h + b).eval();
        if (l + 1 < layers_.size())
            h = h.array().tanh().matrix();
    }
    return h;
}

Eigen::VectorXd Mlp::forward_backward(const Eigen::VectorXd& input,
                                      const Eigen::VectorXd& out_grad,
                                      Eigen::VectorXd& param_grad,
                                      Eigen::VectorXd* in_grad) const {
    if (static_cast<std::size_t>(input.size()) != sizes_.front())
        throw std::invalid_argument("Mlp::forward_backward: input dimension mismatch");
    if (static_cast<std::size_t>(out_grad.size()) != sizes_.back())
        throw std::invalid_argument("Mlp::forward_backward: out_grad dimension mismatch");

    // forward, keeping post-activation values per layer
    std::vector<Eigen::VectorXd> acts(layers_.size() + 1);
    acts[0] = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& v = layers_[l];
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            W(params_.data() + v.w_offset, static_cast<Eigen::Index>(v.rows),
              static_cast<Eigen::Index>(v.cols));
        Eigen::Map<const Eigen::VectorXd> b(params_.data() + v.b_offset,
                                            static_cast<Eigen::Index>(v.rows));
        Eigen::VectorXd z = W * acts[l] + b;
        acts[l + 1] = (l + 1 < layers_.size()) ? z.array().tanh().matrix().eval() : z;
    }

    param_grad.setZero(params_.size());
    Eigen::VectorXd delta = out_grad; // d(loss)/d(pre-activation) of the output layer
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& v = layers_[l];
        if (l + 1 < layers_.size()) {
            // convert from post- to pre-activation sensitivity: tanh' = 1 - tanh^2
            delta = (delta.array() * (1.0 - acts[l + 1].array().square())).matrix();
        }
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            gW(param_grad.data() + v.w_offset, static_cast<Eigen::Index>(v.rows),
               static_cast<Eigen::Index>(v.cols));
        Eigen::Map<Eigen::VectorXd> gb(param_grad.data() + v.b_offset,
                                       static_cast<Eigen::Index>(v.rows));
        gW = delta * acts[l].transpose();
        gb = delta;
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            W(params_.data() + v.w_offset, static_cast<Eigen::Index>(v.rows),
              static_cast<Eigen::Index>(v.cols));
        if (l > 0 || in_grad)
            delta = (W.transpose() * delta).eval();
    }
    if (in_grad)
        *in_grad = delta;
    return acts.back();
}

double Mlp::value_and_grad(const Eigen::VectorXd& input, Eigen::VectorXd& param_grad) const {
    if (sizes_.back() != 1)
        throw std::invalid_argument("Mlp::value_and_grad: output must be scalar");
    Eigen::VectorXd one(1);
    one(0) = 1.0;
    return forward_backward(input, one, param_grad)(0);
}

} // namespace mfc
