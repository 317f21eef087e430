#include "lidood/mlp.hpp"

#include "lidood/errors.hpp"

#include <cmath>

namespace lidood {

namespace {

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

Eigen::MatrixXd activate(const Eigen::MatrixXd& pre, Activation act) {
  if (act == Activation::tanh) return pre.array().tanh().matrix();
  return (pre.array() / (1.0 + (-pre.array()).exp())).matrix();
}

// Derivative of the activation, evaluated from the pre-activation.
Eigen::MatrixXd activate_deriv(const Eigen::MatrixXd& pre, Activation act) {
  if (act == Activation::tanh) return (1.0 - pre.array().tanh().square()).matrix();
  const Eigen::ArrayXXd sig = 1.0 / (1.0 + (-pre.array()).exp());
  return (sig * (1.0 + pre.array() * (1.0 - sig))).matrix();
}

}  // namespace

Mlp::Mlp(std::vector<int> widths, Activation act) : widths_(std::move(widths)), act_(act) {
  if (widths_.size() < 2) throw InvalidArgument("Mlp: need at least input and output widths");
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    Layer layer;
    layer.in = widths_[l];
    layer.out = widths_[l + 1];
    if (layer.in < 0 || layer.out < 0) throw InvalidArgument("Mlp: negative width");
    layer.w_offset = offset;
    offset += static_cast<std::size_t>(layer.in) * static_cast<std::size_t>(layer.out);
    layer.b_offset = offset;
    offset += static_cast<std::size_t>(layer.out);
    layers_.push_back(layer);
  }
  n_params_ = offset;
}

void Mlp::init(std::span<double> params, Rng& rng, bool zero_output) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    const bool last = l + 1 == layers_.size();
    const double scale = layer.in > 0 ? 1.0 / std::sqrt(static_cast<double>(layer.in)) : 0.0;
    const std::size_t nw = static_cast<std::size_t>(layer.in) * static_cast<std::size_t>(layer.out);
    for (std::size_t i = 0; i < nw; ++i)
      params[layer.w_offset + i] = (last && zero_output) ? 0.0 : scale * rng.normal();
    for (int i = 0; i < layer.out; ++i) params[layer.b_offset + static_cast<std::size_t>(i)] = 0.0;
  }
}

Eigen::MatrixXd Mlp::forward(std::span<const double> params, const Eigen::MatrixXd& x,
                             Cache* cache) const {
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    ConstMap w(params.data() + layer.w_offset, layer.out, layer.in);
    ConstVecMap b(params.data() + layer.b_offset, layer.out);
    Eigen::MatrixXd pre = w * h;
    pre.colwise() += b;
    if (l + 1 == layers_.size()) return pre;
    h = activate(pre, act_);
    if (cache) {
      cache->pre.push_back(std::move(pre));
      cache->post.push_back(h);
    }
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(std::span<const double> params, const Cache& cache,
                              const Eigen::MatrixXd& grad_out, std::span<double> grad) const {
  Eigen::MatrixXd g = grad_out;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const Eigen::MatrixXd& input = li == 0 ? cache.input : cache.post[li - 1];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + layer.w_offset, layer.out, layer.in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + layer.b_offset, layer.out);
    gw.noalias() += g * input.transpose();
    gb += g.rowwise().sum();
    ConstMap w(params.data() + layer.w_offset, layer.out, layer.in);
    Eigen::MatrixXd gin = w.transpose() * g;
    if (li > 0) gin.array() *= activate_deriv(cache.pre[li - 1], act_).array();
    g = std::move(gin);
  }
  return g;
}

Eigen::MatrixXd Mlp::input_jacobian(std::span<const double> params,
                                    const Eigen::VectorXd& x) const {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(in_dim(), in_dim());
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    ConstMap w(params.data() + layer.w_offset, layer.out, layer.in);
    ConstVecMap b(params.data() + layer.b_offset, layer.out);
    Eigen::VectorXd pre = w * h + b;
    jac = w * jac;
    if (l + 1 == layers_.size()) break;
    const Eigen::VectorXd deriv = activate_deriv(pre, act_);
    jac = deriv.asDiagonal() * jac;
    h = activate(pre, act_);
  }
  return jac;
}

Eigen::MatrixXd Mlp::jvp(std::span<const double> params, const Eigen::MatrixXd& x,
                         const Eigen::MatrixXd& v) const {
  Eigen::MatrixXd h = x;
  Eigen::MatrixXd dh = v;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    ConstMap w(params.data() + layer.w_offset, layer.out, layer.in);
    ConstVecMap b(params.data() + layer.b_offset, layer.out);
    Eigen::MatrixXd pre = w * h;
    pre.colwise() += b;
    dh = w * dh;
    if (l + 1 == layers_.size()) break;
    dh.array() *= activate_deriv(pre, act_).array();
    h = activate(pre, act_);
  }
  return dh;
}

}  // namespace lidood
