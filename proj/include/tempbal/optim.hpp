#ifndef TEMPBAL_OPTIM_HPP_
#define TEMPBAL_OPTIM_HPP_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempbal/error.hpp"
#include "tempbal/htsr.hpp"
#include "tempbal/network.hpp"
#include "tempbal/scheduler.hpp"

namespace tempbal {

struct OptimState {
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 128;
  std::vector<Eigen::MatrixXd> buffers;  // one per parameter tensor, lazily zeroed
};

// Momentum SGD with coupled weight decay:
//   v <- momentum * v + g + weight_decay * w;  w <- w - lr * v
// Weight tensors use their layer's rate from layer_lr; biases and layers
// missing from the map use global_lr.
inline void sgd_step(std::vector<ParamTensor>& params, const std::vector<Eigen::MatrixXd>& grads, OptimState& optim,
                     const LayerValues& layer_lr, double global_lr) {
  if (grads.size() != params.size()) throw UsageError("sgd_step: gradient count does not match parameter count");
  if (optim.buffers.size() != params.size()) {
    optim.buffers.clear();
    for (const auto& p : params) optim.buffers.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (grads[i].rows() != p.value.rows() || grads[i].cols() != p.value.cols() ||
        optim.buffers[i].rows() != p.value.rows() || optim.buffers[i].cols() != p.value.cols())
      throw UsageError("sgd_step: shape mismatch for layer '" + p.layer + "'");
    double lr = global_lr;
    if (p.is_weight)
      for (const auto& [name, v] : layer_lr)
        if (name == p.layer) lr = v;
    Eigen::MatrixXd& v = optim.buffers[i];
    v = optim.momentum * v + grads[i] + optim.weight_decay * p.value;
    p.value -= lr * v;
  }
}

// Gradient of (lambda_sr / 2) * sigma_max(W)^2, i.e. lambda_sr * sigma * u v^T,
// returned in the layer's own (un-oriented) shape.
inline Eigen::MatrixXd snr_grad_term(const OrientedMatrix& layer, double lambda_sr, double tol = 1e-7,
                                     int max_iter = 100) {
  if (lambda_sr < 0.0) throw UsageError("lambda_sr must be >= 0");
  Eigen::MatrixXd inc;
  if (lambda_sr == 0.0) {
    inc = Eigen::MatrixXd::Zero(layer.n(), layer.m());
  } else {
    const SingularTriplet top = power_iteration_sigma(layer, tol, max_iter);
    inc = (lambda_sr * top.sigma) * top.u * top.v.transpose();
  }
  if (layer.transposed) return inc.transpose();
  return inc;
}

}  // namespace tempbal

#endif  // TEMPBAL_OPTIM_HPP_
