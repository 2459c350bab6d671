#ifndef TEMPBAL_NETWORK_HPP_
#define TEMPBAL_NETWORK_HPP_

// Small feed-forward classifier with hand-written backprop: an optional stack
// of stride-1 "valid" convolutions (lowered to matmul over patches) followed
// by fully-connected layers and a softmax cross-entropy head.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempbal/error.hpp"
#include "tempbal/weight_store.hpp"

namespace tempbal {

struct ConvBlock {
  int out_channels = 0;
  int in_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
};

struct InputShape {
  int channels = 1;
  int height = 1;
  int width = 1;
};

enum class Activation { kRelu, kTanh };
enum class InitScheme { kHeNormal, kXavierUniform };

struct ModelSpec {
  std::vector<int> hidden = {64, 64, 64};  // dense hidden widths; output width = classes
  Activation activation = Activation::kRelu;
  std::vector<ConvBlock> conv_stem;
  std::optional<InputShape> input_shape;  // required with a conv stem
  InitScheme init = InitScheme::kHeNormal;
  std::uint64_t init_seed = 0;
};

// One trainable tensor. Weights are stored 2-D as (out x fan_in); biases as
// (out x 1).
struct ParamTensor {
  std::string layer;
  bool is_weight = true;
  Eigen::MatrixXd value;
};

class Network {
 public:
  Network(const ModelSpec& spec, int input_dim, int classes) : spec_(spec) {
    if (spec.hidden.empty()) throw UsageError("model needs at least one hidden layer (>= 2 dense layers)");
    if (classes < 2) throw UsageError("model needs >= 2 output classes");
    std::mt19937_64 rng(spec.init_seed);

    int features = input_dim;
    if (!spec.conv_stem.empty()) {
      if (!spec.input_shape) throw UsageError("conv_stem requires input_shape");
      InputShape s = *spec.input_shape;
      if (s.channels * s.height * s.width != input_dim)
        throw UsageError("input_shape " + std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
                         std::to_string(s.width) + " does not match input dimension " + std::to_string(input_dim));
      for (std::size_t i = 0; i < spec.conv_stem.size(); ++i) {
        const ConvBlock& b = spec.conv_stem[i];
        if (b.in_channels != s.channels)
          throw UsageError("conv block " + std::to_string(i) + ": in_channels does not match incoming channels");
        if (b.out_channels < 1 || b.kernel_h < 1 || b.kernel_w < 1 || b.kernel_h > s.height || b.kernel_w > s.width)
          throw UsageError("conv block " + std::to_string(i) + ": invalid shape");
        Layer l;
        l.conv = true;
        l.block = b;
        l.in_shape = s;
        s = InputShape{b.out_channels, s.height - b.kernel_h + 1, s.width - b.kernel_w + 1};
        l.out_shape = s;
        add_layer(l, "conv" + std::to_string(i), b.out_channels, b.in_channels * b.kernel_h * b.kernel_w, rng);
      }
      features = s.channels * s.height * s.width;
    }

    std::vector<int> widths = spec.hidden;
    widths.push_back(classes);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (widths[i] < 1) throw UsageError("hidden widths must be positive");
      Layer l;
      add_layer(l, "fc" + std::to_string(i), widths[i], features, rng);
      features = widths[i];
    }
  }

  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }
  int classes() const { return static_cast<int>(params_[layers_.back().weight].value.rows()); }

  // Snapshot of the weight tensors (biases excluded), in layer order.
  WeightSnapshot snapshot(std::uint32_t epoch) const {
    WeightSnapshot s;
    s.epoch = epoch;
    for (const auto& l : layers_) {
      const ParamTensor& p = params_[l.weight];
      LayerTensor t;
      t.name = p.layer;
      if (l.conv) {
        t.dims = {static_cast<std::uint64_t>(l.block.out_channels), static_cast<std::uint64_t>(l.block.in_channels),
                  static_cast<std::uint64_t>(l.block.kernel_h), static_cast<std::uint64_t>(l.block.kernel_w)};
      } else {
        t.dims = {static_cast<std::uint64_t>(p.value.rows()), static_cast<std::uint64_t>(p.value.cols())};
      }
      t.values.reserve(static_cast<std::size_t>(p.value.size()));
      for (Eigen::Index r = 0; r < p.value.rows(); ++r)
        for (Eigen::Index c = 0; c < p.value.cols(); ++c) t.values.push_back(p.value(r, c));
      s.layers.push_back(std::move(t));
    }
    return s;
  }

  Eigen::MatrixXd logits(const Eigen::MatrixXd& x) const {
    Cache cache;
    return forward(x, cache);
  }

  // Mean softmax cross-entropy over the batch; fills grads (same layout as
  // params()).
  double loss_and_grad(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, std::vector<Eigen::MatrixXd>& grads) const {
    Cache cache;
    Eigen::MatrixXd z = forward(x, cache);
    const auto batch = static_cast<double>(x.rows());

    Eigen::MatrixXd delta(z.rows(), z.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double mx = z.row(i).maxCoeff();
      Eigen::RowVectorXd e = (z.row(i).array() - mx).exp();
      const double sum = e.sum();
      loss += std::log(sum) + mx - z(i, y[i]);
      delta.row(i) = e / sum;
      delta(i, y[i]) -= 1.0;
    }
    delta /= batch;

    grads.assign(params_.size(), Eigen::MatrixXd());
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const Layer& l = layers_[li];
      const Eigen::MatrixXd& w = params_[l.weight].value;
      if (li + 1 < layers_.size()) delta = delta.cwiseProduct(activation_grad(cache.pre[li]));
      const Eigen::MatrixXd& in = cache.inputs[li];
      if (!l.conv) {
        grads[l.weight] = delta.transpose() * in;
        grads[l.bias] = delta.colwise().sum().transpose();
        if (li > 0) delta = delta * w;
      } else {
        delta = conv_backward(l, w, in, delta, grads[l.weight], grads[l.bias], li > 0);
      }
    }
    return loss / batch;
  }

  double accuracy(const Eigen::MatrixXd& x, const Eigen::VectorXi& y) const {
    if (x.rows() == 0) return 0.0;
    Eigen::MatrixXd z = logits(x);
    int correct = 0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      Eigen::Index arg = 0;
      z.row(i).maxCoeff(&arg);
      if (arg == y[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(x.rows());
  }

 private:
  struct Layer {
    bool conv = false;
    ConvBlock block;
    InputShape in_shape;
    InputShape out_shape;
    std::size_t weight = 0;
    std::size_t bias = 0;
  };

  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // layer inputs, batch x features
    std::vector<Eigen::MatrixXd> pre;     // pre-activations
  };

  void add_layer(Layer l, const std::string& name, int out, int fan_in, std::mt19937_64& rng) {
    ParamTensor w{name, true, Eigen::MatrixXd(out, fan_in)};
    if (spec_.init == InitScheme::kHeNormal) {
      std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
      for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = d(rng);
    } else {
      const double a = std::sqrt(6.0 / (fan_in + out));
      std::uniform_real_distribution<double> d(-a, a);
      for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = d(rng);
    }
    l.weight = params_.size();
    params_.push_back(std::move(w));
    l.bias = params_.size();
    params_.push_back(ParamTensor{name, false, Eigen::MatrixXd::Zero(out, 1)});
    layers_.push_back(l);
  }

  Eigen::MatrixXd activate(const Eigen::MatrixXd& z) const {
    if (spec_.activation == Activation::kRelu) return z.cwiseMax(0.0);
    return z.array().tanh().matrix();
  }

  Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& z) const {
    if (spec_.activation == Activation::kRelu) return (z.array() > 0.0).cast<double>().matrix();
    return (1.0 - z.array().tanh().square()).matrix();
  }

  // Patch matrix of one example: (out_h*out_w) x (in*kh*kw), columns ordered
  // (channel, kh, kw) to match the flattened (out, in, kh, kw) weight.
  static Eigen::MatrixXd im2col(const Layer& l, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const auto& b = l.block;
    const auto& is = l.in_shape;
    const auto& os = l.out_shape;
    Eigen::MatrixXd p(os.height * os.width, b.in_channels * b.kernel_h * b.kernel_w);
    for (int oy = 0; oy < os.height; ++oy)
      for (int ox = 0; ox < os.width; ++ox) {
        const int row = oy * os.width + ox;
        int col = 0;
        for (int c = 0; c < b.in_channels; ++c)
          for (int ky = 0; ky < b.kernel_h; ++ky)
            for (int kx = 0; kx < b.kernel_w; ++kx)
              p(row, col++) = x[(c * is.height + oy + ky) * is.width + ox + kx];
      }
    return p;
  }

  Eigen::MatrixXd conv_forward(const Layer& l, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b,
                               const Eigen::MatrixXd& x) const {
    const int spatial = l.out_shape.height * l.out_shape.width;
    Eigen::MatrixXd out(x.rows(), l.block.out_channels * spatial);
    for (Eigen::Index s = 0; s < x.rows(); ++s) {
      Eigen::MatrixXd y = im2col(l, x.row(s)) * w.transpose();  // spatial x out
      y.rowwise() += b.col(0).transpose();
      // Channel-major flattening: (channel, y, x).
      for (int c = 0; c < l.block.out_channels; ++c) out.row(s).segment(c * spatial, spatial) = y.col(c).transpose();
    }
    return out;
  }

  Eigen::MatrixXd conv_backward(const Layer& l, const Eigen::MatrixXd& w, const Eigen::MatrixXd& in,
                                const Eigen::MatrixXd& delta, Eigen::MatrixXd& gw, Eigen::MatrixXd& gb,
                                bool need_input_grad) const {
    const auto& b = l.block;
    const auto& is = l.in_shape;
    const auto& os = l.out_shape;
    const int spatial = os.height * os.width;
    gw = Eigen::MatrixXd::Zero(w.rows(), w.cols());
    gb = Eigen::MatrixXd::Zero(w.rows(), 1);
    Eigen::MatrixXd dx;
    if (need_input_grad) dx = Eigen::MatrixXd::Zero(in.rows(), in.cols());
    for (Eigen::Index s = 0; s < in.rows(); ++s) {
      Eigen::MatrixXd dy(spatial, b.out_channels);
      for (int c = 0; c < b.out_channels; ++c) dy.col(c) = delta.row(s).segment(c * spatial, spatial).transpose();
      Eigen::MatrixXd p = im2col(l, in.row(s));
      gw.noalias() += dy.transpose() * p;
      gb += dy.colwise().sum().transpose();
      if (!need_input_grad) continue;
      Eigen::MatrixXd dp = dy * w;
      for (int oy = 0; oy < os.height; ++oy)
        for (int ox = 0; ox < os.width; ++ox) {
          const int row = oy * os.width + ox;
          int col = 0;
          for (int c = 0; c < b.in_channels; ++c)
            for (int ky = 0; ky < b.kernel_h; ++ky)
              for (int kx = 0; kx < b.kernel_w; ++kx)
                dx(s, (c * is.height + oy + ky) * is.width + ox + kx) += dp(row, col++);
        }
    }
    return dx;
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const {
    cache.inputs.clear();
    cache.pre.clear();
    Eigen::MatrixXd h = x;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const Layer& l = layers_[li];
      const Eigen::MatrixXd& w = params_[l.weight].value;
      const Eigen::MatrixXd& b = params_[l.bias].value;
      cache.inputs.push_back(h);
      Eigen::MatrixXd z;
      if (l.conv) {
        z = conv_forward(l, w, b, h);
      } else {
        z = h * w.transpose();
        z.rowwise() += b.col(0).transpose();
      }
      cache.pre.push_back(z);
      h = li + 1 < layers_.size() ? activate(z) : z;
    }
    return h;
  }

  ModelSpec spec_;
  std::vector<ParamTensor> params_;
  std::vector<Layer> layers_;
};

}  // namespace tempbal

#endif  // TEMPBAL_NETWORK_HPP_
