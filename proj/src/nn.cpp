#include "drive/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace drive::nn {

std::string shape_string(std::span<const int> shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::residual_block: return "residual_block";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::tanh: return "tanh";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::concat_input: return "concat_input";
  }
  return "unknown";
}

LayerSpec LayerSpec::conv2d(std::string name, int in_channels, int out_channels, int stride,
                            int kernel) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.name = std::move(name);
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.stride = stride;
  s.kernel = kernel;
  return s;
}

LayerSpec LayerSpec::residual_block(std::string name, int channels) {
  LayerSpec s;
  s.kind = LayerKind::residual_block;
  s.name = std::move(name);
  s.in_channels = channels;
  s.out_channels = channels;
  return s;
}

LayerSpec LayerSpec::fully_connected(std::string name, int in_features, int out_features) {
  LayerSpec s;
  s.kind = LayerKind::fully_connected;
  s.name = std::move(name);
  s.in_features = in_features;
  s.out_features = out_features;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::sigmoid(int begin, int end) {
  LayerSpec s;
  s.kind = LayerKind::sigmoid;
  s.unit_begin = begin;
  s.unit_end = end;
  return s;
}

LayerSpec LayerSpec::tanh(int begin, int end) {
  LayerSpec s = sigmoid(begin, end);
  s.kind = LayerKind::tanh;
  return s;
}

LayerSpec LayerSpec::global_avg_pool() {
  LayerSpec s;
  s.kind = LayerKind::global_avg_pool;
  return s;
}

LayerSpec LayerSpec::concat_input(std::string input_name, int width) {
  LayerSpec s;
  s.kind = LayerKind::concat_input;
  s.input_name = std::move(input_name);
  s.input_width = width;
  return s;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
Parameter<T> make_param(std::string name, std::vector<int> shape, double fan_in) {
  Parameter<T> p;
  p.name = std::move(name);
  p.value = BasicTensor<T>(shape);
  p.grad = BasicTensor<T>(std::move(shape));
  p.fan_in = fan_in;
  return p;
}

void expect_rank(const std::vector<int>& in, std::size_t rank, const LayerSpec& spec) {
  if (in.size() != rank) {
    throw ShapeError(to_string(spec.kind) + " '" + spec.name + "': expected rank-" +
                     std::to_string(rank) + " per-sample input, got " + shape_string(in));
  }
}

// ---------------------------------------------------------------------------
// conv2d: weight [out, in, k, k], bias [out], zero padding k/2.

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  explicit Conv2d(const LayerSpec& spec) : Layer<T>(spec) {
    if (spec.in_channels <= 0 || spec.out_channels <= 0 || spec.kernel <= 0 ||
        spec.kernel % 2 == 0 || spec.stride <= 0) {
      throw ConfigError("conv2d '" + spec.name + "': invalid hyperparameters");
    }
    const int k = spec.kernel;
    const double fan_in = static_cast<double>(spec.in_channels) * k * k;
    weight_ = make_param<T>(spec.name + ".weight", {spec.out_channels, spec.in_channels, k, k},
                            fan_in);
    bias_ = make_param<T>(spec.name + ".bias", {spec.out_channels}, fan_in);
  }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    expect_rank(in, 3, this->spec_);
    if (in[0] != this->spec_.in_channels) {
      throw ShapeError("conv2d '" + this->spec_.name + "': expected " +
                       std::to_string(this->spec_.in_channels) + " channels, got " +
                       std::to_string(in[0]));
    }
    return {this->spec_.out_channels, out_dim(in[1]), out_dim(in[2])};
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, const TensorMap<T>&) override {
    const auto& s = this->spec_;
    batch_ = x.dim(0);
    in_h_ = x.dim(2);
    in_w_ = x.dim(3);
    out_h_ = out_dim(in_h_);
    out_w_ = out_dim(in_w_);
    const int k = s.kernel;
    const int rows = s.in_channels * k * k;
    const int plane = out_h_ * out_w_;
    const int cols = batch_ * plane;

    cols_.resize(rows, cols);
    switch (s.stride) {
      case 1: im2col<1>(x, cols); break;
      case 2: im2col<2>(x, cols); break;
      default: im2col<0>(x, cols); break;
    }

    ConstMatMap<T> w(weight_.value.data(), s.out_channels, rows);
    out_mat_.resize(s.out_channels, cols);
    out_mat_.noalias() = w * cols_;
    const RowMat<T>& out_mat = out_mat_;
    BasicTensor<T> y({batch_, s.out_channels, out_h_, out_w_});
    for (int b = 0; b < batch_; ++b) {
      for (int o = 0; o < s.out_channels; ++o) {
        const T bias = bias_.value[static_cast<std::size_t>(o)];
        const T* src = out_mat.data() + static_cast<std::size_t>(o) * cols +
                       static_cast<std::size_t>(b) * plane;
        T* dst = y.data() + (static_cast<std::size_t>(b) * s.out_channels + o) * plane;
        for (int p = 0; p < plane; ++p) dst[p] = src[p] + bias;
      }
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, TensorMap<T>&, bool need_dx) override {
    const auto& s = this->spec_;
    const int k = s.kernel;
    const int pad = k / 2;
    const int rows = s.in_channels * k * k;
    const int plane = out_h_ * out_w_;
    const int cols = batch_ * plane;

    RowMat<T> dmat(s.out_channels, cols);
    for (int b = 0; b < batch_; ++b) {
      for (int o = 0; o < s.out_channels; ++o) {
        const T* src = grad_out.data() + (static_cast<std::size_t>(b) * s.out_channels + o) * plane;
        std::copy(src, src + plane,
                  dmat.data() + static_cast<std::size_t>(o) * cols + static_cast<std::size_t>(b) * plane);
      }
    }
    if (!weight_.frozen) {
      MatMap<T> dw(weight_.grad.data(), s.out_channels, rows);
      dw.noalias() = dmat * cols_.transpose();
    }
    if (!bias_.frozen) {
      for (int o = 0; o < s.out_channels; ++o) bias_.grad[static_cast<std::size_t>(o)] = dmat.row(o).sum();
    }
    if (!need_dx) return {};

    ConstMatMap<T> w(weight_.value.data(), s.out_channels, rows);
    RowMat<T> dcols = w.transpose() * dmat;
    BasicTensor<T> dx({batch_, s.in_channels, in_h_, in_w_});
    for (int c = 0; c < s.in_channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const auto [ox_lo, ox_hi] = valid_range(kx, in_w_, out_w_);
          if (ox_lo >= ox_hi) continue;
          const T* row = dcols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * cols;
          for (int b = 0; b < batch_; ++b) {
            T* dst = dx.data() + (static_cast<std::size_t>(b) * s.in_channels + c) *
                                     static_cast<std::size_t>(in_h_ * in_w_);
            const T* src = row + static_cast<std::size_t>(b) * plane;
            for (int oy = 0; oy < out_h_; ++oy) {
              const int iy = oy * s.stride - pad + ky;
              if (iy < 0 || iy >= in_h_) continue;
              T* in_row = dst + iy * in_w_ + (kx - pad);
              const T* g = src + oy * out_w_;
              if (s.stride == 1) {
                for (int ox = ox_lo; ox < ox_hi; ++ox) in_row[ox] += g[ox];
              } else {
                for (int ox = ox_lo; ox < ox_hi; ++ox) in_row[ox * s.stride] += g[ox];
              }
            }
          }
        }
      }
    }
    return dx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

 private:
  // Stride is a template argument for the common cases (0 means runtime).
  template <int kStride>
  void im2col(const BasicTensor<T>& x, int cols) {
    const auto& s = this->spec_;
    const int stride = kStride > 0 ? kStride : s.stride;
    const int k = s.kernel;
    const int pad = k / 2;
    const int plane = out_h_ * out_w_;
    for (int c = 0; c < s.in_channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          T* row = cols_.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * cols;
          for (int b = 0; b < batch_; ++b) {
            const T* src = x.data() + (static_cast<std::size_t>(b) * s.in_channels + c) *
                                          static_cast<std::size_t>(in_h_ * in_w_);
            T* dst = row + static_cast<std::size_t>(b) * plane;
            for (int oy = 0; oy < out_h_; ++oy) {
              T* out_row = dst + oy * out_w_;
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= in_h_) {
                for (int ox = 0; ox < out_w_; ++ox) out_row[ox] = T{0};
                continue;
              }
              const T* in_row = src + iy * in_w_;
              for (int ox = 0; ox < out_w_; ++ox) {
                const int ix = ox * stride - pad + kx;
                out_row[ox] = (ix >= 0 && ix < in_w_) ? in_row[ix] : T{0};
              }
            }
          }
        }
      }
    }
  }

  // Output columns whose input column ox * stride - pad + kx lies in [0, in_w).
  std::pair<int, int> valid_range(int kx, int in_w, int out_w) const {
    const int pad = this->spec_.kernel / 2;
    const int stride = this->spec_.stride;
    const int offset = kx - pad;
    int lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    int hi = (in_w - 1 - offset) >= 0 ? (in_w - 1 - offset) / stride + 1 : 0;
    hi = std::min(hi, out_w);
    lo = std::min(lo, hi);
    return {lo, hi};
  }

  int out_dim(int in) const {
    const int pad = this->spec_.kernel / 2;
    return (in + 2 * pad - this->spec_.kernel) / this->spec_.stride + 1;
  }

  Parameter<T> weight_;
  Parameter<T> bias_;
  RowMat<T> cols_;
  RowMat<T> out_mat_;
  int batch_ = 0, in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

// ---------------------------------------------------------------------------

template <typename T>
class Relu final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  std::vector<int> output_shape(const std::vector<int>& in) const override { return in; }

  BasicTensor<T> forward(const BasicTensor<T>& x, const TensorMap<T>&) override {
    BasicTensor<T> y(x.shape);
    mask_.resize(x.size());
    const T* __restrict in = x.data();
    T* __restrict out = y.data();
    std::uint8_t* __restrict m = mask_.data();
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T{0} ? in[i] : T{0};
    for (std::size_t i = 0; i < n; ++i) m[i] = in[i] > T{0};
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, TensorMap<T>&, bool need_dx) override {
    if (!need_dx) return {};
    BasicTensor<T> dx(grad_out.shape);
    const T* __restrict g = grad_out.data();
    T* __restrict out = dx.data();
    const std::uint8_t* __restrict m = mask_.data();
    const std::size_t n = dx.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = m[i] ? g[i] : T{0};
    return dx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Relu>(*this); }
  void append_kinks(std::vector<std::uint8_t>& out) const override {
    out.insert(out.end(), mask_.begin(), mask_.end());
  }

 private:
  std::vector<std::uint8_t> mask_;
};

// ---------------------------------------------------------------------------
// residual_block: relu(conv2(relu(conv1(x))) + x), channels preserved.

template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  explicit ResidualBlock(const LayerSpec& spec)
      : Layer<T>(spec),
        conv1_(LayerSpec::conv2d(spec.name + ".conv1", spec.in_channels, spec.out_channels, 1)),
        conv2_(LayerSpec::conv2d(spec.name + ".conv2", spec.out_channels, spec.out_channels, 1)),
        relu1_(LayerSpec::relu()),
        relu2_(LayerSpec::relu()) {
    if (spec.in_channels != spec.out_channels) {
      throw ConfigError("residual_block '" + spec.name +
                        "': input and output channel counts must match");
    }
  }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    return conv2_.output_shape(conv1_.output_shape(in));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, const TensorMap<T>& inputs) override {
    BasicTensor<T> h = relu1_.forward(conv1_.forward(x, inputs), inputs);
    BasicTensor<T> z = conv2_.forward(h, inputs);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += x[i];
    return relu2_.forward(z, inputs);
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, TensorMap<T>& input_grads,
                          bool need_dx) override {
    BasicTensor<T> dz = relu2_.backward(grad_out, input_grads, true);
    const bool conv1_trainable = !conv1_params_frozen();
    BasicTensor<T> dh = conv2_.backward(dz, input_grads, need_dx || conv1_trainable);
    if (!need_dx && !conv1_trainable) return {};
    dh = relu1_.backward(dh, input_grads, true);
    BasicTensor<T> dx = conv1_.backward(dh, input_grads, need_dx);
    if (!need_dx) return {};
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dz[i];
    return dx;
  }

  std::vector<Parameter<T>*> parameters() override {
    auto p = conv1_.parameters();
    auto q = conv2_.parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
  }

  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<ResidualBlock>(*this);
  }

  void append_kinks(std::vector<std::uint8_t>& out) const override {
    relu1_.append_kinks(out);
    relu2_.append_kinks(out);
  }

 private:
  bool conv1_params_frozen() {
    for (auto* p : conv1_.parameters()) {
      if (!p->frozen) return false;
    }
    return true;
  }

  Conv2d<T> conv1_;
  Conv2d<T> conv2_;
  Relu<T> relu1_;
  Relu<T> relu2_;
};

// ---------------------------------------------------------------------------
// fully_connected: weight [out, in], bias [out], input [batch, in].

template <typename T>
class FullyConnected : public Layer<T> {
 public:
  explicit FullyConnected(const LayerSpec& spec) : Layer<T>(spec) {
    if (spec.in_features <= 0 || spec.out_features <= 0) {
      throw ConfigError("fully_connected '" + spec.name + "': widths must be positive");
    }
    weight_ = make_param<T>(spec.name + ".weight", {spec.out_features, spec.in_features},
                            spec.in_features);
    bias_ = make_param<T>(spec.name + ".bias", {spec.out_features}, spec.in_features);
  }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    expect_rank(in, 1, this->spec_);
    if (in[0] != this->spec_.in_features) {
      throw ShapeError("fully_connected '" + this->spec_.name + "': expected " +
                       std::to_string(this->spec_.in_features) + " inputs, got " +
                       std::to_string(in[0]));
    }
    return {this->spec_.out_features};
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, const TensorMap<T>&) override {
    const auto& s = this->spec_;
    input_ = x;
    const int batch = x.dim(0);
    ConstMatMap<T> xm(x.data(), batch, s.in_features);
    ConstMatMap<T> w(weight_.value.data(), s.out_features, s.in_features);
    BasicTensor<T> y({batch, s.out_features});
    MatMap<T> ym(y.data(), batch, s.out_features);
    ym.noalias() = xm * w.transpose();
    for (int b = 0; b < batch; ++b) {
      for (int o = 0; o < s.out_features; ++o) ym(b, o) += bias_.value[static_cast<std::size_t>(o)];
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, TensorMap<T>&, bool need_dx) override {
    const auto& s = this->spec_;
    const int batch = input_.dim(0);
    ConstMatMap<T> dy(grad_out.data(), batch, s.out_features);
    ConstMatMap<T> xm(input_.data(), batch, s.in_features);
    if (!weight_.frozen) {
      MatMap<T> dw(weight_.grad.data(), s.out_features, s.in_features);
      dw.noalias() = dy.transpose() * xm;
    }
    if (!bias_.frozen) {
      for (int o = 0; o < s.out_features; ++o) bias_.grad[static_cast<std::size_t>(o)] = dy.col(o).sum();
    }
    if (!need_dx) return {};
    ConstMatMap<T> w(weight_.value.data(), s.out_features, s.in_features);
    BasicTensor<T> dx({batch, s.in_features});
    MatMap<T> dxm(dx.data(), batch, s.in_features);
    dxm.noalias() = dy * w;
    return dx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<FullyConnected>(*this);
  }

 protected:
  Parameter<T> weight_;
  Parameter<T> bias_;
  BasicTensor<T> input_;
};

// ---------------------------------------------------------------------------
// Elementwise squashing over a unit range of [batch, units] inputs.

template <typename T, bool kSigmoid>
class Squash final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    const int units = static_cast<int>(shape_product(in));
    const int end = this->spec_.unit_end < 0 ? units : this->spec_.unit_end;
    if (this->spec_.unit_begin < 0 || this->spec_.unit_begin > end || end > units ||
        (in.size() != 1 && (this->spec_.unit_begin != 0 || end != units))) {
      throw ShapeError(to_string(this->spec_.kind) + ": unit range does not fit input " +
                       shape_string(in));
    }
    return in;
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, const TensorMap<T>&) override {
    const int batch = x.dim(0);
    units_ = static_cast<int>(x.size()) / std::max(batch, 1);
    begin_ = this->spec_.unit_begin;
    end_ = this->spec_.unit_end < 0 ? units_ : this->spec_.unit_end;
    output_ = x;
    for (int b = 0; b < batch; ++b) {
      for (int u = begin_; u < end_; ++u) {
        T& v = output_[static_cast<std::size_t>(b) * units_ + u];
        if constexpr (kSigmoid) {
          v = T{1} / (T{1} + std::exp(-v));
        } else {
          v = std::tanh(v);
        }
      }
    }
    return output_;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, TensorMap<T>&, bool need_dx) override {
    if (!need_dx) return {};
    BasicTensor<T> dx = grad_out;
    const int batch = static_cast<int>(dx.size()) / std::max(units_, 1);
    for (int b = 0; b < batch; ++b) {
      for (int u = begin_; u < end_; ++u) {
        const std::size_t i = static_cast<std::size_t>(b) * units_ + u;
        const T y = output_[i];
        if constexpr (kSigmoid) {
          dx[i] *= y * (T{1} - y);
        } else {
          dx[i] *= T{1} - y * y;
        }
      }
    }
    return dx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Squash>(*this); }

 private:
  BasicTensor<T> output_;
  int units_ = 0, begin_ = 0, end_ = 0;
};

// ---------------------------------------------------------------------------

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    expect_rank(in, 3, this->spec_);
    return {in[0]};
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, const TensorMap<T>&) override {
    in_shape_ = x.shape;
    const int batch = x.dim(0), channels = x.dim(1);
    const int plane = x.dim(2) * x.dim(3);
    BasicTensor<T> y({batch, channels});
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < channels; ++c) {
        const T* src = x.data() + (static_cast<std::size_t>(b) * channels + c) * plane;
        T sum{0};
        for (int p = 0; p < plane; ++p) sum += src[p];
        y[static_cast<std::size_t>(b) * channels + c] = sum / static_cast<T>(plane);
      }
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, TensorMap<T>&, bool need_dx) override {
    if (!need_dx) return {};
    BasicTensor<T> dx(in_shape_);
    const int batch = in_shape_[0], channels = in_shape_[1];
    const int plane = in_shape_[2] * in_shape_[3];
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < channels; ++c) {
        const T g = grad_out[static_cast<std::size_t>(b) * channels + c] / static_cast<T>(plane);
        T* dst = dx.data() + (static_cast<std::size_t>(b) * channels + c) * plane;
        std::fill(dst, dst + plane, g);
      }
    }
    return dx;
  }

  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<GlobalAvgPool>(*this);
  }

 private:
  std::vector<int> in_shape_;
};

// ---------------------------------------------------------------------------

template <typename T>
class ConcatInput final : public Layer<T> {
 public:
  explicit ConcatInput(const LayerSpec& spec) : Layer<T>(spec) {
    if (spec.input_name.empty() || spec.input_width <= 0) {
      throw ConfigError("concat_input: needs an input name and a positive width");
    }
  }

  std::vector<int> output_shape(const std::vector<int>& in) const override {
    expect_rank(in, 1, this->spec_);
    return {in[0] + this->spec_.input_width};
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, const TensorMap<T>& inputs) override {
    const auto& s = this->spec_;
    auto it = inputs.find(s.input_name);
    if (it == inputs.end()) throw ShapeError("concat_input: missing input '" + s.input_name + "'");
    const auto& side = it->second;
    const int batch = x.dim(0);
    if (side.rank() != 2 || side.dim(0) != batch || side.dim(1) != s.input_width) {
      throw ShapeError("concat_input '" + s.input_name + "': expected shape [" +
                       std::to_string(batch) + "," + std::to_string(s.input_width) + "], got " +
                       shape_string(side.shape));
    }
    width_ = x.dim(1);
    BasicTensor<T> y({batch, width_ + s.input_width});
    for (int b = 0; b < batch; ++b) {
      T* dst = y.data() + static_cast<std::size_t>(b) * (width_ + s.input_width);
      std::copy_n(x.data() + static_cast<std::size_t>(b) * width_, width_, dst);
      std::copy_n(side.data() + static_cast<std::size_t>(b) * s.input_width, s.input_width,
                  dst + width_);
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, TensorMap<T>& input_grads,
                          bool need_dx) override {
    const auto& s = this->spec_;
    const int total = width_ + s.input_width;
    const int batch = static_cast<int>(grad_out.size()) / total;
    BasicTensor<T> dside({batch, s.input_width});
    BasicTensor<T> dx;
    if (need_dx) dx = BasicTensor<T>({batch, width_});
    for (int b = 0; b < batch; ++b) {
      const T* src = grad_out.data() + static_cast<std::size_t>(b) * total;
      if (need_dx) std::copy_n(src, width_, dx.data() + static_cast<std::size_t>(b) * width_);
      std::copy_n(src + width_, s.input_width,
                  dside.data() + static_cast<std::size_t>(b) * s.input_width);
    }
    input_grads[s.input_name] = std::move(dside);
    return dx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ConcatInput>(*this); }

 private:
  int width_ = 0;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::conv2d: return std::make_unique<Conv2d<T>>(spec);
    case LayerKind::residual_block: return std::make_unique<ResidualBlock<T>>(spec);
    case LayerKind::fully_connected: return std::make_unique<FullyConnected<T>>(spec);
    case LayerKind::relu: return std::make_unique<Relu<T>>(spec);
    case LayerKind::sigmoid: return std::make_unique<Squash<T, true>>(spec);
    case LayerKind::tanh: return std::make_unique<Squash<T, false>>(spec);
    case LayerKind::global_avg_pool: return std::make_unique<GlobalAvgPool<T>>(spec);
    case LayerKind::concat_input: return std::make_unique<ConcatInput<T>>(spec);
  }
  throw ConfigError("unknown layer kind");
}

// ---------------------------------------------------------------------------
// Network

template <typename T>
Network<T>::Network(std::string input_name, std::vector<int> input_shape,
                    const std::vector<LayerSpec>& specs)
    : input_name_(std::move(input_name)),
      input_shape_(std::move(input_shape)),
      output_shape_(input_shape_) {
  for (const auto& spec : specs) append(make_layer<T>(spec));
  custom_layers_ = false;
  std::set<std::string> names;
  for (const auto* p : parameters()) {
    if (!names.insert(p->name).second) {
      throw ConfigError("network: duplicate parameter name '" + p->name + "'");
    }
  }
}

template <typename T>
Network<T>::Network(const Network& other)
    : input_name_(other.input_name_),
      input_shape_(other.input_shape_),
      output_shape_(other.output_shape_),
      specs_(other.specs_),
      custom_layers_(other.custom_layers_),
      input_grads_(other.input_grads_),
      has_forward_(other.has_forward_),
      batch_(other.batch_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Network<T>& Network<T>::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
void Network<T>::append(std::unique_ptr<Layer<T>> layer) {
  output_shape_ = layer->output_shape(output_shape_);
  specs_.push_back(layer->spec());
  layers_.push_back(std::move(layer));
  custom_layers_ = true;
}

template <typename T>
TensorMap<T> Network<T>::forward(const TensorMap<T>& inputs) {
  auto it = inputs.find(input_name_);
  if (it == inputs.end()) throw ShapeError("network: missing input '" + input_name_ + "'");
  const auto& x = it->second;
  if (x.rank() != static_cast<int>(input_shape_.size()) + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape.begin() + 1)) {
    throw ShapeError("network: input '" + input_name_ + "' has shape " + shape_string(x.shape) +
                     ", expected [batch]+" + shape_string(input_shape_));
  }
  BasicTensor<T> h = x;
  for (auto& layer : layers_) h = layer->forward(h, inputs);
  has_forward_ = true;
  batch_ = x.dim(0);
  TensorMap<T> out;
  out.emplace("out", std::move(h));
  return out;
}

template <typename T>
BasicTensor<T> Network<T>::forward(const BasicTensor<T>& x, const TensorMap<T>& side_inputs) {
  TensorMap<T> inputs = side_inputs;
  inputs[input_name_] = x;
  return std::move(forward(inputs).at("out"));
}

template <typename T>
void Network<T>::backward_in_place(const BasicTensor<T>& loss_grad, bool need_input_grad) {
  if (!has_forward_) throw StateError("network: backward called before forward");
  std::vector<int> expected{batch_};
  expected.insert(expected.end(), output_shape_.begin(), output_shape_.end());
  if (loss_grad.shape != expected) {
    throw ShapeError("network: loss gradient has shape " + shape_string(loss_grad.shape) +
                     ", expected " + shape_string(expected));
  }
  input_grads_.clear();

  // Layers below the lowest one that owns a trainable parameter or reads a side
  // input need no reverse pass unless the primary input gradient is wanted.
  std::size_t lowest = layers_.size();
  if (need_input_grad) {
    lowest = 0;
  } else {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      bool needed = layers_[i]->spec().kind == LayerKind::concat_input;
      for (auto* p : layers_[i]->parameters()) needed = needed || !p->frozen;
      if (needed) {
        lowest = i;
        break;
      }
    }
  }

  BasicTensor<T> g = loss_grad;
  for (std::size_t i = layers_.size(); i-- > lowest;) {
    const bool need_dx = i > lowest || need_input_grad;
    g = layers_[i]->backward(g, input_grads_, need_dx);
  }
  if (need_input_grad) input_grads_[input_name_] = std::move(g);
}

template <typename T>
TensorMap<T> Network<T>::backward(const BasicTensor<T>& loss_grad, bool need_input_grad) {
  backward_in_place(loss_grad, need_input_grad);
  TensorMap<T> grads;
  for (auto* p : parameters()) {
    if (!p->frozen) grads[p->name] = p->grad;
  }
  return grads;
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& l : layers_) {
    auto p = l->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Network<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (const auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

template <typename T>
Parameter<T>* Network<T>::find(std::string_view name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <typename T>
const Parameter<T>* Network<T>::find(std::string_view name) const {
  for (const auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
void Network<T>::init_he_uniform(Rng& rng) {
  for (auto* p : parameters()) {
    const bool is_bias = p->value.rank() == 1;
    const double bound = std::sqrt(6.0 / p->fan_in);
    for (auto& v : p->value.values) {
      v = is_bias ? T{0} : static_cast<T>(uniform(rng, -bound, bound));
    }
  }
}

template <typename T>
void Network<T>::fill_parameters(T value) {
  for (auto* p : parameters()) std::fill(p->value.values.begin(), p->value.values.end(), value);
}

template <typename T>
void Network<T>::set_frozen(bool frozen) {
  for (auto* p : parameters()) p->frozen = frozen;
}

template <typename T>
std::vector<std::uint8_t> Network<T>::kink_signature() const {
  std::vector<std::uint8_t> out;
  for (const auto& l : layers_) l->append_kinks(out);
  return out;
}

template class Network<float>;
template class Network<double>;
template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&);

}  // namespace drive::nn
