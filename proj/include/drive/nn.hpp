#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "drive/rng.hpp"
#include "drive/tensor.hpp"

namespace drive::nn {

enum class LayerKind {
  conv2d,
  residual_block,
  fully_connected,
  relu,
  sigmoid,
  tanh,
  global_avg_pool,
  concat_input,
};

std::string to_string(LayerKind kind);

/// Declarative description of one layer. Only the fields relevant to `kind`
/// are read.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int in_features = 0;
  int out_features = 0;
  // Element range [unit_begin, unit_end) for sigmoid/tanh on [batch, units]
  // inputs; unit_end < 0 means "to the end".
  int unit_begin = 0;
  int unit_end = -1;
  // Side input concatenated by concat_input, and its per-sample width.
  std::string input_name;
  int input_width = 0;

  static LayerSpec conv2d(std::string name, int in_channels, int out_channels, int stride,
                          int kernel = 3);
  static LayerSpec residual_block(std::string name, int channels);
  static LayerSpec fully_connected(std::string name, int in_features, int out_features);
  static LayerSpec relu();
  static LayerSpec sigmoid(int begin = 0, int end = -1);
  static LayerSpec tanh(int begin = 0, int end = -1);
  static LayerSpec global_avg_pool();
  static LayerSpec concat_input(std::string input_name, int width);
};

template <typename T>
struct Parameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool frozen = false;
  double fan_in = 1.0;
};

template <typename T>
class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  virtual ~Layer() = default;

  /// Per-sample output shape for a per-sample input shape; throws ShapeError.
  virtual std::vector<int> output_shape(const std::vector<int>& in) const = 0;
  virtual BasicTensor<T> forward(const BasicTensor<T>& x, const TensorMap<T>& inputs) = 0;
  /// Fills parameter gradients (skipping frozen ones) and returns dL/dx when
  /// `need_dx`. Gradients w.r.t. side inputs are written to `input_grads`.
  virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out, TensorMap<T>& input_grads,
                                  bool need_dx) = 0;
  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
  /// Appends the activation pattern of piecewise-linear units from the last
  /// forward pass.
  virtual void append_kinks(std::vector<std::uint8_t>& /*out*/) const {}

  const LayerSpec& spec() const { return spec_; }

 protected:
  LayerSpec spec_;
};

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec);

/// A chain of layers fed by one primary input; concat_input layers pull
/// additional named inputs from the same input map.
template <typename T>
class Network {
 public:
  Network() = default;
  Network(std::string input_name, std::vector<int> input_shape, const std::vector<LayerSpec>& specs);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  /// Appends an arbitrary layer (used for custom or instrumented layers).
  void append(std::unique_ptr<Layer<T>> layer);

  /// Runs the chain; the result is stored under "out".
  TensorMap<T> forward(const TensorMap<T>& inputs);
  BasicTensor<T> forward(const BasicTensor<T>& x, const TensorMap<T>& side_inputs = {});

  /// Reverse pass from dLoss/dOut. Returns gradients keyed by parameter name
  /// for every trainable parameter. Input gradients land in input_gradients().
  TensorMap<T> backward(const BasicTensor<T>& loss_grad, bool need_input_grad = true);
  /// Like backward() but leaves gradients inside the parameters only.
  void backward_in_place(const BasicTensor<T>& loss_grad, bool need_input_grad = true);
  const TensorMap<T>& input_gradients() const { return input_grads_; }

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;
  std::size_t parameter_count() const;

  void init_he_uniform(Rng& rng);
  void fill_parameters(T value);
  void set_frozen(bool frozen);

  const std::string& input_name() const { return input_name_; }
  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<int>& output_shape() const { return output_shape_; }
  const std::vector<LayerSpec>& specs() const { return specs_; }
  std::size_t layer_count() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  /// ReLU activation pattern of the last forward pass.
  std::vector<std::uint8_t> kink_signature() const;

  /// Same architecture and values in another scalar type.
  template <typename U>
  Network<U> cast() const {
    if (custom_layers_) throw ConfigError("network: cannot cast a network with custom layers");
    Network<U> out(input_name_, input_shape_, specs_);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i]->value = tensor_cast<U>(src[i]->value);
      dst[i]->frozen = src[i]->frozen;
    }
    return out;
  }

 private:
  std::string input_name_;
  std::vector<int> input_shape_;
  std::vector<int> output_shape_;
  std::vector<LayerSpec> specs_;
  bool custom_layers_ = false;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  TensorMap<T> input_grads_;
  bool has_forward_ = false;
  int batch_ = 0;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace drive::nn
