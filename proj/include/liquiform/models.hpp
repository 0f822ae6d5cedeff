#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "liquiform/ops.hpp"
#include "liquiform/tensor.hpp"

namespace liquiform {

struct NetworkConfig {
  int input_channels = 3;
  // Width multiplier: layer widths are quoted for base 64 and scale linearly.
  int base_channels = 64;
  int height = 224;
  int width = 224;
  std::uint64_t seed = 0;  // parameter initialization
};

enum class NetworkKind { rectification, refinement, discriminator };

std::string to_string(NetworkKind kind);

template <typename T>
struct Named {
  std::string name;
  Tensor<T> tensor;
};

// A feed-forward network with named parameters (trainable) and buffers
// (batch-norm running moments).
template <typename T>
class Network {
 public:
  Network(NetworkKind kind, NetworkConfig cfg) : kind_(kind), cfg_(cfg) {}
  virtual ~Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;

  NetworkKind kind() const { return kind_; }
  const NetworkConfig& config() const { return cfg_; }

  const std::vector<Named<T>>& parameters() const { return params_; }
  const std::vector<Named<T>>& buffers() const { return buffers_; }
  // Parameters followed by buffers, the checkpoint contents.
  std::vector<Named<T>> state() const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Names and shapes of the intermediate maps tapped during one forward pass.
  std::vector<std::pair<std::string, Shape>> trace_shapes(const Tensor<T>& x, Mode mode);

 protected:
  struct Conv {
    Tensor<T> weight, bias;
    int stride = 1, padding = 0, output_padding = 0;
    bool transposed = false;
  };
  struct Norm {
    Tensor<T> gamma, beta;
    std::shared_ptr<BatchNormState<T>> state;
  };
  struct Linear {
    Tensor<T> weight, bias;
  };

  Conv make_conv(const std::string& name, int in, int out, int kernel, int stride, int padding);
  Conv make_deconv(const std::string& name, int in, int out, int kernel, int stride, int padding,
                   int output_padding);
  Norm make_norm(const std::string& name, int channels);
  Tensor<T> make_prelu(const std::string& name, int channels);
  Linear make_linear(const std::string& name, int in, int out);

  Tensor<T> apply(const Conv& c, const Tensor<T>& x) const;
  Tensor<T> apply(Norm& n, const Tensor<T>& x, Mode mode) const;
  Tensor<T> apply(const Linear& l, const Tensor<T>& x) const;

  void tap(const std::string& name, const Tensor<T>& t);

 private:
  Tensor<T>& add_parameter(const std::string& name, Tensor<T> t);
  Tensor<T> glorot(const Shape& shape, Index fan_in, Index fan_out);

  NetworkKind kind_;
  NetworkConfig cfg_;
  std::vector<Named<T>> params_;
  std::vector<Named<T>> buffers_;
  std::vector<std::pair<std::string, Shape>>* taps_ = nullptr;
  std::uint64_t init_counter_ = 0;
};

// Throws ContractError unless height and width are positive multiples of
// `multiple` and the channel counts are positive.
void check_network_config(const NetworkConfig& cfg, int multiple, const char* what);

// Encoder-decoder with skip connections: four stages of two 3x3 conv + BN +
// ReLU followed by a stride-2 conv (widths base * {1,2,4,8}, at most 512),
// reaching 1/16 scale; four decoder stages of bilinear x2, concatenation with
// the matching encoder map and two 3x3 conv + BN + ReLU that quarter the
// concatenated width; 1x1 conv and sigmoid. Requires H, W divisible by 16.
template <typename T>
std::unique_ptr<Network<T>> build_rectification(const NetworkConfig& cfg);

// Residual network: 7x7 conv, two stride-2 downsample blocks, five residual
// blocks at 4x base width, two stride-2 deconvolution blocks, 3x3 conv and a
// 7x7 conv with tanh added to the input, clamped to [0, 1]. BN + PReLU
// throughout. Requires H, W divisible by 4.
template <typename T>
std::unique_ptr<Network<T>> build_refinement(const NetworkConfig& cfg);

// Eight 3x3 conv + LeakyReLU(0.2) layers (stride 2 at layers 2, 4, 6; BN on
// layers 2-8) to 1/8 scale, then dense -> 16 * base, LeakyReLU, dense -> 1,
// sigmoid. Output [N, 1]. Requires H, W divisible by 8.
template <typename T>
std::unique_ptr<Network<T>> build_discriminator(const NetworkConfig& cfg);

template <typename T>
std::unique_ptr<Network<T>> build_network(NetworkKind kind, const NetworkConfig& cfg);

// The final 7x7 convolution of a refinement network (weight, bias); zeroing it
// turns the network into the identity on [0, 1] images.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> refinement_output_layer(Network<T>& net);

}  // namespace liquiform
