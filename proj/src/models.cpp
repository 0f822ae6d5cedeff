#include "liquiform/models.hpp"

#include <algorithm>
#include <cmath>

#include "liquiform/error.hpp"
#include "liquiform/rng.hpp"

namespace liquiform {

std::string to_string(NetworkKind kind) {
  switch (kind) {
    case NetworkKind::rectification: return "rectification";
    case NetworkKind::refinement: return "refinement";
    case NetworkKind::discriminator: return "discriminator";
  }
  return "unknown";
}

void check_network_config(const NetworkConfig& cfg, int multiple, const char* what) {
  if (cfg.input_channels < 1 || cfg.base_channels < 1) {
    throw ContractError(std::string(what) + ": channel counts must be positive");
  }
  if (cfg.height < multiple || cfg.width < multiple || cfg.height % multiple || cfg.width % multiple) {
    throw ContractError(std::string(what) + ": image size " + std::to_string(cfg.height) + "x" +
                        std::to_string(cfg.width) + " must be a positive multiple of " +
                        std::to_string(multiple) + " (pad or resize the input)");
  }
}

template <typename T>
std::vector<Named<T>> Network<T>::state() const {
  std::vector<Named<T>> all = params_;
  all.insert(all.end(), buffers_.begin(), buffers_.end());
  return all;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.numel());
  return n;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
std::vector<std::pair<std::string, Shape>> Network<T>::trace_shapes(const Tensor<T>& x, Mode mode) {
  std::vector<std::pair<std::string, Shape>> out;
  taps_ = &out;
  try {
    NoGradGuard no_grad;
    Tensor<T> y = forward(x, mode);
    out.emplace_back("output", y.shape());
  } catch (...) {
    taps_ = nullptr;
    throw;
  }
  taps_ = nullptr;
  return out;
}

template <typename T>
void Network<T>::tap(const std::string& name, const Tensor<T>& t) {
  if (taps_) taps_->emplace_back(name, t.shape());
}

template <typename T>
Tensor<T>& Network<T>::add_parameter(const std::string& name, Tensor<T> t) {
  for (const auto& p : params_) {
    if (p.name == name) throw ContractError("duplicate parameter name " + name);
  }
  t.set_requires_grad(true);
  params_.push_back({name, std::move(t)});
  return params_.back().tensor;
}

template <typename T>
Tensor<T> Network<T>::glorot(const Shape& shape, Index fan_in, Index fan_out) {
  Rng rng(mix_seed(cfg_.seed, init_counter_++));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(static_cast<std::size_t>(element_count(shape)));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return Tensor<T>(shape, std::move(v));
}

template <typename T>
typename Network<T>::Conv Network<T>::make_conv(const std::string& name, int in, int out, int kernel,
                                                int stride, int padding) {
  Conv c;
  c.weight = add_parameter(name + ".weight", glorot({out, in, kernel, kernel}, Index{in} * kernel * kernel,
                                                    Index{out} * kernel * kernel));
  c.bias = add_parameter(name + ".bias", Tensor<T>(Shape{out}, T{0}));
  c.stride = stride;
  c.padding = padding;
  return c;
}

template <typename T>
typename Network<T>::Conv Network<T>::make_deconv(const std::string& name, int in, int out, int kernel,
                                                  int stride, int padding, int output_padding) {
  Conv c;
  c.weight = add_parameter(name + ".weight", glorot({in, out, kernel, kernel}, Index{in} * kernel * kernel,
                                                    Index{out} * kernel * kernel));
  c.bias = add_parameter(name + ".bias", Tensor<T>(Shape{out}, T{0}));
  c.stride = stride;
  c.padding = padding;
  c.output_padding = output_padding;
  c.transposed = true;
  return c;
}

template <typename T>
typename Network<T>::Norm Network<T>::make_norm(const std::string& name, int channels) {
  Norm n;
  n.gamma = add_parameter(name + ".gamma", Tensor<T>(Shape{channels}, T{1}));
  n.beta = add_parameter(name + ".beta", Tensor<T>(Shape{channels}, T{0}));
  n.state = std::make_shared<BatchNormState<T>>(channels);
  buffers_.push_back({name + ".running_mean", n.state->running_mean});
  buffers_.push_back({name + ".running_var", n.state->running_var});
  return n;
}

template <typename T>
Tensor<T> Network<T>::make_prelu(const std::string& name, int channels) {
  return add_parameter(name + ".slope", Tensor<T>(Shape{channels}, T(0.25)));
}

template <typename T>
typename Network<T>::Linear Network<T>::make_linear(const std::string& name, int in, int out) {
  Linear l;
  l.weight = add_parameter(name + ".weight", glorot({in, out}, in, out));
  l.bias = add_parameter(name + ".bias", Tensor<T>(Shape{out}, T{0}));
  return l;
}

template <typename T>
Tensor<T> Network<T>::apply(const Conv& c, const Tensor<T>& x) const {
  if (c.transposed) return conv2d_transpose(x, c.weight, c.bias, c.stride, c.padding, c.output_padding);
  return conv2d(x, c.weight, c.bias, c.stride, c.padding);
}

template <typename T>
Tensor<T> Network<T>::apply(Norm& n, const Tensor<T>& x, Mode mode) const {
  return batch_norm(x, n.gamma, n.beta, *n.state, mode);
}

template <typename T>
Tensor<T> Network<T>::apply(const Linear& l, const Tensor<T>& x) const {
  return dense(x, l.weight, l.bias);
}

namespace {

int scaled(int base, int paper_width) { return std::max(1, paper_width * base / 64); }

template <typename T>
void check_input(const Tensor<T>& x, const NetworkConfig& cfg, const char* what) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != cfg.input_channels || s[2] != cfg.height || s[3] != cfg.width) {
    throw DimensionError(std::string(what) + ": expected input [N, " + std::to_string(cfg.input_channels) +
                         ", " + std::to_string(cfg.height) + ", " + std::to_string(cfg.width) + "], got " +
                         to_string(s));
  }
}

template <typename T>
class Rectification final : public Network<T> {
  using Base = Network<T>;
  using typename Base::Conv;
  using typename Base::Norm;

 public:
  explicit Rectification(const NetworkConfig& cfg) : Base(NetworkKind::rectification, cfg) {
    check_network_config(cfg, 16, "rectification network");
    if (cfg.base_channels < 2) throw ContractError("rectification network: base_channels must be at least 2");
    int in = cfg.input_channels;
    for (int s = 0; s < 4; ++s) {
      const int w = std::min(cfg.base_channels << s, 512);
      const std::string p = "enc" + std::to_string(s);
      Enc e;
      e.conv_a = this->make_conv(p + ".conv1", in, w, 3, 1, 1);
      e.bn_a = this->make_norm(p + ".bn1", w);
      e.conv_b = this->make_conv(p + ".conv2", w, w, 3, 1, 1);
      e.bn_b = this->make_norm(p + ".bn2", w);
      e.down = this->make_conv(p + ".down", w, w, 3, 2, 1);
      e.bn_down = this->make_norm(p + ".bn_down", w);
      enc_.push_back(std::move(e));
      widths_[s] = w;
      in = w;
    }
    int below = in;
    for (int s = 3; s >= 0; --s) {
      const int cat = below + widths_[s];
      const std::string p = "dec" + std::to_string(s);
      Dec d;
      d.conv_a = this->make_conv(p + ".conv1", cat, cat / 2, 3, 1, 1);
      d.bn_a = this->make_norm(p + ".bn1", cat / 2);
      d.conv_b = this->make_conv(p + ".conv2", cat / 2, cat / 4, 3, 1, 1);
      d.bn_b = this->make_norm(p + ".bn2", cat / 4);
      dec_.push_back(std::move(d));
      below = cat / 4;
    }
    out_ = this->make_conv("out", below, cfg.input_channels, 1, 1, 0);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    check_input(x, this->config(), "rectification network");
    std::vector<Tensor<T>> skips;
    Tensor<T> h = x;
    for (auto& e : enc_) {
      h = relu(this->apply(e.bn_a, this->apply(e.conv_a, h), mode));
      h = relu(this->apply(e.bn_b, this->apply(e.conv_b, h), mode));
      skips.push_back(h);
      h = relu(this->apply(e.bn_down, this->apply(e.down, h), mode));
    }
    this->tap("bottleneck", h);
    for (std::size_t i = 0; i < dec_.size(); ++i) {
      auto& d = dec_[i];
      h = concat_channels(bilinear_upsample(h, 2), skips[skips.size() - 1 - i]);
      h = relu(this->apply(d.bn_a, this->apply(d.conv_a, h), mode));
      h = relu(this->apply(d.bn_b, this->apply(d.conv_b, h), mode));
    }
    return sigmoid(this->apply(out_, h));
  }

 private:
  struct Enc {
    Conv conv_a, conv_b, down;
    Norm bn_a, bn_b, bn_down;
  };
  struct Dec {
    Conv conv_a, conv_b;
    Norm bn_a, bn_b;
  };
  std::vector<Enc> enc_;
  std::vector<Dec> dec_;
  int widths_[4] = {0, 0, 0, 0};
  Conv out_;
};

template <typename T>
class Refinement final : public Network<T> {
  using Base = Network<T>;
  using typename Base::Conv;
  using typename Base::Norm;

 public:
  explicit Refinement(const NetworkConfig& cfg) : Base(NetworkKind::refinement, cfg) {
    check_network_config(cfg, 4, "refinement network");
    const int b = cfg.base_channels, c = cfg.input_channels;
    head_ = block(this->make_conv("head", c, b, 7, 1, 3), "head", b);
    down1_ = block(this->make_conv("down1", b, 2 * b, 3, 2, 1), "down1", 2 * b);
    down2_ = block(this->make_conv("down2", 2 * b, 4 * b, 3, 2, 1), "down2", 4 * b);
    for (int i = 0; i < 5; ++i) {
      const std::string p = "res" + std::to_string(i);
      Residual r;
      r.conv_a = this->make_conv(p + ".conv1", 4 * b, 4 * b, 3, 1, 1);
      r.bn_a = this->make_norm(p + ".bn1", 4 * b);
      r.act = this->make_prelu(p + ".act", 4 * b);
      r.conv_b = this->make_conv(p + ".conv2", 4 * b, 4 * b, 3, 1, 1);
      r.bn_b = this->make_norm(p + ".bn2", 4 * b);
      res_.push_back(std::move(r));
    }
    up1_ = block(this->make_deconv("up1", 4 * b, 2 * b, 3, 2, 1, 1), "up1", 2 * b);
    up2_ = block(this->make_deconv("up2", 2 * b, b, 3, 2, 1, 1), "up2", b);
    tail_ = block(this->make_conv("tail", b, b, 3, 1, 1), "tail", b);
    out_ = this->make_conv("out", b, c, 7, 1, 3);
    // Starts as the identity so stage 2 begins from its input.
    for (auto& v : out_.weight.mutable_data()) v = T(0);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    check_input(x, this->config(), "refinement network");
    Tensor<T> h = run(head_, x, mode);
    h = run(down1_, h, mode);
    h = run(down2_, h, mode);
    for (auto& r : res_) {
      Tensor<T> t = prelu(this->apply(r.bn_a, this->apply(r.conv_a, h), mode), r.act);
      t = this->apply(r.bn_b, this->apply(r.conv_b, t), mode);
      h = add(h, t);
    }
    this->tap("trunk", h);
    h = run(up1_, h, mode);
    h = run(up2_, h, mode);
    h = run(tail_, h, mode);
    return clamp(add(x, liquiform::tanh(this->apply(out_, h))), 0.0, 1.0);
  }

  Conv& output_layer() { return out_; }

 private:
  struct Block {
    Conv conv;
    Norm bn;
    Tensor<T> act;
  };
  struct Residual {
    Conv conv_a, conv_b;
    Norm bn_a, bn_b;
    Tensor<T> act;
  };

  Block block(Conv conv, const std::string& name, int channels) {
    Block b;
    b.conv = std::move(conv);
    b.bn = this->make_norm(name + ".bn", channels);
    b.act = this->make_prelu(name + ".act", channels);
    return b;
  }

  Tensor<T> run(Block& b, const Tensor<T>& x, Mode mode) {
    return prelu(this->apply(b.bn, this->apply(b.conv, x), mode), b.act);
  }

  Block head_, down1_, down2_, up1_, up2_, tail_;
  std::vector<Residual> res_;
  Conv out_;
};

template <typename T>
class Discriminator final : public Network<T> {
  using Base = Network<T>;
  using typename Base::Conv;
  using typename Base::Linear;
  using typename Base::Norm;

 public:
  explicit Discriminator(const NetworkConfig& cfg) : Base(NetworkKind::discriminator, cfg) {
    check_network_config(cfg, 8, "discriminator");
    static constexpr int kWidths[8] = {64, 64, 128, 128, 256, 256, 512, 512};
    int in = cfg.input_channels;
    for (int i = 0; i < 8; ++i) {
      const int w = scaled(cfg.base_channels, kWidths[i]);
      const int stride = (i == 1 || i == 3 || i == 5) ? 2 : 1;
      const std::string p = "conv" + std::to_string(i + 1);
      Layer l;
      l.conv = this->make_conv(p, in, w, 3, stride, 1);
      l.has_bn = i > 0;
      if (l.has_bn) l.bn = this->make_norm("bn" + std::to_string(i + 1), w);
      layers_.push_back(std::move(l));
      in = w;
    }
    const int flat = in * (cfg.height / 8) * (cfg.width / 8);
    const int hidden = scaled(cfg.base_channels, 1024);
    fc1_ = this->make_linear("fc1", flat, hidden);
    fc2_ = this->make_linear("fc2", hidden, 1);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    check_input(x, this->config(), "discriminator");
    Tensor<T> h = x;
    for (auto& l : layers_) {
      h = this->apply(l.conv, h);
      if (l.has_bn) h = this->apply(l.bn, h, mode);
      h = leaky_relu(h, 0.2);
    }
    this->tap("features", h);
    h = leaky_relu(this->apply(fc1_, flatten(h)), 0.2);
    return sigmoid(this->apply(fc2_, h));
  }

 private:
  struct Layer {
    Conv conv;
    Norm bn;
    bool has_bn = false;
  };
  std::vector<Layer> layers_;
  Linear fc1_, fc2_;
};

}  // namespace

template <typename T>
std::unique_ptr<Network<T>> build_rectification(const NetworkConfig& cfg) {
  return std::make_unique<Rectification<T>>(cfg);
}

template <typename T>
std::unique_ptr<Network<T>> build_refinement(const NetworkConfig& cfg) {
  return std::make_unique<Refinement<T>>(cfg);
}

template <typename T>
std::unique_ptr<Network<T>> build_discriminator(const NetworkConfig& cfg) {
  return std::make_unique<Discriminator<T>>(cfg);
}

template <typename T>
std::unique_ptr<Network<T>> build_network(NetworkKind kind, const NetworkConfig& cfg) {
  switch (kind) {
    case NetworkKind::rectification: return build_rectification<T>(cfg);
    case NetworkKind::refinement: return build_refinement<T>(cfg);
    case NetworkKind::discriminator: return build_discriminator<T>(cfg);
  }
  throw ContractError("unknown network kind");
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> refinement_output_layer(Network<T>& net) {
  auto* r = dynamic_cast<Refinement<T>*>(&net);
  if (!r) throw ContractError("not a refinement network");
  return {r->output_layer().weight, r->output_layer().bias};
}

#define LIQUIFORM_INSTANTIATE_MODELS(T)                                                        \
  template class Network<T>;                                                                   \
  template std::unique_ptr<Network<T>> build_rectification<T>(const NetworkConfig&);           \
  template std::unique_ptr<Network<T>> build_refinement<T>(const NetworkConfig&);              \
  template std::unique_ptr<Network<T>> build_discriminator<T>(const NetworkConfig&);           \
  template std::unique_ptr<Network<T>> build_network<T>(NetworkKind, const NetworkConfig&);    \
  template std::pair<Tensor<T>, Tensor<T>> refinement_output_layer<T>(Network<T>&);

LIQUIFORM_INSTANTIATE_MODELS(float)
LIQUIFORM_INSTANTIATE_MODELS(double)

}  // namespace liquiform
