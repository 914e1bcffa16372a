#include "wavesynth/nn.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include "wavesynth/binary_io.hpp"
#include "wavesynth/random.hpp"

namespace wavesynth::nn {

namespace {

constexpr std::uint32_t kChnnVersion = 1;

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

void activate(Matrix& z, Activation a) {
  switch (a) {
    case Activation::ReLU: z = z.cwiseMax(0.0); break;
    case Activation::Tanh: z = z.array().tanh().matrix(); break;
    case Activation::Softmax: z = softmax_columns(z); break;
    case Activation::Linear: break;
  }
}

// Pull the gradient back through the activation; `out` is the activated value.
Matrix activation_backward(const Matrix& out, const Matrix& grad, Activation a) {
  switch (a) {
    case Activation::ReLU:
      // Subgradient 0 at exactly 0.
      return (out.array() > 0.0).cast<double>().matrix().cwiseProduct(grad);
    case Activation::Tanh:
      return (1.0 - out.array().square()).matrix().cwiseProduct(grad);
    case Activation::Softmax: {
      Matrix dz(out.rows(), out.cols());
      for (Eigen::Index c = 0; c < out.cols(); ++c) {
        const double dot = out.col(c).dot(grad.col(c));
        dz.col(c) = out.col(c).cwiseProduct((grad.col(c).array() - dot).matrix());
      }
      return dz;
    }
    case Activation::Linear: return grad;
  }
  return grad;
}

}  // namespace

std::string_view to_string(Activation a) noexcept {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Softmax: return "softmax";
    case Activation::Linear: return "linear";
  }
  return "?";
}

Activation activation_from_string(std::string_view name) {
  for (auto a : {Activation::ReLU, Activation::Tanh, Activation::Softmax, Activation::Linear}) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    p.col(c) = (logits.col(c).array() - mx).exp().matrix();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

void Gradients::scale(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
  input *= s;
}

void Gradients::add(const Gradients& other) {
  if (other.weights.size() != weights.size()) throw ContractViolation("Gradients::add: layer count mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    biases[i] += other.biases[i];
  }
}

Mlp::Mlp() : id_(next_id()) {}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)), id_(next_id()) { validate(); }

Mlp::Mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations, std::uint64_t seed)
    : id_(next_id()) {
  if (dims.size() < 2 || activations.size() + 1 != dims.size()) {
    throw std::invalid_argument("Mlp: need dims.size() == activations.size() + 1 >= 2");
  }
  Rng rng = make_rng(seed, {tag_of("mlp-init")});
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto in = dims[i];
    const auto out = dims[i + 1];
    if (in == 0 || out == 0) throw std::invalid_argument("Mlp: zero-width layer");
    const double limit = activations[i] == Activation::ReLU
                             ? std::sqrt(6.0 / static_cast<double>(in))
                             : std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer;
    layer.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = dist(rng);
    }
    layer.biases = Vector::Zero(static_cast<Eigen::Index>(out));
    layer.activation = activations[i];
    layers_.push_back(std::move(layer));
  }
  validate();
}

Mlp::Mlp(const Mlp& other) : layers_(other.layers_), id_(next_id()), version_(0) {}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    layers_ = other.layers_;
    touch();
  }
  return *this;
}

Mlp Mlp::make_stack(std::size_t in, std::size_t width, std::size_t depth, std::size_t out, Activation head,
                    std::uint64_t seed) {
  std::vector<std::size_t> dims{in};
  std::vector<Activation> acts;
  for (std::size_t i = 0; i < depth; ++i) {
    dims.push_back(width);
    acts.push_back(Activation::ReLU);
  }
  dims.push_back(out);
  acts.push_back(head);
  return Mlp(dims, acts, seed);
}

void Mlp::validate() const {
  if (layers_.empty()) throw std::invalid_argument("Mlp: no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0) throw std::invalid_argument("Mlp: empty layer");
    if (l.biases.size() != l.weights.rows()) throw std::invalid_argument("Mlp: bias size mismatch");
    if (i > 0 && l.weights.cols() != layers_[i - 1].weights.rows()) {
      throw std::invalid_argument("Mlp: layer " + std::to_string(i) + " does not chain");
    }
    if (l.activation == Activation::Softmax && i + 1 != layers_.size()) {
      throw std::invalid_argument("Mlp: softmax allowed only on the final layer");
    }
  }
  if (!all_finite()) throw std::invalid_argument("Mlp: non-finite parameter");
}

std::size_t Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weights.cols()); }

std::size_t Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weights.rows()); }

std::size_t Mlp::num_parameters() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

Vector Mlp::forward_single(const Vector& input) const {
  Matrix m = input;
  return forward(m).col(0);
}

Matrix Mlp::forward(const Matrix& inputs) const {
  if (layers_.empty()) throw ContractViolation("Mlp::forward on an empty network");
  if (static_cast<std::size_t>(inputs.rows()) != input_dim()) {
    throw std::invalid_argument("Mlp::forward: input dim " + std::to_string(inputs.rows()) + ", expected " +
                                std::to_string(input_dim()));
  }
  Matrix a = inputs;
  for (const auto& l : layers_) {
    Matrix z = l.weights * a;
    z.colwise() += l.biases;
    activate(z, l.activation);
    a = std::move(z);
  }
  return a;
}

ForwardCache Mlp::forward_cached(const Matrix& inputs) const {
  if (layers_.empty()) throw ContractViolation("Mlp::forward on an empty network");
  if (static_cast<std::size_t>(inputs.rows()) != input_dim()) {
    throw std::invalid_argument("Mlp::forward: input dim " + std::to_string(inputs.rows()) + ", expected " +
                                std::to_string(input_dim()));
  }
  ForwardCache cache;
  cache.net_id = id_;
  cache.net_version = version_;
  cache.inputs.reserve(layers_.size());
  Matrix a = inputs;
  for (const auto& l : layers_) {
    cache.inputs.push_back(a);
    Matrix z = l.weights * a;
    z.colwise() += l.biases;
    activate(z, l.activation);
    a = std::move(z);
  }
  cache.output = std::move(a);
  return cache;
}

Gradients Mlp::backward(const ForwardCache& cache, const Matrix& output_grad, OutputGrad kind) const {
  if (cache.net_id != id_ || cache.net_version != version_) {
    throw ContractViolation("Mlp::backward: cache is stale or from another network");
  }
  if (cache.inputs.size() != layers_.size()) throw ContractViolation("Mlp::backward: malformed cache");
  if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols()) {
    throw ContractViolation("Mlp::backward: output gradient shape mismatch");
  }
  Gradients g;
  g.weights.resize(layers_.size());
  g.biases.resize(layers_.size());

  Matrix upstream = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const Matrix& out = (k + 1 == layers_.size()) ? cache.output : cache.inputs[k + 1];
    Matrix dz;
    if (k + 1 == layers_.size() && kind == OutputGrad::wrt_logits) {
      dz = upstream;
    } else {
      dz = activation_backward(out, upstream, l.activation);
    }
    g.weights[k] = dz * cache.inputs[k].transpose();
    g.biases[k] = dz.rowwise().sum();
    upstream = l.weights.transpose() * dz;
  }
  g.input = std::move(upstream);
  return g;
}

Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    g.biases.push_back(Vector::Zero(l.biases.size()));
  }
  g.input = Matrix::Zero(static_cast<Eigen::Index>(input_dim()), 1);
  return g;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> flat;
  flat.reserve(num_parameters());
  for (const auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) flat.push_back(l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) flat.push_back(l.biases(r));
  }
  return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
  if (flat.size() != num_parameters()) throw ContractViolation("Mlp::set_parameters: size mismatch");
  std::size_t i = 0;
  for (auto& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = flat[i++];
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) l.biases(r) = flat[i++];
  }
  touch();
}

void Mlp::blend_from(const Mlp& source, double omega) {
  if (!same_shape(source)) throw ContractViolation("Mlp::blend_from: shape mismatch");
  if (omega == 1.0) {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      layers_[k].weights = source.layers_[k].weights;
      layers_[k].biases = source.layers_[k].biases;
    }
  } else if (omega != 0.0) {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      layers_[k].weights = omega * source.layers_[k].weights + (1.0 - omega) * layers_[k].weights;
      layers_[k].biases = omega * source.layers_[k].biases + (1.0 - omega) * layers_[k].biases;
    }
  }
  touch();
}

void Mlp::apply_update(const Gradients& delta, double step) {
  if (delta.weights.size() != layers_.size() || delta.biases.size() != layers_.size()) {
    throw ContractViolation("Mlp::apply_update: layer count mismatch");
  }
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (delta.weights[k].rows() != layers_[k].weights.rows() || delta.weights[k].cols() != layers_[k].weights.cols() ||
        delta.biases[k].size() != layers_[k].biases.size()) {
      throw ContractViolation("Mlp::apply_update: shape mismatch in layer " + std::to_string(k));
    }
    layers_[k].weights += step * delta.weights[k];
    layers_[k].biases += step * delta.biases[k];
  }
  touch();
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weights.allFinite() || !l.biases.allFinite()) return false;
  }
  return true;
}

bool Mlp::same_shape(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& a = layers_[k];
    const auto& b = other.layers_[k];
    if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() || a.activation != b.activation) {
      return false;
    }
  }
  return true;
}

std::uint64_t Mlp::checksum() const {
  const std::string bytes = encode_mlp(*this);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

AdamState make_adam(const Mlp& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& l : net.layers()) {
    s.m_weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    s.v_weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
    s.m_biases.push_back(Vector::Zero(l.biases.size()));
    s.v_biases.push_back(Vector::Zero(l.biases.size()));
  }
  return s;
}

void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
  const std::size_t n = net.num_layers();
  if (grads.weights.size() != n || grads.biases.size() != n || state.m_weights.size() != n ||
      state.m_biases.size() != n) {
    throw ContractViolation("adam_step: layer count mismatch");
  }
  for (std::size_t k = 0; k < n; ++k) {
    const auto& l = net.layer(k);
    if (grads.weights[k].rows() != l.weights.rows() || grads.weights[k].cols() != l.weights.cols() ||
        grads.biases[k].size() != l.biases.size() || state.m_weights[k].rows() != l.weights.rows() ||
        state.m_weights[k].cols() != l.weights.cols() || state.m_biases[k].size() != l.biases.size()) {
      throw ContractViolation("adam_step: shape mismatch in layer " + std::to_string(k));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double eps = state.epsilon;

  Gradients delta;
  delta.weights.resize(n);
  delta.biases.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    state.m_weights[k] = b1 * state.m_weights[k] + (1.0 - b1) * grads.weights[k];
    state.v_weights[k] = b2 * state.v_weights[k] + (1.0 - b2) * grads.weights[k].cwiseAbs2();
    state.m_biases[k] = b1 * state.m_biases[k] + (1.0 - b1) * grads.biases[k];
    state.v_biases[k] = b2 * state.v_biases[k] + (1.0 - b2) * grads.biases[k].cwiseAbs2();
    delta.weights[k] =
        ((state.m_weights[k].array() / c1) / ((state.v_weights[k].array() / c2).sqrt() + eps)).matrix();
    delta.biases[k] = ((state.m_biases[k].array() / c1) / ((state.v_biases[k].array() / c2).sqrt() + eps)).matrix();
  }
  net.apply_update(delta, -state.learning_rate);
  if (!net.all_finite()) throw std::runtime_error("adam_step: parameters became non-finite");
}

void write_mlp(std::ostream& out, const Mlp& net) {
  binary::put_magic(out, "CHNN");
  binary::put<std::uint32_t>(out, kChnnVersion);
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(net.num_layers()));
  for (const auto& l : net.layers()) {
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(l.weights.cols()));
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(l.weights.rows()));
    binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(l.activation));
  }
  for (double v : net.parameters()) binary::put<double>(out, v);
  if (!out) throw std::runtime_error("write_mlp: stream failure");
}

Mlp read_mlp(std::istream& in) {
  binary::expect_magic(in, "CHNN");
  const auto version = binary::get<std::uint32_t>(in);
  if (version != kChnnVersion) throw std::runtime_error("read_mlp: unsupported version " + std::to_string(version));
  const auto count = binary::get<std::uint32_t>(in);
  if (count == 0 || count > 4096) throw std::runtime_error("read_mlp: implausible layer count");
  std::vector<Layer> layers(count);
  for (auto& l : layers) {
    const auto fan_in = binary::get<std::uint32_t>(in);
    const auto fan_out = binary::get<std::uint32_t>(in);
    const auto tag = binary::get<std::uint32_t>(in);
    if (tag > static_cast<std::uint32_t>(Activation::Linear)) throw std::runtime_error("read_mlp: bad activation tag");
    l.weights.resize(fan_out, fan_in);
    l.biases.resize(fan_out);
    l.activation = static_cast<Activation>(tag);
  }
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = binary::get<double>(in);
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) l.biases(r) = binary::get<double>(in);
  }
  return Mlp(std::move(layers));
}

std::string encode_mlp(const Mlp& net) {
  std::ostringstream out(std::ios::binary);
  write_mlp(out, net);
  return std::move(out).str();
}

void save_mlp(const std::string& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_mlp: cannot open " + path);
  write_mlp(out, net);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_mlp: cannot open " + path);
  return read_mlp(in);
}

}  // namespace wavesynth::nn
