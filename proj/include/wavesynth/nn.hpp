#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wavesynth::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when an API is used out of contract (stale cache, shape mismatch,
/// off-schedule update).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Activation : std::uint32_t { ReLU = 0, Tanh = 1, Softmax = 2, Linear = 3 };

std::string_view to_string(Activation a) noexcept;
Activation activation_from_string(std::string_view name);

struct Layer {
  Matrix weights;  // out x in
  Vector biases;   // out
  Activation activation = Activation::Linear;
};

/// Activations recorded by Mlp::forward_cached. Columns are batch items.
struct ForwardCache {
  std::uint64_t net_id = 0;
  std::uint64_t net_version = 0;
  std::vector<Matrix> inputs;  // input to each layer
  Matrix output;
};

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input;  // dL/d(input), same shape as the forward input

  void scale(double s);
  void add(const Gradients& other);
};

enum class OutputGrad {
  wrt_output,  // gradient with respect to the activated network output
  wrt_logits,  // gradient with respect to the final pre-activation
};

class Mlp {
 public:
  Mlp();
  /// dims = {in, h1, ..., out}; one activation per layer. Weights are
  /// He-uniform for ReLU layers and Xavier-uniform otherwise; biases zero.
  Mlp(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations, std::uint64_t seed);
  explicit Mlp(std::vector<Layer> layers);

  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  /// Hidden stack of `depth` layers of `width` units with ReLU, then the
  /// output layer with `head`.
  static Mlp make_stack(std::size_t in, std::size_t width, std::size_t depth, std::size_t out, Activation head,
                        std::uint64_t seed);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t num_parameters() const noexcept;
  const Layer& layer(std::size_t i) const { return layers_.at(i); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  Vector forward_single(const Vector& input) const;
  Matrix forward(const Matrix& inputs) const;
  ForwardCache forward_cached(const Matrix& inputs) const;

  /// Reverse-mode gradients of a scalar loss whose gradient with respect to
  /// the output (or final logits) is `output_grad`. Throws ContractViolation
  /// if the network changed since the cache was recorded.
  Gradients backward(const ForwardCache& cache, const Matrix& output_grad,
                     OutputGrad kind = OutputGrad::wrt_output) const;

  Gradients zero_gradients() const;

  /// Flat view: for each layer, weights row-major then biases.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  /// this = omega * source + (1 - omega) * this, parameterwise.
  void blend_from(const Mlp& source, double omega);

  /// Applies `delta` scaled by `step` to every parameter (used by Adam).
  void apply_update(const Gradients& delta, double step);

  bool all_finite() const;
  bool same_shape(const Mlp& other) const;

  /// FNV-1a over the checkpoint encoding.
  std::uint64_t checksum() const;

  std::uint64_t id() const noexcept { return id_; }
  std::uint64_t version() const noexcept { return version_; }

 private:
  void validate() const;
  void touch() noexcept { ++version_; }

  std::vector<Layer> layers_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

struct AdamState {
  std::vector<Matrix> m_weights, v_weights;
  std::vector<Vector> m_biases, v_biases;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam(const Mlp& net, double learning_rate);

/// One bias-corrected Adam descent step. Throws ContractViolation on shape
/// mismatch between net, grads and state.
void adam_step(Mlp& net, const Gradients& grads, AdamState& state);

// CHNN checkpoint: "CHNN", u32 version, u32 layer count, per layer
// (u32 in, u32 out, u32 activation), then per layer the f64 weights
// row-major followed by the biases. Little-endian.
void write_mlp(std::ostream& out, const Mlp& net);
Mlp read_mlp(std::istream& in);
void save_mlp(const std::string& path, const Mlp& net);
Mlp load_mlp(const std::string& path);
std::string encode_mlp(const Mlp& net);

/// Row-wise softmax of each column.
Matrix softmax_columns(const Matrix& logits);

}  // namespace wavesynth::nn
