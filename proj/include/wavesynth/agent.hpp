#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavesynth/nn.hpp"
#include "wavesynth/random.hpp"

namespace wavesynth::agent {

using nn::ContractViolation;

struct Td3Config {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t hidden_width = 30;
  std::size_t hidden_depth = 10;
  double gamma = 0.99;
  std::size_t policy_delay = 2;  // d
  double polyak = 0.05;          // omega
  std::size_t batch_size = 64;   // B
  std::size_t buffer_capacity = 10000;
  double sigma_explore = 0.1;
  double sigma_smooth = 0.05;
  double c_smooth = 0.1;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  std::size_t lr_decay_steps = 0;  // 0: constant step size; else linear decay to 0
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
};

struct Trajectory {
  std::vector<double> s;
  std::vector<double> a;
  double r = 0.0;
  std::vector<double> s_next;
};

/// Ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Trajectory t);
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const Trajectory& operator[](std::size_t i) const { return items_.at(i); }
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Trajectory> items_;
};

/// Column-stacked minibatch.
struct Batch {
  nn::Matrix s;       // state_dim x B
  nn::Matrix a;       // action_dim x B
  nn::Vector r;       // B
  nn::Matrix s_next;  // state_dim x B

  std::size_t size() const noexcept { return static_cast<std::size_t>(r.size()); }
  static Batch from(std::span<const Trajectory> items);
};

enum class ActionMode { explore, exploit };

struct CriticLoss {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double combined() const noexcept { return critic1 + critic2; }
};

struct TrainDiagnostics {
  std::uint64_t step = 0;
  std::optional<CriticLoss> critic_loss;  // empty during warm-up
  bool actor_updated = false;
  std::size_t buffer_size = 0;
};

class Td3Agent {
 public:
  explicit Td3Agent(const Td3Config& config);

  const Td3Config& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return step_; }

  std::vector<double> select_action(std::span<const double> state, ActionMode mode);

  /// y_j = r_j + gamma * min_i Q'_i(s'_j, clip(pi'(s'_j) + clip(eps, -c, c), -1, 1)).
  nn::Vector compute_targets(const Batch& batch);

  /// One Adam step per critic on its MSBE against shared targets. Returns
  /// the losses measured before the step.
  CriticLoss critic_update(const Batch& batch);

  /// Gradient of J = mean_j Q1(s_j, pi(s_j)) with respect to the actor
  /// parameters (ascent direction).
  nn::Gradients actor_gradient(const Batch& batch) const;

  /// Delayed policy step. Only legal when step_count() % d == 0 and the
  /// buffer holds at least B entries; otherwise throws ContractViolation.
  void actor_update(const Batch& batch);
  void actor_update();

  /// Blend all three targets toward their mains. Only legal directly after
  /// actor_update within the same step.
  void polyak_update();

  TrainDiagnostics train_step(Trajectory t);

  /// Adds to the replay buffer without training or advancing the step.
  void remember(Trajectory t);
  Batch sample_batch();

  const ReplayBuffer& buffer() const noexcept { return buffer_; }
  const nn::Mlp& actor() const noexcept { return actor_; }
  const nn::Mlp& critic1() const noexcept { return critic1_; }
  const nn::Mlp& critic2() const noexcept { return critic2_; }
  const nn::Mlp& target_actor() const noexcept { return target_actor_; }
  const nn::Mlp& target_critic1() const noexcept { return target_critic1_; }
  const nn::Mlp& target_critic2() const noexcept { return target_critic2_; }

  /// Replace network weights (tests, checkpoint loading). Shapes must match.
  void set_networks(const nn::Mlp& actor, const nn::Mlp& critic1, const nn::Mlp& critic2,
                    const nn::Mlp& target_actor, const nn::Mlp& target_critic1, const nn::Mlp& target_critic2);

  /// Checksum over all six networks.
  std::uint64_t checksum() const;

  /// Six CHNN files plus hyperparams.json.
  void save(const std::string& dir) const;
  static Td3Agent load(const std::string& dir);

 private:
  double current_lr(double base) const noexcept;
  nn::Matrix critic_input(const nn::Matrix& s, const nn::Matrix& a) const;
  void check_state(std::span<const double> s) const;

  Td3Config config_;
  nn::Mlp actor_, critic1_, critic2_;
  nn::Mlp target_actor_, target_critic1_, target_critic2_;
  nn::AdamState actor_opt_, critic1_opt_, critic2_opt_;
  ReplayBuffer buffer_;
  Rng explore_rng_, sample_rng_, smooth_rng_;
  std::uint64_t step_ = 0;
  std::optional<std::uint64_t> actor_updated_at_;
};

}  // namespace wavesynth::agent
