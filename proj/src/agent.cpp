#include "wavesynth/agent.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace wavesynth::agent {

namespace {

void clip_unit(nn::Matrix& m) { m = m.cwiseMax(-1.0).cwiseMin(1.0); }

nlohmann::ordered_json config_to_json(const Td3Config& c) {
  nlohmann::ordered_json j;
  j["state_dim"] = c.state_dim;
  j["action_dim"] = c.action_dim;
  j["hidden_width"] = c.hidden_width;
  j["hidden_depth"] = c.hidden_depth;
  j["gamma"] = c.gamma;
  j["policy_delay"] = c.policy_delay;
  j["polyak"] = c.polyak;
  j["batch_size"] = c.batch_size;
  j["buffer_capacity"] = c.buffer_capacity;
  j["sigma_explore"] = c.sigma_explore;
  j["sigma_smooth"] = c.sigma_smooth;
  j["c_smooth"] = c.c_smooth;
  j["actor_lr"] = c.actor_lr;
  j["critic_lr"] = c.critic_lr;
  j["lr_decay_steps"] = c.lr_decay_steps;
  j["seed"] = c.seed;
  return j;
}

Td3Config config_from_json(const nlohmann::json& j) {
  Td3Config c;
  c.state_dim = j.at("state_dim").get<std::size_t>();
  c.action_dim = j.at("action_dim").get<std::size_t>();
  c.hidden_width = j.at("hidden_width").get<std::size_t>();
  c.hidden_depth = j.at("hidden_depth").get<std::size_t>();
  c.gamma = j.at("gamma").get<double>();
  c.policy_delay = j.at("policy_delay").get<std::size_t>();
  c.polyak = j.at("polyak").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
  c.sigma_explore = j.at("sigma_explore").get<double>();
  c.sigma_smooth = j.at("sigma_smooth").get<double>();
  c.c_smooth = j.at("c_smooth").get<double>();
  c.actor_lr = j.at("actor_lr").get<double>();
  c.critic_lr = j.at("critic_lr").get<double>();
  c.lr_decay_steps = j.at("lr_decay_steps").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void Td3Config::validate() const {
  if (state_dim == 0 || action_dim == 0) throw std::invalid_argument("Td3Config: dimensions must be positive");
  if (hidden_width == 0) throw std::invalid_argument("Td3Config: hidden width must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("Td3Config: gamma outside [0, 1]");
  if (policy_delay == 0) throw std::invalid_argument("Td3Config: policy delay must be >= 1");
  if (!(polyak >= 0.0 && polyak <= 1.0)) throw std::invalid_argument("Td3Config: polyak outside [0, 1]");
  if (batch_size == 0 || buffer_capacity < batch_size) {
    throw std::invalid_argument("Td3Config: need 0 < batch_size <= buffer_capacity");
  }
  if (sigma_explore < 0.0 || sigma_smooth < 0.0 || c_smooth < 0.0) {
    throw std::invalid_argument("Td3Config: noise scales must be >= 0");
  }
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw std::invalid_argument("Td3Config: step sizes must be > 0");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Trajectory t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count, Rng& rng) const {
  if (items_.empty()) throw ContractViolation("ReplayBuffer: sampling from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Batch Batch::from(std::span<const Trajectory> items) {
  if (items.empty()) throw std::invalid_argument("Batch: empty");
  const auto sd = static_cast<Eigen::Index>(items.front().s.size());
  const auto ad = static_cast<Eigen::Index>(items.front().a.size());
  const auto n = static_cast<Eigen::Index>(items.size());
  Batch b;
  b.s.resize(sd, n);
  b.a.resize(ad, n);
  b.r.resize(n);
  b.s_next.resize(sd, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& t = items[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(t.s.size()) != sd || static_cast<Eigen::Index>(t.s_next.size()) != sd ||
        static_cast<Eigen::Index>(t.a.size()) != ad) {
      throw std::invalid_argument("Batch: inconsistent trajectory dimensions");
    }
    b.s.col(j) = Eigen::Map<const nn::Vector>(t.s.data(), sd);
    b.a.col(j) = Eigen::Map<const nn::Vector>(t.a.data(), ad);
    b.r(j) = t.r;
    b.s_next.col(j) = Eigen::Map<const nn::Vector>(t.s_next.data(), sd);
  }
  return b;
}

Td3Agent::Td3Agent(const Td3Config& config)
    : config_(config),
      buffer_(config.buffer_capacity),
      explore_rng_(derive_seed(config.seed, {tag_of("explore")})),
      sample_rng_(derive_seed(config.seed, {tag_of("replay")})),
      smooth_rng_(derive_seed(config.seed, {tag_of("smooth")})) {
  config_.validate();
  const auto sd = config_.state_dim;
  const auto ad = config_.action_dim;
  actor_ = nn::Mlp::make_stack(sd, config_.hidden_width, config_.hidden_depth, ad, nn::Activation::Tanh,
                               derive_seed(config_.seed, {tag_of("actor")}));
  critic1_ = nn::Mlp::make_stack(sd + ad, config_.hidden_width, config_.hidden_depth, 1, nn::Activation::Linear,
                                 derive_seed(config_.seed, {tag_of("critic1")}));
  critic2_ = nn::Mlp::make_stack(sd + ad, config_.hidden_width, config_.hidden_depth, 1, nn::Activation::Linear,
                                 derive_seed(config_.seed, {tag_of("critic2")}));
  target_actor_ = actor_;
  target_critic1_ = critic1_;
  target_critic2_ = critic2_;
  actor_opt_ = nn::make_adam(actor_, config_.actor_lr);
  critic1_opt_ = nn::make_adam(critic1_, config_.critic_lr);
  critic2_opt_ = nn::make_adam(critic2_, config_.critic_lr);
}

void Td3Agent::check_state(std::span<const double> s) const {
  if (s.size() != config_.state_dim) {
    throw std::invalid_argument("Td3Agent: state dim " + std::to_string(s.size()) + ", expected " +
                                std::to_string(config_.state_dim));
  }
}

std::vector<double> Td3Agent::select_action(std::span<const double> state, ActionMode mode) {
  check_state(state);
  const nn::Vector s = Eigen::Map<const nn::Vector>(state.data(), static_cast<Eigen::Index>(state.size()));
  nn::Vector a = actor_.forward_single(s);
  if (mode == ActionMode::explore && config_.sigma_explore > 0.0) {
    std::normal_distribution<double> noise(0.0, config_.sigma_explore);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = std::clamp(a(i) + noise(explore_rng_), -1.0, 1.0);
  }
  return {a.data(), a.data() + a.size()};
}

nn::Matrix Td3Agent::critic_input(const nn::Matrix& s, const nn::Matrix& a) const {
  nn::Matrix x(s.rows() + a.rows(), s.cols());
  x.topRows(s.rows()) = s;
  x.bottomRows(a.rows()) = a;
  return x;
}

nn::Vector Td3Agent::compute_targets(const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("compute_targets: empty batch");
  nn::Matrix a_next = target_actor_.forward(batch.s_next);
  if (config_.sigma_smooth > 0.0) {
    std::normal_distribution<double> noise(0.0, config_.sigma_smooth);
    for (Eigen::Index j = 0; j < a_next.cols(); ++j) {
      for (Eigen::Index i = 0; i < a_next.rows(); ++i) {
        a_next(i, j) += std::clamp(noise(smooth_rng_), -config_.c_smooth, config_.c_smooth);
      }
    }
  }
  clip_unit(a_next);
  const nn::Matrix x = critic_input(batch.s_next, a_next);
  const nn::Vector q1 = target_critic1_.forward(x).row(0).transpose();
  const nn::Vector q2 = target_critic2_.forward(x).row(0).transpose();
  return batch.r + config_.gamma * q1.cwiseMin(q2);
}

double Td3Agent::current_lr(double base) const noexcept {
  if (config_.lr_decay_steps == 0) return base;
  const double frac = std::min(1.0, static_cast<double>(step_) / static_cast<double>(config_.lr_decay_steps));
  return std::max(base * (1.0 - frac), base * 1e-3);
}

CriticLoss Td3Agent::critic_update(const Batch& batch) {
  const nn::Vector y = compute_targets(batch);
  const nn::Matrix x = critic_input(batch.s, batch.a);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  CriticLoss loss;
  auto update = [&](nn::Mlp& critic, nn::AdamState& opt, double& out) {
    const auto cache = critic.forward_cached(x);
    const nn::Vector err = cache.output.row(0).transpose() - y;
    out = err.squaredNorm() * inv_b;
    const nn::Matrix grad = (2.0 * inv_b) * err.transpose();
    opt.learning_rate = current_lr(config_.critic_lr);
    nn::adam_step(critic, critic.backward(cache, grad), opt);
  };
  update(critic1_, critic1_opt_, loss.critic1);
  update(critic2_, critic2_opt_, loss.critic2);
  return loss;
}

nn::Gradients Td3Agent::actor_gradient(const Batch& batch) const {
  const auto actor_cache = actor_.forward_cached(batch.s);
  const nn::Matrix x = critic_input(batch.s, actor_cache.output);
  const auto critic_cache = critic1_.forward_cached(x);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const nn::Matrix dq = nn::Matrix::Constant(1, x.cols(), inv_b);
  const auto critic_grads = critic1_.backward(critic_cache, dq);
  const nn::Matrix da = critic_grads.input.bottomRows(static_cast<Eigen::Index>(config_.action_dim));
  return actor_.backward(actor_cache, da);
}

void Td3Agent::actor_update(const Batch& batch) {
  if (step_ % config_.policy_delay != 0) {
    throw ContractViolation("actor_update: step " + std::to_string(step_) + " is not a multiple of d=" +
                            std::to_string(config_.policy_delay));
  }
  if (buffer_.size() < config_.batch_size) throw ContractViolation("actor_update: buffer holds fewer than B entries");
  auto grads = actor_gradient(batch);
  grads.scale(-1.0);  // ascent on J
  actor_opt_.learning_rate = current_lr(config_.actor_lr);
  nn::adam_step(actor_, grads, actor_opt_);
  actor_updated_at_ = step_;
}

void Td3Agent::actor_update() { actor_update(sample_batch()); }

void Td3Agent::polyak_update() {
  if (actor_updated_at_ != step_) throw ContractViolation("polyak_update: must follow actor_update in the same step");
  target_actor_.blend_from(actor_, config_.polyak);
  target_critic1_.blend_from(critic1_, config_.polyak);
  target_critic2_.blend_from(critic2_, config_.polyak);
  actor_updated_at_.reset();
}

void Td3Agent::remember(Trajectory t) {
  check_state(t.s);
  check_state(t.s_next);
  if (t.a.size() != config_.action_dim) throw std::invalid_argument("Td3Agent: action dim mismatch");
  buffer_.push(std::move(t));
}

Batch Td3Agent::sample_batch() {
  const auto idx = buffer_.sample_indices(config_.batch_size, sample_rng_);
  std::vector<Trajectory> items;
  items.reserve(idx.size());
  for (auto i : idx) items.push_back(buffer_[i]);
  return Batch::from(items);
}

TrainDiagnostics Td3Agent::train_step(Trajectory t) {
  remember(std::move(t));
  TrainDiagnostics d;
  d.step = step_;
  if (buffer_.size() >= config_.batch_size) {
    const Batch batch = sample_batch();
    d.critic_loss = critic_update(batch);
    if (step_ % config_.policy_delay == 0) {
      actor_update(batch);
      polyak_update();
      d.actor_updated = true;
    }
  }
  d.buffer_size = buffer_.size();
  ++step_;
  return d;
}

void Td3Agent::set_networks(const nn::Mlp& actor, const nn::Mlp& critic1, const nn::Mlp& critic2,
                            const nn::Mlp& target_actor, const nn::Mlp& target_critic1,
                            const nn::Mlp& target_critic2) {
  if (!actor.same_shape(actor_) || !critic1.same_shape(critic1_) || !critic2.same_shape(critic2_) ||
      !target_actor.same_shape(actor_) || !target_critic1.same_shape(critic1_) ||
      !target_critic2.same_shape(critic2_)) {
    throw ContractViolation("set_networks: shape mismatch");
  }
  actor_ = actor;
  critic1_ = critic1;
  critic2_ = critic2;
  target_actor_ = target_actor;
  target_critic1_ = target_critic1;
  target_critic2_ = target_critic2;
}

std::uint64_t Td3Agent::checksum() const {
  std::uint64_t h = 0;
  for (const auto* net : {&actor_, &critic1_, &critic2_, &target_actor_, &target_critic1_, &target_critic2_}) {
    h = mix_seed(h ^ net->checksum());
  }
  return h;
}

void Td3Agent::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  nn::save_mlp(dir + "/actor.chnn", actor_);
  nn::save_mlp(dir + "/critic1.chnn", critic1_);
  nn::save_mlp(dir + "/critic2.chnn", critic2_);
  nn::save_mlp(dir + "/target_actor.chnn", target_actor_);
  nn::save_mlp(dir + "/target_critic1.chnn", target_critic1_);
  nn::save_mlp(dir + "/target_critic2.chnn", target_critic2_);
  auto meta = config_to_json(config_);
  meta["step"] = step_;
  std::ofstream out(dir + "/hyperparams.json");
  if (!out) throw std::runtime_error("Td3Agent::save: cannot write " + dir + "/hyperparams.json");
  out << meta.dump(2) << "\n";
}

Td3Agent Td3Agent::load(const std::string& dir) {
  std::ifstream in(dir + "/hyperparams.json");
  if (!in) throw std::runtime_error("Td3Agent::load: missing " + dir + "/hyperparams.json");
  const auto meta = nlohmann::json::parse(in);
  Td3Agent agent(config_from_json(meta));
  agent.set_networks(nn::load_mlp(dir + "/actor.chnn"), nn::load_mlp(dir + "/critic1.chnn"),
                     nn::load_mlp(dir + "/critic2.chnn"), nn::load_mlp(dir + "/target_actor.chnn"),
                     nn::load_mlp(dir + "/target_critic1.chnn"), nn::load_mlp(dir + "/target_critic2.chnn"));
  agent.step_ = meta.at("step").get<std::uint64_t>();
  return agent;
}

}  // namespace wavesynth::agent
