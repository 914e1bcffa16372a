#include <cmath>
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "wavesynth/agent.hpp"
#include "wavesynth/dsp.hpp"

using namespace wavesynth;
using namespace wavesynth::agent;

namespace {

Td3Config small_config(std::uint64_t seed = 1) {
  Td3Config c;
  c.state_dim = 4;
  c.action_dim = 3;
  c.hidden_width = 16;
  c.hidden_depth = 2;
  c.batch_size = 8;
  c.buffer_capacity = 100;
  c.seed = seed;
  return c;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Trajectory random_trajectory(Rng& rng, const Td3Config& c) {
  std::uniform_int_distribution<int> r(-1, 2);
  return {random_vec(rng, c.state_dim), random_vec(rng, c.action_dim), static_cast<double>(r(rng)),
          random_vec(rng, c.state_dim)};
}

std::vector<Trajectory> random_trajectories(Rng& rng, const Td3Config& c, std::size_t n) {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_trajectory(rng, c));
  return out;
}

// Same shape as `like`, all weights zero, output bias `value`.
nn::Mlp constant_net(const nn::Mlp& like, double value) {
  std::vector<nn::Layer> layers = like.layers();
  for (auto& l : layers) {
    l.weights.setZero();
    l.biases.setZero();
  }
  layers.back().biases(0) = value;
  return nn::Mlp(layers);
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Direct evaluation of the clipped double-Q target for one transition, with
// no smoothing noise.
double oracle_target(const Td3Agent& ag, const Trajectory& t) {
  const nn::Vector s2 = Eigen::Map<const nn::Vector>(t.s_next.data(), static_cast<Eigen::Index>(t.s_next.size()));
  nn::Vector a2 = ag.target_actor().forward_single(s2);
  for (Eigen::Index i = 0; i < a2.size(); ++i) a2(i) = std::min(1.0, std::max(-1.0, a2(i)));
  nn::Vector x(s2.size() + a2.size());
  x << s2, a2;
  const double q1 = ag.target_critic1().forward_single(x)(0);
  const double q2 = ag.target_critic2().forward_single(x)(0);
  return t.r + ag.config().gamma * std::min(q1, q2);
}

}  // namespace

TEST_CASE("default hyperparameters") {
  Td3Config c;
  CHECK(c.gamma == 0.99);
  CHECK(c.policy_delay == 2);
  CHECK(c.polyak == 0.05);
  CHECK(c.batch_size == 64);
  CHECK(c.buffer_capacity == 10000);
  CHECK(c.hidden_width == 30);
  CHECK(c.hidden_depth == 10);
}

TEST_CASE("target networks mirror the mains") {
  Td3Agent ag(small_config());
  CHECK(ag.target_actor().same_shape(ag.actor()));
  CHECK(ag.target_critic1().same_shape(ag.critic1()));
  CHECK(ag.target_critic2().same_shape(ag.critic2()));
  CHECK(ag.target_actor().parameters() == ag.actor().parameters());
}

TEST_CASE("select_action") {
  Rng rng = make_rng(1, {});
  const auto s = random_vec(rng, 4);
  SUBCASE("exploit is deterministic") {
    Td3Agent ag(small_config());
    CHECK(ag.select_action(s, ActionMode::exploit) == ag.select_action(s, ActionMode::exploit));
  }
  SUBCASE("zero exploration noise equals exploit") {
    auto c = small_config();
    c.sigma_explore = 0.0;
    Td3Agent ag(c);
    CHECK(ag.select_action(s, ActionMode::explore) == ag.select_action(s, ActionMode::exploit));
  }
  SUBCASE("explore stays in the box and every action gives a feasible filter") {
    auto c = small_config();
    c.action_dim = 22;
    c.sigma_explore = 0.5;
    Td3Agent ag(c);
    for (int i = 0; i < 10000; ++i) {
      const auto a = ag.select_action(random_vec(rng, 4, -3, 3), ActionMode::explore);
      for (double v : a) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
      const auto h = dsp::clamp_taps(a, 0.1);
      CHECK(dsp::taps_feasible(h.taps(), 0.1));
    }
  }
  SUBCASE("dimension mismatch") {
    Td3Agent ag(small_config());
    CHECK_THROWS_AS(ag.select_action(random_vec(rng, 5), ActionMode::exploit), std::invalid_argument);
  }
}

TEST_CASE("compute_targets") {
  Rng rng = make_rng(2, {});
  SUBCASE("gamma 0 returns the rewards") {
    auto c = small_config();
    c.gamma = 0.0;
    Td3Agent ag(c);
    const auto items = random_trajectories(rng, c, 16);
    const auto y = ag.compute_targets(Batch::from(items));
    for (std::size_t j = 0; j < items.size(); ++j) CHECK(y(static_cast<Eigen::Index>(j)) == items[j].r);
  }
  SUBCASE("minimum of constant critics") {
    auto c = small_config();
    c.gamma = 1.0;
    c.sigma_smooth = 0.0;
    Td3Agent ag(c);
    ag.set_networks(ag.actor(), ag.critic1(), ag.critic2(), ag.target_actor(), constant_net(ag.target_critic1(), 3.0),
                    constant_net(ag.target_critic2(), 5.0));
    auto items = random_trajectories(rng, c, 8);
    for (auto& t : items) t.r = 0.0;
    const auto y = ag.compute_targets(Batch::from(items));
    for (Eigen::Index j = 0; j < y.size(); ++j) CHECK(y(j) == 3.0);
  }
  SUBCASE("direct recomputation and min property") {
    auto c = small_config();
    c.sigma_smooth = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      c.seed = seed;
      Td3Agent ag(c);
      // Decorrelate the two target critics from the mains.
      Td3Agent other(small_config(seed + 100));
      ag.set_networks(ag.actor(), ag.critic1(), ag.critic2(), other.actor(), ag.critic1(), other.critic2());
      const auto items = random_trajectories(rng, c, 32);
      const auto y = ag.compute_targets(Batch::from(items));
      for (std::size_t j = 0; j < items.size(); ++j) {
        CHECK(std::abs(y(static_cast<Eigen::Index>(j)) - oracle_target(ag, items[j])) < 1e-12);
      }
      // Never above either single-critic target.
      nn::Matrix a2 = ag.target_actor().forward(Batch::from(items).s_next).cwiseMax(-1.0).cwiseMin(1.0);
      nn::Matrix x(c.state_dim + c.action_dim, static_cast<Eigen::Index>(items.size()));
      x.topRows(static_cast<Eigen::Index>(c.state_dim)) = Batch::from(items).s_next;
      x.bottomRows(static_cast<Eigen::Index>(c.action_dim)) = a2;
      const nn::Matrix q1 = ag.target_critic1().forward(x);
      const nn::Matrix q2 = ag.target_critic2().forward(x);
      for (std::size_t j = 0; j < items.size(); ++j) {
        const auto k = static_cast<Eigen::Index>(j);
        CHECK(y(k) <= items[j].r + c.gamma * q1(0, k));
        CHECK(y(k) <= items[j].r + c.gamma * q2(0, k));
      }
    }
  }
  SUBCASE("smoothing noise is clipped") {
    auto c = small_config();
    c.gamma = 1.0;
    c.sigma_smooth = 10.0;
    c.c_smooth = 0.0;
    Td3Agent ag(c);
    const auto items = random_trajectories(rng, c, 8);
    const auto y = ag.compute_targets(Batch::from(items));
    for (std::size_t j = 0; j < items.size(); ++j) {
      CHECK(std::abs(y(static_cast<Eigen::Index>(j)) - oracle_target(ag, items[j])) < 1e-12);
    }
  }
}

TEST_CASE("critic_update") {
  Rng rng = make_rng(3, {});
  SUBCASE("loss matches the hand computation") {
    auto c = small_config();
    c.sigma_smooth = 0.0;
    Td3Agent ag(c);
    const auto items = random_trajectories(rng, c, 16);
    std::vector<double> y;
    for (const auto& t : items) y.push_back(oracle_target(ag, t));
    double expected1 = 0.0, expected2 = 0.0;
    for (std::size_t j = 0; j < items.size(); ++j) {
      nn::Vector x(7);
      for (std::size_t i = 0; i < 4; ++i) x(static_cast<Eigen::Index>(i)) = items[j].s[i];
      for (std::size_t i = 0; i < 3; ++i) x(static_cast<Eigen::Index>(4 + i)) = items[j].a[i];
      expected1 += std::pow(ag.critic1().forward_single(x)(0) - y[j], 2);
      expected2 += std::pow(ag.critic2().forward_single(x)(0) - y[j], 2);
    }
    expected1 /= 16.0;
    expected2 /= 16.0;
    const auto loss = ag.critic_update(Batch::from(items));
    CHECK(std::abs(loss.critic1 - expected1) < 1e-12);
    CHECK(std::abs(loss.critic2 - expected2) < 1e-12);
    CHECK(std::abs(loss.combined() - (expected1 + expected2)) < 1e-12);
  }
  SUBCASE("zero loss leaves the critics unchanged") {
    auto c = small_config();
    c.gamma = 0.0;
    Td3Agent ag(c);
    const auto q = constant_net(ag.critic1(), 1.5);
    ag.set_networks(ag.actor(), q, q, ag.target_actor(), q, q);
    auto items = random_trajectories(rng, c, 8);
    for (auto& t : items) t.r = 1.5;
    const auto before = ag.critic1().parameters();
    const auto loss = ag.critic_update(Batch::from(items));
    CHECK(loss.combined() == 0.0);
    CHECK(ag.critic1().parameters() == before);
  }
  SUBCASE("repeated updates on a fixed batch shrink the loss") {
    auto c = small_config();
    c.sigma_smooth = 0.0;
    c.hidden_width = 32;
    c.hidden_depth = 3;
    c.batch_size = 64;
    Td3Agent ag(c);
    const auto batch = Batch::from(random_trajectories(rng, c, 64));
    double first = 0.0, prev = 0.0, last = 0.0;
    int rises = 0;
    for (int i = 0; i < 200; ++i) {
      last = ag.critic_update(batch).combined();
      if (i == 0) first = last;
      if (i > 0 && last > prev) ++rises;
      prev = last;
    }
    CHECK(last < 0.1 * first);
    CHECK(rises <= 5);
  }
}

TEST_CASE("actor updates") {
  Rng rng = make_rng(4, {});
  SUBCASE("critic blind to the action gives a zero step") {
    auto c = small_config();
    Td3Agent ag(c);
    std::vector<nn::Layer> layers = ag.critic1().layers();
    layers.front().weights.rightCols(static_cast<Eigen::Index>(c.action_dim)).setZero();
    const nn::Mlp blind(layers);
    ag.set_networks(ag.actor(), blind, ag.critic2(), ag.target_actor(), ag.target_critic1(), ag.target_critic2());
    for (const auto& t : random_trajectories(rng, c, c.batch_size)) ag.remember(t);
    const auto before = ag.actor().parameters();
    ag.actor_update();
    CHECK(ag.actor().parameters() == before);
  }
  SUBCASE("actor gradient matches finite differences") {
    auto c = small_config();
    Td3Agent ag(c);
    const auto batch = Batch::from(random_trajectories(rng, c, 16));
    auto objective = [&](const nn::Mlp& actor) {
      const nn::Matrix a = actor.forward(batch.s);
      nn::Matrix x(batch.s.rows() + a.rows(), a.cols());
      x << batch.s, a;
      return ag.critic1().forward(x).mean();
    };
    nn::Gradients g = ag.actor_gradient(batch);
    std::vector<double> flat;
    for (std::size_t k = 0; k < g.weights.size(); ++k) {
      for (Eigen::Index r = 0; r < g.weights[k].rows(); ++r)
        for (Eigen::Index col = 0; col < g.weights[k].cols(); ++col) flat.push_back(g.weights[k](r, col));
      for (Eigen::Index r = 0; r < g.biases[k].size(); ++r) flat.push_back(g.biases[k](r));
    }
    auto params = ag.actor().parameters();
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      nn::Mlp probe = ag.actor();
      const double orig = params[i];
      params[i] = orig + 1e-6;
      probe.set_parameters(params);
      const double up = objective(probe);
      params[i] = orig - 1e-6;
      probe.set_parameters(params);
      const double down = objective(probe);
      params[i] = orig;
      const double fd = (up - down) / 2e-6;
      worst = std::max(worst, std::abs(fd - flat[i]) / std::max(std::abs(fd) + std::abs(flat[i]), 1e-6));
    }
    CHECK(worst < 1e-3);
  }
  SUBCASE("known optimum toy: pretrained critic, repeated actor steps") {
    Td3Config c;
    c.state_dim = 1;
    c.action_dim = 1;
    c.hidden_width = 32;
    c.hidden_depth = 2;
    c.gamma = 0.0;
    c.batch_size = 64;
    c.buffer_capacity = 2000;
    c.critic_lr = 3e-3;
    Td3Agent ag(c);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 2000; ++i) {
      const double a = u(rng);
      ag.remember({{1.0}, {a}, -(a - 0.5) * (a - 0.5), {1.0}});
    }
    for (int i = 0; i < 3000; ++i) ag.critic_update(ag.sample_batch());
    for (int i = 0; i < 2000; ++i) ag.actor_update();
    const double a = ag.select_action(std::vector<double>{1.0}, ActionMode::exploit)[0];
    CHECK(a >= 0.45);
    CHECK(a <= 0.55);
  }
}

TEST_CASE("schedule contracts") {
  Rng rng = make_rng(5, {});
  auto c = small_config();
  Td3Agent ag(c);
  CHECK_THROWS_AS(ag.actor_update(Batch::from(random_trajectories(rng, c, 8))), ContractViolation);  // buffer < B
  for (const auto& t : random_trajectories(rng, c, c.batch_size)) ag.remember(t);
  CHECK_THROWS_AS(ag.polyak_update(), ContractViolation);
  ag.train_step(random_trajectory(rng, c));  // step 0 -> 1
  CHECK(ag.step_count() == 1);
  CHECK_THROWS_AS(ag.actor_update(), ContractViolation);
  CHECK_THROWS_AS(ag.polyak_update(), ContractViolation);
}

TEST_CASE("polyak identities") {
  Rng rng = make_rng(6, {});
  for (double omega : {0.0, 1.0, 0.05}) {
    auto c = small_config();
    c.polyak = omega;
    Td3Agent ag(c);
    // Move the mains away from the targets first.
    Td3Agent other(small_config(77));
    ag.set_networks(other.actor(), other.critic1(), other.critic2(), ag.target_actor(), ag.target_critic1(),
                    ag.target_critic2());
    for (const auto& t : random_trajectories(rng, c, c.batch_size)) ag.remember(t);
    ag.actor_update();
    const auto mains = std::vector<std::vector<double>>{ag.actor().parameters(), ag.critic1().parameters(),
                                                         ag.critic2().parameters()};
    const auto targets = std::vector<std::vector<double>>{
        ag.target_actor().parameters(), ag.target_critic1().parameters(), ag.target_critic2().parameters()};
    ag.polyak_update();
    const auto after = std::vector<std::vector<double>>{
        ag.target_actor().parameters(), ag.target_critic1().parameters(), ag.target_critic2().parameters()};
    for (std::size_t n = 0; n < 3; ++n) {
      if (omega == 0.0) {
        CHECK(after[n] == targets[n]);
      } else if (omega == 1.0) {
        CHECK(after[n] == mains[n]);
      } else {
        std::vector<double> expect(mains[n].size());
        for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = omega * mains[n][i] + (1.0 - omega) * targets[n][i];
        CHECK(max_abs_diff(after[n], expect) <= 1e-15);
      }
    }
  }
}

TEST_CASE("train_step schedule and determinism") {
  auto c = small_config();
  c.policy_delay = 3;
  auto run = [&](std::uint64_t seed) {
    Rng rng = make_rng(seed, {});
    Td3Agent ag(c);
    std::vector<TrainDiagnostics> out;
    std::vector<double> prev_target;
    for (int i = 0; i < 60; ++i) {
      const auto before = ag.target_critic1().parameters();
      out.push_back(ag.train_step(random_trajectory(rng, c)));
      const auto& d = out.back();
      CHECK(d.step == static_cast<std::uint64_t>(i));
      CHECK(d.buffer_size == std::min<std::size_t>(i + 1, c.buffer_capacity));
      if (static_cast<std::size_t>(i + 1) < c.batch_size) {
        CHECK_FALSE(d.critic_loss.has_value());
        CHECK_FALSE(d.actor_updated);
      } else {
        CHECK(d.critic_loss.has_value());
        CHECK(d.actor_updated == (i % 3 == 0));
      }
      // Target lag: targets move only on actor-update steps.
      if (!d.actor_updated) CHECK(ag.target_critic1().parameters() == before);
    }
    return std::make_pair(out, ag.checksum());
  };
  const auto a = run(9);
  const auto b = run(9);
  REQUIRE(a.first.size() == b.first.size());
  for (std::size_t i = 0; i < a.first.size(); ++i) {
    CHECK(a.first[i].actor_updated == b.first[i].actor_updated);
    CHECK(a.first[i].critic_loss.has_value() == b.first[i].critic_loss.has_value());
    if (a.first[i].critic_loss) CHECK(a.first[i].critic_loss->combined() == b.first[i].critic_loss->combined());
  }
  CHECK(a.second == b.second);
}

TEST_CASE("replay buffer") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) buf.push({{1.0}, {0.0}, static_cast<double>(i), {1.0}});
  CHECK(buf.size() == 3);
  CHECK(buf[0].r == 3.0);
  CHECK(buf[1].r == 4.0);
  CHECK(buf[2].r == 2.0);
  Rng rng = make_rng(1, {});
  for (auto i : buf.sample_indices(100, rng)) CHECK(i < 3);
  CHECK_THROWS_AS(ReplayBuffer(0), std::invalid_argument);
}

TEST_CASE("checkpoint round trip") {
  Rng rng = make_rng(7, {});
  auto c = small_config();
  Td3Agent ag(c);
  for (int i = 0; i < 20; ++i) ag.train_step(random_trajectory(rng, c));
  const std::string dir = "agent_ckpt_test";
  ag.save(dir);
  const auto back = Td3Agent::load(dir);
  CHECK(back.checksum() == ag.checksum());
  CHECK(back.step_count() == ag.step_count());
  CHECK(back.config().gamma == c.gamma);
  std::filesystem::remove_all(dir);
}
