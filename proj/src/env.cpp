#include "wavesynth/env.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace wavesynth::env {

void RewardTable::validate() const {
  if (!(success > up && up > same && same > down)) {
    throw std::invalid_argument("RewardTable: need success > up > same > down");
  }
  if (!(tolerance >= 0.0)) throw std::invalid_argument("RewardTable: tolerance must be >= 0");
}

double compute_reward(const Feedback* prev, const Feedback& cur, std::size_t true_class, const RewardTable& table) {
  if (true_class >= cur.mean_softmax.size()) throw std::invalid_argument("compute_reward: class out of range");
  if (cur.majority_label == true_class) return table.success;
  if (prev == nullptr) return table.same;
  if (prev->mean_softmax.size() != cur.mean_softmax.size()) {
    throw std::invalid_argument("compute_reward: softmax size mismatch");
  }
  const double delta = cur.mean_softmax[true_class] - prev->mean_softmax[true_class];
  if (delta > table.tolerance) return table.up;
  if (delta < -table.tolerance) return table.down;
  return table.same;
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::MLA: return "MLA";
    case Mode::SLA: return "SLA";
    case Mode::ADV: return "ADV";
  }
  return "?";
}

Mode mode_from_string(const std::string& name) {
  if (name == "MLA") return Mode::MLA;
  if (name == "SLA") return Mode::SLA;
  if (name == "ADV") return Mode::ADV;
  throw std::invalid_argument("unknown scenario mode: " + name);
}

void ScenarioConfig::validate() const {
  if (classes.size() < 2) throw std::invalid_argument("ScenarioConfig: need at least two classes");
  if (presets.empty()) throw std::invalid_argument("ScenarioConfig: need at least one channel preset");
  if (episode_length == 0) throw std::invalid_argument("ScenarioConfig: episode length E must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("ScenarioConfig: batch size W must be >= 1");
  if (sps == 0 || waveform_len == 0 || waveform_len % sps != 0) {
    throw std::invalid_argument("ScenarioConfig: waveform length must be a positive multiple of sps");
  }
  if (num_taps == 0 || !(alpha > 0.0)) throw std::invalid_argument("ScenarioConfig: need M >= 1 and alpha > 0");
  if (mode == Mode::SLA && protected_device >= classes.size()) {
    throw std::invalid_argument("ScenarioConfig: protected device out of range");
  }
  if (mode != Mode::SLA) {
    for (const auto& c : classes) waveform::scheme_from_string(c);
  }
  for (const auto& p : presets) channel::preset(p);
  rewards.validate();
}

std::vector<waveform::DeviceImpairment> sla_devices(std::size_t count) {
  // Small, fixed signatures; device 0 is close to ideal.
  static const waveform::DeviceImpairment table[] = {
      {1.00, 0.00, Complex(0.00, 0.00), 0.002},
      {1.08, 0.06, Complex(0.04, 0.00), 0.002},
      {0.93, -0.05, Complex(0.00, -0.04), 0.002},
      {1.04, 0.10, Complex(-0.03, 0.03), 0.002},
      {0.96, -0.10, Complex(0.03, 0.03), 0.002},
      {1.10, 0.02, Complex(-0.04, -0.02), 0.002},
  };
  constexpr std::size_t kAvailable = sizeof(table) / sizeof(table[0]);
  if (count > kAvailable) throw std::invalid_argument("sla_devices: at most " + std::to_string(kAvailable));
  return {table, table + count};
}

IqBuffer transmit(const ScenarioConfig& sc, std::size_t label, const dsp::FirFilter& fir,
                  const channel::ChannelModel& ch, std::uint64_t stream, Rng& rng) {
  const std::size_t symbols = sc.waveform_len / sc.sps;
  IqBuffer x;
  if (sc.mode == Mode::SLA) {
    x = waveform::random_waveform(sc.sla_scheme, symbols, sc.sps, rng);
  } else {
    x = waveform::random_waveform(waveform::scheme_from_string(sc.classes.at(label)), symbols, sc.sps, rng);
  }
  x = dsp::fir_apply(x, fir);
  if (sc.mode == Mode::SLA) {
    const auto devices = sla_devices(sc.classes.size());
    x = waveform::apply_impairment(x, devices.at(label), rng());
  }
  return channel::channel_apply(x, ch, stream);
}

classifier::DatasetGenerator make_generator(const ScenarioConfig& sc, const std::string& preset_name) {
  const auto p = channel::preset(preset_name);
  return [sc, p](std::size_t label, Rng& rng) {
    auto ch = channel::realize(p, rng());
    if (sc.fixed_snr_db) ch.snr_db = sc.fixed_snr_db;
    if (sc.jammer_power_db) ch.jammer_power_db = sc.jammer_power_db;
    return transmit(sc, label, dsp::FirFilter::identity(sc.num_taps, sc.alpha), ch, 0, rng);
  };
}

std::vector<double> WscState::flatten() const {
  std::vector<double> v;
  v.reserve(mean_softmax.size() + target_onehot.size() + prev_action.size());
  v.insert(v.end(), mean_softmax.begin(), mean_softmax.end());
  v.insert(v.end(), target_onehot.begin(), target_onehot.end());
  v.insert(v.end(), prev_action.begin(), prev_action.end());
  return v;
}

Environment::Environment(ScenarioConfig sc, const classifier::ClassifierBundle& clf)
    : sc_(std::move(sc)), clf_(&clf) {
  sc_.validate();
  if (clf.num_classes() != sc_.num_classes()) throw std::invalid_argument("Environment: class count mismatch");
  if (clf.input_len != sc_.waveform_len) throw std::invalid_argument("Environment: waveform length mismatch");
}

WscState Environment::reset(std::uint64_t episode_index) {
  rng_ = make_rng(sc_.seed, {tag_of("episode"), episode_index});
  const std::size_t c = sc_.num_classes();
  if (sc_.mode == Mode::SLA) {
    true_class_ = sc_.protected_device;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, c - 1);
    true_class_ = pick(rng_);
  }
  preset_name_ = sc_.presets[episode_index % sc_.presets.size()];
  channel_ = channel::realize(channel::preset(preset_name_), rng_());
  if (sc_.fixed_snr_db) channel_.snr_db = sc_.fixed_snr_db;
  if (sc_.jammer_power_db) channel_.jammer_power_db = sc_.jammer_power_db;
  prev_.reset();

  state_.mean_softmax.assign(c, 1.0 / static_cast<double>(c));
  state_.target_onehot.assign(c, 0.0);
  state_.target_onehot[true_class_] = 1.0;
  state_.prev_action.assign(sc_.action_dim(), 0.0);
  started_ = true;
  return state_;
}

StepResult Environment::step(std::span<const double> action) {
  if (!started_) throw std::logic_error("Environment::step before reset");
  if (action.size() != sc_.action_dim()) {
    throw std::invalid_argument("Environment::step: action dim " + std::to_string(action.size()) + ", expected " +
                                std::to_string(sc_.action_dim()));
  }
  for (double a : action) {
    if (!(a >= -1.0 && a <= 1.0)) throw std::invalid_argument("Environment::step: action outside [-1, 1]");
  }
  const auto fir = dsp::clamp_taps(action, sc_.alpha);
  std::vector<IqBuffer> batch;
  batch.reserve(sc_.batch_size);
  for (std::size_t w = 0; w < sc_.batch_size; ++w) batch.push_back(transmit(sc_, true_class_, fir, channel_, w, rng_));

  StepResult out;
  out.feedback = classifier::classify_batch(*clf_, batch);
  out.reward = compute_reward(prev_ ? &*prev_ : nullptr, out.feedback, true_class_, sc_.rewards);
  out.success = out.feedback.majority_label == true_class_;
  state_.mean_softmax = out.feedback.mean_softmax;
  state_.prev_action.assign(action.begin(), action.end());
  out.next = state_;
  prev_ = out.feedback;
  channel_ = channel::channel_step(channel_);
  return out;
}

double EpisodeLog::accuracy() const {
  if (steps.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : steps) hits += s.correct ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(steps.size());
}

double EpisodeLog::total_reward() const {
  double r = 0.0;
  for (const auto& s : steps) r += s.reward;
  return r;
}

void write_jsonl(std::ostream& out, const EpisodeLog& log, const RewardTable& table) {
  std::size_t successes = 0;
  for (const auto& s : log.steps) successes += s.reward == table.success ? 1 : 0;
  const double from_rewards = log.steps.empty() ? 0.0 : static_cast<double>(successes) / static_cast<double>(log.steps.size());
  if (from_rewards != log.accuracy()) {
    throw std::logic_error("write_jsonl: accuracy disagrees with success-reward fraction");
  }
  for (const auto& s : log.steps) {
    nlohmann::ordered_json j;
    j["episode"] = log.episode;
    j["step"] = s.step;
    j["reward"] = s.reward;
    j["correct"] = s.correct;
    j["softmax_true"] = s.softmax_true;
    j["action"] = s.action;
    out << j.dump() << "\n";
  }
}

namespace {

template <typename ChooseAction, typename AfterStep>
EpisodeLog drive(Environment& env, std::uint64_t episode_index, ChooseAction&& choose, AfterStep&& after) {
  EpisodeLog log;
  log.episode = episode_index;
  WscState s = env.reset(episode_index);
  log.true_class = env.true_class();
  log.preset = env.preset_name();
  for (std::size_t t = 0; t < env.scenario().episode_length; ++t) {
    const std::vector<double> a = choose(s);
    StepResult r = env.step(a);
    after(s, a, r);
    log.steps.push_back({t, r.reward, r.success, r.feedback.mean_softmax[env.true_class()], a});
    s = std::move(r.next);
  }
  return log;
}

}  // namespace

EpisodeLog run_episode(Environment& env, agent::Td3Agent& agent, agent::ActionMode mode,
                       std::uint64_t episode_index) {
  if (agent.config().state_dim != env.state_dim() || agent.config().action_dim != env.action_dim()) {
    throw std::invalid_argument("run_episode: agent dimensions do not match the scenario");
  }
  return drive(
      env, episode_index, [&](const WscState& s) { return agent.select_action(s.flatten(), mode); },
      [&](const WscState& s, const std::vector<double>& a, const StepResult& r) {
        if (mode == agent::ActionMode::explore) agent.train_step({s.flatten(), a, r.reward, r.next.flatten()});
      });
}

EpisodeLog run_policy_episode(Environment& env, const Policy& policy, std::uint64_t episode_index) {
  return drive(
      env, episode_index, [&](const WscState& s) { return policy(s, env.true_class()); },
      [](const WscState&, const std::vector<double>&, const StepResult&) {});
}

}  // namespace wavesynth::env
