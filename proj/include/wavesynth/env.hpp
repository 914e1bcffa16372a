#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavesynth/agent.hpp"
#include "wavesynth/channel.hpp"
#include "wavesynth/classifier.hpp"
#include "wavesynth/dsp.hpp"
#include "wavesynth/waveform.hpp"

namespace wavesynth::env {

using classifier::Feedback;

struct RewardTable {
  double success = 2.0;
  double up = 1.0;
  double down = -1.0;
  double same = 0.0;
  double tolerance = 1e-4;  // dead band on the true-class softmax change

  /// Throws std::invalid_argument unless success > up > same > down.
  void validate() const;
};

/// prev == nullptr marks the first step of an episode.
double compute_reward(const Feedback* prev, const Feedback& cur, std::size_t true_class,
                      const RewardTable& table = {});

enum class Mode { MLA, SLA, ADV };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& name);

struct ScenarioConfig {
  Mode mode = Mode::MLA;
  /// MLA/ADV: modulation names; SLA: device names (one DeviceImpairment each).
  std::vector<std::string> classes{"BPSK", "QAM16", "QAM64"};
  /// Channel presets, used round-robin by episode index.
  std::vector<std::string> presets{"mid_snr"};
  std::size_t episode_length = 64;  // E
  std::size_t batch_size = 32;      // W
  std::size_t waveform_len = 128;   // L
  unsigned sps = 4;
  std::size_t num_taps = 11;  // M
  double alpha = 0.1;
  std::size_t protected_device = 0;  // SLA only
  waveform::ModScheme sla_scheme = waveform::ModScheme::QPSK;
  std::optional<double> fixed_snr_db;      // overrides the preset SNR draw
  std::optional<double> jammer_power_db;   // overrides the preset jammer
  RewardTable rewards;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t num_classes() const noexcept { return classes.size(); }
  std::size_t action_dim() const noexcept { return 2 * num_taps; }
  std::size_t state_dim() const noexcept { return 2 * num_classes() + action_dim(); }
};

/// Device signatures for the SLA scenario, indexed by class.
std::vector<waveform::DeviceImpairment> sla_devices(std::size_t count);

/// Transmit chain for class `label`: random symbols, synthesis FIR,
/// device impairment (SLA), channel.
IqBuffer transmit(const ScenarioConfig& sc, std::size_t label, const dsp::FirFilter& fir,
                  const channel::ChannelModel& ch, std::uint64_t stream, Rng& rng);

/// Classifier dataset through realisations of `preset` (no synthesis FIR).
classifier::DatasetGenerator make_generator(const ScenarioConfig& sc, const std::string& preset);

struct WscState {
  std::vector<double> mean_softmax;
  std::vector<double> target_onehot;
  std::vector<double> prev_action;

  std::vector<double> flatten() const;
};

struct StepResult {
  Feedback feedback;
  WscState next;
  double reward = 0.0;
  bool success = false;
};

/// Closed loop transmitter -> channel -> frozen classifier for one scenario.
class Environment {
 public:
  Environment(ScenarioConfig sc, const classifier::ClassifierBundle& clf);

  const ScenarioConfig& scenario() const noexcept { return sc_; }
  std::size_t state_dim() const noexcept { return sc_.state_dim(); }
  std::size_t action_dim() const noexcept { return sc_.action_dim(); }

  /// Starts episode `index`: draws the true class, preset and channel.
  WscState reset(std::uint64_t episode_index);

  StepResult step(std::span<const double> action);

  std::size_t true_class() const noexcept { return true_class_; }
  const std::string& preset_name() const noexcept { return preset_name_; }
  const channel::ChannelModel& channel() const noexcept { return channel_; }
  const WscState& state() const noexcept { return state_; }

 private:
  ScenarioConfig sc_;
  const classifier::ClassifierBundle* clf_;
  Rng rng_;
  std::size_t true_class_ = 0;
  std::string preset_name_;
  channel::ChannelModel channel_;
  std::optional<Feedback> prev_;
  WscState state_;
  bool started_ = false;
};

struct StepRecord {
  std::uint64_t step = 0;
  double reward = 0.0;
  bool correct = false;
  double softmax_true = 0.0;
  std::vector<double> action;
};

struct EpisodeLog {
  std::uint64_t episode = 0;
  std::size_t true_class = 0;
  std::string preset;
  std::vector<StepRecord> steps;

  double accuracy() const;
  double total_reward() const;
};

/// One JSON object per step: {episode, step, reward, correct, softmax_true,
/// action}. Throws std::logic_error if accuracy and the success-reward count
/// disagree.
void write_jsonl(std::ostream& out, const EpisodeLog& log, const RewardTable& table = {});

/// In explore mode every step also trains the agent. Exploit mode never
/// mutates the agent.
EpisodeLog run_episode(Environment& env, agent::Td3Agent& agent, agent::ActionMode mode,
                       std::uint64_t episode_index);

/// Fixed policy (no learning): maps (state, true class) to an action.
using Policy = std::function<std::vector<double>(const WscState&, std::size_t true_class)>;
EpisodeLog run_policy_episode(Environment& env, const Policy& policy, std::uint64_t episode_index);

}  // namespace wavesynth::env
