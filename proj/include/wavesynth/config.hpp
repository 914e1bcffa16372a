#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "wavesynth/agent.hpp"
#include "wavesynth/baseline.hpp"
#include "wavesynth/classifier.hpp"
#include "wavesynth/env.hpp"

namespace wavesynth::config {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ClassifierSection {
  std::string train_preset = "high_snr_train";
  classifier::FeatureSet features = classifier::FeatureSet::modulation;
  classifier::TrainConfig train;
  std::vector<std::string> report_presets{"high_snr_train", "mid_snr", "low_mid_snr", "low_snr"};
  std::size_t report_per_class = 300;
};

struct AgentSection {
  agent::Td3Config td3;  // state/action dims come from the scenario
  std::size_t train_steps = 16000;
};

struct EvaluationSection {
  std::size_t episodes = 200;
  std::vector<double> snr_grid_db{6.0, 10.0, 14.0};  // empty: the presets' own SNR draw
};

struct SweepSection {
  std::string preset = "adv";
  std::vector<double> jammer_powers_db{-10.0, -5.0, 0.0, 5.0};
  std::size_t episodes = 200;
};

struct Paths {
  std::string classifier_dir;  // empty: <out-dir>/classifier
  std::string agent_dir;       // empty: <out-dir>/agent
};

/// One master seed drives every subsystem through derived seeds.
struct Seeds {
  std::uint64_t classifier = 0;
  std::uint64_t agent = 0;
  std::uint64_t train_env = 0;
  std::uint64_t eval_env = 0;
  std::uint64_t static_fir = 0;
  std::uint64_t report = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  env::ScenarioConfig scenario;
  ClassifierSection classifier;
  AgentSection agent;
  baseline::StaticFirConfig static_fir;
  EvaluationSection evaluation;
  SweepSection sweep;
  Paths paths;

  Seeds seeds() const;
  /// Scenario and agent settings with dims and seeds filled in.
  env::ScenarioConfig train_scenario() const;
  env::ScenarioConfig eval_scenario() const;
  agent::Td3Config td3() const;
  classifier::TrainConfig classifier_train() const;
  baseline::StaticFirConfig static_fir_config() const;

  void validate() const;
};

/// Missing keys keep their defaults; unknown keys are an error.
ExperimentConfig from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const ExperimentConfig& c);

ExperimentConfig load(const std::string& path);

/// Dotted-path override, e.g. "agent.train_steps=2000". The value is parsed
/// as JSON, falling back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace wavesynth::config
