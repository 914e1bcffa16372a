#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "wavesynth/config.hpp"

namespace wavesynth::pipeline {

/// A required checkpoint is missing.
struct DependencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunContext {
  config::ExperimentConfig config;
  std::string out_dir;
  std::string git_describe = "unknown";
  std::string command;

  std::string classifier_dir() const;
  std::string agent_dir() const;
};

/// <command>.config.json (resolved config) and <command>.run.json (seeds,
/// git describe).
void write_run_metadata(const RunContext& ctx);

struct ClassifierReport {
  double validation_accuracy = 0.0;
  std::vector<std::string> presets;
  std::vector<std::vector<double>> accuracy;  // [class][preset]
};

/// Trains on the configured preset, saves the bundle and writes
/// classifier_report.csv (rows: classes, columns: presets).
ClassifierReport train_classifier(const RunContext& ctx);

struct AgentReport {
  std::size_t steps = 0;
  std::size_t episodes = 0;
  double first_window_reward = 0.0;  // mean reward over the first 500 steps
  double last_window_reward = 0.0;   // and the last 500
};

/// Online training from the saved classifier; writes training_log.jsonl,
/// training_episodes.csv and the agent checkpoint.
AgentReport train_agent(const RunContext& ctx);

enum class PolicyKind { chares, none, static_fir };
std::string to_string(PolicyKind p);
PolicyKind policy_from_string(const std::string& name);

struct Outcome {
  double accuracy = 0.0;
  double success = 0.0;  // fractions of steps by reward branch
  double up = 0.0;
  double same = 0.0;
  double down = 0.0;
};

struct EvalRow {
  std::string label;  // SNR or jammer power, as written to the CSV
  PolicyKind policy = PolicyKind::none;
  Outcome outcome;
};

/// Frozen-policy episodes over the SNR grid; writes evaluate_<policy>.csv and
/// evaluate_<policy>_episodes.csv.
std::vector<EvalRow> evaluate(const RunContext& ctx, PolicyKind policy);

/// All three policies over the jammer grid on the sweep preset; writes
/// sweep_jammer.csv.
std::vector<EvalRow> sweep_jammer(const RunContext& ctx);

}  // namespace wavesynth::pipeline
