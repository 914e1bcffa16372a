#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wavesynth/classifier.hpp"
#include "wavesynth/env.hpp"

namespace wavesynth::baseline {

/// Zero action; maps through clamp_taps to the ideal filter.
std::vector<double> no_fir_policy(std::size_t action_dim);

using Objective = std::function<double(std::span<const double>)>;

struct EsResult {
  std::vector<double> best;
  double best_score = 0.0;
  double initial_score = 0.0;        // score of the zero starting point
  std::vector<double> best_history;  // best score after each evaluation
  std::size_t evaluations = 0;
};

/// Elitist (1+lambda) evolution strategy over [-1, 1]^dim, started from the
/// zero vector. An offspring replaces the parent when its score is >= the
/// parent's. `budget` counts objective evaluations, the start included.
EsResult evolve(const Objective& objective, std::size_t dim, std::size_t budget, std::uint64_t seed,
                std::size_t lambda = 8, double sigma = 0.4);

struct StaticFirConfig {
  std::size_t budget = 400;  // evaluations per class, >= 100
  std::size_t realizations = 24;
  std::vector<std::string> train_presets;  // empty: the scenario's first preset
  std::size_t lambda = 8;
  double sigma = 0.4;
  std::uint64_t seed = 1;
};

struct StaticFir {
  std::vector<std::vector<double>> actions;  // one per class
  std::vector<double> scores;                // training-set score per class
  std::vector<double> zero_scores;           // same set, zero action

  /// Static policy: the action of the true class, regardless of feedback.
  env::Policy policy() const;
};

/// Training-set score of `action` for class `label`: majority-vote success
/// rate over a fixed set of channel realisations, with the mean true-class
/// softmax (scaled by 1e-3) breaking ties.
double static_score(const env::ScenarioConfig& sc, const classifier::ClassifierBundle& clf, std::size_t label,
                    std::span<const double> action, const std::vector<channel::ChannelModel>& realizations);

std::vector<channel::ChannelModel> training_realizations(const env::ScenarioConfig& sc,
                                                         const StaticFirConfig& config);

StaticFir optimize_static_fir(const env::ScenarioConfig& sc, const classifier::ClassifierBundle& clf,
                              const StaticFirConfig& config);

}  // namespace wavesynth::baseline
