#include "wavesynth/baseline.hpp"

#include <algorithm>
#include <stdexcept>

namespace wavesynth::baseline {

std::vector<double> no_fir_policy(std::size_t action_dim) { return std::vector<double>(action_dim, 0.0); }

EsResult evolve(const Objective& objective, std::size_t dim, std::size_t budget, std::uint64_t seed,
                std::size_t lambda, double sigma) {
  if (dim == 0 || budget == 0 || lambda == 0) throw std::invalid_argument("evolve: dim, budget, lambda must be > 0");
  Rng rng = make_rng(seed, {tag_of("es")});
  std::normal_distribution<double> noise(0.0, sigma);

  EsResult res;
  res.best.assign(dim, 0.0);
  res.best_score = objective(res.best);
  res.initial_score = res.best_score;
  res.evaluations = 1;
  res.best_history.push_back(res.best_score);

  while (res.evaluations < budget) {
    const std::size_t kids = std::min(lambda, budget - res.evaluations);
    std::vector<double> champion;
    double champion_score = 0.0;
    for (std::size_t k = 0; k < kids; ++k) {
      std::vector<double> child(res.best);
      for (auto& v : child) v = std::clamp(v + noise(rng), -1.0, 1.0);
      const double score = objective(child);
      ++res.evaluations;
      if (champion.empty() || score > champion_score) {
        champion = std::move(child);
        champion_score = score;
      }
      res.best_history.push_back(std::max(res.best_score, champion_score));
    }
    if (champion_score >= res.best_score) {
      res.best = std::move(champion);
      res.best_score = champion_score;
    }
  }
  return res;
}

std::vector<channel::ChannelModel> training_realizations(const env::ScenarioConfig& sc,
                                                         const StaticFirConfig& config) {
  std::vector<std::string> presets = config.train_presets;
  if (presets.empty()) presets.push_back(sc.presets.front());
  std::vector<channel::ChannelModel> out;
  out.reserve(config.realizations);
  Rng rng = make_rng(config.seed, {tag_of("static-realizations")});
  for (std::size_t i = 0; i < config.realizations; ++i) {
    auto ch = channel::realize(channel::preset(presets[i % presets.size()]), rng());
    if (sc.fixed_snr_db) ch.snr_db = sc.fixed_snr_db;
    if (sc.jammer_power_db) ch.jammer_power_db = sc.jammer_power_db;
    out.push_back(std::move(ch));
  }
  return out;
}

double static_score(const env::ScenarioConfig& sc, const classifier::ClassifierBundle& clf, std::size_t label,
                    std::span<const double> action, const std::vector<channel::ChannelModel>& realizations) {
  if (realizations.empty()) throw std::invalid_argument("static_score: no realizations");
  const auto fir = dsp::clamp_taps(action, sc.alpha);
  std::size_t hits = 0;
  double softmax = 0.0;
  for (std::size_t i = 0; i < realizations.size(); ++i) {
    // Same symbols for every candidate so scores are comparable.
    Rng rng = make_rng(sc.seed, {tag_of("static-batch"), label, i});
    std::vector<IqBuffer> batch;
    batch.reserve(sc.batch_size);
    for (std::size_t w = 0; w < sc.batch_size; ++w) batch.push_back(env::transmit(sc, label, fir, realizations[i], w, rng));
    const auto fb = classifier::classify_batch(clf, batch);
    hits += fb.majority_label == label ? 1 : 0;
    softmax += fb.mean_softmax[label];
  }
  const double n = static_cast<double>(realizations.size());
  return static_cast<double>(hits) / n + 1e-3 * softmax / n;
}

StaticFir optimize_static_fir(const env::ScenarioConfig& sc, const classifier::ClassifierBundle& clf,
                              const StaticFirConfig& config) {
  if (config.budget < 100) throw std::invalid_argument("optimize_static_fir: budget must be >= 100");
  sc.validate();
  const auto realizations = training_realizations(sc, config);
  StaticFir out;
  for (std::size_t label = 0; label < sc.num_classes(); ++label) {
    if (sc.mode == env::Mode::SLA && label != sc.protected_device) {
      // Only the protected device transmits through the synthesis filter.
      out.actions.push_back(no_fir_policy(sc.action_dim()));
      out.scores.push_back(0.0);
      out.zero_scores.push_back(0.0);
      continue;
    }
    auto objective = [&](std::span<const double> a) { return static_score(sc, clf, label, a, realizations); };
    const auto res = evolve(objective, sc.action_dim(), config.budget, derive_seed(config.seed, {label}),
                            config.lambda, config.sigma);
    out.actions.push_back(res.best);
    out.scores.push_back(res.best_score);
    out.zero_scores.push_back(res.initial_score);
  }
  return out;
}

env::Policy StaticFir::policy() const {
  return [actions = actions](const env::WscState&, std::size_t true_class) { return actions.at(true_class); };
}

}  // namespace wavesynth::baseline
