#include "wavesynth/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>

#include "wavesynth/baseline.hpp"

namespace wavesynth::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr std::size_t kRewardWindow = 500;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

classifier::ClassifierBundle require_classifier(const RunContext& ctx) {
  const auto dir = ctx.classifier_dir();
  if (!fs::exists(join(dir, "classifier.chnn"))) {
    throw DependencyError("no classifier checkpoint in " + dir + " (run train-classifier first)");
  }
  return classifier::load_bundle(dir);
}

agent::Td3Agent require_agent(const RunContext& ctx) {
  const auto dir = ctx.agent_dir();
  if (!fs::exists(join(dir, "hyperparams.json"))) {
    throw DependencyError("no agent checkpoint in " + dir + " (run train-agent first)");
  }
  return agent::Td3Agent::load(dir);
}

// Scenario used for classifier data and static FIR search: no test-time
// overrides.
env::ScenarioConfig clean_scenario(const config::ExperimentConfig& c, std::uint64_t seed) {
  env::ScenarioConfig sc = c.scenario;
  sc.fixed_snr_db.reset();
  sc.jammer_power_db.reset();
  sc.seed = seed;
  return sc;
}

struct Tally {
  std::size_t steps = 0, hits = 0, success = 0, up = 0, same = 0, down = 0;

  void add(const env::EpisodeLog& log, const env::RewardTable& t) {
    for (const auto& s : log.steps) {
      ++steps;
      hits += s.correct ? 1 : 0;
      if (s.reward == t.success) ++success;
      else if (s.reward == t.up) ++up;
      else if (s.reward == t.down) ++down;
      else ++same;
    }
  }

  Outcome outcome() const {
    const double n = steps == 0 ? 1.0 : static_cast<double>(steps);
    return {static_cast<double>(hits) / n, static_cast<double>(success) / n, static_cast<double>(up) / n,
            static_cast<double>(same) / n, static_cast<double>(down) / n};
  }
};

void write_static(const std::string& path, const baseline::StaticFir& fir) {
  ordered_json j;
  j["actions"] = fir.actions;
  j["scores"] = fir.scores;
  j["zero_scores"] = fir.zero_scores;
  open_out(path) << j.dump(2) << "\n";
}

baseline::StaticFir fit_static(const RunContext& ctx, const classifier::ClassifierBundle& clf) {
  const auto& c = ctx.config;
  auto fir = baseline::optimize_static_fir(clean_scenario(c, c.seeds().static_fir), clf, c.static_fir_config());
  write_static(join(ctx.out_dir, "static_fir.json"), fir);
  return fir;
}

// Runs `episodes` frozen episodes of one policy.
struct PolicyRunner {
  PolicyKind kind;
  agent::Td3Agent* agent = nullptr;
  env::Policy fixed;

  env::EpisodeLog run(env::Environment& e, std::uint64_t episode) const {
    if (kind == PolicyKind::chares) return env::run_episode(e, *agent, agent::ActionMode::exploit, episode);
    return env::run_policy_episode(e, fixed, episode);
  }
};

void write_rows_csv(const std::string& path, const std::string& first_column, const std::vector<EvalRow>& rows,
                    std::size_t episodes) {
  auto out = open_out(path);
  out << first_column << ",policy,episodes,accuracy,success,up,same,down\n";
  for (const auto& r : rows) {
    const auto& o = r.outcome;
    out << r.label << "," << to_string(r.policy) << "," << episodes << "," << fmt(o.accuracy) << "," << fmt(o.success)
        << "," << fmt(o.up) << "," << fmt(o.same) << "," << fmt(o.down) << "\n";
  }
}

}  // namespace

std::string RunContext::classifier_dir() const {
  return config.paths.classifier_dir.empty() ? join(out_dir, "classifier") : config.paths.classifier_dir;
}

std::string RunContext::agent_dir() const {
  return config.paths.agent_dir.empty() ? join(out_dir, "agent") : config.paths.agent_dir;
}

void write_run_metadata(const RunContext& ctx) {
  fs::create_directories(ctx.out_dir);
  const std::string stem = ctx.command.empty() ? "run" : ctx.command;
  open_out(join(ctx.out_dir, stem + ".config.json")) << config::to_json(ctx.config).dump(2) << "\n";
  const auto s = ctx.config.seeds();
  ordered_json j;
  j["command"] = ctx.command;
  j["git_describe"] = ctx.git_describe;
  j["seeds"] = {{"master", ctx.config.seed},     {"classifier", s.classifier}, {"agent", s.agent},
                {"train_env", s.train_env},      {"eval_env", s.eval_env},     {"static_fir", s.static_fir},
                {"report", s.report}};
  open_out(join(ctx.out_dir, stem + ".run.json")) << j.dump(2) << "\n";
}

ClassifierReport train_classifier(const RunContext& ctx) {
  const auto& c = ctx.config;
  const auto sc = clean_scenario(c, c.seeds().classifier);
  const classifier::BundleSpec spec{c.scenario.classes, c.scenario.waveform_len, c.scenario.sps,
                                    c.classifier.features, c.classifier.train_preset};
  const auto result =
      classifier::train_classifier(env::make_generator(sc, c.classifier.train_preset), spec, c.classifier_train());
  classifier::save_bundle(ctx.classifier_dir(), result.bundle);

  ClassifierReport report;
  report.validation_accuracy = result.validation_accuracy;
  report.presets = c.classifier.report_presets;
  report.accuracy.assign(c.scenario.num_classes(), {});
  for (std::size_t p = 0; p < report.presets.size(); ++p) {
    const auto acc = classifier::evaluate_per_class(result.bundle, env::make_generator(sc, report.presets[p]),
                                                    c.classifier.report_per_class, derive_seed(c.seeds().report, {p}));
    for (std::size_t k = 0; k < acc.size(); ++k) report.accuracy[k].push_back(acc[k]);
  }

  auto out = open_out(join(ctx.out_dir, "classifier_report.csv"));
  out << "class";
  for (const auto& p : report.presets) out << "," << p;
  out << "\n";
  for (std::size_t k = 0; k < report.accuracy.size(); ++k) {
    out << c.scenario.classes[k];
    for (double a : report.accuracy[k]) out << "," << fmt(a);
    out << "\n";
  }

  ordered_json j;
  j["train_preset"] = c.classifier.train_preset;
  j["validation_accuracy"] = result.validation_accuracy;
  j["validation_per_class"] = result.per_class_accuracy;
  j["checksum"] = result.bundle.net.checksum();
  open_out(join(ctx.out_dir, "classifier_summary.json")) << j.dump(2) << "\n";
  return report;
}

AgentReport train_agent(const RunContext& ctx) {
  const auto& c = ctx.config;
  const auto clf = require_classifier(ctx);
  env::Environment e(c.train_scenario(), clf);
  agent::Td3Agent ag(c.td3());

  auto log_out = open_out(join(ctx.out_dir, "training_log.jsonl"));
  auto csv = open_out(join(ctx.out_dir, "training_episodes.csv"));
  csv << "episode,true_class,preset,steps,accuracy,total_reward\n";
  std::vector<double> rewards;
  std::uint64_t episode = 0;
  while (ag.step_count() < c.agent.train_steps) {
    const auto log = env::run_episode(e, ag, agent::ActionMode::explore, episode);
    env::write_jsonl(log_out, log, c.scenario.rewards);
    csv << episode << "," << c.scenario.classes[log.true_class] << "," << log.preset << "," << log.steps.size()
        << "," << fmt(log.accuracy()) << "," << fmt(log.total_reward()) << "\n";
    for (const auto& s : log.steps) rewards.push_back(s.reward);
    ++episode;
  }
  ag.save(ctx.agent_dir());

  AgentReport report;
  report.steps = ag.step_count();
  report.episodes = episode;
  const std::size_t w = std::min(kRewardWindow, rewards.size());
  if (w > 0) {
    report.first_window_reward = std::accumulate(rewards.begin(), rewards.begin() + static_cast<long>(w), 0.0) / w;
    report.last_window_reward = std::accumulate(rewards.end() - static_cast<long>(w), rewards.end(), 0.0) / w;
  }
  ordered_json j;
  j["steps"] = report.steps;
  j["episodes"] = report.episodes;
  j["first_window_reward"] = report.first_window_reward;
  j["last_window_reward"] = report.last_window_reward;
  j["checksum"] = ag.checksum();
  open_out(join(ctx.out_dir, "agent_summary.json")) << j.dump(2) << "\n";
  return report;
}

std::string to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::chares: return "chares";
    case PolicyKind::none: return "none";
    case PolicyKind::static_fir: return "static";
  }
  return "?";
}

PolicyKind policy_from_string(const std::string& name) {
  if (name == "chares") return PolicyKind::chares;
  if (name == "none") return PolicyKind::none;
  if (name == "static") return PolicyKind::static_fir;
  throw std::invalid_argument("unknown policy: " + name + " (chares, none, static)");
}

std::vector<EvalRow> evaluate(const RunContext& ctx, PolicyKind policy) {
  const auto& c = ctx.config;
  const auto clf = require_classifier(ctx);
  PolicyRunner runner{policy, nullptr, {}};
  std::optional<agent::Td3Agent> ag;
  if (policy == PolicyKind::chares) {
    ag.emplace(require_agent(ctx));
    runner.agent = &*ag;
  } else if (policy == PolicyKind::none) {
    runner.fixed = [dim = c.scenario.action_dim()](const env::WscState&, std::size_t) {
      return baseline::no_fir_policy(dim);
    };
  } else {
    runner.fixed = fit_static(ctx, clf).policy();
  }
  const auto before = ag ? ag->checksum() : 0;

  std::vector<std::optional<double>> grid;
  for (double snr : c.evaluation.snr_grid_db) grid.emplace_back(snr);
  if (grid.empty()) grid.emplace_back(std::nullopt);

  const std::string name = to_string(policy);
  auto episodes_csv = open_out(join(ctx.out_dir, "evaluate_" + name + "_episodes.csv"));
  episodes_csv << "snr_db,episode,true_class,preset,accuracy,total_reward\n";
  std::vector<EvalRow> rows;
  for (const auto& snr : grid) {
    auto sc = c.eval_scenario();
    if (snr) sc.fixed_snr_db = snr;
    const std::string label = snr ? fmt(*snr) : "preset";
    env::Environment e(sc, clf);
    Tally tally;
    for (std::uint64_t k = 0; k < c.evaluation.episodes; ++k) {
      const auto log = runner.run(e, k);
      tally.add(log, sc.rewards);
      episodes_csv << label << "," << k << "," << sc.classes[log.true_class] << "," << log.preset << ","
                   << fmt(log.accuracy()) << "," << fmt(log.total_reward()) << "\n";
    }
    rows.push_back({label, policy, tally.outcome()});
  }
  if (ag && ag->checksum() != before) throw std::logic_error("evaluate: agent changed during exploit episodes");
  write_rows_csv(join(ctx.out_dir, "evaluate_" + name + ".csv"), "snr_db", rows, c.evaluation.episodes);
  return rows;
}

std::vector<EvalRow> sweep_jammer(const RunContext& ctx) {
  const auto& c = ctx.config;
  const auto clf = require_classifier(ctx);
  auto ag = require_agent(ctx);
  const auto before = ag.checksum();
  const auto fir = fit_static(ctx, clf);

  const std::vector<PolicyRunner> runners{
      {PolicyKind::chares, &ag, {}},
      {PolicyKind::none, nullptr,
       [dim = c.scenario.action_dim()](const env::WscState&, std::size_t) { return baseline::no_fir_policy(dim); }},
      {PolicyKind::static_fir, nullptr, fir.policy()}};

  std::vector<EvalRow> rows;
  for (double power : c.sweep.jammer_powers_db) {
    auto sc = c.eval_scenario();
    if (sc.mode == env::Mode::MLA) sc.mode = env::Mode::ADV;
    sc.presets = {c.sweep.preset};
    sc.jammer_power_db = power;
    env::Environment e(sc, clf);
    for (const auto& r : runners) {
      Tally tally;
      for (std::uint64_t k = 0; k < c.sweep.episodes; ++k) tally.add(r.run(e, k), sc.rewards);
      rows.push_back({fmt(power), r.kind, tally.outcome()});
    }
  }
  if (ag.checksum() != before) throw std::logic_error("sweep_jammer: agent changed during exploit episodes");
  write_rows_csv(join(ctx.out_dir, "sweep_jammer.csv"), "jammer_db", rows, c.sweep.episodes);
  return rows;
}

}  // namespace wavesynth::pipeline
