#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wavesynth/classifier.hpp"
#include "wavesynth/pipeline.hpp"

using namespace wavesynth;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigError = 2, kDependencyError = 3, kTrainingFailure = 4 };

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults apply to missing keys)");
  cmd->add_option("--seed", o.seed, "Master seed, overrides the config");
  cmd->add_option("--out-dir", o.out_dir, "Run directory");
  cmd->add_option("--set", o.overrides, "Override a config key, e.g. --set agent.train_steps=2000");
}

pipeline::RunContext make_context(const CommonOptions& o, const std::string& command) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw config::ConfigError("config: cannot read " + o.config_path);
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw config::ConfigError("config: " + o.config_path + ": " + e.what());
    }
  }
  for (const auto& a : o.overrides) config::apply_override(j, a);
  if (o.seed) j["seed"] = *o.seed;

  pipeline::RunContext ctx;
  ctx.config = config::from_json(j);
  ctx.out_dir = o.out_dir.empty() ? "runs/" + command : o.out_dir;
  ctx.git_describe = WAVESYNTH_GIT_DESCRIBE;
  ctx.command = command;
  return ctx;
}

void print_rows(const std::vector<pipeline::EvalRow>& rows, const std::string& what) {
  for (const auto& r : rows) {
    std::cout << what << " " << r.label << "  " << pipeline::to_string(r.policy) << "  accuracy "
              << r.outcome.accuracy << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop waveform synthesis experiments"};
  app.require_subcommand(1);

  CommonOptions opts;
  auto* train_clf = app.add_subcommand("train-classifier", "Train the receiver classifier and write its report");
  auto* train_agent = app.add_subcommand("train-agent", "Train the TD3 agent online against the saved classifier");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a frozen policy over the SNR grid");
  auto* sweep = app.add_subcommand("sweep-jammer", "Evaluate all policies over the jammer power grid");
  for (auto* cmd : {train_clf, train_agent, evaluate, sweep}) add_common(cmd, opts);
  std::string policy = "chares";
  evaluate->add_option("--policy", policy, "chares, none or static")
      ->check(CLI::IsMember({"chares", "none", "static"}));

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto ctx = make_context(opts, command);
    pipeline::write_run_metadata(ctx);
    if (command == "train-classifier") {
      const auto r = pipeline::train_classifier(ctx);
      std::cout << "validation accuracy " << r.validation_accuracy << "\n";
      for (std::size_t k = 0; k < r.accuracy.size(); ++k) {
        std::cout << ctx.config.scenario.classes[k];
        for (double a : r.accuracy[k]) std::cout << "  " << a;
        std::cout << "\n";
      }
    } else if (command == "train-agent") {
      const auto r = pipeline::train_agent(ctx);
      std::cout << "steps " << r.steps << "  episodes " << r.episodes << "  reward first/last window "
                << r.first_window_reward << " / " << r.last_window_reward << "\n";
    } else if (command == "evaluate") {
      print_rows(pipeline::evaluate(ctx, pipeline::policy_from_string(policy)), "snr_db");
    } else {
      print_rows(pipeline::sweep_jammer(ctx), "jammer_db");
    }
    std::cout << "outputs in " << ctx.out_dir << "\n";
  } catch (const config::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  } catch (const pipeline::DependencyError& e) {
    std::cerr << e.what() << "\n";
    return kDependencyError;
  } catch (const classifier::TrainingFailure& e) {
    std::cerr << e.what() << "\n";
    return kTrainingFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
