#include "wavesynth/config.hpp"

#include <fstream>
#include <initializer_list>
#include <optional>

#include "wavesynth/channel.hpp"

namespace wavesynth::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + section + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("config: unknown key '" + section + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const std::string& section, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + section + "." + key + "': " + e.what());
  }
}

void read_optional(const json& obj, const std::string& section, const char* key, std::optional<double>& out) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
    return;
  }
  double v = 0.0;
  read(obj, section, key, v);
  out = v;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

const json& section(const json& j, const char* name) {
  static const json empty = json::object();
  return j.contains(name) ? j.at(name) : empty;
}

}  // namespace

Seeds ExperimentConfig::seeds() const {
  return {derive_seed(seed, {tag_of("classifier")}), derive_seed(seed, {tag_of("agent")}),
          derive_seed(seed, {tag_of("train-env")}),  derive_seed(seed, {tag_of("eval-env")}),
          derive_seed(seed, {tag_of("static-fir")}), derive_seed(seed, {tag_of("report")})};
}

env::ScenarioConfig ExperimentConfig::train_scenario() const {
  env::ScenarioConfig sc = scenario;
  sc.seed = seeds().train_env;
  return sc;
}

env::ScenarioConfig ExperimentConfig::eval_scenario() const {
  env::ScenarioConfig sc = scenario;
  sc.seed = seeds().eval_env;
  return sc;
}

agent::Td3Config ExperimentConfig::td3() const {
  agent::Td3Config c = agent.td3;
  c.state_dim = scenario.state_dim();
  c.action_dim = scenario.action_dim();
  c.seed = seeds().agent;
  return c;
}

classifier::TrainConfig ExperimentConfig::classifier_train() const {
  classifier::TrainConfig c = classifier.train;
  c.seed = seeds().classifier;
  return c;
}

baseline::StaticFirConfig ExperimentConfig::static_fir_config() const {
  baseline::StaticFirConfig c = static_fir;
  c.seed = seeds().static_fir;
  return c;
}

void ExperimentConfig::validate() const {
  try {
    scenario.validate();
    td3().validate();
    channel::preset(classifier.train_preset);
    for (const auto& p : classifier.report_presets) channel::preset(p);
    for (const auto& p : static_fir.train_presets) channel::preset(p);
    channel::preset(sweep.preset);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto& t = classifier.train;
  if (t.num_train == 0 || t.num_validation == 0 || t.epochs == 0 || t.batch_size == 0 || t.hidden == 0) {
    throw ConfigError("config: classifier sizes must be positive");
  }
  if (classifier.report_per_class == 0) throw ConfigError("config: classifier.report_per_class must be positive");
  if (agent.train_steps == 0) throw ConfigError("config: agent.train_steps must be positive");
  if (static_fir.budget < 100) throw ConfigError("config: static_fir.budget must be >= 100");
  if (static_fir.realizations == 0 || static_fir.lambda == 0) {
    throw ConfigError("config: static_fir sizes must be positive");
  }
  if (evaluation.episodes == 0 || sweep.episodes == 0) throw ConfigError("config: episode counts must be positive");
  if (sweep.jammer_powers_db.empty()) throw ConfigError("config: sweep.jammer_powers_db is empty");
}

ExperimentConfig from_json(const json& j) {
  check_keys(j, "<root>",
             {"seed", "scenario", "classifier", "agent", "static_fir", "evaluation", "sweep", "paths"});
  ExperimentConfig c;
  read(j, "<root>", "seed", c.seed);

  const json& s = section(j, "scenario");
  check_keys(s, "scenario",
             {"mode", "classes", "presets", "episode_length", "batch_size", "waveform_len", "sps", "num_taps", "alpha",
              "protected_device", "sla_scheme", "fixed_snr_db", "jammer_power_db", "rewards"});
  auto& sc = c.scenario;
  std::string mode = env::to_string(sc.mode);
  read(s, "scenario", "mode", mode);
  std::string sla_scheme(waveform::to_string(sc.sla_scheme));
  read(s, "scenario", "sla_scheme", sla_scheme);
  try {
    sc.mode = env::mode_from_string(mode);
    sc.sla_scheme = waveform::scheme_from_string(sla_scheme);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  read(s, "scenario", "classes", sc.classes);
  read(s, "scenario", "presets", sc.presets);
  read(s, "scenario", "episode_length", sc.episode_length);
  read(s, "scenario", "batch_size", sc.batch_size);
  read(s, "scenario", "waveform_len", sc.waveform_len);
  read(s, "scenario", "sps", sc.sps);
  read(s, "scenario", "num_taps", sc.num_taps);
  read(s, "scenario", "alpha", sc.alpha);
  read(s, "scenario", "protected_device", sc.protected_device);
  read_optional(s, "scenario", "fixed_snr_db", sc.fixed_snr_db);
  read_optional(s, "scenario", "jammer_power_db", sc.jammer_power_db);
  const json& r = section(s, "rewards");
  check_keys(r, "scenario.rewards", {"success", "up", "down", "same", "tolerance"});
  read(r, "scenario.rewards", "success", sc.rewards.success);
  read(r, "scenario.rewards", "up", sc.rewards.up);
  read(r, "scenario.rewards", "down", sc.rewards.down);
  read(r, "scenario.rewards", "same", sc.rewards.same);
  read(r, "scenario.rewards", "tolerance", sc.rewards.tolerance);

  const json& k = section(j, "classifier");
  check_keys(k, "classifier",
             {"train_preset", "features", "num_train", "num_validation", "epochs", "batch_size", "hidden",
              "learning_rate", "min_validation_accuracy", "report_presets", "report_per_class"});
  read(k, "classifier", "train_preset", c.classifier.train_preset);
  std::string features = classifier::to_string(c.classifier.features);
  read(k, "classifier", "features", features);
  try {
    c.classifier.features = classifier::feature_set_from_string(features);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  auto& t = c.classifier.train;
  read(k, "classifier", "num_train", t.num_train);
  read(k, "classifier", "num_validation", t.num_validation);
  read(k, "classifier", "epochs", t.epochs);
  read(k, "classifier", "batch_size", t.batch_size);
  read(k, "classifier", "hidden", t.hidden);
  read(k, "classifier", "learning_rate", t.learning_rate);
  read(k, "classifier", "min_validation_accuracy", t.min_validation_accuracy);
  read(k, "classifier", "report_presets", c.classifier.report_presets);
  read(k, "classifier", "report_per_class", c.classifier.report_per_class);

  const json& a = section(j, "agent");
  check_keys(a, "agent",
             {"hidden_width", "hidden_depth", "gamma", "policy_delay", "polyak", "batch_size", "buffer_capacity",
              "sigma_explore", "sigma_smooth", "c_smooth", "actor_lr", "critic_lr", "lr_decay_steps", "train_steps"});
  auto& td3 = c.agent.td3;
  read(a, "agent", "hidden_width", td3.hidden_width);
  read(a, "agent", "hidden_depth", td3.hidden_depth);
  read(a, "agent", "gamma", td3.gamma);
  read(a, "agent", "policy_delay", td3.policy_delay);
  read(a, "agent", "polyak", td3.polyak);
  read(a, "agent", "batch_size", td3.batch_size);
  read(a, "agent", "buffer_capacity", td3.buffer_capacity);
  read(a, "agent", "sigma_explore", td3.sigma_explore);
  read(a, "agent", "sigma_smooth", td3.sigma_smooth);
  read(a, "agent", "c_smooth", td3.c_smooth);
  read(a, "agent", "actor_lr", td3.actor_lr);
  read(a, "agent", "critic_lr", td3.critic_lr);
  read(a, "agent", "lr_decay_steps", td3.lr_decay_steps);
  read(a, "agent", "train_steps", c.agent.train_steps);

  const json& f = section(j, "static_fir");
  check_keys(f, "static_fir", {"budget", "realizations", "train_presets", "lambda", "sigma"});
  read(f, "static_fir", "budget", c.static_fir.budget);
  read(f, "static_fir", "realizations", c.static_fir.realizations);
  read(f, "static_fir", "train_presets", c.static_fir.train_presets);
  read(f, "static_fir", "lambda", c.static_fir.lambda);
  read(f, "static_fir", "sigma", c.static_fir.sigma);

  const json& e = section(j, "evaluation");
  check_keys(e, "evaluation", {"episodes", "snr_grid_db"});
  read(e, "evaluation", "episodes", c.evaluation.episodes);
  read(e, "evaluation", "snr_grid_db", c.evaluation.snr_grid_db);

  const json& w = section(j, "sweep");
  check_keys(w, "sweep", {"preset", "jammer_powers_db", "episodes"});
  read(w, "sweep", "preset", c.sweep.preset);
  read(w, "sweep", "jammer_powers_db", c.sweep.jammer_powers_db);
  read(w, "sweep", "episodes", c.sweep.episodes);

  const json& p = section(j, "paths");
  check_keys(p, "paths", {"classifier_dir", "agent_dir"});
  read(p, "paths", "classifier_dir", c.paths.classifier_dir);
  read(p, "paths", "agent_dir", c.paths.agent_dir);

  c.validate();
  return c;
}

ordered_json to_json(const ExperimentConfig& c) {
  const auto& sc = c.scenario;
  ordered_json j;
  j["seed"] = c.seed;
  j["scenario"] = {{"mode", env::to_string(sc.mode)},
                   {"classes", sc.classes},
                   {"presets", sc.presets},
                   {"episode_length", sc.episode_length},
                   {"batch_size", sc.batch_size},
                   {"waveform_len", sc.waveform_len},
                   {"sps", sc.sps},
                   {"num_taps", sc.num_taps},
                   {"alpha", sc.alpha},
                   {"protected_device", sc.protected_device},
                   {"sla_scheme", std::string(waveform::to_string(sc.sla_scheme))},
                   {"fixed_snr_db", optional_json(sc.fixed_snr_db)},
                   {"jammer_power_db", optional_json(sc.jammer_power_db)},
                   {"rewards",
                    {{"success", sc.rewards.success},
                     {"up", sc.rewards.up},
                     {"down", sc.rewards.down},
                     {"same", sc.rewards.same},
                     {"tolerance", sc.rewards.tolerance}}}};
  const auto& t = c.classifier.train;
  j["classifier"] = {{"train_preset", c.classifier.train_preset},
                     {"features", classifier::to_string(c.classifier.features)},
                     {"num_train", t.num_train},
                     {"num_validation", t.num_validation},
                     {"epochs", t.epochs},
                     {"batch_size", t.batch_size},
                     {"hidden", t.hidden},
                     {"learning_rate", t.learning_rate},
                     {"min_validation_accuracy", t.min_validation_accuracy},
                     {"report_presets", c.classifier.report_presets},
                     {"report_per_class", c.classifier.report_per_class}};
  const auto& a = c.agent.td3;
  j["agent"] = {{"hidden_width", a.hidden_width},     {"hidden_depth", a.hidden_depth},
                {"gamma", a.gamma},                   {"policy_delay", a.policy_delay},
                {"polyak", a.polyak},                 {"batch_size", a.batch_size},
                {"buffer_capacity", a.buffer_capacity}, {"sigma_explore", a.sigma_explore},
                {"sigma_smooth", a.sigma_smooth},     {"c_smooth", a.c_smooth},
                {"actor_lr", a.actor_lr},             {"critic_lr", a.critic_lr},
                {"lr_decay_steps", a.lr_decay_steps}, {"train_steps", c.agent.train_steps}};
  j["static_fir"] = {{"budget", c.static_fir.budget},
                     {"realizations", c.static_fir.realizations},
                     {"train_presets", c.static_fir.train_presets},
                     {"lambda", c.static_fir.lambda},
                     {"sigma", c.static_fir.sigma}};
  j["evaluation"] = {{"episodes", c.evaluation.episodes}, {"snr_grid_db", c.evaluation.snr_grid_db}};
  j["sweep"] = {{"preset", c.sweep.preset},
                {"jammer_powers_db", c.sweep.jammer_powers_db},
                {"episodes", c.sweep.episodes}};
  j["paths"] = {{"classifier_dir", c.paths.classifier_dir}, {"agent_dir", c.paths.agent_dir}};
  return j;
}

ExperimentConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return from_json(j);
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("config: override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("config: bad override path '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("config: '" + path + "' descends into a non-object");
    node = &next;
    start = dot + 1;
  }
}

}  // namespace wavesynth::config
