#include "gaclab/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>

namespace gaclab::config {

namespace {

void require_known_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig parse_config(const Json& j) {
  ExperimentConfig cfg;
  require_known_keys(j, {"seed", "label_mode", "synth", "network", "train", "margin", "automation", "metrics"},
                     "top level");
  read(j, "seed", cfg.seed);
  read(j, "label_mode", cfg.label_mode);
  demog::label_mode_from_string(cfg.label_mode);  // validates
  // Section seeds default to the experiment seed; explicit values win.
  resolve_seed(cfg);

  if (j.contains("synth")) {
    const Json& s = j["synth"];
    require_known_keys(s,
                       {"nd", "subjects_per_group", "images_per_subject", "group_signature_strength",
                        "identity_signature_strength", "noise_std", "pose_jitter", "identity_strength_scale",
                        "height", "width", "seed"},
                       "synth");
    read(s, "nd", cfg.synth.nd);
    read(s, "subjects_per_group", cfg.synth.subjects_per_group);
    read(s, "images_per_subject", cfg.synth.images_per_subject);
    read(s, "group_signature_strength", cfg.synth.group_signature_strength);
    read(s, "identity_signature_strength", cfg.synth.identity_signature_strength);
    read(s, "noise_std", cfg.synth.noise_std);
    read(s, "pose_jitter", cfg.synth.pose_jitter);
    read(s, "identity_strength_scale", cfg.synth.identity_strength_scale);
    read(s, "height", cfg.synth.height);
    read(s, "width", cfg.synth.width);
    read(s, "seed", cfg.synth.seed);
  }

  if (j.contains("network")) {
    const Json& n = j["network"];
    require_known_keys(n, {"preset", "widths", "blocks_per_unit", "embedding_dim", "nd", "placement"}, "network");
    read(n, "preset", cfg.network.preset);
    read(n, "widths", cfg.network.widths);
    read(n, "blocks_per_unit", cfg.network.blocks_per_unit);
    read(n, "embedding_dim", cfg.network.embedding_dim);
    read(n, "nd", cfg.network.nd);
    if (n.contains("placement")) cfg.network.placement = layers::placement_from_string(n["placement"].get<std::string>());
  }

  if (j.contains("train")) {
    const Json& t = j["train"];
    require_known_keys(t,
                       {"batch_size", "images_per_subject", "lr", "decay_epochs", "lr_floor", "momentum", "epochs",
                        "weight_decay", "variant"},
                       "train");
    read(t, "batch_size", cfg.train.batch_size);
    read(t, "images_per_subject", cfg.train.images_per_subject);
    read(t, "lr", cfg.train.lr);
    read(t, "decay_epochs", cfg.train.decay_epochs);
    read(t, "lr_floor", cfg.train.lr_floor);
    read(t, "momentum", cfg.train.momentum);
    read(t, "epochs", cfg.train.epochs);
    read(t, "weight_decay", cfg.train.weight_decay);
    read(t, "variant", cfg.train.variant);
    trainer::variant_spec(cfg.train.variant);  // validates
  }

  if (j.contains("margin")) {
    const Json& m = j["margin"];
    require_known_keys(m, {"scale", "margin", "lambda"}, "margin");
    read(m, "scale", cfg.train.margin.scale);
    read(m, "margin", cfg.train.margin.margin);
    read(m, "lambda", cfg.train.margin.lambda);
    if (cfg.train.margin.scale <= 0) throw std::invalid_argument("config: margin.scale must be > 0");
    if (cfg.train.margin.margin < 0 || cfg.train.margin.margin >= 1) {
      throw std::invalid_argument("config: margin.margin must lie in [0, 1)");
    }
    if (cfg.train.margin.lambda < 0) throw std::invalid_argument("config: margin.lambda must be >= 0");
  }

  if (j.contains("automation")) {
    const Json& a = j["automation"];
    require_known_keys(a, {"tau", "check_period", "stability_window", "stability_eps", "allow_resplit"}, "automation");
    read(a, "tau", cfg.train.automation.tau);
    read(a, "check_period", cfg.train.automation.check_period);
    read(a, "stability_window", cfg.train.automation.stability_window);
    read(a, "stability_eps", cfg.train.automation.stability_eps);
    read(a, "allow_resplit", cfg.train.automation.allow_resplit);
    if (cfg.train.automation.tau < -1 || cfg.train.automation.tau > 1) {
      throw std::invalid_argument("config: automation.tau must lie in [-1, 1]");
    }
    if (cfg.train.automation.check_period < 1) {
      throw std::invalid_argument("config: automation.check_period must be >= 1");
    }
  }

  if (j.contains("metrics")) {
    const Json& m = j["metrics"];
    require_known_keys(m, {"bins", "reference_group", "pairs_per_group", "folds", "fold_index"}, "metrics");
    read(m, "bins", cfg.metrics.bins);
    read(m, "reference_group", cfg.metrics.reference_group);
    read(m, "pairs_per_group", cfg.metrics.pairs_per_group);
    read(m, "folds", cfg.metrics.folds);
    read(m, "fold_index", cfg.metrics.fold_index);
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) {
    ExperimentConfig cfg;
    resolve_seed(cfg);
    return cfg;
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse_config(Json::parse(in));
}

Json to_json(const ExperimentConfig& cfg) {
  Json j;
  j["seed"] = cfg.seed;
  j["label_mode"] = cfg.label_mode;
  j["synth"] = {{"nd", cfg.synth.nd},
                {"subjects_per_group", cfg.synth.subjects_per_group},
                {"images_per_subject", cfg.synth.images_per_subject},
                {"group_signature_strength", cfg.synth.group_signature_strength},
                {"identity_signature_strength", cfg.synth.identity_signature_strength},
                {"noise_std", cfg.synth.noise_std},
                {"pose_jitter", cfg.synth.pose_jitter},
                {"identity_strength_scale", cfg.synth.identity_strength_scale},
                {"height", cfg.synth.height},
                {"width", cfg.synth.width},
                {"seed", cfg.synth.seed}};
  j["network"] = {{"preset", cfg.network.preset},
                  {"widths", cfg.network.widths},
                  {"blocks_per_unit", cfg.network.blocks_per_unit},
                  {"embedding_dim", cfg.network.embedding_dim},
                  {"nd", cfg.network.nd},
                  {"placement", layers::to_string(cfg.network.placement)}};
  j["train"] = {{"batch_size", cfg.train.batch_size},
                {"images_per_subject", cfg.train.images_per_subject},
                {"lr", cfg.train.lr},
                {"decay_epochs", cfg.train.decay_epochs},
                {"lr_floor", cfg.train.lr_floor},
                {"momentum", cfg.train.momentum},
                {"epochs", cfg.train.epochs},
                {"weight_decay", cfg.train.weight_decay},
                {"variant", cfg.train.variant}};
  j["margin"] = {{"scale", cfg.train.margin.scale},
                 {"margin", cfg.train.margin.margin},
                 {"lambda", cfg.train.margin.lambda}};
  j["automation"] = {{"tau", cfg.train.automation.tau},
                     {"check_period", cfg.train.automation.check_period},
                     {"stability_window", cfg.train.automation.stability_window},
                     {"stability_eps", cfg.train.automation.stability_eps},
                     {"allow_resplit", cfg.train.automation.allow_resplit}};
  j["metrics"] = {{"bins", cfg.metrics.bins},
                  {"reference_group", cfg.metrics.reference_group},
                  {"pairs_per_group", cfg.metrics.pairs_per_group},
                  {"folds", cfg.metrics.folds},
                  {"fold_index", cfg.metrics.fold_index}};
  return j;
}

void resolve_seed(ExperimentConfig& cfg) {
  if (const char* env = std::getenv("GACLAB_SEED")) {
    cfg.seed = std::strtoull(env, nullptr, 10);
  }
  cfg.synth.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
}

}  // namespace gaclab::config
