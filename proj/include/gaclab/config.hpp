#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "gaclab/automation.hpp"
#include "gaclab/data.hpp"
#include "gaclab/demog.hpp"
#include "gaclab/layers.hpp"
#include "gaclab/losses.hpp"
#include "gaclab/trainer.hpp"

namespace gaclab::config {

using Json = nlohmann::ordered_json;

// Whole-experiment configuration. Every field has a default; parsing is
// schema-checked and unknown keys are rejected. The GACLAB_SEED environment
// variable overrides the seed.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string label_mode = "ground_truth";
  data::SynthConfig synth;
  layers::NetworkConfig network;
  trainer::TrainConfig train;
  struct Metrics {
    int bins = 64;
    int reference_group = 0;
    int pairs_per_group = 64;
    int folds = 0;       // 0: no fold split
    int fold_index = 0;
  } metrics;
};

ExperimentConfig default_config();
ExperimentConfig parse_config(const Json& j);
ExperimentConfig load_config(const std::string& path);  // empty path -> defaults
Json to_json(const ExperimentConfig& cfg);

// Applies the seed to the nested configs and honors GACLAB_SEED.
void resolve_seed(ExperimentConfig& cfg);

}  // namespace gaclab::config
