#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gaclab/automation.hpp"
#include "gaclab/data.hpp"
#include "gaclab/demog.hpp"
#include "gaclab/layers.hpp"
#include "gaclab/losses.hpp"

namespace gaclab::trainer {

// Ablation variants; each fixes the adaptive machinery of the run.
struct VariantSpec {
  std::string name;
  layers::Placement mask_placement = layers::Placement::None;
  bool channel_attention = false;
  bool spatial_attention = false;
  bool automation = false;
  bool force_lambda_zero = false;
};

VariantSpec variant_spec(const std::string& name);
std::vector<std::string> variant_names();

struct TrainConfig {
  int batch_size = 64;
  int images_per_subject = 2;  // per sampled subject per batch, >= 2
  double lr = 0.1;
  std::vector<int> decay_epochs = {10, 16};
  double lr_floor = 1e-4;
  double momentum = 0.9;
  int epochs = 20;
  double weight_decay = 1e-4;
  losses::MarginConfig margin;
  automation::AutomationConfig automation;
  std::string variant = "gac";
  std::uint64_t seed = 1;
};

struct RunArtifacts {
  std::string out_dir;
  std::string checkpoint_dir;
  std::string train_log;
  std::string automation_trace;
  std::string manifest;
  int merged_layer_count = 0;
  double final_total_loss = 0.0;
};

double lr_at_epoch(const TrainConfig& cfg, int epoch);

// Builds the network for (config, variant), runs the training loop, and
// writes checkpoint + logs into out_dir. Fully deterministic given the seed.
RunArtifacts train_run(const TrainConfig& cfg, layers::NetworkConfig net_cfg, const data::Dataset& dataset,
                       const demog::LabelProvider& provider, const std::string& out_dir);

// L2-normalized embeddings for the given samples (all samples when empty),
// with group routing taken from the provider.
losses::EmbeddingBatch extract_embeddings(layers::Network& net, const data::Dataset& dataset,
                                          const demog::LabelProvider& provider,
                                          const std::vector<int>& sample_indices = {});

struct LoadedRun {
  layers::Network net;
  Param classifier;  // cosface class rows, C x d
  std::vector<int> class_identities;
};
LoadedRun load_run(const std::string& checkpoint_dir);

losses::EmbeddingBatch extract_embeddings(const std::string& checkpoint_dir, const data::Dataset& dataset,
                                          const demog::LabelProvider& provider,
                                          const std::vector<int>& sample_indices = {});

using layers::param_count;
using layers::ParamCountReport;

}  // namespace gaclab::trainer
