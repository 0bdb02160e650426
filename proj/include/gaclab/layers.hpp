#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gaclab/autodiff.hpp"
#include "gaclab/tensor.hpp"

namespace gaclab::layers {

using autodiff::Var;

enum class LayerKind { Standard, AdaptiveConv, AdaptiveAttention, SpatialAttention };
enum class Placement { None, Manual, Automatic };

std::string to_string(Placement p);
Placement placement_from_string(const std::string& s);

// Trainable per-group kernel masks for one convolution layer. Initialized to
// all-ones so the layer starts exactly equal to its shared baseline.
struct KernelMaskBank {
  Param masks;  // nd x ic x kh x kw
  int nd = 0;

  KernelMaskBank() = default;
  KernelMaskBank(std::string name, int nd_, int ic, int kh, int kw);
};

// Trainable per-group channel attention rows. Initialized to zeros: every
// channel starts with a sigmoid gain of 0.5 for every group.
struct AttentionBank {
  Param maps;  // nd x kc
  int nd = 0;

  AttentionBank() = default;
  AttentionBank(std::string name, int nd_, int kc);
};

struct LayerState {
  LayerKind kind = LayerKind::Standard;
  bool shared_flag = false;
  std::vector<std::pair<int, double>> similarity_history;  // (step, mean similarity)
};

struct NetworkConfig {
  std::string preset = "medium";  // small | medium | large
  std::vector<int> widths;        // per residual unit; filled from preset when empty
  int blocks_per_unit = 2;
  int embedding_dim = 64;
  int nd = 4;
  Placement placement = Placement::Automatic;
  // Ablation toggles; kernel masks and channel attention additionally require
  // placement != None.
  bool kernel_masks = true;
  bool channel_attention = true;
  bool spatial_attention = false;
  int image_channels = 1;
  int image_size = 32;
  std::uint64_t init_seed = 77;

  void resolve_preset();  // fills widths/embedding_dim defaults for the preset
};

// --- adaptive layer operations (Eq.-level building blocks) ---

// Per-group effective filter: every output channel of `base` is multiplied
// elementwise by the group's mask (mask shared across output channels).
Var make_adaptive_kernel(const Var& base, const Var& bank_masks, int group, int nd);

// conv2d with the group's effective kernel, followed by ReLU.
Var adaptive_conv_forward(const Var& input, const Var& base, const Var& bank_masks, int group, int nd, int stride,
                          int pad);

// Scales channel c of the feature map by Sigmoid(maps[group][c]).
Var adaptive_attention_forward(const Var& feature, const Var& bank_maps, int group, int nd);

// Scales every channel by the sigmoid of a learned 1x1 convolution of the
// feature map (a single spatial gate shared across channels).
Var spatial_attention_forward(const Var& feature, const Var& weights);

// --- network ---

struct ConvLayer {
  Param weight;  // kc x ic x kh x kw
  int stride = 1;
  int pad = 1;
  std::optional<KernelMaskBank> bank;
  LayerState state;
  int bank_id = -1;  // automation layer id when bank is present
  std::string name;
};

struct AttentionLayer {
  AttentionBank bank;
  LayerState state;
  int bank_id = -1;
  std::string name;
};

struct SpatialGate {
  Param weight;  // 1 x kc x 1 x 1
  std::string name;
};

struct ResidualBlock {
  ConvLayer conv1;
  ConvLayer conv2;
  std::optional<ConvLayer> projection;
  int stride = 1;
};

struct ResidualUnit {
  std::vector<ResidualBlock> blocks;
  std::optional<AttentionLayer> attention;
  std::optional<SpatialGate> spatial;
};

// A bank the automation module can inspect and merge: either a conv layer's
// kernel masks or an attention layer's maps, viewed as nd rows.
struct BankRef {
  int id = -1;
  LayerKind kind = LayerKind::AdaptiveConv;
  Param* rows = nullptr;
  int nd = 0;
  LayerState* state = nullptr;
  std::string name;
};

// Caches one graph node per Param so a whole batch shares leaves.
class ParamVars {
 public:
  explicit ParamVars(bool track) : track_(track) {}
  Var get(Param& p);

 private:
  bool track_;
  std::unordered_map<Param*, Var> cache_;
};

class Network {
 public:
  explicit Network(NetworkConfig cfg);

  // Embedding head output (un-normalized). `group` selects the adaptive
  // parameters; it is ignored by layers without banks.
  Var embed(const Tensor& image, int group, ParamVars& vars) const;
  Tensor embed_value(const Tensor& image, int group) const;

  std::vector<Param*> parameters();
  std::vector<Param*> weight_params();  // subject to weight decay
  std::vector<BankRef> banks();

  const NetworkConfig& config() const { return cfg_; }
  int embedding_dim() const { return cfg_.embedding_dim; }
  bool automation_enabled() const { return cfg_.placement == Placement::Automatic; }

  nlohmann::ordered_json arch_json() const;
  static NetworkConfig config_from_arch(const nlohmann::ordered_json& arch);
  void set_shared_flags_from_arch(const nlohmann::ordered_json& arch);

  ConvLayer stem;
  std::vector<ResidualUnit> units;
  Param head_weight;  // embedding_dim x flattened
  Param head_bias;

 private:
  Var conv_forward(const ConvLayer& layer, const Var& x, int group, ParamVars& vars, bool activate) const;

  NetworkConfig cfg_;
  mutable std::vector<BankRef> bank_refs_;  // rebuilt on demand
};

// Total network parameter accounting, including the group-adaptive formulas.
struct ParamCountReport {
  std::int64_t total = 0;
  std::int64_t baseline_equivalent = 0;
  std::int64_t adaptive_extra = 0;
  std::int64_t acnn_extra = 0;                 // for the given side-input dim
  std::vector<double> acnn_ratio_per_layer;    // id*kc/nd per adaptive conv layer
};

ParamCountReport param_count(Network& net, int side_input_dim = 4);

}  // namespace gaclab::layers
