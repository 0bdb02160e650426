#include "gaclab/layers.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "gaclab/rng.hpp"

namespace gaclab::layers {

namespace ad = autodiff;

std::string to_string(Placement p) {
  switch (p) {
    case Placement::None: return "none";
    case Placement::Manual: return "manual";
    case Placement::Automatic: return "automatic";
  }
  return "none";
}

Placement placement_from_string(const std::string& s) {
  if (s == "none") return Placement::None;
  if (s == "manual") return Placement::Manual;
  if (s == "automatic") return Placement::Automatic;
  throw std::invalid_argument("unknown placement mode '" + s + "' (expected none|manual|automatic)");
}

KernelMaskBank::KernelMaskBank(std::string name, int nd_, int ic, int kh, int kw) : nd(nd_) {
  if (nd < 1) throw std::invalid_argument("KernelMaskBank: nd must be >= 1");
  masks = Param(std::move(name), Tensor::ones({nd, ic, kh, kw}));
}

AttentionBank::AttentionBank(std::string name, int nd_, int kc) : nd(nd_) {
  if (nd < 1) throw std::invalid_argument("AttentionBank: nd must be >= 1");
  maps = Param(std::move(name), Tensor::zeros({nd, kc}));
}

void NetworkConfig::resolve_preset() {
  if (widths.empty()) {
    if (preset == "small") {
      widths = {8, 16, 32};
      if (embedding_dim == 64) embedding_dim = 32;
    } else if (preset == "medium") {
      widths = {16, 32, 64, 128};
    } else if (preset == "large") {
      widths = {16, 32, 64, 128, 256};
    } else {
      throw std::invalid_argument("unknown network preset '" + preset + "' (expected small|medium|large)");
    }
  }
  if (embedding_dim <= 0) throw std::invalid_argument("embedding_dim must be positive");
  if (nd < 1) throw std::invalid_argument("nd must be >= 1");
  if (blocks_per_unit < 1) throw std::invalid_argument("blocks_per_unit must be >= 1");
}

Var make_adaptive_kernel(const Var& base, const Var& bank_masks, int group, int nd) {
  if (group < 0 || group >= nd) {
    throw std::invalid_argument("make_adaptive_kernel: group " + std::to_string(group) + " out of range [0," +
                                std::to_string(nd) + ")");
  }
  return ad::mask_kernel(base, ad::row(bank_masks, group));
}

Var adaptive_conv_forward(const Var& input, const Var& base, const Var& bank_masks, int group, int nd, int stride,
                          int pad) {
  return ad::relu(ad::conv2d(input, make_adaptive_kernel(base, bank_masks, group, nd), stride, pad));
}

Var adaptive_attention_forward(const Var& feature, const Var& bank_maps, int group, int nd) {
  if (group < 0 || group >= nd) {
    throw std::invalid_argument("adaptive_attention_forward: group " + std::to_string(group) + " out of range [0," +
                                std::to_string(nd) + ")");
  }
  if (feature->value.rank() != 3) throw std::invalid_argument("adaptive_attention_forward: feature must be kc x oh x ow");
  const int kc = feature->value.dim(0);
  if (bank_maps->value.rank() != 2 || bank_maps->value.dim(1) != kc) {
    throw std::invalid_argument("adaptive_attention_forward: attention maps " + bank_maps->value.shape_str() +
                                " do not match " + std::to_string(kc) + " channels");
  }
  return ad::channel_scale(feature, ad::sigmoid(ad::row(bank_maps, group)));
}

Var spatial_attention_forward(const Var& feature, const Var& weights) {
  if (feature->value.rank() != 3) throw std::invalid_argument("spatial_attention_forward: feature must be kc x oh x ow");
  if (weights->value.rank() != 4 || weights->value.dim(0) != 1 || weights->value.dim(2) != 1 ||
      weights->value.dim(3) != 1 || weights->value.dim(1) != feature->value.dim(0)) {
    throw std::invalid_argument("spatial_attention_forward: weights must be 1 x kc x 1 x 1 with kc = " +
                                std::to_string(feature->value.dim(0)));
  }
  Var gate = ad::sigmoid(ad::conv2d(feature, weights, 1, 0));
  return ad::spatial_scale(feature, gate);
}

Var ParamVars::get(Param& p) {
  auto it = cache_.find(&p);
  if (it != cache_.end()) return it->second;
  Var v = track_ ? ad::leaf(p) : ad::constant(p.value);
  cache_.emplace(&p, v);
  return v;
}

namespace {

Tensor he_init(const std::vector<int>& shape, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.resolve_preset();
  const bool masks_on = cfg_.placement != Placement::None && cfg_.kernel_masks;
  const bool attn_on = cfg_.placement != Placement::None && cfg_.channel_attention;
  const bool masks_everywhere = masks_on && cfg_.placement == Placement::Automatic;

  std::mt19937_64 rng = make_rng(cfg_.init_seed, 0x1A1712);
  int bank_seq = 0;

  auto make_conv = [&](const std::string& name, int kc, int ic, int k, int stride, int pad, bool adaptive) {
    ConvLayer layer;
    layer.name = name;
    layer.weight = Param(name + ".weight", he_init({kc, ic, k, k}, ic * k * k, rng));
    layer.stride = stride;
    layer.pad = pad;
    if (adaptive) {
      layer.bank = KernelMaskBank(name + ".masks", cfg_.nd, ic, k, k);
      layer.state.kind = LayerKind::AdaptiveConv;
      layer.bank_id = bank_seq++;
    }
    return layer;
  };

  stem = make_conv("stem", cfg_.widths[0], cfg_.image_channels, 3, 1, 1, masks_everywhere);

  int in_ch = cfg_.widths[0];
  for (std::size_t u = 0; u < cfg_.widths.size(); ++u) {
    ResidualUnit unit;
    const int out_ch = cfg_.widths[u];
    for (int b = 0; b < cfg_.blocks_per_unit; ++b) {
      const std::string base = "unit" + std::to_string(u) + ".block" + std::to_string(b);
      ResidualBlock block;
      block.stride = (b == 0 && u > 0) ? 2 : 1;
      // Manual placement: both convolutions of the first block in each unit.
      const bool adaptive = masks_on && (masks_everywhere || b == 0);
      block.conv1 = make_conv(base + ".conv1", out_ch, in_ch, 3, block.stride, 1, adaptive);
      block.conv2 = make_conv(base + ".conv2", out_ch, out_ch, 3, 1, 1, adaptive);
      if (block.stride != 1 || in_ch != out_ch) {
        block.projection = make_conv(base + ".proj", out_ch, in_ch, 1, block.stride, 0, masks_everywhere);
      }
      unit.blocks.push_back(std::move(block));
      in_ch = out_ch;
    }
    if (attn_on) {
      AttentionLayer attn;
      attn.name = "unit" + std::to_string(u) + ".attn";
      attn.bank = AttentionBank(attn.name + ".maps", cfg_.nd, out_ch);
      attn.state.kind = LayerKind::AdaptiveAttention;
      attn.bank_id = bank_seq++;
      unit.attention = std::move(attn);
    }
    if (cfg_.spatial_attention) {
      SpatialGate gate;
      gate.name = "unit" + std::to_string(u) + ".spatial";
      gate.weight = Param(gate.name + ".weight", Tensor::zeros({1, out_ch, 1, 1}));
      unit.spatial = std::move(gate);
    }
    units.push_back(std::move(unit));
  }

  const int spatial = cfg_.image_size >> (static_cast<int>(cfg_.widths.size()) - 1);
  if (spatial < 1) throw std::invalid_argument("network preset downsamples below 1x1 for this image size");
  const int flat = in_ch * spatial * spatial;
  head_weight = Param("head.weight", he_init({cfg_.embedding_dim, flat}, flat, rng));
  head_bias = Param("head.bias", Tensor::zeros({cfg_.embedding_dim}));
}

Var Network::conv_forward(const ConvLayer& layer, const Var& x, int group, ParamVars& vars, bool activate) const {
  Var w = vars.get(const_cast<Param&>(layer.weight));
  if (layer.bank) {
    Var masks = vars.get(const_cast<Param&>(layer.bank->masks));
    w = make_adaptive_kernel(w, masks, group, layer.bank->nd);
  }
  Var out = ad::conv2d(x, w, layer.stride, layer.pad);
  return activate ? ad::relu(out) : out;
}

Var Network::embed(const Tensor& image, int group, ParamVars& vars) const {
  if (group < 0 || group >= cfg_.nd) {
    throw std::invalid_argument("embed: group " + std::to_string(group) + " out of range [0," +
                                std::to_string(cfg_.nd) + ")");
  }
  Var x = ad::constant(image);
  x = conv_forward(stem, x, group, vars, true);

  for (const ResidualUnit& unit : units) {
    for (const ResidualBlock& block : unit.blocks) {
      Var h = conv_forward(block.conv1, x, group, vars, true);
      h = conv_forward(block.conv2, h, group, vars, false);
      Var shortcut = block.projection ? conv_forward(*block.projection, x, group, vars, false) : x;
      x = ad::relu(ad::add(h, shortcut));
    }
    if (unit.attention) {
      Var maps = vars.get(const_cast<Param&>(unit.attention->bank.maps));
      x = adaptive_attention_forward(x, maps, group, unit.attention->bank.nd);
    }
    if (unit.spatial) {
      Var w = vars.get(const_cast<Param&>(unit.spatial->weight));
      x = spatial_attention_forward(x, w);
    }
  }

  Var flat = ad::flatten(x);
  return ad::linear(flat, vars.get(const_cast<Param&>(head_weight)), vars.get(const_cast<Param&>(head_bias)));
}

Tensor Network::embed_value(const Tensor& image, int group) const {
  ParamVars vars(false);
  return embed(image, group, vars)->value;
}

std::vector<Param*> Network::parameters() {
  std::vector<Param*> out;
  auto add_conv = [&](ConvLayer& c) {
    out.push_back(&c.weight);
    if (c.bank) out.push_back(&c.bank->masks);
  };
  add_conv(stem);
  for (ResidualUnit& unit : units) {
    for (ResidualBlock& block : unit.blocks) {
      add_conv(block.conv1);
      add_conv(block.conv2);
      if (block.projection) add_conv(*block.projection);
    }
    if (unit.attention) out.push_back(&unit.attention->bank.maps);
    if (unit.spatial) out.push_back(&unit.spatial->weight);
  }
  out.push_back(&head_weight);
  out.push_back(&head_bias);
  return out;
}

std::vector<Param*> Network::weight_params() {
  std::vector<Param*> out;
  auto add_conv = [&](ConvLayer& c) { out.push_back(&c.weight); };
  add_conv(stem);
  for (ResidualUnit& unit : units) {
    for (ResidualBlock& block : unit.blocks) {
      add_conv(block.conv1);
      add_conv(block.conv2);
      if (block.projection) add_conv(*block.projection);
    }
  }
  out.push_back(&head_weight);
  return out;
}

std::vector<BankRef> Network::banks() {
  std::vector<BankRef> refs;
  auto add_conv = [&](ConvLayer& c) {
    if (!c.bank) return;
    refs.push_back({c.bank_id, LayerKind::AdaptiveConv, &c.bank->masks, c.bank->nd, &c.state, c.name});
  };
  add_conv(stem);
  for (ResidualUnit& unit : units) {
    for (ResidualBlock& block : unit.blocks) {
      add_conv(block.conv1);
      add_conv(block.conv2);
      if (block.projection) add_conv(*block.projection);
    }
    if (unit.attention) {
      refs.push_back({unit.attention->bank_id, LayerKind::AdaptiveAttention, &unit.attention->bank.maps,
                      unit.attention->bank.nd, &unit.attention->state, unit.attention->name});
    }
  }
  return refs;
}

nlohmann::ordered_json Network::arch_json() const {
  nlohmann::ordered_json arch;
  arch["preset"] = cfg_.preset;
  arch["widths"] = cfg_.widths;
  arch["blocks_per_unit"] = cfg_.blocks_per_unit;
  arch["embedding_dim"] = cfg_.embedding_dim;
  arch["nd"] = cfg_.nd;
  arch["placement"] = to_string(cfg_.placement);
  arch["kernel_masks"] = cfg_.kernel_masks;
  arch["channel_attention"] = cfg_.channel_attention;
  arch["spatial_attention"] = cfg_.spatial_attention;
  arch["image_channels"] = cfg_.image_channels;
  arch["image_size"] = cfg_.image_size;

  nlohmann::ordered_json layer_flags = nlohmann::ordered_json::array();
  for (const BankRef& b : const_cast<Network*>(this)->banks()) {
    layer_flags.push_back({{"id", b.id},
                           {"name", b.name},
                           {"kind", b.kind == LayerKind::AdaptiveConv ? "conv" : "attention"},
                           {"shared", b.state->shared_flag}});
  }
  arch["layers"] = layer_flags;
  return arch;
}

NetworkConfig Network::config_from_arch(const nlohmann::ordered_json& arch) {
  NetworkConfig cfg;
  cfg.preset = arch.at("preset").get<std::string>();
  cfg.widths = arch.at("widths").get<std::vector<int>>();
  cfg.blocks_per_unit = arch.at("blocks_per_unit").get<int>();
  cfg.embedding_dim = arch.at("embedding_dim").get<int>();
  cfg.nd = arch.at("nd").get<int>();
  cfg.placement = placement_from_string(arch.at("placement").get<std::string>());
  cfg.kernel_masks = arch.at("kernel_masks").get<bool>();
  cfg.channel_attention = arch.at("channel_attention").get<bool>();
  cfg.spatial_attention = arch.at("spatial_attention").get<bool>();
  cfg.image_channels = arch.at("image_channels").get<int>();
  cfg.image_size = arch.at("image_size").get<int>();
  return cfg;
}

void Network::set_shared_flags_from_arch(const nlohmann::ordered_json& arch) {
  if (!arch.contains("layers")) return;
  std::vector<BankRef> refs = banks();
  for (const auto& entry : arch.at("layers")) {
    const int id = entry.at("id").get<int>();
    for (BankRef& b : refs) {
      if (b.id == id) b.state->shared_flag = entry.at("shared").get<bool>();
    }
  }
}

ParamCountReport param_count(Network& net, int side_input_dim) {
  ParamCountReport report;
  for (Param* p : net.parameters()) report.total += static_cast<std::int64_t>(p->value.size());

  for (const BankRef& b : net.banks()) {
    const auto& shape = b.rows->value.shape();
    std::int64_t rows = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) rows *= shape[i];
    report.adaptive_extra += static_cast<std::int64_t>(b.nd) * rows;
  }
  report.baseline_equivalent = report.total - report.adaptive_extra;

  auto count_conv = [&](const ConvLayer& c) {
    if (!c.bank) return;
    const auto& ws = c.weight.value.shape();  // kc x ic x kh x kw
    report.acnn_extra += std::int64_t(side_input_dim) * ws[0] * ws[1] * ws[2] * ws[3];
    report.acnn_ratio_per_layer.push_back(double(side_input_dim) * ws[0] / double(c.bank->nd));
  };
  count_conv(net.stem);
  for (const ResidualUnit& unit : net.units) {
    for (const ResidualBlock& block : unit.blocks) {
      count_conv(block.conv1);
      count_conv(block.conv2);
      if (block.projection) count_conv(*block.projection);
    }
  }
  return report;
}

}  // namespace gaclab::layers
