#include "gaclab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <stdexcept>

#include "gaclab/autodiff.hpp"
#include "gaclab/checkpoint.hpp"
#include "gaclab/io_util.hpp"
#include "gaclab/rng.hpp"

namespace gaclab::trainer {

namespace ad = autodiff;
namespace fs = std::filesystem;

VariantSpec variant_spec(const std::string& name) {
  using layers::Placement;
  if (name == "baseline") return {name, Placement::None, false, false, false, true};
  if (name == "gac") return {name, Placement::Automatic, true, false, true, false};
  if (name == "gac-channel") return {name, Placement::None, true, false, false, false};
  if (name == "gac-kernel") return {name, Placement::Manual, false, false, false, false};
  if (name == "gac-spatial") return {name, Placement::None, false, true, false, false};
  if (name == "gac-cs") return {name, Placement::None, true, true, false, false};
  if (name == "gac-csk") return {name, Placement::Manual, true, true, false, false};
  if (name == "al-manual") return {name, Placement::Manual, true, false, false, false};
  std::string valid;
  for (const std::string& v : variant_names()) valid += (valid.empty() ? "" : ", ") + v;
  throw std::invalid_argument("unknown variant '" + name + "' (valid: " + valid + ")");
}

std::vector<std::string> variant_names() {
  return {"baseline", "gac", "gac-channel", "gac-kernel", "gac-spatial", "gac-cs", "gac-csk", "al-manual"};
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  int drops = 0;
  for (int e : cfg.decay_epochs) {
    if (epoch >= e) ++drops;
  }
  return std::max(cfg.lr_floor, cfg.lr * std::pow(0.1, drops));
}

namespace {

struct SubjectImages {
  int identity;
  int group;
  std::vector<int> sample_indices;
};

// Draws S subjects x P images per group so the de-biasing statistics are
// always populated for every group present in the dataset.
struct BatchSampler {
  std::vector<std::vector<SubjectImages>> by_group;  // active groups only
  int per_subject;
  int subjects_per_group;

  BatchSampler(const data::Dataset& ds, const std::vector<int>& provided_groups, int batch_size, int per_subject_)
      : per_subject(per_subject_) {
    std::map<int, std::map<int, SubjectImages>> groups;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const data::Sample& s = ds.samples[i];
      const int g = provided_groups[i];
      auto& subj = groups[g][s.identity];
      subj.identity = s.identity;
      subj.group = g;
      subj.sample_indices.push_back(static_cast<int>(i));
    }
    for (auto& [g, subjects] : groups) {
      std::vector<SubjectImages> usable;
      for (auto& [id, subj] : subjects) {
        if (static_cast<int>(subj.sample_indices.size()) >= per_subject) usable.push_back(std::move(subj));
      }
      if (!usable.empty()) by_group.push_back(std::move(usable));
    }
    if (by_group.empty()) throw std::invalid_argument("train: no subject has enough images for the sampler");
    subjects_per_group =
        std::max(1, batch_size / (static_cast<int>(by_group.size()) * std::max(1, per_subject)));
  }

  // (sample index, identity, group) triples for one batch.
  std::vector<int> draw(std::mt19937_64& rng) const {
    std::vector<int> batch;
    for (const auto& subjects : by_group) {
      std::vector<int> order(subjects.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      std::shuffle(order.begin(), order.end(), rng);
      const int take = std::min<int>(subjects_per_group, static_cast<int>(subjects.size()));
      for (int s = 0; s < take; ++s) {
        const SubjectImages& subj = subjects[static_cast<std::size_t>(order[s])];
        std::vector<int> imgs = subj.sample_indices;
        std::shuffle(imgs.begin(), imgs.end(), rng);
        for (int i = 0; i < per_subject; ++i) batch.push_back(imgs[static_cast<std::size_t>(i)]);
      }
    }
    return batch;
  }
};

}  // namespace

RunArtifacts train_run(const TrainConfig& cfg, layers::NetworkConfig net_cfg, const data::Dataset& dataset,
                       const demog::LabelProvider& provider, const std::string& out_dir) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.images_per_subject < 2) throw std::invalid_argument("train: images_per_subject must be >= 2");
  if (provider.mode() != demog::LabelMode::GroundTruth && provider.nd() != net_cfg.nd) {
    throw std::invalid_argument("train: provider supplies " + std::to_string(provider.nd()) +
                                " groups but the network expects " + std::to_string(net_cfg.nd));
  }
  if (dataset.nd > net_cfg.nd) {
    throw std::invalid_argument("train: dataset has " + std::to_string(dataset.nd) +
                                " groups but the network expects " + std::to_string(net_cfg.nd));
  }

  const VariantSpec variant = variant_spec(cfg.variant);
  net_cfg.placement = variant.mask_placement;
  net_cfg.kernel_masks = variant.mask_placement != layers::Placement::None;
  net_cfg.channel_attention = variant.channel_attention;
  net_cfg.spatial_attention = variant.spatial_attention;
  // Channel attention rides on the adaptive placement; attention-only
  // variants use manual placement with masks disabled.
  if (variant.channel_attention && net_cfg.placement == layers::Placement::None) {
    net_cfg.placement = layers::Placement::Manual;
    net_cfg.kernel_masks = false;
  }
  net_cfg.init_seed = derive_seed(cfg.seed, 0x1217);

  layers::Network net(net_cfg);

  losses::MarginConfig margin = cfg.margin;
  if (variant.force_lambda_zero) margin.lambda = 0.0;

  const std::vector<int> provided = provider.labels(dataset);

  // Identity -> contiguous class index, ascending by identity.
  std::set<int> id_set;
  for (const data::Sample& s : dataset.samples) id_set.insert(s.identity);
  std::vector<int> class_identities(id_set.begin(), id_set.end());
  std::map<int, int> class_of;
  for (std::size_t c = 0; c < class_identities.size(); ++c) class_of[class_identities[c]] = static_cast<int>(c);

  std::mt19937_64 init_rng = make_rng(cfg.seed, 0xC1F0);
  std::normal_distribution<double> winit(0.0, 0.01);
  Param classifier("classifier.weight",
                   Tensor({static_cast<int>(class_identities.size()), net.embedding_dim()}));
  for (std::size_t i = 0; i < classifier.value.size(); ++i) classifier.value[i] = winit(init_rng);

  std::vector<Param*> params = net.parameters();
  params.push_back(&classifier);
  std::vector<Tensor> velocity;
  velocity.reserve(params.size());
  for (Param* p : params) velocity.push_back(Tensor::zeros(p->value.shape()));
  const std::set<const Param*> decayable = [&] {
    std::set<const Param*> s;
    for (Param* p : net.weight_params()) s.insert(p);
    s.insert(&classifier);
    return s;
  }();

  automation::AutomationConfig auto_cfg = cfg.automation;
  automation::Controller controller(net, auto_cfg);

  BatchSampler sampler(dataset, provided, cfg.batch_size, cfg.images_per_subject);
  const int steps_per_epoch =
      std::max(1, static_cast<int>(dataset.samples.size()) / std::max(1, cfg.batch_size));

  fs::create_directories(out_dir);
  const std::string log_path = (fs::path(out_dir) / "train_log.csv").string();
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("train: cannot write " + log_path);
  log << "step,lr,ce_loss,bias_loss";
  for (int g = 0; g < net_cfg.nd; ++g) log << ",dist_g" << g;
  log << '\n';

  bool retention_warned = false;
  double final_total = 0.0;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    for (int s = 0; s < steps_per_epoch; ++s) {
      ++step;
      std::mt19937_64 rng = make_rng(cfg.seed, 0xBA7C4, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(s));
      const std::vector<int> batch = sampler.draw(rng);

      for (Param* p : params) p->zero_grad();
      layers::ParamVars vars(true);
      ad::Var clf_var = vars.get(classifier);

      std::vector<ad::Var> embeddings;
      std::vector<int> class_labels, identities, groups;
      embeddings.reserve(batch.size());
      for (int idx : batch) {
        const data::Sample& sample = dataset.samples[static_cast<std::size_t>(idx)];
        const int g = provided[static_cast<std::size_t>(idx)];
        embeddings.push_back(net.embed(sample.image, g, vars));
        class_labels.push_back(class_of.at(sample.identity));
        identities.push_back(sample.identity);
        groups.push_back(g);
      }

      losses::TotalLoss loss = losses::total_loss(embeddings, class_labels, identities, groups, clf_var, margin);
      if (loss.debias.degenerate && margin.lambda != 0.0 && !retention_warned) {
        std::cerr << "train: de-biasing term empty (fewer than two retained groups in batch)\n";
        retention_warned = true;
      }
      ad::backward(loss.total);
      final_total = loss.total->value[0];

      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param* p = params[pi];
        const double wd = decayable.count(p) ? cfg.weight_decay : 0.0;
        for (std::size_t k = 0; k < p->value.size(); ++k) {
          const double g = p->grad[k] + wd * p->value[k];
          velocity[pi][k] = cfg.momentum * velocity[pi][k] + g;
          p->value[k] -= lr * velocity[pi][k];
        }
      }

      log << step << ',' << io::format_double(lr) << ',' << io::format_double(loss.ce_value) << ','
          << io::format_double(loss.debias.loss->value[0]);
      for (int g = 0; g < net_cfg.nd; ++g) {
        auto it = loss.debias.dist_g.find(g);
        log << ',' << (it == loss.debias.dist_g.end() ? "nan" : io::format_double(it->second));
      }
      log << '\n';

      if (variant.automation && step % cfg.automation.check_period == 0) controller.check(step);
    }
  }

  for (Param* p : params) p->value.require_finite("trained parameter " + p->name);

  const std::string ckpt_dir = (fs::path(out_dir) / "checkpoint").string();
  checkpoint::Json arch = net.arch_json();
  arch["class_identities"] = class_identities;
  std::vector<const Param*> to_save;
  for (Param* p : net.parameters()) to_save.push_back(p);
  to_save.push_back(&classifier);
  checkpoint::save(ckpt_dir, to_save, arch);

  const std::string trace_path = (fs::path(out_dir) / "automation_trace.csv").string();
  controller.write_trace(trace_path);

  RunArtifacts artifacts;
  artifacts.out_dir = out_dir;
  artifacts.checkpoint_dir = ckpt_dir;
  artifacts.train_log = log_path;
  artifacts.automation_trace = trace_path;
  artifacts.merged_layer_count = controller.merged_layer_count();
  artifacts.final_total_loss = final_total;

  checkpoint::Json manifest;
  manifest["variant"] = cfg.variant;
  manifest["seed"] = cfg.seed;
  manifest["epochs"] = cfg.epochs;
  manifest["batch_size"] = cfg.batch_size;
  manifest["lambda"] = margin.lambda;
  manifest["tau"] = cfg.automation.tau;
  manifest["label_mode"] = demog::to_string(provider.mode());
  manifest["merged_layer_count"] = artifacts.merged_layer_count;
  manifest["checkpoint"] = "checkpoint";
  manifest["train_log"] = "train_log.csv";
  manifest["automation_trace"] = "automation_trace.csv";
  const std::string manifest_path = (fs::path(out_dir) / "run_manifest.json").string();
  std::ofstream mf(manifest_path);
  mf << manifest.dump(2) << '\n';
  artifacts.manifest = manifest_path;
  return artifacts;
}

losses::EmbeddingBatch extract_embeddings(layers::Network& net, const data::Dataset& dataset,
                                          const demog::LabelProvider& provider,
                                          const std::vector<int>& sample_indices) {
  std::vector<int> indices = sample_indices;
  if (indices.empty()) {
    indices.resize(dataset.samples.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
  }

  losses::EmbeddingBatch batch;
  batch.embeddings.resize(indices.size());
  batch.identities.resize(indices.size());
  batch.groups.resize(indices.size());

#pragma omp parallel for schedule(static)
  for (int i = 0; i < static_cast<int>(indices.size()); ++i) {
    const int idx = indices[static_cast<std::size_t>(i)];
    const data::Sample& s = dataset.samples[static_cast<std::size_t>(idx)];
    const int g = provider.label(dataset, idx);
    Tensor e = net.embed_value(s.image, g);
    double sq = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) sq += e[k] * e[k];
    const double norm = std::sqrt(sq);
    if (norm <= 1e-12) throw std::runtime_error("extract_embeddings: degenerate zero embedding");
    for (std::size_t k = 0; k < e.size(); ++k) e[k] /= norm;
    batch.embeddings[static_cast<std::size_t>(i)] = std::move(e);
    batch.identities[static_cast<std::size_t>(i)] = s.identity;
    batch.groups[static_cast<std::size_t>(i)] = s.group;
  }
  return batch;
}

LoadedRun load_run(const std::string& checkpoint_dir) {
  checkpoint::Loaded loaded = checkpoint::load(checkpoint_dir);
  layers::NetworkConfig cfg = layers::Network::config_from_arch(loaded.arch);
  LoadedRun run{layers::Network(cfg), Param{}, {}};
  for (Param* p : run.net.parameters()) {
    const Param* src = loaded.find(p->name);
    if (!src) throw std::runtime_error("load_run: checkpoint is missing tensor " + p->name);
    if (!src->value.same_shape(p->value)) {
      throw std::runtime_error("load_run: architecture mismatch for tensor " + p->name + " (" +
                               src->value.shape_str() + " vs " + p->value.shape_str() + ")");
    }
    p->value = src->value;
  }
  run.net.set_shared_flags_from_arch(loaded.arch);
  if (const Param* clf = loaded.find("classifier.weight")) {
    run.classifier = *clf;
  }
  if (loaded.arch.contains("class_identities")) {
    run.class_identities = loaded.arch["class_identities"].get<std::vector<int>>();
  }
  return run;
}

losses::EmbeddingBatch extract_embeddings(const std::string& checkpoint_dir, const data::Dataset& dataset,
                                          const demog::LabelProvider& provider,
                                          const std::vector<int>& sample_indices) {
  LoadedRun run = load_run(checkpoint_dir);
  return extract_embeddings(run.net, dataset, provider, sample_indices);
}

}  // namespace gaclab::trainer
