#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gaclab/tensor.hpp"

namespace gaclab::data {

struct Sample {
  Tensor image;  // 1 x H x W, values in [0, 1]
  int identity = -1;
  int group = -1;
};

struct SynthConfig {
  int nd = 4;
  int subjects_per_group = 16;
  int images_per_subject = 8;
  double group_signature_strength = 0.30;
  double identity_signature_strength = 0.22;
  double noise_std = 0.02;
  double pose_jitter = 0.35;  // phase jitter amplitude (radians)
  // Per-group multiplier on the identity signature; groups beyond the list
  // use 1.0. Lets one group carry a weaker identity signal.
  std::vector<double> identity_strength_scale;
  int height = 32;
  int width = 32;
  std::uint64_t seed = 1;
};

class Dataset {
 public:
  std::vector<Sample> samples;
  SynthConfig cfg;
  int nd = 0;

  std::size_t size() const { return samples.size(); }

  // Subject identities present in a group, ascending.
  std::vector<int> subjects_in_group(int group) const;
  // Sample indices of one subject, in manifest order.
  std::vector<int> images_of(int identity) const;
  std::map<int, int> group_sizes() const;  // group -> subject count
};

// Deterministic synthetic grouped identity dataset: a per-group spatial
// signature (group-specific frequency band) plus a per-identity random-phase
// pattern, pose jitter, and Gaussian pixel noise.
Dataset generate_synthetic(const SynthConfig& cfg);

// Keeps floor(ratios[g]/max(ratios) * subjects_g) randomly chosen subjects in
// each reduced group; groups at the max ratio are untouched.
Dataset ratio_subsample(const Dataset& ds, const std::vector<double>& ratios, std::uint64_t seed);

// Subject-disjoint k-fold partition, per group, near-equal sizes.
struct FoldSpec {
  std::vector<int> subjects;  // identities in this fold
};
std::vector<FoldSpec> make_folds(const Dataset& ds, int k, std::uint64_t seed);

std::vector<int> fold_sample_indices(const Dataset& ds, const FoldSpec& fold);
std::vector<int> complement_sample_indices(const Dataset& ds, const FoldSpec& fold);
Dataset subset(const Dataset& ds, const std::vector<int>& sample_indices);

struct Pair {
  int index_a = 0;
  int index_b = 0;
  bool same_identity = false;
  int group = -1;
};
using PairList = std::vector<Pair>;

// Within-group genuine/impostor verification pairs over the given sample
// indices (defaults to the whole dataset when empty).
PairList generate_pairs(const Dataset& ds, const std::vector<int>& sample_indices, int pairs_per_group,
                        std::uint64_t seed);

// --- on-disk format: manifest.json + images.bin (little-endian f64) ---
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

void save_pairs(const PairList& pairs, const std::string& path);
PairList load_pairs(const std::string& path);

}  // namespace gaclab::data
