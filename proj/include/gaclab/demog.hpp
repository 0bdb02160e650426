#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gaclab/data.hpp"
#include "gaclab/tensor.hpp"

// Demographic label provenance: ground truth from the manifest, estimates
// from a trained classifier, or seeded random assignment.
namespace gaclab::demog {

// Small CNN (two stride-2 conv blocks + linear head) predicting the group of
// an image.
class GroupClassifier {
 public:
  GroupClassifier() = default;
  GroupClassifier(int nd, int image_size, std::uint64_t init_seed);

  int predict(const Tensor& image) const;
  std::vector<double> logits(const Tensor& image) const;

  std::vector<Param*> parameters();
  void save(const std::string& dir) const;
  static GroupClassifier load(const std::string& dir);

  int nd() const { return nd_; }

  Param conv1, conv2, head_w, head_b;

 private:
  int nd_ = 0;
  int image_size_ = 0;
};

struct ClassifierReport {
  double mean_accuracy = 0.0;
  std::map<int, double> per_group_accuracy;  // held-out, by group
};

// Trains on an internal 80/20 subject-disjoint split and reports held-out
// accuracy per group. Rejects single-group datasets.
ClassifierReport train_group_classifier(GroupClassifier& clf, const data::Dataset& ds, int epochs, double lr,
                                        std::uint64_t seed);

enum class LabelMode { GroundTruth, Estimated, Random };

std::string to_string(LabelMode m);
LabelMode label_mode_from_string(const std::string& s);

class LabelProvider {
 public:
  static LabelProvider ground_truth();
  static LabelProvider random(std::uint64_t seed, int nd);
  static LabelProvider estimated(std::shared_ptr<const GroupClassifier> classifier);

  // Group label for one sample of the dataset; Random mode is a pure
  // function of (seed, sample index).
  int label(const data::Dataset& ds, int sample_index) const;
  std::vector<int> labels(const data::Dataset& ds) const;

  LabelMode mode() const { return mode_; }
  int nd() const { return nd_; }

 private:
  LabelMode mode_ = LabelMode::GroundTruth;
  std::uint64_t seed_ = 0;
  int nd_ = 0;
  std::shared_ptr<const GroupClassifier> classifier_;
};

}  // namespace gaclab::demog
