#pragma once

#include <map>
#include <string>
#include <vector>

#include <cstdint>
#include <nlohmann/json.hpp>

#include "gaclab/data.hpp"
#include "gaclab/losses.hpp"

namespace gaclab::metrics {

// Per-group verification accuracy: cosine scores thresholded at the best
// midpoint of the sorted score list (exact optimum for a finite set).
// Groups with no pairs are omitted (with a note in `warnings`).
struct VerificationResult {
  std::map<int, double> accuracy_by_group;
  std::map<int, double> threshold_by_group;
  std::vector<std::string> warnings;
};
VerificationResult verification_accuracy(const data::PairList& pairs, const losses::EmbeddingBatch& embeddings);

// Population standard deviation of per-group accuracies plus their mean.
struct Biasness {
  double std_dev = 0.0;
  double average = 0.0;
};
Biasness biasness(const std::vector<double>& accuracies);

// Per subject: min distance to any other subject's image in the same group
// over max distance between the subject's own images. Subjects with
// coincident images are excluded.
struct RatioDistribution {
  std::map<int, std::vector<double>> ratios_by_group;
  std::map<int, double> mean_by_group;
  std::map<int, double> stad_by_group;  // population std
  std::vector<std::string> warnings;
};
RatioDistribution ratio_distribution(const losses::EmbeddingBatch& embeddings);

// KL(group || reference) in nats over smoothed histograms with `bins`
// uniform bins spanning the pooled range of all listed values.
std::map<int, double> relative_entropy(const std::map<int, std::vector<double>>& samples_by_group,
                                       int reference_group, int bins = 64);

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Histogram over [-1, 1] of Pearson correlations between one embedding per
// subject (the subject's first image), every cross-subject pair.
struct CorrelationHistogram {
  std::vector<std::int64_t> counts;
  double lo = -1.0, hi = 1.0;
  std::int64_t pair_count = 0;
};
CorrelationHistogram correlation_histogram(const losses::EmbeddingBatch& embeddings, int group, int max_subjects,
                                           int bins);

struct FairnessReport {
  std::map<int, double> accuracy_by_group;
  double average_accuracy = 0.0;
  double biasness = 0.0;
  std::map<int, double> ratio_mean_by_group;
  std::map<int, double> ratio_stad_by_group;
  std::map<int, double> relative_entropy_by_group;
  int reference_group = 0;
  // run metadata
  std::string run_id;
  double tau = 0.0;
  double lambda = 0.0;
  std::string label_mode;
  std::vector<std::string> warnings;
};

FairnessReport fairness_report(const data::PairList& pairs, const losses::EmbeddingBatch& embeddings,
                               int reference_group, int bins = 64);

nlohmann::ordered_json to_json(const FairnessReport& report);
void save_report(const FairnessReport& report, const std::string& json_path, const std::string& csv_path);

}  // namespace gaclab::metrics
