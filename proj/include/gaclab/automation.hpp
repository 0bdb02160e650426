#pragma once

#include <string>
#include <vector>

#include "gaclab/layers.hpp"
#include "gaclab/tensor.hpp"

// Decides per layer whether the per-group parameter rows stay adaptive or
// merge into their shared average, driven by the mean pairwise cosine
// similarity of the rows.
namespace gaclab::automation {

struct SimilarityReport {
  int layer_id = -1;
  std::vector<std::vector<double>> theta;  // nd x nd cosine matrix
  double mean_similarity = 0.0;
  int step = 0;
};

struct AutomationConfig {
  double tau = -0.2;
  int check_period = 100;
  int stability_window = 5;
  double stability_eps = 1e-3;
  bool allow_resplit = true;
};

enum class Decision { KeepAdaptive, Merge };

// Row-major flattening of each group's mask into a 1-d vector.
std::vector<std::vector<double>> flatten_masks(const Tensor& bank_rows);

// theta[i][j] = normalized dot of rows i and j. Rejects near-zero rows.
std::vector<std::vector<double>> pairwise_cosine(const std::vector<std::vector<double>>& vectors);

// Mean over unordered pairs i < j. Requires nd >= 2.
double mean_pairwise_similarity(const std::vector<std::vector<double>>& theta);

// Merge iff mean similarity exceeds tau.
Decision adapt_decision(const SimilarityReport& report, const AutomationConfig& config);

// Replaces every row with the row average (the merged shared parameters).
void merge_rows(Tensor& bank_rows);

// Per-training-run controller. Evaluates every bank of the network at one
// check step, applies merge decisions, and tracks the similarity trend until
// every layer is stable.
class Controller {
 public:
  Controller(layers::Network& net, AutomationConfig cfg);

  // Runs one evaluation pass (between optimizer steps). Returns the reports
  // for this check; merged banks are averaged in place.
  std::vector<SimilarityReport> check(int step);

  bool converged() const { return converged_; }
  int merged_layer_count() const;
  bool enabled() const { return enabled_; }

  // automation_trace.csv: step,layer_id,mean_similarity,shared_flag
  void write_trace(const std::string& path) const;

  struct TraceRow {
    int step;
    int layer_id;
    double mean_similarity;
    bool shared_flag;
  };
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  layers::Network* net_;
  AutomationConfig cfg_;
  bool enabled_ = false;
  bool converged_ = false;
  std::vector<int> stable_checks_;  // per bank
  std::vector<TraceRow> trace_;
};

}  // namespace gaclab::automation
