#pragma once

#include <map>
#include <vector>

#include "gaclab/autodiff.hpp"
#include "gaclab/tensor.hpp"

namespace gaclab::losses {

using autodiff::Var;

struct MarginConfig {
  double scale = 64.0;
  double margin = 0.5;
  double lambda = 0.1;
};

// Evaluated embeddings with their identity and group labels.
struct EmbeddingBatch {
  std::vector<Tensor> embeddings;
  std::vector<int> identities;
  std::vector<int> groups;

  std::size_t size() const { return embeddings.size(); }
};

// Additive cosine-margin logits: s * (cos(e, w_c) - m * [c == label]).
Var cosface_logits(const Var& embedding, const Var& class_weights, int label, const MarginConfig& cfg);

// --- value-level intra-class statistics (the audit path) ---

using SubjectKey = std::pair<int, int>;  // (identity, group)

// Mean embedding per subject; subjects with fewer than 2 images are skipped.
std::map<SubjectKey, Tensor> subject_centers(const EmbeddingBatch& batch);

// Mean squared Euclidean distance of a subject's embeddings to its center.
double subject_intra_distance(const std::vector<const Tensor*>& embeddings, const Tensor& center);

// Mean of the per-subject distances within one group.
double group_intra_distance(const std::vector<double>& subject_distances);

struct IntraStats {
  std::map<SubjectKey, double> dist_by_subject;
  std::map<int, double> dist_by_group;
  int retained_subjects = 0;
};
IntraStats intra_class_stats(const EmbeddingBatch& batch);

// Value-level de-biasing term matching the differentiable one below.
double debias_value(const IntraStats& stats, double lambda);

// --- differentiable batch losses ---

struct DebiasResult {
  Var loss;                        // scalar; zero when the term is degenerate
  std::map<int, double> dist_g;    // per-group mean intra-class distance
  int retained_subjects = 0;
  int retained_groups = 0;
  bool degenerate = false;         // fewer than two retained groups
};

// Embeddings are L2-normalized internally before the distance statistics.
DebiasResult debias_loss(const std::vector<Var>& embeddings, const std::vector<int>& identities,
                         const std::vector<int>& groups, double lambda);

struct TotalLoss {
  Var total;
  double ce_value = 0.0;
  DebiasResult debias;
};

// Mean cosface cross-entropy over the batch plus the de-biasing term.
TotalLoss total_loss(const std::vector<Var>& embeddings, const std::vector<int>& class_labels,
                     const std::vector<int>& identities, const std::vector<int>& groups, const Var& class_weights,
                     const MarginConfig& cfg);

}  // namespace gaclab::losses
