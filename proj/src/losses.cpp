#include "gaclab/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace gaclab::losses {

namespace ad = autodiff;

Var cosface_logits(const Var& embedding, const Var& class_weights, int label, const MarginConfig& cfg) {
  if (class_weights->value.rank() != 2) throw std::invalid_argument("cosface_logits: class weights must be C x d");
  const int classes = class_weights->value.dim(0);
  if (label < 0 || label >= classes) {
    throw std::invalid_argument("cosface_logits: label " + std::to_string(label) + " out of range for " +
                                std::to_string(classes) + " classes");
  }
  if (class_weights->value.dim(1) != static_cast<int>(embedding->value.size())) {
    throw std::invalid_argument("cosface_logits: embedding dim " + std::to_string(embedding->value.size()) +
                                " does not match class weights " + class_weights->value.shape_str());
  }

  Var e_hat = ad::l2_normalize(embedding);
  std::vector<Var> cosines;
  cosines.reserve(classes);
  for (int c = 0; c < classes; ++c) {
    cosines.push_back(ad::dot(e_hat, ad::l2_normalize(ad::row(class_weights, c))));
  }
  Var logits = ad::concat_scalars(cosines);

  Tensor margin_shift = Tensor::zeros({classes});
  margin_shift[label] = -cfg.margin;
  logits = ad::add(logits, ad::constant(std::move(margin_shift)));
  return ad::scale(logits, cfg.scale);
}

std::map<SubjectKey, Tensor> subject_centers(const EmbeddingBatch& batch) {
  std::map<SubjectKey, std::vector<const Tensor*>> by_subject;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    by_subject[{batch.identities[i], batch.groups[i]}].push_back(&batch.embeddings[i]);
  }
  std::map<SubjectKey, Tensor> centers;
  for (const auto& [key, embs] : by_subject) {
    if (embs.size() < 2) continue;
    Tensor center = Tensor::zeros(embs[0]->shape());
    for (const Tensor* e : embs) {
      for (std::size_t k = 0; k < center.size(); ++k) center[k] += (*e)[k];
    }
    for (std::size_t k = 0; k < center.size(); ++k) center[k] /= static_cast<double>(embs.size());
    centers.emplace(key, std::move(center));
  }
  return centers;
}

double subject_intra_distance(const std::vector<const Tensor*>& embeddings, const Tensor& center) {
  if (embeddings.size() < 2) throw std::invalid_argument("subject_intra_distance: needs at least 2 embeddings");
  double acc = 0.0;
  for (const Tensor* e : embeddings) {
    for (std::size_t k = 0; k < center.size(); ++k) {
      const double d = (*e)[k] - center[k];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(embeddings.size());
}

double group_intra_distance(const std::vector<double>& subject_distances) {
  if (subject_distances.empty()) throw std::invalid_argument("group_intra_distance: no retained subjects");
  double acc = 0.0;
  for (double d : subject_distances) acc += d;
  return acc / static_cast<double>(subject_distances.size());
}

IntraStats intra_class_stats(const EmbeddingBatch& batch) {
  IntraStats stats;
  std::map<SubjectKey, std::vector<const Tensor*>> by_subject;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    by_subject[{batch.identities[i], batch.groups[i]}].push_back(&batch.embeddings[i]);
  }
  const std::map<SubjectKey, Tensor> centers = subject_centers(batch);
  std::map<int, std::vector<double>> per_group;
  for (const auto& [key, center] : centers) {
    const double d = subject_intra_distance(by_subject.at(key), center);
    stats.dist_by_subject[key] = d;
    per_group[key.second].push_back(d);
    ++stats.retained_subjects;
  }
  for (const auto& [g, dists] : per_group) stats.dist_by_group[g] = group_intra_distance(dists);
  return stats;
}

double debias_value(const IntraStats& stats, double lambda) {
  if (stats.dist_by_group.size() < 2 || stats.retained_subjects == 0 || lambda == 0.0) return 0.0;
  double cross = 0.0;
  for (const auto& [g, d] : stats.dist_by_group) cross += d;
  cross /= static_cast<double>(stats.dist_by_group.size());
  double acc = 0.0;
  for (const auto& [key, d] : stats.dist_by_subject) acc += std::fabs(d - cross);
  return lambda * acc / static_cast<double>(stats.retained_subjects);
}

DebiasResult debias_loss(const std::vector<Var>& embeddings, const std::vector<int>& identities,
                         const std::vector<int>& groups, double lambda) {
  if (embeddings.size() != identities.size() || embeddings.size() != groups.size()) {
    throw std::invalid_argument("debias_loss: embeddings, identities and groups must align");
  }

  DebiasResult result;
  std::map<SubjectKey, std::vector<Var>> by_subject;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    by_subject[{identities[i], groups[i]}].push_back(ad::l2_normalize(embeddings[i]));
  }

  // Per-subject mean squared distance to the subject center.
  std::map<int, std::vector<Var>> dist_by_group;
  std::vector<Var> all_dists;
  for (const auto& [key, embs] : by_subject) {
    if (embs.size() < 2) continue;
    const double inv_n = 1.0 / static_cast<double>(embs.size());
    Var center = embs[0];
    for (std::size_t i = 1; i < embs.size(); ++i) center = ad::add(center, embs[i]);
    center = ad::scale(center, inv_n);
    Var dist = ad::square_norm(ad::sub(embs[0], center));
    for (std::size_t i = 1; i < embs.size(); ++i) dist = ad::add(dist, ad::square_norm(ad::sub(embs[i], center)));
    dist = ad::scale(dist, inv_n);
    dist_by_group[key.second].push_back(dist);
    all_dists.push_back(dist);
    ++result.retained_subjects;
  }
  result.retained_groups = static_cast<int>(dist_by_group.size());

  std::vector<Var> group_means;
  for (const auto& [g, dists] : dist_by_group) {
    Var m = dists[0];
    for (std::size_t i = 1; i < dists.size(); ++i) m = ad::add(m, dists[i]);
    m = ad::scale(m, 1.0 / static_cast<double>(dists.size()));
    result.dist_g[g] = m->value[0];
    group_means.push_back(m);
  }

  if (result.retained_groups < 2) {
    result.degenerate = true;
    result.loss = ad::constant(Tensor::scalar(0.0));
    return result;
  }
  if (lambda == 0.0) {
    result.loss = ad::constant(Tensor::scalar(0.0));
    return result;
  }

  Var cross = group_means[0];
  for (std::size_t i = 1; i < group_means.size(); ++i) cross = ad::add(cross, group_means[i]);
  cross = ad::scale(cross, 1.0 / static_cast<double>(group_means.size()));

  Var acc = ad::abs(ad::sub(all_dists[0], cross));
  for (std::size_t i = 1; i < all_dists.size(); ++i) {
    acc = ad::add(acc, ad::abs(ad::sub(all_dists[i], cross)));
  }
  result.loss = ad::scale(acc, lambda / static_cast<double>(result.retained_subjects));
  return result;
}

TotalLoss total_loss(const std::vector<Var>& embeddings, const std::vector<int>& class_labels,
                     const std::vector<int>& identities, const std::vector<int>& groups, const Var& class_weights,
                     const MarginConfig& cfg) {
  if (embeddings.empty()) throw std::invalid_argument("total_loss: empty batch");
  if (embeddings.size() != class_labels.size()) {
    throw std::invalid_argument("total_loss: embeddings and class labels must align");
  }

  std::vector<Var> ce_terms;
  ce_terms.reserve(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    ce_terms.push_back(ad::cross_entropy(cosface_logits(embeddings[i], class_weights, class_labels[i], cfg), class_labels[i]));
  }
  Var ce = ad::mean(ad::concat_scalars(ce_terms));

  TotalLoss out;
  out.ce_value = ce->value[0];
  out.debias = debias_loss(embeddings, identities, groups, cfg.lambda);
  out.total = ad::add(ce, out.debias.loss);
  return out;
}

}  // namespace gaclab::losses
