#include "gaclab/demog.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "gaclab/autodiff.hpp"
#include "gaclab/checkpoint.hpp"
#include "gaclab/rng.hpp"

namespace gaclab::demog {

namespace ad = autodiff;

namespace {
constexpr int kWidth1 = 8;
constexpr int kWidth2 = 16;

Tensor he_init(const std::vector<int>& shape, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}
}  // namespace

GroupClassifier::GroupClassifier(int nd, int image_size, std::uint64_t init_seed) : nd_(nd), image_size_(image_size) {
  if (nd < 2) throw std::invalid_argument("GroupClassifier: needs at least 2 groups");
  std::mt19937_64 rng = make_rng(init_seed, 0xC1A5);
  conv1 = Param("clf.conv1.weight", he_init({kWidth1, 1, 3, 3}, 9, rng));
  conv2 = Param("clf.conv2.weight", he_init({kWidth2, kWidth1, 3, 3}, kWidth1 * 9, rng));
  const int flat = kWidth2 * (image_size / 4) * (image_size / 4);
  head_w = Param("clf.head.weight", he_init({nd, flat}, flat, rng));
  head_b = Param("clf.head.bias", Tensor::zeros({nd}));
}

namespace {
ad::Var classifier_forward(GroupClassifier& clf, const Tensor& image, bool track) {
  auto wrap = [track](Param& p) { return track ? ad::leaf(p) : ad::constant(p.value); };
  ad::Var x = ad::constant(image);
  x = ad::relu(ad::conv2d(x, wrap(clf.conv1), 2, 1));
  x = ad::relu(ad::conv2d(x, wrap(clf.conv2), 2, 1));
  return ad::linear(ad::flatten(x), wrap(clf.head_w), wrap(clf.head_b));
}
}  // namespace

std::vector<double> GroupClassifier::logits(const Tensor& image) const {
  auto& self = const_cast<GroupClassifier&>(*this);
  ad::Var out = classifier_forward(self, image, false);
  return out->value.raw();
}

int GroupClassifier::predict(const Tensor& image) const {
  const std::vector<double> l = logits(image);
  return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

std::vector<Param*> GroupClassifier::parameters() { return {&conv1, &conv2, &head_w, &head_b}; }

void GroupClassifier::save(const std::string& dir) const {
  checkpoint::Json arch;
  arch["kind"] = "group_classifier";
  arch["nd"] = nd_;
  arch["image_size"] = image_size_;
  auto& self = const_cast<GroupClassifier&>(*this);
  std::vector<const Param*> params;
  for (Param* p : self.parameters()) params.push_back(p);
  checkpoint::save(dir, params, arch);
}

GroupClassifier GroupClassifier::load(const std::string& dir) {
  checkpoint::Loaded loaded = checkpoint::load(dir);
  if (loaded.arch.value("kind", "") != "group_classifier") {
    throw std::runtime_error("GroupClassifier::load: " + dir + " is not a group-classifier checkpoint");
  }
  GroupClassifier clf(loaded.arch.at("nd").get<int>(), loaded.arch.at("image_size").get<int>(), 0);
  for (Param* p : clf.parameters()) {
    const Param* src = loaded.find(p->name);
    if (!src || !src->value.same_shape(p->value)) {
      throw std::runtime_error("GroupClassifier::load: missing or mismatched tensor " + p->name);
    }
    p->value = src->value;
  }
  return clf;
}

ClassifierReport train_group_classifier(GroupClassifier& clf, const data::Dataset& ds, int epochs, double lr,
                                        std::uint64_t seed) {
  if (ds.nd < 2) throw std::invalid_argument("train_group_classifier: dataset has a single group");

  // Subject-disjoint 80/20 split per group.
  std::set<int> held_out;
  for (int g = 0; g < ds.nd; ++g) {
    std::vector<int> subjects = ds.subjects_in_group(g);
    std::mt19937_64 rng = make_rng(seed, 0x5E1D, static_cast<std::uint64_t>(g));
    std::shuffle(subjects.begin(), subjects.end(), rng);
    const int hold = std::max(1, static_cast<int>(subjects.size()) / 5);
    held_out.insert(subjects.end() - hold, subjects.end());
  }
  std::vector<int> train_idx, eval_idx;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    (held_out.count(ds.samples[i].identity) ? eval_idx : train_idx).push_back(static_cast<int>(i));
  }

  std::vector<Param*> params = clf.parameters();
  std::vector<Tensor> velocity;
  for (Param* p : params) velocity.push_back(Tensor::zeros(p->value.shape()));

  const int batch = 32;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<int> order = train_idx;
    std::mt19937_64 rng = make_rng(seed, 0x03D3, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      for (Param* p : params) p->zero_grad();
      const std::size_t end = std::min(order.size(), start + batch);
      std::vector<ad::Var> terms;
      for (std::size_t i = start; i < end; ++i) {
        const data::Sample& s = ds.samples[static_cast<std::size_t>(order[i])];
        terms.push_back(ad::cross_entropy(classifier_forward(clf, s.image, true), s.group));
      }
      ad::Var loss = ad::mean(ad::concat_scalars(terms));
      ad::backward(loss);
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param* p = params[pi];
        for (std::size_t k = 0; k < p->value.size(); ++k) {
          velocity[pi][k] = 0.9 * velocity[pi][k] + p->grad[k];
          p->value[k] -= lr * velocity[pi][k];
        }
      }
    }
  }

  ClassifierReport report;
  std::map<int, int> correct, total;
  for (int i : eval_idx) {
    const data::Sample& s = ds.samples[static_cast<std::size_t>(i)];
    ++total[s.group];
    if (clf.predict(s.image) == s.group) ++correct[s.group];
  }
  double acc_sum = 0.0;
  for (const auto& [g, n] : total) {
    const double acc = n ? static_cast<double>(correct[g]) / n : 0.0;
    report.per_group_accuracy[g] = acc;
    acc_sum += acc;
  }
  report.mean_accuracy = total.empty() ? 0.0 : acc_sum / static_cast<double>(total.size());
  return report;
}

std::string to_string(LabelMode m) {
  switch (m) {
    case LabelMode::GroundTruth: return "ground_truth";
    case LabelMode::Estimated: return "estimated";
    case LabelMode::Random: return "random";
  }
  return "ground_truth";
}

LabelMode label_mode_from_string(const std::string& s) {
  if (s == "ground_truth") return LabelMode::GroundTruth;
  if (s == "estimated") return LabelMode::Estimated;
  if (s == "random") return LabelMode::Random;
  throw std::invalid_argument("unknown label mode '" + s + "' (expected ground_truth|estimated|random)");
}

LabelProvider LabelProvider::ground_truth() {
  LabelProvider p;
  p.mode_ = LabelMode::GroundTruth;
  return p;
}

LabelProvider LabelProvider::random(std::uint64_t seed, int nd) {
  if (nd < 1) throw std::invalid_argument("LabelProvider::random: nd must be >= 1");
  LabelProvider p;
  p.mode_ = LabelMode::Random;
  p.seed_ = seed;
  p.nd_ = nd;
  return p;
}

LabelProvider LabelProvider::estimated(std::shared_ptr<const GroupClassifier> classifier) {
  if (!classifier) throw std::invalid_argument("LabelProvider::estimated: missing classifier checkpoint");
  LabelProvider p;
  p.mode_ = LabelMode::Estimated;
  p.classifier_ = std::move(classifier);
  p.nd_ = p.classifier_->nd();
  return p;
}

int LabelProvider::label(const data::Dataset& ds, int sample_index) const {
  const data::Sample& s = ds.samples.at(static_cast<std::size_t>(sample_index));
  switch (mode_) {
    case LabelMode::GroundTruth:
      return s.group;
    case LabelMode::Random: {
      std::mt19937_64 rng = make_rng(seed_, 0x1ABE1, static_cast<std::uint64_t>(sample_index));
      return static_cast<int>(rng() % static_cast<std::uint64_t>(nd_));
    }
    case LabelMode::Estimated:
      return classifier_->predict(s.image);
  }
  return s.group;
}

std::vector<int> LabelProvider::labels(const data::Dataset& ds) const {
  std::vector<int> out(ds.samples.size());
#pragma omp parallel for schedule(static) if (mode_ == LabelMode::Estimated)
  for (int i = 0; i < static_cast<int>(ds.samples.size()); ++i) out[i] = label(ds, i);
  return out;
}

}  // namespace gaclab::demog
