#include "gaclab/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "gaclab/autodiff.hpp"
#include "gaclab/layers.hpp"
#include "gaclab/losses.hpp"
#include "gaclab/rng.hpp"

namespace gaclab::gradcheck {

namespace ad = autodiff;

namespace {

constexpr double kKinkMargin = 5e-3;

Tensor randn(const std::vector<int>& shape, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

bool away_from_zero(const Tensor& t, double margin) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::fabs(t[i]) < margin) return false;
  }
  return true;
}

// One op entry: draws a configuration from the seed stream; returns false
// when the draw lands too close to a kink and must be re-drawn.
struct OpCase {
  std::string name;
  std::function<bool(std::mt19937_64&, std::function<ad::Var()>&, std::vector<Param*>&, std::vector<Param>&)> setup;
};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;

  cases.push_back({"conv2d", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     storage.emplace_back("in", randn({2, 5, 5}, rng));
                     storage.emplace_back("k", randn({3, 2, 3, 3}, rng, 0.5));
                     Param* in = &storage[0];
                     Param* k = &storage[1];
                     build = [in, k] { return ad::sum(ad::conv2d(ad::leaf(*in), ad::leaf(*k), 1, 1)); };
                     params = {in, k};
                     return true;
                   }});

  cases.push_back({"conv2d_relu", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     storage.emplace_back("in", randn({2, 5, 5}, rng));
                     storage.emplace_back("k", randn({3, 2, 3, 3}, rng, 0.5));
                     Param* in = &storage[0];
                     Param* k = &storage[1];
                     Tensor pre = ad::conv2d(ad::constant(in->value), ad::constant(k->value), 1, 1)->value;
                     if (!away_from_zero(pre, kKinkMargin)) return false;
                     build = [in, k] { return ad::sum(ad::relu(ad::conv2d(ad::leaf(*in), ad::leaf(*k), 1, 1))); };
                     params = {in, k};
                     return true;
                   }});

  cases.push_back({"linear", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     storage.emplace_back("x", randn({6}, rng));
                     storage.emplace_back("w", randn({4, 6}, rng));
                     storage.emplace_back("b", randn({4}, rng));
                     Param* x = &storage[0];
                     Param* w = &storage[1];
                     Param* b = &storage[2];
                     build = [x, w, b] { return ad::sum(ad::linear(ad::leaf(*x), ad::leaf(*w), ad::leaf(*b))); };
                     params = {x, w, b};
                     return true;
                   }});

  cases.push_back({"relu", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     storage.emplace_back("x", randn({12}, rng));
                     Param* x = &storage[0];
                     if (!away_from_zero(x->value, kKinkMargin)) return false;
                     build = [x] { return ad::sum(ad::relu(ad::leaf(*x))); };
                     params = {x};
                     return true;
                   }});

  cases.push_back({"sigmoid", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     storage.emplace_back("x", randn({12}, rng));
                     Param* x = &storage[0];
                     build = [x] { return ad::sum(ad::sigmoid(ad::leaf(*x))); };
                     params = {x};
                     return true;
                   }});

  cases.push_back({"l2_normalize", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     storage.emplace_back("x", randn({8}, rng));
                     Param* x = &storage[0];
                     // weighted sum so the gradient is not annihilated by symmetry
                     Tensor w = randn({8}, rng);
                     auto wc = std::make_shared<Tensor>(std::move(w));
                     build = [x, wc] { return ad::dot(ad::l2_normalize(ad::leaf(*x)), ad::constant(*wc)); };
                     params = {x};
                     return true;
                   }});

  cases.push_back({"adaptive_conv", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     const int nd = 3;
                     storage.emplace_back("in", randn({2, 5, 5}, rng));
                     storage.emplace_back("base", randn({3, 2, 3, 3}, rng, 0.5));
                     Tensor masks = randn({nd, 2, 3, 3}, rng, 0.3);
                     for (std::size_t i = 0; i < masks.size(); ++i) masks[i] += 1.0;
                     storage.emplace_back("masks", std::move(masks));
                     Param* in = &storage[0];
                     Param* base = &storage[1];
                     Param* bank = &storage[2];
                     const int group = static_cast<int>(rng() % nd);
                     Tensor pre = ad::conv2d(ad::constant(in->value),
                                             layers::make_adaptive_kernel(ad::constant(base->value),
                                                                          ad::constant(bank->value), group, nd),
                                             1, 1)
                                      ->value;
                     if (!away_from_zero(pre, kKinkMargin)) return false;
                     build = [in, base, bank, group] {
                       return ad::sum(layers::adaptive_conv_forward(ad::leaf(*in), ad::leaf(*base), ad::leaf(*bank),
                                                                    group, 3, 1, 1));
                     };
                     params = {in, base, bank};
                     return true;
                   }});

  cases.push_back({"adaptive_attention", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     const int nd = 4;
                     storage.emplace_back("feat", randn({5, 4, 4}, rng));
                     storage.emplace_back("maps", randn({nd, 5}, rng));
                     Param* feat = &storage[0];
                     Param* maps = &storage[1];
                     const int group = static_cast<int>(rng() % nd);
                     build = [feat, maps, group] {
                       return ad::sum(layers::adaptive_attention_forward(ad::leaf(*feat), ad::leaf(*maps), group, 4));
                     };
                     params = {feat, maps};
                     return true;
                   }});

  cases.push_back({"spatial_attention", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     storage.emplace_back("feat", randn({5, 4, 4}, rng));
                     storage.emplace_back("w", randn({1, 5, 1, 1}, rng, 0.5));
                     Param* feat = &storage[0];
                     Param* w = &storage[1];
                     build = [feat, w] {
                       return ad::sum(layers::spatial_attention_forward(ad::leaf(*feat), ad::leaf(*w)));
                     };
                     params = {feat, w};
                     return true;
                   }});

  cases.push_back({"cosface_loss", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     const int classes = 5, dim = 8;
                     storage.emplace_back("emb", randn({dim}, rng));
                     storage.emplace_back("w", randn({classes, dim}, rng));
                     Param* emb = &storage[0];
                     Param* w = &storage[1];
                     const int label = static_cast<int>(rng() % classes);
                     losses::MarginConfig cfg{12.0, 0.3, 0.0};
                     build = [emb, w, label, cfg] {
                       return ad::cross_entropy(losses::cosface_logits(ad::leaf(*emb), ad::leaf(*w), label, cfg),
                                                label);
                     };
                     params = {emb, w};
                     return true;
                   }});

  cases.push_back({"debias_loss", [](std::mt19937_64& rng, auto& build, auto& params, auto& storage) {
                     // 2 groups x 2 subjects x 2 images
                     const int dim = 6;
                     std::vector<int> ids, groups;
                     for (int g = 0; g < 2; ++g) {
                       for (int j = 0; j < 2; ++j) {
                         for (int i = 0; i < 2; ++i) {
                           storage.emplace_back("e" + std::to_string(storage.size()), randn({dim}, rng));
                           ids.push_back(g * 2 + j);
                           groups.push_back(g);
                         }
                       }
                     }
                     std::vector<Param*> embs;
                     for (Param& p : storage) embs.push_back(&p);
                     auto make_loss = [embs, ids, groups](bool tracked) {
                       std::vector<ad::Var> vars;
                       for (Param* p : embs) vars.push_back(tracked ? ad::leaf(*p) : ad::input(p->value));
                       return losses::debias_loss(vars, ids, groups, 0.7);
                     };
                     // Keep |Dist_jg - cross-group mean| away from the kink.
                     losses::DebiasResult probe = make_loss(false);
                     double cross = 0.0;
                     for (const auto& [g, d] : probe.dist_g) cross += d;
                     cross /= static_cast<double>(probe.dist_g.size());
                     losses::EmbeddingBatch batch;
                     for (Param* p : embs) {
                       Tensor t = p->value;
                       double sq = 0.0;
                       for (std::size_t k = 0; k < t.size(); ++k) sq += t[k] * t[k];
                       for (std::size_t k = 0; k < t.size(); ++k) t[k] /= std::sqrt(sq);
                       batch.embeddings.push_back(std::move(t));
                     }
                     batch.identities = ids;
                     batch.groups = groups;
                     const losses::IntraStats stats = losses::intra_class_stats(batch);
                     for (const auto& [key, d] : stats.dist_by_subject) {
                       if (std::fabs(d - cross) < kKinkMargin) return false;
                     }
                     build = [make_loss] { return make_loss(true).loss; };
                     params = embs;
                     return true;
                   }});

  return cases;
}

}  // namespace

std::vector<OpResult> run_suite(double eps, int configs_per_op, std::uint64_t seed) {
  std::vector<OpResult> results;
  for (const OpCase& op : op_cases()) {
    OpResult res;
    res.op = op.name;
    int done = 0;
    std::uint64_t draw = 0;
    const std::uint64_t draw_cap = static_cast<std::uint64_t>(configs_per_op) * 1000 + 1000;
    while (done < configs_per_op) {
      if (draw > draw_cap) throw std::runtime_error("gradcheck: could not draw a well-conditioned config for " + op.name);
      std::mt19937_64 rng = make_rng(seed, mix64(std::hash<std::string>{}(op.name)), draw++);
      std::function<ad::Var()> build;
      std::vector<Param*> params;
      std::vector<Param> storage;
      storage.reserve(16);
      if (!op.setup(rng, build, params, storage)) continue;
      res.max_err = std::max(res.max_err, ad::grad_check(build, params, eps));
      ++done;
    }
    res.configs = done;
    results.push_back(res);
  }
  return results;
}

double suite_max_error(const std::vector<OpResult>& results) {
  double m = 0.0;
  for (const OpResult& r : results) m = std::max(m, r.max_err);
  return m;
}

}  // namespace gaclab::gradcheck
