#include "gaclab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <stdexcept>

#include "gaclab/io_util.hpp"

namespace gaclab::metrics {

namespace {

double cosine(const Tensor& a, const Tensor& b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return dot;  // embeddings are unit-norm
}

double euclidean(const Tensor& a, const Tensor& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

}  // namespace

VerificationResult verification_accuracy(const data::PairList& pairs, const losses::EmbeddingBatch& embeddings) {
  // Scores are grouped, then each group is swept independently.
  std::map<int, std::vector<std::pair<double, bool>>> scored;
  for (const data::Pair& p : pairs) {
    if (p.index_a < 0 || p.index_b < 0 || p.index_a >= static_cast<int>(embeddings.size()) ||
        p.index_b >= static_cast<int>(embeddings.size())) {
      throw std::invalid_argument("verification_accuracy: pair index out of range");
    }
    const double s = cosine(embeddings.embeddings[static_cast<std::size_t>(p.index_a)],
                            embeddings.embeddings[static_cast<std::size_t>(p.index_b)]);
    scored[p.group].emplace_back(s, p.same_identity);
  }

  VerificationResult result;
  for (auto& [g, sc] : scored) {
    if (sc.empty()) {
      result.warnings.push_back("group " + std::to_string(g) + " has no pairs; omitted");
      continue;
    }
    std::sort(sc.begin(), sc.end());
    const int n = static_cast<int>(sc.size());
    int genuine_total = 0;
    for (const auto& [s, gen] : sc) genuine_total += gen ? 1 : 0;

    // Candidate thresholds: below the minimum and at every midpoint of
    // consecutive scores. Genuine iff score >= threshold.
    int best_correct = -1;
    double best_thr = sc.front().first - 1.0;
    int genuine_below = 0;  // genuine scores strictly below threshold
    int impostor_below = 0;
    auto consider = [&](double thr) {
      // correct = impostors below thr + genuines at/above thr
      const int correct = impostor_below + (genuine_total - genuine_below);
      if (correct > best_correct) {
        best_correct = correct;
        best_thr = thr;
      }
    };
    consider(sc.front().first - 1.0);
    for (int i = 0; i < n; ++i) {
      if (sc[static_cast<std::size_t>(i)].second) {
        ++genuine_below;
      } else {
        ++impostor_below;
      }
      const double here = sc[static_cast<std::size_t>(i)].first;
      const double next = i + 1 < n ? sc[static_cast<std::size_t>(i + 1)].first : here + 2.0;
      if (next > here) consider((here + next) / 2.0);
    }

    result.accuracy_by_group[g] = static_cast<double>(best_correct) / n;
    result.threshold_by_group[g] = best_thr;
  }
  return result;
}

Biasness biasness(const std::vector<double>& accuracies) {
  if (accuracies.size() < 2) throw std::invalid_argument("biasness: needs at least 2 group accuracies");
  Biasness b;
  for (double a : accuracies) b.average += a;
  b.average /= static_cast<double>(accuracies.size());
  double var = 0.0;
  for (double a : accuracies) var += (a - b.average) * (a - b.average);
  b.std_dev = std::sqrt(var / static_cast<double>(accuracies.size()));
  return b;
}

RatioDistribution ratio_distribution(const losses::EmbeddingBatch& embeddings) {
  // group -> identity -> embedding indices
  std::map<int, std::map<int, std::vector<int>>> by_group;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    by_group[embeddings.groups[i]][embeddings.identities[i]].push_back(static_cast<int>(i));
  }

  RatioDistribution out;
  for (const auto& [g, subjects] : by_group) {
    std::vector<double> ratios;
    for (const auto& [id, own] : subjects) {
      if (own.size() < 2) {
        out.warnings.push_back("subject " + std::to_string(id) + " has one image; excluded");
        continue;
      }
      double max_intra = 0.0;
      for (std::size_t a = 0; a < own.size(); ++a) {
        for (std::size_t b = a + 1; b < own.size(); ++b) {
          max_intra = std::max(max_intra, euclidean(embeddings.embeddings[static_cast<std::size_t>(own[a])],
                                                    embeddings.embeddings[static_cast<std::size_t>(own[b])]));
        }
      }
      if (max_intra <= 0.0) {
        out.warnings.push_back("subject " + std::to_string(id) + " has coincident images; excluded");
        continue;
      }
      double min_inter = std::numeric_limits<double>::infinity();
      for (const auto& [other_id, other] : subjects) {
        if (other_id == id) continue;
        for (int a : own) {
          for (int b : other) {
            min_inter = std::min(min_inter, euclidean(embeddings.embeddings[static_cast<std::size_t>(a)],
                                                      embeddings.embeddings[static_cast<std::size_t>(b)]));
          }
        }
      }
      if (!std::isfinite(min_inter)) continue;  // single subject in group
      ratios.push_back(min_inter / max_intra);
    }
    if (ratios.empty()) continue;
    double mean = 0.0;
    for (double r : ratios) mean += r;
    mean /= static_cast<double>(ratios.size());
    double var = 0.0;
    for (double r : ratios) var += (r - mean) * (r - mean);
    out.mean_by_group[g] = mean;
    out.stad_by_group[g] = std::sqrt(var / static_cast<double>(ratios.size()));
    out.ratios_by_group[g] = std::move(ratios);
  }
  return out;
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: distributions must have equal length");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

std::map<int, double> relative_entropy(const std::map<int, std::vector<double>>& samples_by_group,
                                       int reference_group, int bins) {
  if (bins < 1) throw std::invalid_argument("relative_entropy: bins must be >= 1");
  auto ref_it = samples_by_group.find(reference_group);
  if (ref_it == samples_by_group.end() || ref_it->second.empty()) {
    throw std::invalid_argument("relative_entropy: reference group " + std::to_string(reference_group) +
                                " has no samples");
  }

  // Pooled range across all groups.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& [g, vals] : samples_by_group) {
    for (double v : vals) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) hi = lo + 1.0;

  constexpr double kSmooth = 1e-8;
  auto histogram = [&](const std::vector<double>& vals) {
    std::vector<double> h(static_cast<std::size_t>(bins), kSmooth);
    for (double v : vals) {
      int b = static_cast<int>((v - lo) / (hi - lo) * bins);
      b = std::clamp(b, 0, bins - 1);
      h[static_cast<std::size_t>(b)] += 1.0;
    }
    double total = 0.0;
    for (double x : h) total += x;
    for (double& x : h) x /= total;
    return h;
  };

  const std::vector<double> ref = histogram(ref_it->second);
  std::map<int, double> out;
  for (const auto& [g, vals] : samples_by_group) {
    if (vals.empty()) continue;
    out[g] = g == reference_group ? 0.0 : kl_divergence(histogram(vals), ref);
  }
  return out;
}

CorrelationHistogram correlation_histogram(const losses::EmbeddingBatch& embeddings, int group, int max_subjects,
                                           int bins) {
  // One representative embedding per subject: its first image in the batch.
  std::map<int, int> first_of;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings.groups[i] != group) continue;
    first_of.emplace(embeddings.identities[i], static_cast<int>(i));
  }
  if (first_of.size() < 2) {
    throw std::invalid_argument("correlation_histogram: group " + std::to_string(group) + " has fewer than 2 subjects");
  }

  std::vector<int> reps;
  for (const auto& [id, idx] : first_of) {
    reps.push_back(idx);
    if (static_cast<int>(reps.size()) >= max_subjects) break;
  }

  CorrelationHistogram hist;
  hist.counts.assign(static_cast<std::size_t>(bins), 0);
  const double d = static_cast<double>(embeddings.embeddings[0].size());
  for (std::size_t a = 0; a < reps.size(); ++a) {
    for (std::size_t b = a + 1; b < reps.size(); ++b) {
      const Tensor& x = embeddings.embeddings[static_cast<std::size_t>(reps[a])];
      const Tensor& y = embeddings.embeddings[static_cast<std::size_t>(reps[b])];
      double mx = 0.0, my = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
      }
      mx /= d;
      my /= d;
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
      }
      const double denom = std::sqrt(sxx * syy);
      const double corr = denom > 0.0 ? sxy / denom : 0.0;
      int bin = static_cast<int>((corr - hist.lo) / (hist.hi - hist.lo) * bins);
      bin = std::clamp(bin, 0, bins - 1);
      ++hist.counts[static_cast<std::size_t>(bin)];
      ++hist.pair_count;
    }
  }
  return hist;
}

FairnessReport fairness_report(const data::PairList& pairs, const losses::EmbeddingBatch& embeddings,
                               int reference_group, int bins) {
  FairnessReport report;
  report.reference_group = reference_group;

  VerificationResult ver = verification_accuracy(pairs, embeddings);
  report.accuracy_by_group = ver.accuracy_by_group;
  report.warnings = ver.warnings;

  std::vector<double> accs;
  for (const auto& [g, a] : ver.accuracy_by_group) accs.push_back(a * 100.0);
  if (accs.size() >= 2) {
    const Biasness b = biasness(accs);
    report.average_accuracy = b.average;
    report.biasness = b.std_dev;
  } else if (accs.size() == 1) {
    report.average_accuracy = accs[0];
  }

  RatioDistribution rd = ratio_distribution(embeddings);
  report.ratio_mean_by_group = rd.mean_by_group;
  report.ratio_stad_by_group = rd.stad_by_group;
  for (const std::string& w : rd.warnings) report.warnings.push_back(w);

  if (rd.ratios_by_group.count(reference_group)) {
    report.relative_entropy_by_group = relative_entropy(rd.ratios_by_group, reference_group, bins);
  } else {
    report.warnings.push_back("reference group " + std::to_string(reference_group) +
                              " has no ratio samples; relative entropy skipped");
  }
  return report;
}

nlohmann::ordered_json to_json(const FairnessReport& report) {
  nlohmann::ordered_json j;
  auto map_to_json = [](const std::map<int, double>& m) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m) o[std::to_string(k)] = v;
    return o;
  };
  j["accuracy_by_group"] = map_to_json(report.accuracy_by_group);
  j["average_accuracy"] = report.average_accuracy;
  j["biasness"] = report.biasness;
  j["ratio_mean_by_group"] = map_to_json(report.ratio_mean_by_group);
  j["ratio_stad_by_group"] = map_to_json(report.ratio_stad_by_group);
  j["relative_entropy_by_group"] = map_to_json(report.relative_entropy_by_group);
  j["reference_group"] = report.reference_group;
  j["run_id"] = report.run_id;
  j["tau"] = report.tau;
  j["lambda"] = report.lambda;
  j["label_mode"] = report.label_mode;
  j["warnings"] = report.warnings;
  return j;
}

void save_report(const FairnessReport& report, const std::string& json_path, const std::string& csv_path) {
  {
    std::ofstream out(json_path);
    if (!out) throw std::runtime_error("save_report: cannot write " + json_path);
    out << to_json(report).dump(2) << '\n';
  }
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("save_report: cannot write " + csv_path);
  csv << "group,accuracy,ratio_mean,ratio_stad,relative_entropy\n";
  for (const auto& [g, acc] : report.accuracy_by_group) {
    csv << g << ',' << io::format_double(acc);
    csv << ',' << (report.ratio_mean_by_group.count(g) ? io::format_double(report.ratio_mean_by_group.at(g)) : "nan");
    csv << ',' << (report.ratio_stad_by_group.count(g) ? io::format_double(report.ratio_stad_by_group.at(g)) : "nan");
    csv << ','
        << (report.relative_entropy_by_group.count(g) ? io::format_double(report.relative_entropy_by_group.at(g))
                                                      : "nan");
    csv << '\n';
  }
}

}  // namespace gaclab::metrics
