#include "gaclab/automation.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "gaclab/io_util.hpp"

namespace gaclab::automation {

std::vector<std::vector<double>> flatten_masks(const Tensor& bank_rows) {
  const int nd = bank_rows.dim(0);
  const std::size_t len = bank_rows.size() / nd;
  std::vector<std::vector<double>> out(nd);
  for (int i = 0; i < nd; ++i) {
    const double* src = bank_rows.data() + std::size_t(i) * len;
    out[i].assign(src, src + len);
  }
  return out;
}

std::vector<std::vector<double>> pairwise_cosine(const std::vector<std::vector<double>>& vectors) {
  const std::size_t nd = vectors.size();
  std::vector<double> norms(nd);
  for (std::size_t i = 0; i < nd; ++i) {
    double sq = 0.0;
    for (double v : vectors[i]) sq += v * v;
    norms[i] = std::sqrt(sq);
    if (norms[i] <= 1e-12) {
      throw std::invalid_argument("pairwise_cosine: degenerate mask row " + std::to_string(i) + " with near-zero norm");
    }
  }
  std::vector<std::vector<double>> theta(nd, std::vector<double>(nd, 0.0));
  for (std::size_t i = 0; i < nd; ++i) {
    for (std::size_t j = i; j < nd; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < vectors[i].size(); ++k) dot += vectors[i][k] * vectors[j][k];
      const double c = dot / (norms[i] * norms[j]);
      theta[i][j] = c;
      theta[j][i] = c;
    }
  }
  return theta;
}

double mean_pairwise_similarity(const std::vector<std::vector<double>>& theta) {
  const std::size_t nd = theta.size();
  if (nd < 2) throw std::invalid_argument("mean_pairwise_similarity: needs at least 2 groups");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < nd; ++i) {
    for (std::size_t j = i + 1; j < nd; ++j) {
      acc += theta[i][j];
      ++count;
    }
  }
  return acc / static_cast<double>(count);
}

Decision adapt_decision(const SimilarityReport& report, const AutomationConfig& config) {
  return report.mean_similarity > config.tau ? Decision::Merge : Decision::KeepAdaptive;
}

void merge_rows(Tensor& bank_rows) {
  const int nd = bank_rows.dim(0);
  const std::size_t len = bank_rows.size() / nd;
  for (std::size_t k = 0; k < len; ++k) {
    double acc = 0.0;
    for (int i = 0; i < nd; ++i) acc += bank_rows[std::size_t(i) * len + k];
    const double avg = acc / nd;
    for (int i = 0; i < nd; ++i) bank_rows[std::size_t(i) * len + k] = avg;
  }
}

Controller::Controller(layers::Network& net, AutomationConfig cfg) : net_(&net), cfg_(std::move(cfg)) {
  if (cfg_.check_period < 1) throw std::invalid_argument("automation: check_period must be >= 1");
  if (cfg_.tau < -1.0 || cfg_.tau > 1.0) throw std::invalid_argument("automation: tau must lie in [-1, 1]");
  enabled_ = net.automation_enabled();
  const std::size_t n = net.banks().size();
  stable_checks_.assign(n, 0);
  // Nothing to monitor: a single-group network is shared by definition.
  if (!enabled_ || n == 0 || net.config().nd < 2) {
    enabled_ = enabled_ && false;
    converged_ = true;
  }
}

std::vector<SimilarityReport> Controller::check(int step) {
  std::vector<SimilarityReport> reports;
  if (!enabled_) return reports;

  std::vector<layers::BankRef> banks = net_->banks();
  bool all_stable = true;
  for (std::size_t bi = 0; bi < banks.size(); ++bi) {
    layers::BankRef& bank = banks[bi];

    // Rows that have not received any update yet (e.g. zero-initialized
    // attention maps before the first step) have no defined similarity; the
    // layer keeps its current state until the rows become measurable.
    bool degenerate = false;
    const std::vector<std::vector<double>> rows = flatten_masks(bank.rows->value);
    for (const auto& r : rows) {
      double sq = 0.0;
      for (double v : r) sq += v * v;
      if (sq <= 1e-24) degenerate = true;
    }
    if (degenerate) {
      all_stable = false;
      continue;
    }

    SimilarityReport report;
    report.layer_id = bank.id;
    report.step = step;
    report.theta = pairwise_cosine(rows);
    report.mean_similarity = mean_pairwise_similarity(report.theta);

    const Decision decision = adapt_decision(report, cfg_);
    if (decision == Decision::Merge) {
      merge_rows(bank.rows->value);
      bank.state->shared_flag = true;
    } else if (cfg_.allow_resplit) {
      bank.state->shared_flag = false;
    } else if (bank.state->shared_flag) {
      // Without re-splitting, a merged layer stays shared: keep its rows
      // equalized even when the similarity has drifted below tau.
      merge_rows(bank.rows->value);
    }

    const auto& hist = bank.state->similarity_history;
    if (!hist.empty() && std::fabs(hist.back().second - report.mean_similarity) < cfg_.stability_eps) {
      ++stable_checks_[bi];
    } else {
      stable_checks_[bi] = 0;
    }
    if (stable_checks_[bi] + 1 < cfg_.stability_window) all_stable = false;

    bank.state->similarity_history.emplace_back(step, report.mean_similarity);
    trace_.push_back({step, bank.id, report.mean_similarity, bank.state->shared_flag});
    reports.push_back(std::move(report));
  }
  if (all_stable) converged_ = true;
  return reports;
}

int Controller::merged_layer_count() const {
  int n = 0;
  for (const layers::BankRef& b : net_->banks()) {
    if (b.state->shared_flag) ++n;
  }
  return n;
}

void Controller::write_trace(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("automation: cannot write trace " + path);
  out << "step,layer_id,mean_similarity,shared_flag\n";
  for (const TraceRow& row : trace_) {
    out << row.step << ',' << row.layer_id << ',' << io::format_double(row.mean_similarity) << ','
        << (row.shared_flag ? 1 : 0) << '\n';
  }
}

}  // namespace gaclab::automation
