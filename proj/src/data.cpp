#include "gaclab/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gaclab/rng.hpp"

static_assert(std::endian::native == std::endian::little, "dataset format assumes a little-endian host");

namespace gaclab::data {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::vector<int> Dataset::subjects_in_group(int group) const {
  std::set<int> ids;
  for (const Sample& s : samples) {
    if (s.group == group) ids.insert(s.identity);
  }
  return {ids.begin(), ids.end()};
}

std::vector<int> Dataset::images_of(int identity) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].identity == identity) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::map<int, int> Dataset::group_sizes() const {
  std::map<int, std::set<int>> subjects;
  for (const Sample& s : samples) subjects[s.group].insert(s.identity);
  std::map<int, int> out;
  for (const auto& [g, ids] : subjects) out[g] = static_cast<int>(ids.size());
  return out;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Fixed low-frequency signature of a demographic group: one sinusoidal
// product whose frequency indexes the group.
void add_group_pattern(Tensor& img, int g, double strength, std::uint64_t seed, int h, int w) {
  if (strength == 0.0) return;
  std::mt19937_64 rng = make_rng(seed, 0xF00D, static_cast<std::uint64_t>(g));
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  const double px = phase(rng);
  const double py = phase(rng);
  const double f = g + 1.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img[std::size_t(y) * w + x] += strength * std::sin(kTwoPi * f * x / w + px) * std::sin(kTwoPi * f * y / h + py);
    }
  }
}

struct IdentityPattern {
  // Three sinusoidal components with frequencies from the group's band and
  // identity-specific phases.
  double fx[3], fy[3], px[3], py[3], amp[3];

  static IdentityPattern make(int g, std::mt19937_64& rng) {
    IdentityPattern p;
    std::uniform_real_distribution<double> freq(g + 1.0, g + 2.0);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    for (int k = 0; k < 3; ++k) {
      p.fx[k] = freq(rng);
      p.fy[k] = freq(rng);
      p.px[k] = phase(rng);
      p.py[k] = phase(rng);
      p.amp[k] = 1.0 / 3.0;
    }
    return p;
  }

  void add_to(Tensor& img, double strength, double jx, double jy, int h, int w) const {
    if (strength == 0.0) return;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k) {
          v += amp[k] * std::sin(kTwoPi * fx[k] * x / w + px[k] + jx) * std::sin(kTwoPi * fy[k] * y / h + py[k] + jy);
        }
        img[std::size_t(y) * w + x] += strength * v;
      }
    }
  }
};

}  // namespace

Dataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.nd < 1 || cfg.subjects_per_group < 1 || cfg.images_per_subject < 1) {
    throw std::invalid_argument("generate_synthetic: counts must be >= 1");
  }
  if (cfg.group_signature_strength < 0 || cfg.identity_signature_strength < 0 || cfg.noise_std < 0) {
    throw std::invalid_argument("generate_synthetic: strengths must be >= 0");
  }

  Dataset ds;
  ds.cfg = cfg;
  ds.nd = cfg.nd;
  const int h = cfg.height, w = cfg.width;
  ds.samples.resize(std::size_t(cfg.nd) * cfg.subjects_per_group * cfg.images_per_subject);

  // Subjects are independent streams, so generation parallelizes cleanly.
#pragma omp parallel for collapse(2) schedule(static)
  for (int g = 0; g < cfg.nd; ++g) {
    for (int j = 0; j < cfg.subjects_per_group; ++j) {
      std::mt19937_64 rng = make_rng(cfg.seed, 0xDA7A, static_cast<std::uint64_t>(g), static_cast<std::uint64_t>(j));
      const IdentityPattern pattern = IdentityPattern::make(g, rng);
      const int identity = g * cfg.subjects_per_group + j;
      double id_strength = cfg.identity_signature_strength;
      if (static_cast<std::size_t>(g) < cfg.identity_strength_scale.size()) {
        id_strength *= cfg.identity_strength_scale[g];
      }

      std::uniform_real_distribution<double> jitter(-cfg.pose_jitter, cfg.pose_jitter);
      std::normal_distribution<double> noise(0.0, cfg.noise_std);
      for (int i = 0; i < cfg.images_per_subject; ++i) {
        Tensor img = Tensor::full({1, h, w}, 0.5);
        add_group_pattern(img, g, cfg.group_signature_strength, cfg.seed, h, w);
        const double jx = cfg.pose_jitter > 0 ? jitter(rng) : 0.0;
        const double jy = cfg.pose_jitter > 0 ? jitter(rng) : 0.0;
        pattern.add_to(img, id_strength, jx, jy, h, w);
        if (cfg.noise_std > 0) {
          for (std::size_t k = 0; k < img.size(); ++k) img[k] += noise(rng);
        }
        for (std::size_t k = 0; k < img.size(); ++k) img[k] = std::clamp(img[k], 0.0, 1.0);

        const std::size_t idx = (std::size_t(g) * cfg.subjects_per_group + j) * cfg.images_per_subject + i;
        ds.samples[idx] = Sample{std::move(img), identity, g};
      }
    }
  }
  return ds;
}

Dataset ratio_subsample(const Dataset& ds, const std::vector<double>& ratios, std::uint64_t seed) {
  if (static_cast<int>(ratios.size()) != ds.nd) {
    throw std::invalid_argument("ratio_subsample: need one ratio per group (" + std::to_string(ds.nd) + ")");
  }
  double max_ratio = 0.0;
  for (double r : ratios) {
    if (r < 0) throw std::invalid_argument("ratio_subsample: ratios must be non-negative");
    max_ratio = std::max(max_ratio, r);
  }
  if (max_ratio == 0.0) throw std::invalid_argument("ratio_subsample: all ratios are zero");

  std::set<int> kept;
  for (int g = 0; g < ds.nd; ++g) {
    std::vector<int> subjects = ds.subjects_in_group(g);
    const int keep = static_cast<int>(std::floor(ratios[g] / max_ratio * subjects.size()));
    if (keep >= static_cast<int>(subjects.size())) {
      kept.insert(subjects.begin(), subjects.end());
      continue;
    }
    std::mt19937_64 rng = make_rng(seed, 0x5AB5, static_cast<std::uint64_t>(g));
    std::shuffle(subjects.begin(), subjects.end(), rng);
    kept.insert(subjects.begin(), subjects.begin() + keep);
  }

  Dataset out;
  out.cfg = ds.cfg;
  out.nd = ds.nd;
  for (const Sample& s : ds.samples) {
    if (kept.count(s.identity)) out.samples.push_back(s);
  }
  return out;
}

std::vector<FoldSpec> make_folds(const Dataset& ds, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
  std::vector<FoldSpec> folds(k);
  for (int g = 0; g < ds.nd; ++g) {
    std::vector<int> subjects = ds.subjects_in_group(g);
    if (static_cast<int>(subjects.size()) < k) {
      throw std::invalid_argument("make_folds: group " + std::to_string(g) + " has " +
                                  std::to_string(subjects.size()) + " subjects, fewer than k=" + std::to_string(k));
    }
    std::mt19937_64 rng = make_rng(seed, 0xF01D, static_cast<std::uint64_t>(g));
    std::shuffle(subjects.begin(), subjects.end(), rng);
    const int base = static_cast<int>(subjects.size()) / k;
    const int rem = static_cast<int>(subjects.size()) % k;
    int pos = 0;
    for (int f = 0; f < k; ++f) {
      const int take = base + (f < rem ? 1 : 0);
      for (int t = 0; t < take; ++t) folds[f].subjects.push_back(subjects[pos++]);
    }
  }
  for (FoldSpec& f : folds) std::sort(f.subjects.begin(), f.subjects.end());
  return folds;
}

std::vector<int> fold_sample_indices(const Dataset& ds, const FoldSpec& fold) {
  std::set<int> ids(fold.subjects.begin(), fold.subjects.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (ids.count(ds.samples[i].identity)) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> complement_sample_indices(const Dataset& ds, const FoldSpec& fold) {
  std::set<int> ids(fold.subjects.begin(), fold.subjects.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (!ids.count(ds.samples[i].identity)) out.push_back(static_cast<int>(i));
  }
  return out;
}

Dataset subset(const Dataset& ds, const std::vector<int>& sample_indices) {
  Dataset out;
  out.cfg = ds.cfg;
  out.nd = ds.nd;
  for (int i : sample_indices) out.samples.push_back(ds.samples[static_cast<std::size_t>(i)]);
  return out;
}

PairList generate_pairs(const Dataset& ds, const std::vector<int>& sample_indices, int pairs_per_group,
                        std::uint64_t seed) {
  std::vector<int> indices = sample_indices;
  if (indices.empty()) {
    indices.resize(ds.samples.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
  }

  // group -> identity -> sample indices
  std::map<int, std::map<int, std::vector<int>>> by_group;
  for (int i : indices) {
    const Sample& s = ds.samples[static_cast<std::size_t>(i)];
    by_group[s.group][s.identity].push_back(i);
  }

  PairList pairs;
  for (const auto& [g, subjects] : by_group) {
    std::vector<int> multi_image;  // identities usable for genuine pairs
    std::vector<int> ids;
    for (const auto& [id, imgs] : subjects) {
      ids.push_back(id);
      if (imgs.size() >= 2) multi_image.push_back(id);
    }
    if (multi_image.size() < 2) {
      throw std::invalid_argument("generate_pairs: group " + std::to_string(g) +
                                  " needs at least 2 subjects with 2+ images each");
    }

    std::mt19937_64 rng = make_rng(seed, 0x9A17, static_cast<std::uint64_t>(g));
    const int genuine_count = pairs_per_group / 2;
    const int impostor_count = pairs_per_group - genuine_count;
    std::set<std::pair<int, int>> used;

    auto emit = [&](int a, int b, bool same) {
      if (a > b) std::swap(a, b);
      const bool fresh = used.insert({a, b}).second;
      pairs.push_back({a, b, same, g});
      return fresh;
    };

    for (int n = 0; n < genuine_count; ++n) {
      for (int attempt = 0;; ++attempt) {
        const int id = multi_image[rng() % multi_image.size()];
        const auto& imgs = subjects.at(id);
        const int a = imgs[rng() % imgs.size()];
        int b = imgs[rng() % imgs.size()];
        while (b == a) b = imgs[rng() % imgs.size()];
        int x = std::min(a, b), y = std::max(a, b);
        if (!used.count({x, y}) || attempt >= 64) {
          emit(a, b, true);
          break;
        }
      }
    }
    for (int n = 0; n < impostor_count; ++n) {
      for (int attempt = 0;; ++attempt) {
        const int ia = ids[rng() % ids.size()];
        int ib = ids[rng() % ids.size()];
        while (ib == ia) ib = ids[rng() % ids.size()];
        const auto& imgs_a = subjects.at(ia);
        const auto& imgs_b = subjects.at(ib);
        const int a = imgs_a[rng() % imgs_a.size()];
        const int b = imgs_b[rng() % imgs_b.size()];
        int x = std::min(a, b), y = std::max(a, b);
        if (!used.count({x, y}) || attempt >= 64) {
          emit(a, b, false);
          break;
        }
      }
    }
  }
  return pairs;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir);

  Json manifest;
  manifest["nd"] = ds.nd;
  manifest["sample_count"] = ds.samples.size();
  manifest["image_shape"] = ds.samples.empty() ? std::vector<int>{} : ds.samples[0].image.shape();
  manifest["seed"] = ds.cfg.seed;
  Json cfg;
  cfg["nd"] = ds.cfg.nd;
  cfg["subjects_per_group"] = ds.cfg.subjects_per_group;
  cfg["images_per_subject"] = ds.cfg.images_per_subject;
  cfg["group_signature_strength"] = ds.cfg.group_signature_strength;
  cfg["identity_signature_strength"] = ds.cfg.identity_signature_strength;
  cfg["noise_std"] = ds.cfg.noise_std;
  cfg["pose_jitter"] = ds.cfg.pose_jitter;
  cfg["identity_strength_scale"] = ds.cfg.identity_strength_scale;
  cfg["height"] = ds.cfg.height;
  cfg["width"] = ds.cfg.width;
  cfg["seed"] = ds.cfg.seed;
  manifest["synth_config"] = cfg;

  Json records = Json::array();
  std::uint64_t offset = 0;
  for (const Sample& s : ds.samples) {
    records.push_back({{"file", "images.bin"}, {"offset", offset}, {"identity", s.identity}, {"group", s.group}});
    offset += s.image.size() * sizeof(double);
  }
  manifest["samples"] = records;

  {
    std::ofstream out(fs::path(dir) / "manifest.json");
    if (!out) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
    out << manifest.dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "images.bin", std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot write images.bin in " + dir);
    for (const Sample& s : ds.samples) {
      s.image.require_finite("dataset image");
      out.write(reinterpret_cast<const char*>(s.image.data()),
                static_cast<std::streamsize>(s.image.size() * sizeof(double)));
    }
  }
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) throw std::runtime_error("load_dataset: cannot open " + dir + "/manifest.json");
  Json manifest = Json::parse(in);

  Dataset ds;
  ds.nd = manifest.at("nd").get<int>();
  const std::vector<int> shape = manifest.at("image_shape").get<std::vector<int>>();
  if (manifest.contains("synth_config")) {
    const Json& cfg = manifest["synth_config"];
    ds.cfg.nd = cfg.value("nd", ds.nd);
    ds.cfg.subjects_per_group = cfg.value("subjects_per_group", 0);
    ds.cfg.images_per_subject = cfg.value("images_per_subject", 0);
    ds.cfg.group_signature_strength = cfg.value("group_signature_strength", 0.0);
    ds.cfg.identity_signature_strength = cfg.value("identity_signature_strength", 0.0);
    ds.cfg.noise_std = cfg.value("noise_std", 0.0);
    ds.cfg.pose_jitter = cfg.value("pose_jitter", 0.0);
    ds.cfg.identity_strength_scale = cfg.value("identity_strength_scale", std::vector<double>{});
    ds.cfg.height = cfg.value("height", shape.size() == 3 ? shape[1] : 0);
    ds.cfg.width = cfg.value("width", shape.size() == 3 ? shape[2] : 0);
    ds.cfg.seed = cfg.value("seed", std::uint64_t{0});
  }

  std::ifstream bin(fs::path(dir) / "images.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_dataset: cannot open " + dir + "/images.bin");
  for (const auto& rec : manifest.at("samples")) {
    Sample s;
    s.identity = rec.at("identity").get<int>();
    s.group = rec.at("group").get<int>();
    s.image = Tensor(shape);
    bin.seekg(static_cast<std::streamoff>(rec.at("offset").get<std::uint64_t>()));
    bin.read(reinterpret_cast<char*>(s.image.data()), static_cast<std::streamsize>(s.image.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("load_dataset: truncated images.bin");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_pairs(const PairList& pairs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_pairs: cannot write " + path);
  out << "idx_a,idx_b,genuine,group\n";
  for (const Pair& p : pairs) {
    out << p.index_a << ',' << p.index_b << ',' << (p.same_identity ? 1 : 0) << ',' << p.group << '\n';
  }
}

PairList load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_pairs: cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  PairList pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Pair p;
    int genuine = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%d,%d", &p.index_a, &p.index_b, &genuine, &p.group) != 4) {
      throw std::runtime_error("load_pairs: malformed line '" + line + "'");
    }
    p.same_identity = genuine != 0;
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace gaclab::data
