#include "srood/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "srood/common.hpp"
#include "srood/evaluation.hpp"

namespace srood {

double ood_score(const RepairerModel& model, const PerceptualExtractor& phi,
                 const ErosionOp& op, const Image& x) {
  const Image eroded = apply_erosion(x, op);
  const Image repaired = repair(model, eroded);
  return lpips_distance(phi, repaired, x);
}

std::size_t argmax_lowest_tie(const std::vector<double>& values) {
  require(!values.empty(), "argmax of an empty list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

namespace {

std::vector<double> split_scores(const RepairerModel& model,
                                 const PerceptualExtractor& phi,
                                 const ErosionOp& op,
                                 const DatasetManifest& manifest, Split split) {
  const auto& idxs = manifest.split_indices(split);
  require(!idxs.empty(), std::string("split '") + split_name(split) +
                             "' is empty");
  std::vector<double> scores;
  scores.reserve(idxs.size());
  for (std::int64_t idx : idxs) {
    const Image x = load_sample(manifest, idx, model.config.height,
                                model.config.width, model.config.channels);
    scores.push_back(ood_score(model, phi, op, x));
  }
  return scores;
}

}  // namespace

SelectionResult select_erosion(const RepairerModel& model,
                               const PerceptualExtractor& phi,
                               const ErosionSet& set,
                               const DatasetManifest& manifest) {
  require(!set.ops.empty(), "erosion set is empty");
  SelectionResult result;
  if (set.ops.size() == 1) return result;  // nothing to compare
  for (const ErosionOp& op : set.ops) {
    const std::vector<double> id =
        split_scores(model, phi, op, manifest, Split::val_id);
    const std::vector<double> ood =
        split_scores(model, phi, op, manifest, Split::val_ood);
    result.per_op_auroc.push_back(auroc(id, ood));
  }
  result.index = argmax_lowest_tie(result.per_op_auroc);
  return result;
}

SelectionResult select_erosion_unlabeled(const RepairerModel& model,
                                         const PerceptualExtractor& phi,
                                         const ErosionSet& set,
                                         const DatasetManifest& manifest) {
  require(!set.ops.empty(), "erosion set is empty");
  SelectionResult result;
  if (set.ops.size() == 1) return result;
  for (const ErosionOp& op : set.ops) {
    const std::vector<double> s =
        split_scores(model, phi, op, manifest, Split::val_id);
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    var /= static_cast<double>(s.size());
    // Degenerate all-zero scores give zero dispersion rather than 0/0.
    result.per_op_dispersion.push_back(mean == 0.0 ? 0.0
                                                   : var / (mean * mean));
  }
  result.index = argmax_lowest_tie(result.per_op_dispersion);
  return result;
}

double calibrate_threshold(std::vector<double> id_scores, double quantile) {
  require(!id_scores.empty(), "cannot calibrate on an empty score list");
  require(quantile > 0.0 && quantile <= 1.0, "quantile must lie in (0, 1]");
  std::sort(id_scores.begin(), id_scores.end());
  const double n = static_cast<double>(id_scores.size());
  const std::ptrdiff_t idx = std::max<std::ptrdiff_t>(
      0, static_cast<std::ptrdiff_t>(std::ceil(quantile * n)) - 1);
  return id_scores[static_cast<std::size_t>(
      std::min<std::ptrdiff_t>(idx, id_scores.size() - 1))];
}

void write_scores_csv(const std::string& path,
                      const std::vector<ScoreRecord>& records) {
  std::ofstream out(path);
  require(out.good(), "cannot write scores: " + path);
  out << "sample_id,split,score,decision,erosion_id\n";
  char buf[64];
  for (const ScoreRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.score);
    out << r.sample_id << ',' << split_name(r.split) << ',' << buf << ','
        << r.decision << ',' << r.erosion << '\n';
  }
  require(out.good(), "cannot write scores: " + path);
}

std::vector<ScoreRecord> read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open scores: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) &&
              line == "sample_id,split,score,decision,erosion_id",
          "malformed scores header in " + path);
  std::vector<ScoreRecord> out;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ScoreRecord r;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (int i = 0; i < 4; ++i) {
      const auto comma = line.find(',', start);
      require(comma != std::string::npos, "malformed scores row " +
                                              std::to_string(line_no) +
                                              " in " + path);
      cols.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    cols.push_back(line.substr(start));
    r.sample_id = std::stoll(cols[0]);
    r.split = parse_split(cols[1]);
    r.score = std::stod(cols[2]);
    r.decision = std::stoi(cols[3]);
    r.erosion = cols[4];
    out.push_back(std::move(r));
  }
  return out;
}

BaselineScores baseline_from_logits(const std::vector<double>& logits) {
  require(!logits.empty(), "baseline needs at least one logit");
  const double maxlogit = *std::max_element(logits.begin(), logits.end());
  // Stable softmax; only the max probability is needed.
  double denom = 0.0;
  for (double l : logits) denom += std::exp(l - maxlogit);
  BaselineScores s;
  s.maxlogit = -maxlogit;
  s.msp = -(1.0 / denom);  // exp(max - max) == 1 in the numerator
  return s;
}

std::vector<double> pooled_features(const PerceptualExtractor& phi,
                                    const Image& x) {
  const PhiTape tape = phi_forward(phi, x);
  const PhiConfig& c = phi.config;
  std::vector<double> out;
  for (int tap : c.taps) {
    const std::vector<double>& raw =
        tap == 0 ? x.pix : tape.post[static_cast<std::size_t>(tap) - 1];
    const int ch = tap == 0 ? c.channels
                            : c.widths[static_cast<std::size_t>(tap) - 1];
    const std::size_t plane = raw.size() / static_cast<std::size_t>(ch);
    for (int k = 0; k < ch; ++k) {
      double acc = 0.0;
      for (std::size_t p = 0; p < plane; ++p) acc += raw[k * plane + p];
      out.push_back(acc / static_cast<double>(plane));
    }
  }
  return out;
}

BaselineHead train_baseline_head(const DatasetManifest& manifest,
                                 const PerceptualExtractor& phi, int n_iter,
                                 int batch_size, double learning_rate,
                                 std::uint64_t seed) {
  require(n_iter >= 1, "baseline fit needs at least one iteration");
  const auto& train = manifest.split_indices(Split::train);
  require(!train.empty(), "train split is empty");
  int n_classes = 0;
  for (std::int64_t idx : train) {
    const int label = manifest.entries[static_cast<std::size_t>(idx)].label;
    require(label >= 0,
            "baseline training requires labels on every train entry");
    n_classes = std::max(n_classes, label + 1);
  }
  require(n_classes >= 2, "baseline training needs at least two classes");

  const PhiConfig& c = phi.config;
  SampleCache cache(manifest, c.height, c.width, c.channels);
  const int feat_dim = static_cast<int>(
      pooled_features(phi, cache.get(train.front())).size());

  BaselineHead head;
  head.n_classes = n_classes;
  head.fc = Dense::make(feat_dim, n_classes);
  Rng init_rng = Rng::stream(seed, Rng::kBaseline, 0);
  init_dense(head.fc, init_rng);

  Tensor gw = Tensor::zeros(head.fc.w.shape);
  Tensor gb = Tensor::zeros(head.fc.b.shape);
  Tensor m1w = Tensor::zeros(head.fc.w.shape), m2w = Tensor::zeros(head.fc.w.shape);
  Tensor m1b = Tensor::zeros(head.fc.b.shape), m2b = Tensor::zeros(head.fc.b.shape);

  for (int iter = 1; iter <= n_iter; ++iter) {
    Rng batch_rng =
        Rng::stream(seed, Rng::kBaseline, static_cast<std::uint64_t>(iter));
    const std::vector<std::int64_t> idxs =
        sample_batch_indices(manifest, Split::train, batch_size, batch_rng);
    std::fill(gw.v.begin(), gw.v.end(), 0.0);
    std::fill(gb.v.begin(), gb.v.end(), 0.0);

    for (std::int64_t idx : idxs) {
      const std::vector<double> f = pooled_features(phi, cache.get(idx));
      std::vector<double> logits(static_cast<std::size_t>(n_classes), 0.0);
      dense_forward(f.data(), head.fc, logits.data());
      const double mx = *std::max_element(logits.begin(), logits.end());
      double denom = 0.0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        denom += l;
      }
      const int label = manifest.entries[static_cast<std::size_t>(idx)].label;
      std::vector<double> dlogits(logits.size());
      for (std::size_t k = 0; k < logits.size(); ++k)
        dlogits[k] = logits[k] / denom - (static_cast<int>(k) == label ? 1.0 : 0.0);
      dense_backward(f.data(), head.fc, dlogits.data(), nullptr, &gw, &gb);
    }

    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double t = static_cast<double>(iter);
    const double corr1 = 1.0 - std::pow(b1, t);
    const double corr2 = 1.0 - std::pow(b2, t);
    const auto update = [&](Tensor& p, const Tensor& g, Tensor& m1,
                            Tensor& m2) {
      for (std::size_t j = 0; j < p.v.size(); ++j) {
        const double gj = g.v[j] / static_cast<double>(batch_size);
        m1.v[j] = b1 * m1.v[j] + (1.0 - b1) * gj;
        m2.v[j] = b2 * m2.v[j] + (1.0 - b2) * gj * gj;
        p.v[j] -= learning_rate * (m1.v[j] / corr1) /
                  (std::sqrt(m2.v[j] / corr2) + eps);
      }
    };
    update(head.fc.w, gw, m1w, m2w);
    update(head.fc.b, gb, m1b, m2b);
  }
  return head;
}

BaselineScores baseline_scores(const BaselineHead& head,
                               const PerceptualExtractor& phi, const Image& x) {
  const std::vector<double> f = pooled_features(phi, x);
  require(static_cast<int>(f.size()) == head.fc.in_dim,
          "baseline head feature size mismatch");
  std::vector<double> logits(static_cast<std::size_t>(head.n_classes), 0.0);
  dense_forward(f.data(), head.fc, logits.data());
  return baseline_from_logits(logits);
}

}  // namespace srood
