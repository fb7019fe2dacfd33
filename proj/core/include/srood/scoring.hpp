#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "srood/dataset.hpp"
#include "srood/erosion.hpp"
#include "srood/metrics.hpp"
#include "srood/repairer.hpp"

namespace srood {

/// OOD score of one sample: the perceptual distance between the repaired
/// erosion of x and x itself.  Higher means more out-of-distribution.
double ood_score(const RepairerModel& model, const PerceptualExtractor& phi,
                 const ErosionOp& op, const Image& x);

/// Decision rule: OOD iff score strictly exceeds the threshold.
inline bool classify_ood(double score, double epsilon) {
  return score > epsilon;
}

struct SelectionResult {
  std::size_t index = 0;
  /// Validation AUROC per candidate op; empty when the set is a singleton
  /// (nothing to compare) or for the label-free criterion.
  std::vector<double> per_op_auroc;
  /// Label-free criterion values (variance / mean^2), when used.
  std::vector<double> per_op_dispersion;
};

/// Index of the maximal value; ties resolve to the lowest index.
std::size_t argmax_lowest_tie(const std::vector<double>& values);

/// Picks the erosion whose scores separate val-id from val-ood best
/// (highest validation AUROC, ties to the lowest index).  A singleton set
/// returns index 0 without computing anything.
SelectionResult select_erosion(const RepairerModel& model,
                               const PerceptualExtractor& phi,
                               const ErosionSet& set,
                               const DatasetManifest& manifest);

/// Label-free fallback: picks the op whose val-id scores have the largest
/// relative dispersion var(s) / mean(s)^2.  Useful when no validation OOD
/// split exists; off by default in the pipeline.
SelectionResult select_erosion_unlabeled(const RepairerModel& model,
                                         const PerceptualExtractor& phi,
                                         const ErosionSet& set,
                                         const DatasetManifest& manifest);

/// Threshold at the q-quantile of ID validation scores, lower-interpolated:
/// sorted ascending, index max(0, ceil(q*n) - 1).  q in (0, 1].
double calibrate_threshold(std::vector<double> id_scores, double quantile);

/// One scored sample, as written to scores.csv.
struct ScoreRecord {
  std::int64_t sample_id = 0;  // manifest row index
  Split split = Split::test_id;
  double score = 0.0;
  int decision = -1;  // 1 OOD, 0 ID, -1 no threshold applied
  std::string erosion;
};

void write_scores_csv(const std::string& path,
                      const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> read_scores_csv(const std::string& path);

/// Softmax-classifier baselines over pooled extractor features.
struct BaselineHead {
  int n_classes = 0;
  Dense fc;
};

struct BaselineScores {
  double msp = 0.0;       // negated max softmax probability
  double maxlogit = 0.0;  // negated max logit
};

/// Pure scoring rule on a logit vector; both scores rise with OOD-ness.
BaselineScores baseline_from_logits(const std::vector<double>& logits);

/// Trains a linear softmax head on globally average-pooled tap activations
/// of labelled train samples.  Every train entry must carry a label.
BaselineHead train_baseline_head(const DatasetManifest& manifest,
                                 const PerceptualExtractor& phi, int n_iter,
                                 int batch_size, double learning_rate,
                                 std::uint64_t seed);

BaselineScores baseline_scores(const BaselineHead& head,
                               const PerceptualExtractor& phi, const Image& x);

/// Pooled feature vector used by the baseline head (per-channel spatial
/// means of each tapped activation map, before normalization).
std::vector<double> pooled_features(const PerceptualExtractor& phi,
                                    const Image& x);

}  // namespace srood
