#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "srood/dataset.hpp"
#include "srood/erosion.hpp"
#include "srood/metrics.hpp"
#include "srood/repairer.hpp"
#include "srood/scoring.hpp"
#include "srood/training.hpp"

namespace srood {

/// Area under the ROC curve for separating `ood_scores` (positives) from
/// `id_scores`, tie-aware (Mann-Whitney).  Pair wins are counted in exact
/// integer half-units and the final ratio is placed on the 2^-53 grid, so
/// auroc(a, b) == 1 - auroc(b, a) holds exactly in floating point.
double auroc(const std::vector<double>& id_scores,
             const std::vector<double>& ood_scores);

struct PairEvaluation {
  double auroc = 0.0;
  std::int64_t n_id = 0;
  std::int64_t n_ood = 0;
  std::vector<ScoreRecord> records;  // ID split then OOD split, manifest order
};

/// Scores two splits under one erosion op and computes the AUROC.  With a
/// threshold, records carry OOD decisions.
PairEvaluation evaluate_pair(const RepairerModel& model,
                             const PerceptualExtractor& phi,
                             const ErosionOp& op,
                             const DatasetManifest& manifest, Split id_split,
                             Split ood_split, std::optional<double> epsilon);

struct AblationRow {
  std::string label;
  double auroc = 0.0;
};

struct AblationTable {
  std::string kind;
  std::vector<AblationRow> rows;
};

/// Everything an ablation might need.  `model`/`op` drive the loss and
/// offset kinds; the variant kind retrains from `arch`/`train` per variant.
struct AblationContext {
  const DatasetManifest* manifest = nullptr;
  const PerceptualExtractor* phi = nullptr;
  const RepairerModel* model = nullptr;
  ErosionOp op;
  RepairerConfig arch;
  LossWeights weights;
  TrainConfig train;
  std::filesystem::path out_dir;
};

/// kind "loss": scores the test pair with the perceptual metric and with
/// plain mean squared pixel error, one row each.
/// kind "offset": scores the test pair under centre masks of side H/2 at
/// horizontal offsets 0, H/8 and H/4, one row per offset.
/// kind "variant": trains and evaluates rec, sr and inpaint end to end
/// (erosion selected on the validation splits), one row per variant.
AblationTable run_ablation(const std::string& kind, const AblationContext& ctx);

struct LipschitzDiagnostics {
  double lip_estimate = 0.0;   // max probe ratio over the decoder
  double dz_id_mean = 0.0;     // ||f(x) - f(T(x))|| over ID samples
  double dz_id_max = 0.0;
  double dz_ood_mean = 0.0;
  double dz_ood_max = 0.0;
  double dx_id_mean = 0.0;     // ||x - repair(x)|| over ID samples
  double dx_id_max = 0.0;
  double dx_ood_mean = 0.0;
  double dx_ood_max = 0.0;
};

/// Estimates a local Lipschitz constant of `g` by random probing: the max
/// over probes and base points of ||g(z + sigma u) - g(z)|| / sigma with u
/// a uniformly random unit vector.
double estimate_lipschitz(
    const std::function<std::vector<double>(const std::vector<double>&)>& g,
    const std::vector<std::vector<double>>& base_points, double sigma,
    int probes, Rng& rng);

/// Decoder smoothness and latent/pixel displacement statistics under `op`,
/// over up to `max_samples` of each test split.  Reported, not asserted:
/// the interesting read is the OOD/ID ratio of the dz statistics.
LipschitzDiagnostics lipschitz_diagnostics(const RepairerModel& model,
                                           const ErosionOp& op,
                                           const DatasetManifest& manifest,
                                           int max_samples, std::uint64_t seed);

/// One table row plus the raw scores behind it, for report rendering.
struct ReportPair {
  std::string id_name, ood_name, variant, erosion;
  std::uint64_t seed = 0;
  double auroc = 0.0;
  std::vector<double> id_scores, ood_scores;
};

/// Sample triples rendered into a repair grid image (rows: original,
/// eroded, repaired).
struct GridImages {
  std::string name;
  std::vector<Image> original, eroded, repaired;
};

/// Writes report.csv, report.txt, metadata.txt, one score histogram PNG per
/// pair and one grid PNG per GridImages entry into `out_dir`.  Apart from
/// metadata.txt (which carries a timestamp), outputs depend only on the
/// inputs.
void emit_report(const std::vector<ReportPair>& pairs,
                 const std::vector<GridImages>& grids,
                 const std::string& config_hash,
                 const std::filesystem::path& out_dir);

}  // namespace srood
