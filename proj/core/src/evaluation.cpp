#include "srood/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "srood/common.hpp"
#include "srood/image_io.hpp"

namespace srood {

double auroc(const std::vector<double>& id_scores,
             const std::vector<double>& ood_scores) {
  require(!id_scores.empty() && !ood_scores.empty(),
          "auroc needs at least one score on each side");
  for (double v : id_scores)
    require(std::isfinite(v), "non-finite score passed to auroc");
  for (double v : ood_scores)
    require(std::isfinite(v), "non-finite score passed to auroc");

  std::vector<double> sid = id_scores;
  std::vector<double> sood = ood_scores;
  std::sort(sid.begin(), sid.end());
  std::sort(sood.begin(), sood.end());

  // Mann-Whitney pair wins in exact integer half-units: 2 per OOD > ID pair,
  // 1 per tie.  Both cursors advance monotonically over the sorted arrays.
  const std::size_t n = sid.size();
  std::size_t lo = 0, hi = 0;
  long long half_wins = 0;
  for (double o : sood) {
    while (lo < n && sid[lo] < o) ++lo;
    while (hi < n && sid[hi] <= o) ++hi;
    half_wins += 2 * static_cast<long long>(lo) +
                 static_cast<long long>(hi - lo);
  }
  const long long total =
      2 * static_cast<long long>(n) * static_cast<long long>(sood.size());

  // The complement identity auroc(a,b) == 1 - auroc(b,a) must hold exactly:
  // swapping sides complements the integer win count, so both orientations
  // share the same small-side ratio.  That ratio is snapped to the 2^-53
  // grid, where 1 - q is exactly representable for q <= 1/2.
  const long long small = std::min(half_wins, total - half_wins);
  const double q = static_cast<double>(small) / static_cast<double>(total);
  constexpr double kGrid = 9007199254740992.0;  // 2^53
  const double q_snapped = std::nearbyint(q * kGrid) / kGrid;
  return half_wins <= total - half_wins ? q_snapped : 1.0 - q_snapped;
}

namespace {

std::vector<ScoreRecord> score_split(const RepairerModel& model,
                                     const PerceptualExtractor& phi,
                                     const ErosionOp& op,
                                     const DatasetManifest& manifest,
                                     Split split,
                                     std::optional<double> epsilon) {
  const auto& idxs = manifest.split_indices(split);
  require(!idxs.empty(),
          std::string("split '") + split_name(split) + "' is empty");
  std::vector<ScoreRecord> records;
  records.reserve(idxs.size());
  const std::string op_name = op.to_string();
  for (std::int64_t idx : idxs) {
    const Image x = load_sample(manifest, idx, model.config.height,
                                model.config.width, model.config.channels);
    ScoreRecord r;
    r.sample_id = idx;
    r.split = split;
    r.score = ood_score(model, phi, op, x);
    r.decision = epsilon ? (classify_ood(r.score, *epsilon) ? 1 : 0) : -1;
    r.erosion = op_name;
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<double> scores_of(const std::vector<ScoreRecord>& records,
                              Split split) {
  std::vector<double> out;
  for (const ScoreRecord& r : records)
    if (r.split == split) out.push_back(r.score);
  return out;
}

}  // namespace

PairEvaluation evaluate_pair(const RepairerModel& model,
                             const PerceptualExtractor& phi,
                             const ErosionOp& op,
                             const DatasetManifest& manifest, Split id_split,
                             Split ood_split, std::optional<double> epsilon) {
  PairEvaluation ev;
  ev.records = score_split(model, phi, op, manifest, id_split, epsilon);
  ev.n_id = static_cast<std::int64_t>(ev.records.size());
  std::vector<ScoreRecord> ood =
      score_split(model, phi, op, manifest, ood_split, epsilon);
  ev.n_ood = static_cast<std::int64_t>(ood.size());
  ev.records.insert(ev.records.end(), ood.begin(), ood.end());
  ev.auroc = auroc(scores_of(ev.records, id_split),
                   scores_of(ev.records, ood_split));
  return ev;
}

namespace {

AblationTable ablate_loss(const AblationContext& ctx) {
  require(ctx.model != nullptr && ctx.phi != nullptr && ctx.manifest != nullptr,
          "loss ablation needs a trained model");
  // Score functions compared: plain pixel error, the weighted training
  // combination, and the perceptual distance alone.
  std::vector<double> l2_s[2], both_s[2], lpips_s[2];
  for (const Split split : {Split::test_id, Split::test_ood}) {
    const auto& idxs = ctx.manifest->split_indices(split);
    require(!idxs.empty(),
            std::string("split '") + split_name(split) + "' is empty");
    const int side = split == Split::test_ood ? 1 : 0;
    for (std::int64_t idx : idxs) {
      const Image x =
          load_sample(*ctx.manifest, idx, ctx.model->config.height,
                      ctx.model->config.width, ctx.model->config.channels);
      const Image repaired = repair(*ctx.model, apply_erosion(x, ctx.op));
      const double s_lpips = lpips_distance(*ctx.phi, repaired, x);
      const double s_l2 = l2_loss(repaired, x);
      l2_s[side].push_back(s_l2);
      both_s[side].push_back(ctx.weights.lambda1 * s_l2 +
                             ctx.weights.lambda2 * s_lpips);
      lpips_s[side].push_back(s_lpips);
    }
  }
  AblationTable t;
  t.kind = "loss";
  t.rows.push_back({"l2", auroc(l2_s[0], l2_s[1])});
  t.rows.push_back({"l2+lpips", auroc(both_s[0], both_s[1])});
  t.rows.push_back({"lpips", auroc(lpips_s[0], lpips_s[1])});
  return t;
}

AblationTable ablate_offset(const AblationContext& ctx) {
  require(ctx.model != nullptr && ctx.phi != nullptr && ctx.manifest != nullptr,
          "offset ablation needs a trained model");
  const int h = ctx.model->config.height;
  AblationTable t;
  t.kind = "offset";
  for (const int off : {0, h / 8, h / 4}) {
    const ErosionOp op = ErosionOp::blackout({h / 2, h / 2, 0, off});
    const PairEvaluation ev =
        evaluate_pair(*ctx.model, *ctx.phi, op, *ctx.manifest, Split::test_id,
                      Split::test_ood, std::nullopt);
    t.rows.push_back({"offset=" + std::to_string(off), ev.auroc});
  }
  return t;
}

AblationTable ablate_variant(const AblationContext& ctx) {
  require(ctx.phi != nullptr && ctx.manifest != nullptr,
          "variant ablation needs a manifest and extractor");
  AblationTable t;
  t.kind = "variant";
  for (const char* variant : {"rec", "sr", "inpaint"}) {
    const ErosionSet set =
        build_erosion_set(variant, ctx.arch.height, ctx.arch.width);
    TrainConfig sub = ctx.train;
    sub.checkpoint_every = 0;
    const std::filesystem::path sub_dir =
        ctx.out_dir.empty()
            ? std::filesystem::path()
            : ctx.out_dir / (std::string("variant_") + variant);
    if (!sub_dir.empty()) std::filesystem::create_directories(sub_dir);
    const TrainResult trained = train_repairer(
        ctx.arch, *ctx.manifest, set, *ctx.phi, ctx.weights, sub, sub_dir);
    const SelectionResult sel =
        select_erosion(trained.model, *ctx.phi, set, *ctx.manifest);
    const ErosionOp& op = set.ops[sel.index];
    const PairEvaluation ev =
        evaluate_pair(trained.model, *ctx.phi, op, *ctx.manifest,
                      Split::test_id, Split::test_ood, std::nullopt);
    t.rows.push_back({variant, ev.auroc});
  }
  return t;
}

}  // namespace

AblationTable run_ablation(const std::string& kind,
                           const AblationContext& ctx) {
  if (kind == "loss") return ablate_loss(ctx);
  if (kind == "offset") return ablate_offset(ctx);
  if (kind == "variant") return ablate_variant(ctx);
  fail("unknown ablation kind '" + kind +
       "' (expected loss, offset or variant)");
}

double estimate_lipschitz(
    const std::function<std::vector<double>(const std::vector<double>&)>& g,
    const std::vector<std::vector<double>>& base_points, double sigma,
    int probes, Rng& rng) {
  require(!base_points.empty(), "lipschitz estimation needs base points");
  require(sigma > 0.0, "probe radius must be positive");
  require(probes >= 1, "probe count must be positive");

  std::vector<std::vector<double>> g_base(base_points.size());
  double best = 0.0;
  for (int p = 0; p < probes; ++p) {
    const std::size_t bi = static_cast<std::size_t>(p) % base_points.size();
    const std::vector<double>& z = base_points[bi];
    if (g_base[bi].empty()) g_base[bi] = g(z);

    std::vector<double> u(z.size());
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : u) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm == 0.0);

    std::vector<double> zp = z;
    for (std::size_t i = 0; i < zp.size(); ++i)
      zp[i] += sigma * (u[i] / norm);
    const std::vector<double> gp = g(zp);
    require(gp.size() == g_base[bi].size(),
            "probed function changed output dimension");
    double dist = 0.0;
    for (std::size_t i = 0; i < gp.size(); ++i) {
      const double d = gp[i] - g_base[bi][i];
      dist += d * d;
    }
    best = std::max(best, std::sqrt(dist) / sigma);
  }
  return best;
}

namespace {

struct RunningNorms {
  double sum = 0.0;
  double max = 0.0;
  long count = 0;

  void add(double v) {
    sum += v;
    max = std::max(max, v);
    ++count;
  }
  double mean() const { return count ? sum / count : 0.0; }
};

double vec_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

LipschitzDiagnostics lipschitz_diagnostics(const RepairerModel& model,
                                           const ErosionOp& op,
                                           const DatasetManifest& manifest,
                                           int max_samples,
                                           std::uint64_t seed) {
  require(max_samples >= 1, "max_samples must be positive");
  LipschitzDiagnostics d;

  std::vector<std::vector<double>> base_points;
  RunningNorms dz_id, dz_ood, dx_id, dx_ood;
  for (const Split split : {Split::test_id, Split::test_ood}) {
    const auto& idxs = manifest.split_indices(split);
    require(!idxs.empty(),
            std::string("split '") + split_name(split) + "' is empty");
    const std::size_t take =
        std::min<std::size_t>(idxs.size(), static_cast<std::size_t>(max_samples));
    for (std::size_t i = 0; i < take; ++i) {
      const Image x = load_sample(manifest, idxs[i], model.config.height,
                                  model.config.width, model.config.channels);
      const std::vector<double> z = encode(model, x);
      const std::vector<double> z_eroded = encode(model, apply_erosion(x, op));
      const double dz = vec_dist(z, z_eroded);
      const Image repaired = repair(model, x);
      double dx = 0.0;
      for (std::size_t j = 0; j < x.pix.size(); ++j) {
        const double diff = x.pix[j] - repaired.pix[j];
        dx += diff * diff;
      }
      dx = std::sqrt(dx);
      if (split == Split::test_id) {
        dz_id.add(dz);
        dx_id.add(dx);
        base_points.push_back(style_mix(model, z));
      } else {
        dz_ood.add(dz);
        dx_ood.add(dx);
      }
    }
  }

  Rng rng = Rng::stream(seed, Rng::kDiagnostics);
  const auto decode_fn =
      [&model](const std::vector<double>& z) -> std::vector<double> {
    return decode(model, z).pix;
  };
  d.lip_estimate =
      estimate_lipschitz(decode_fn, base_points, /*sigma=*/1e-3,
                         /*probes=*/200, rng);
  d.dz_id_mean = dz_id.mean();
  d.dz_id_max = dz_id.max;
  d.dz_ood_mean = dz_ood.mean();
  d.dz_ood_max = dz_ood.max;
  d.dx_id_mean = dx_id.mean();
  d.dx_id_max = dx_id.max;
  d.dx_ood_mean = dx_ood.mean();
  d.dx_ood_max = dx_ood.max;
  return d;
}

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
            c == '_')
               ? c
               : '_';
  return out;
}

/// 320x200 grayscale overlay histogram: ID bars light, OOD bars dark,
/// overlap darkest.
Image render_histogram(const std::vector<double>& id_scores,
                       const std::vector<double>& ood_scores) {
  const int w = 320, h = 200, margin = 10, bins = 32;
  double lo = id_scores.front(), hi = id_scores.front();
  for (double v : id_scores) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : ood_scores) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) hi = lo + 1e-12;

  std::vector<long> id_bins(bins, 0), ood_bins(bins, 0);
  const auto fill = [&](const std::vector<double>& scores,
                        std::vector<long>& out) {
    for (double v : scores) {
      int b = static_cast<int>((v - lo) / (hi - lo) * bins);
      b = std::clamp(b, 0, bins - 1);
      ++out[static_cast<std::size_t>(b)];
    }
  };
  fill(id_scores, id_bins);
  fill(ood_scores, ood_bins);
  long peak = 1;
  for (long v : id_bins) peak = std::max(peak, v);
  for (long v : ood_bins) peak = std::max(peak, v);

  Image im = Image::zeros(h, w, 1);
  std::fill(im.pix.begin(), im.pix.end(), 1.0);
  const int plot_w = w - 2 * margin, plot_h = h - 2 * margin;
  const int bar_w = plot_w / bins;
  const auto draw = [&](const std::vector<long>& hist, double intensity) {
    for (int b = 0; b < bins; ++b) {
      const int bar_h = static_cast<int>(
          std::lround(static_cast<double>(hist[static_cast<std::size_t>(b)]) /
                      static_cast<double>(peak) * plot_h));
      for (int y = 0; y < bar_h; ++y)
        for (int x = 0; x < bar_w - 1; ++x) {
          double& px = im.at(0, h - 1 - margin - y, margin + b * bar_w + x);
          px = std::min(px, intensity);
        }
    }
  };
  draw(id_bins, 0.65);
  draw(ood_bins, 0.25);
  for (int x = margin; x < w - margin; ++x) im.at(0, h - margin, x) = 0.0;
  return im;
}

Image render_grid(const GridImages& g) {
  require(!g.original.empty(), "grid needs at least one sample column");
  require(g.original.size() == g.eroded.size() &&
              g.original.size() == g.repaired.size(),
          "grid rows must have equal length");
  const Image& first = g.original.front();
  const int sep = 2;
  const int cols = static_cast<int>(g.original.size());
  const int gw = cols * first.width + (cols + 1) * sep;
  const int gh = 3 * first.height + 4 * sep;
  Image canvas = Image::zeros(gh, gw, first.channels);
  std::fill(canvas.pix.begin(), canvas.pix.end(), 1.0);
  const std::vector<const std::vector<Image>*> rows = {&g.original, &g.eroded,
                                                       &g.repaired};
  for (int r = 0; r < 3; ++r) {
    for (int col = 0; col < cols; ++col) {
      const Image& cell = (*rows[static_cast<std::size_t>(r)])[static_cast<std::size_t>(col)];
      require(cell.same_shape(first), "grid cells must share one shape");
      const int y0 = sep + r * (first.height + sep);
      const int x0 = sep + col * (first.width + sep);
      for (int c = 0; c < first.channels; ++c)
        for (int y = 0; y < first.height; ++y)
          for (int x = 0; x < first.width; ++x)
            canvas.at(c, y0 + y, x0 + x) = cell.at(c, y, x);
    }
  }
  return canvas;
}

}  // namespace

void emit_report(const std::vector<ReportPair>& pairs,
                 const std::vector<GridImages>& grids,
                 const std::string& config_hash,
                 const std::filesystem::path& out_dir) {
  require(!pairs.empty(), "report needs at least one evaluated pair");
  std::filesystem::create_directories(out_dir);

  {
    std::ofstream csv(out_dir / "report.csv");
    require(csv.good(), "cannot write report.csv");
    csv << "id_dataset,ood_dataset,variant,erosion,auroc,n_id,n_ood,seed\n";
    char buf[40];
    for (const ReportPair& p : pairs) {
      std::snprintf(buf, sizeof buf, "%.17g", p.auroc);
      csv << p.id_name << ',' << p.ood_name << ',' << p.variant << ','
          << p.erosion << ',' << buf << ',' << p.id_scores.size() << ','
          << p.ood_scores.size() << ',' << p.seed << '\n';
    }
    require(csv.good(), "cannot write report.csv");
  }

  {
    std::ofstream txt(out_dir / "report.txt");
    require(txt.good(), "cannot write report.txt");
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %-12s %-8s %-16s %8s %6s %6s\n",
                  "id", "ood", "variant", "erosion", "auroc", "n_id", "n_ood");
    txt << line;
    for (const ReportPair& p : pairs) {
      std::snprintf(line, sizeof line, "%-12s %-12s %-8s %-16s %8.4f %6zu %6zu\n",
                    p.id_name.c_str(), p.ood_name.c_str(), p.variant.c_str(),
                    p.erosion.c_str(), p.auroc, p.id_scores.size(),
                    p.ood_scores.size());
      txt << line;
    }
    require(txt.good(), "cannot write report.txt");
  }

  for (const ReportPair& p : pairs) {
    const std::string name = "hist_" + sanitize(p.variant) + "_" +
                             sanitize(p.id_name) + "_vs_" +
                             sanitize(p.ood_name) + ".png";
    write_png((out_dir / name).string(),
              render_histogram(p.id_scores, p.ood_scores));
  }

  for (const GridImages& g : grids)
    write_png((out_dir / ("grid_" + sanitize(g.name) + ".png")).string(),
              render_grid(g));

  {
    // The timestamp lives here and only here; every other artifact is a
    // pure function of config and seed.
    std::ofstream meta(out_dir / "metadata.txt");
    require(meta.good(), "cannot write metadata.txt");
    char stamp[32] = "unknown";
    const std::time_t now = std::time(nullptr);
    if (std::tm tm_utc{}; gmtime_r(&now, &tm_utc) != nullptr)
      std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    meta << "created=" << stamp << "\n";
    meta << "config_hash=" << config_hash << "\n";
    meta << "tool=srood/0.1.0\n";
    require(meta.good(), "cannot write metadata.txt");
  }
}

}  // namespace srood
