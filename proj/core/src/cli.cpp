#include "srood/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "srood/checkpoint.hpp"
#include "srood/common.hpp"
#include "srood/config.hpp"
#include "srood/evaluation.hpp"
#include "srood/scoring.hpp"
#include "srood/training.hpp"

namespace srood {

namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CommonArgs {
  std::string config_path;
  std::optional<std::int64_t> seed;
  std::string out_override;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Experiment config file")
      ->required();
  cmd->add_option("--seed", args.seed, "Override the config seed");
  cmd->add_option("--out", args.out_override,
                  "Override the config output directory");
}

/// Loads the config, applies CLI overrides, creates the output directory
/// and drops the resolved-config snapshot into it.
ExperimentConfig setup_run(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment_config(args.config_path);
  if (args.seed) {
    cfg.seed = static_cast<std::uint64_t>(*args.seed);
    cfg.train.seed = cfg.seed;
  }
  if (!args.out_override.empty()) cfg.out = args.out_override;
  fs::create_directories(cfg.out);
  std::ofstream snap(fs::path(cfg.out) / "config_resolved.txt");
  require(snap.good(), "cannot write config_resolved.txt");
  snap << resolved_text(cfg);
  require(snap.good(), "cannot write config_resolved.txt");
  return cfg;
}

PerceptualExtractor load_phi_or_fail(const ExperimentConfig& cfg) {
  const fs::path path = cfg.phi_checkpoint_path();
  require(fs::exists(path), "missing feature extractor checkpoint: " +
                                path.string() + " (run fit-phi first)");
  PerceptualExtractor phi = load_phi_checkpoint(path);
  require(phi.config.height == cfg.resolution &&
              phi.config.width == cfg.resolution &&
              phi.config.channels == cfg.channels,
          "feature extractor checkpoint " + path.string() +
              " does not match the configured resolution/channels");
  return phi;
}

RepairerModel load_model_or_fail(const ExperimentConfig& cfg) {
  const fs::path path = cfg.model_checkpoint_path();
  require(fs::exists(path), "missing repair model checkpoint: " +
                                path.string() + " (run train first)");
  RepairerModel model = load_repairer_checkpoint(path);
  require(model.config.height == cfg.resolution &&
              model.config.width == cfg.resolution &&
              model.config.channels == cfg.channels,
          "repair model checkpoint " + path.string() +
              " does not match the configured resolution/channels");
  return model;
}

ErosionOp load_tstar_or_fail(const ExperimentConfig& cfg) {
  const fs::path path = fs::path(cfg.out) / "tstar.txt";
  require(fs::exists(path), "missing erosion selection: " + path.string() +
                                " (run select-erosion first)");
  const auto kv = read_kv_file(path);
  const auto it = kv.find("erosion");
  require(it != kv.end(), "malformed erosion selection file: " + path.string());
  return ErosionOp::from_string(it->second);
}

std::optional<double> load_epsilon(const ExperimentConfig& cfg,
                                   bool required) {
  const fs::path path = fs::path(cfg.out) / "threshold.txt";
  if (fs::exists(path)) {
    const auto kv = read_kv_file(path);
    const auto it = kv.find("epsilon");
    require(it != kv.end(), "malformed threshold file: " + path.string());
    return std::stod(it->second);
  }
  if (cfg.threshold_method == "fixed") return cfg.threshold_epsilon;
  require(!required, "missing threshold: " + path.string() +
                         " (run calibrate first or set threshold.method = "
                         "fixed)");
  return std::nullopt;
}

int cmd_fit_phi(const CommonArgs& args) {
  const ExperimentConfig cfg = setup_run(args);
  const DatasetManifest manifest = load_manifest(cfg.manifest, cfg.data_root);

  PhiFitConfig fit;
  fit.arch = cfg.phi_config();
  fit.n_iter = cfg.phi_n_iter;
  fit.batch_size = cfg.phi_batch_size;
  fit.learning_rate = cfg.phi_learning_rate;
  fit.seed = cfg.seed;
  const PhiFitResult result = fit_phi(manifest, fit);

  const fs::path ckpt = cfg.phi_checkpoint_path();
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_phi_checkpoint(ckpt, result.phi);
  if (!result.loss_trace.empty())
    write_trace(fs::path(cfg.out) / "phi_trace.csv", result.loss_trace);
  std::cout << "wrote " << ckpt.string();
  if (!result.loss_trace.empty())
    std::cout << " (final reconstruction loss "
              << fmt_double(result.loss_trace.back()) << ")";
  std::cout << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args, bool resume) {
  const ExperimentConfig cfg = setup_run(args);
  const DatasetManifest manifest = load_manifest(cfg.manifest, cfg.data_root);
  const PerceptualExtractor phi = load_phi_or_fail(cfg);
  const ErosionSet set =
      build_erosion_set(cfg.variant, cfg.resolution, cfg.resolution);

  const TrainResult result =
      train_repairer(cfg.repairer_config(), manifest, set, phi, cfg.loss,
                     cfg.train, cfg.out, resume);

  const fs::path ckpt = cfg.model_checkpoint_path();
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_repairer_checkpoint(ckpt, result.model);
  write_trace(fs::path(cfg.out) / "trace.csv", result.loss_trace);
  std::cout << "wrote " << ckpt.string();
  if (!result.loss_trace.empty())
    std::cout << " (final mean loss " << fmt_double(result.loss_trace.back())
              << ")";
  std::cout << "\n";
  return 0;
}

int cmd_select_erosion(const CommonArgs& args) {
  const ExperimentConfig cfg = setup_run(args);
  const DatasetManifest manifest = load_manifest(cfg.manifest, cfg.data_root);
  const PerceptualExtractor phi = load_phi_or_fail(cfg);
  const RepairerModel model = load_model_or_fail(cfg);
  const ErosionSet set =
      build_erosion_set(cfg.variant, cfg.resolution, cfg.resolution);

  const SelectionResult sel = select_erosion(model, phi, set, manifest);
  const ErosionOp& op = set.ops[sel.index];

  write_kv_file(fs::path(cfg.out) / "tstar.txt",
                {{"erosion", op.to_string()},
                 {"index", std::to_string(sel.index)}});
  {
    std::ofstream csv(fs::path(cfg.out) / "erosion_selection.csv");
    require(csv.good(), "cannot write erosion_selection.csv");
    csv << "op_index,erosion,val_auroc\n";
    for (std::size_t i = 0; i < set.ops.size(); ++i) {
      csv << i << ',' << set.ops[i].to_string() << ',';
      if (i < sel.per_op_auroc.size()) csv << fmt_double(sel.per_op_auroc[i]);
      csv << '\n';
    }
    require(csv.good(), "cannot write erosion_selection.csv");
  }
  std::cout << "selected erosion " << op.to_string() << " (index "
            << sel.index << ")\n";
  return 0;
}

int cmd_calibrate(const CommonArgs& args) {
  const ExperimentConfig cfg = setup_run(args);
  double epsilon = 0.0;
  std::size_t n_scores = 0;
  if (cfg.threshold_method == "fixed") {
    epsilon = cfg.threshold_epsilon;
  } else {
    const DatasetManifest manifest =
        load_manifest(cfg.manifest, cfg.data_root);
    const PerceptualExtractor phi = load_phi_or_fail(cfg);
    const RepairerModel model = load_model_or_fail(cfg);
    const ErosionOp op = load_tstar_or_fail(cfg);
    const auto& idxs = manifest.split_indices(Split::val_id);
    require(!idxs.empty(), "split 'val-id' is empty");
    std::vector<double> scores;
    scores.reserve(idxs.size());
    for (const std::int64_t idx : idxs) {
      const Image x = load_sample(manifest, idx, cfg.resolution,
                                  cfg.resolution, cfg.channels);
      scores.push_back(ood_score(model, phi, op, x));
    }
    n_scores = scores.size();
    epsilon = calibrate_threshold(std::move(scores), cfg.threshold_quantile);
  }
  write_kv_file(fs::path(cfg.out) / "threshold.txt",
                {{"epsilon", fmt_double(epsilon)},
                 {"method", cfg.threshold_method},
                 {"quantile", fmt_double(cfg.threshold_quantile)},
                 {"n_scores", std::to_string(n_scores)}});
  std::cout << "epsilon = " << fmt_double(epsilon) << "\n";
  return 0;
}

int cmd_score(const CommonArgs& args) {
  const ExperimentConfig cfg = setup_run(args);
  const DatasetManifest manifest = load_manifest(cfg.manifest, cfg.data_root);
  const PerceptualExtractor phi = load_phi_or_fail(cfg);
  const RepairerModel model = load_model_or_fail(cfg);
  const ErosionOp op = load_tstar_or_fail(cfg);
  const std::optional<double> epsilon = load_epsilon(cfg, /*required=*/true);

  const PairEvaluation ev = evaluate_pair(model, phi, op, manifest,
                                          Split::test_id, Split::test_ood,
                                          epsilon);
  write_scores_csv((fs::path(cfg.out) / "scores.csv").string(), ev.records);
  std::cout << "scored " << ev.records.size() << " samples\n";
  return 0;
}

/// Baseline rows for the report: softmax-head scores over the test pair.
std::vector<ReportPair> baseline_pairs(const ExperimentConfig& cfg,
                                       const DatasetManifest& manifest,
                                       const PerceptualExtractor& phi) {
  const BaselineHead head = train_baseline_head(
      manifest, phi, cfg.baselines_n_iter, cfg.baselines_batch_size,
      cfg.baselines_learning_rate, cfg.seed);
  std::vector<double> msp_id, msp_ood, ml_id, ml_ood;
  for (const Split split : {Split::test_id, Split::test_ood}) {
    for (const std::int64_t idx : manifest.split_indices(split)) {
      const Image x = load_sample(manifest, idx, cfg.resolution,
                                  cfg.resolution, cfg.channels);
      const BaselineScores s = baseline_scores(head, phi, x);
      if (split == Split::test_id) {
        msp_id.push_back(s.msp);
        ml_id.push_back(s.maxlogit);
      } else {
        msp_ood.push_back(s.msp);
        ml_ood.push_back(s.maxlogit);
      }
    }
  }
  const auto make = [&](const std::string& variant,
                        const std::vector<double>& id,
                        const std::vector<double>& ood) {
    ReportPair p;
    p.id_name = cfg.id_name;
    p.ood_name = cfg.ood_name;
    p.variant = variant;
    p.erosion = "-";
    p.seed = cfg.seed;
    p.id_scores = id;
    p.ood_scores = ood;
    p.auroc = auroc(id, ood);
    return p;
  };
  return {make("msp", msp_id, msp_ood), make("maxlogit", ml_id, ml_ood)};
}

int cmd_evaluate(const CommonArgs& args) {
  const ExperimentConfig cfg = setup_run(args);
  const DatasetManifest manifest = load_manifest(cfg.manifest, cfg.data_root);
  const PerceptualExtractor phi = load_phi_or_fail(cfg);
  const RepairerModel model = load_model_or_fail(cfg);
  const ErosionOp op = load_tstar_or_fail(cfg);
  const std::optional<double> epsilon = load_epsilon(cfg, /*required=*/false);

  const PairEvaluation ev = evaluate_pair(model, phi, op, manifest,
                                          Split::test_id, Split::test_ood,
                                          epsilon);
  write_scores_csv((fs::path(cfg.out) / "scores.csv").string(), ev.records);

  ReportPair pair;
  pair.id_name = cfg.id_name;
  pair.ood_name = cfg.ood_name;
  pair.variant = cfg.variant;
  pair.erosion = op.to_string();
  pair.seed = cfg.seed;
  pair.auroc = ev.auroc;
  for (const ScoreRecord& r : ev.records)
    (r.split == Split::test_id ? pair.id_scores : pair.ood_scores)
        .push_back(r.score);

  std::vector<ReportPair> pairs = {pair};
  if (cfg.baselines_enabled) {
    const std::vector<ReportPair> extra = baseline_pairs(cfg, manifest, phi);
    pairs.insert(pairs.end(), extra.begin(), extra.end());
  }
  emit_report(pairs, {}, config_hash_hex(cfg), cfg.out);
  std::cout << "auroc = " << fmt_double(ev.auroc) << "\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& kind) {
  const ExperimentConfig cfg = setup_run(args);
  const DatasetManifest manifest = load_manifest(cfg.manifest, cfg.data_root);
  const PerceptualExtractor phi = load_phi_or_fail(cfg);

  AblationContext ctx;
  ctx.manifest = &manifest;
  ctx.phi = &phi;
  ctx.arch = cfg.repairer_config();
  ctx.weights = cfg.loss;
  ctx.train = cfg.train;
  ctx.out_dir = fs::path(cfg.out) / ("ablation_" + kind);

  RepairerModel model;
  ErosionOp op;
  if (kind == "loss" || kind == "offset") {
    model = load_model_or_fail(cfg);
    ctx.model = &model;
    if (kind == "loss") {
      op = load_tstar_or_fail(cfg);
      ctx.op = op;
    }
  }

  const AblationTable table = run_ablation(kind, ctx);
  {
    std::ofstream csv(fs::path(cfg.out) / ("ablation_" + kind + ".csv"));
    require(csv.good(), "cannot write ablation csv");
    csv << "label,auroc\n";
    for (const AblationRow& row : table.rows)
      csv << row.label << ',' << fmt_double(row.auroc) << '\n';
    require(csv.good(), "cannot write ablation csv");
  }
  for (const AblationRow& row : table.rows)
    std::cout << row.label << ": auroc = " << fmt_double(row.auroc) << "\n";
  return 0;
}

int cmd_diagnose(const CommonArgs& args) {
  const ExperimentConfig cfg = setup_run(args);
  const DatasetManifest manifest = load_manifest(cfg.manifest, cfg.data_root);
  const RepairerModel model = load_model_or_fail(cfg);
  const ErosionOp op = load_tstar_or_fail(cfg);

  const LipschitzDiagnostics d = lipschitz_diagnostics(
      model, op, manifest, cfg.diagnostics_max_samples, cfg.seed);
  write_kv_file(
      fs::path(cfg.out) / "diagnostics.txt",
      {{"lip_estimate", fmt_double(d.lip_estimate)},
       {"dz_id_mean", fmt_double(d.dz_id_mean)},
       {"dz_id_max", fmt_double(d.dz_id_max)},
       {"dz_ood_mean", fmt_double(d.dz_ood_mean)},
       {"dz_ood_max", fmt_double(d.dz_ood_max)},
       {"dx_id_mean", fmt_double(d.dx_id_mean)},
       {"dx_id_max", fmt_double(d.dx_id_max)},
       {"dx_ood_mean", fmt_double(d.dx_ood_mean)},
       {"dx_ood_max", fmt_double(d.dx_ood_max)}});
  std::cout << "lip_estimate = " << fmt_double(d.lip_estimate) << "\n";
  if (d.dz_id_mean > 0.0)
    std::cout << "dz ood/id mean ratio = "
              << fmt_double(d.dz_ood_mean / d.dz_id_mean) << "\n";
  return 0;
}

int cmd_report(const CommonArgs& args) {
  const ExperimentConfig cfg = setup_run(args);
  const DatasetManifest manifest = load_manifest(cfg.manifest, cfg.data_root);
  const PerceptualExtractor phi = load_phi_or_fail(cfg);
  const RepairerModel model = load_model_or_fail(cfg);
  const ErosionOp op = load_tstar_or_fail(cfg);

  const fs::path scores_path = fs::path(cfg.out) / "scores.csv";
  require(fs::exists(scores_path), "missing scores: " + scores_path.string() +
                                       " (run score or evaluate first)");
  const std::vector<ScoreRecord> records =
      read_scores_csv(scores_path.string());

  ReportPair pair;
  pair.id_name = cfg.id_name;
  pair.ood_name = cfg.ood_name;
  pair.variant = cfg.variant;
  pair.erosion = op.to_string();
  pair.seed = cfg.seed;
  for (const ScoreRecord& r : records)
    (r.split == Split::test_id ? pair.id_scores : pair.ood_scores)
        .push_back(r.score);
  require(!pair.id_scores.empty() && !pair.ood_scores.empty(),
          "scores.csv does not cover both test splits");
  pair.auroc = auroc(pair.id_scores, pair.ood_scores);

  // Repair grids over the first few samples of each test split.
  std::vector<GridImages> grids;
  for (const Split split : {Split::test_id, Split::test_ood}) {
    const auto& idxs = manifest.split_indices(split);
    GridImages g;
    g.name = split == Split::test_id ? cfg.id_name : cfg.ood_name;
    const std::size_t take = std::min<std::size_t>(
        idxs.size(), static_cast<std::size_t>(cfg.report_grid_samples));
    for (std::size_t i = 0; i < take; ++i) {
      const Image x = load_sample(manifest, idxs[i], cfg.resolution,
                                  cfg.resolution, cfg.channels);
      const Image eroded = apply_erosion(x, op);
      g.original.push_back(x);
      g.eroded.push_back(eroded);
      g.repaired.push_back(repair(model, eroded));
    }
    grids.push_back(std::move(g));
  }

  emit_report({pair}, grids, config_hash_hex(cfg), cfg.out);
  std::cout << "wrote report to " << cfg.out << "\n";
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"Out-of-distribution detection via sample repairing"};
  app.name("srood");
  app.require_subcommand(1);

  CommonArgs fit_phi_args, train_args, select_args, calibrate_args,
      score_args, evaluate_args, ablate_args, diagnose_args, report_args;
  bool train_resume = false;
  std::string ablate_kind;

  add_common(app.add_subcommand("fit-phi",
                                "Fit the perceptual feature extractor"),
             fit_phi_args);
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train the repair network");
  add_common(train_cmd, train_args);
  train_cmd->add_flag("--resume", train_resume,
                      "Continue from the newest periodic checkpoint");
  add_common(app.add_subcommand("select-erosion",
                                "Pick the erosion with the best validation "
                                "AUROC"),
             select_args);
  add_common(app.add_subcommand("calibrate",
                                "Calibrate the decision threshold on ID "
                                "validation scores"),
             calibrate_args);
  add_common(app.add_subcommand("score", "Score the test splits"),
             score_args);
  add_common(app.add_subcommand("evaluate",
                                "Score the test splits and report AUROC"),
             evaluate_args);
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Run an ablation");
  add_common(ablate_cmd, ablate_args);
  ablate_cmd->add_option("--kind", ablate_kind, "loss | offset | variant")
      ->required();
  add_common(app.add_subcommand("diagnose",
                                "Decoder smoothness and displacement "
                                "diagnostics"),
             diagnose_args);
  add_common(app.add_subcommand("report",
                                "Render report tables, histograms and repair "
                                "grids"),
             report_args);

  std::vector<const char*> argv;
  argv.push_back("srood");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (app.got_subcommand("fit-phi")) return cmd_fit_phi(fit_phi_args);
    if (app.got_subcommand("train")) return cmd_train(train_args, train_resume);
    if (app.got_subcommand("select-erosion"))
      return cmd_select_erosion(select_args);
    if (app.got_subcommand("calibrate")) return cmd_calibrate(calibrate_args);
    if (app.got_subcommand("score")) return cmd_score(score_args);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(evaluate_args);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args, ablate_kind);
    if (app.got_subcommand("diagnose")) return cmd_diagnose(diagnose_args);
    if (app.got_subcommand("report")) return cmd_report(report_args);
    fail("no subcommand given");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace srood
