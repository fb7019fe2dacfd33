#include "srood/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "srood/checkpoint.hpp"
#include "srood/common.hpp"

namespace srood {

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adaptive-moments") return Optimizer::adaptive_moments;
  fail("unknown optimizer '" + name + "' (expected sgd or adaptive-moments)");
}

const char* optimizer_name(Optimizer o) {
  return o == Optimizer::sgd ? "sgd" : "adaptive-moments";
}

OptimizerState OptimizerState::zeros_like(const RepairerModel& m,
                                          Optimizer opt) {
  OptimizerState s;
  if (opt == Optimizer::adaptive_moments) {
    for_each_param(m, [&](const std::string&, const Tensor& t) {
      s.m1.push_back(Tensor::zeros(t.shape));
      s.m2.push_back(Tensor::zeros(t.shape));
    });
  }
  return s;
}

namespace {

std::vector<Tensor*> param_ptrs(RepairerModel& m) {
  std::vector<Tensor*> out;
  for_each_param(m, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> grad_ptrs(const RepairerGrads& g) {
  std::vector<const Tensor*> out;
  for_each_grad(const_cast<RepairerGrads&>(g),
                [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

}  // namespace

void gradient_step(RepairerModel& model, const RepairerGrads& grads,
                   const TrainConfig& cfg, OptimizerState& state) {
  require(cfg.batch_size >= 1, "batch size must be positive");
  require(cfg.learning_rate > 0.0, "learning rate must be positive");
  const std::vector<Tensor*> params = param_ptrs(model);
  const std::vector<const Tensor*> gs = grad_ptrs(grads);
  require(params.size() == gs.size(), "gradient container shape mismatch");
  state.step += 1;

  if (cfg.optimizer == Optimizer::sgd) {
    const double scale = cfg.learning_rate / cfg.batch_size;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = *gs[i];
      for (std::size_t j = 0; j < p.v.size(); ++j) p.v[j] -= scale * g.v[j];
    }
    return;
  }

  require(state.m1.size() == params.size() && state.m2.size() == params.size(),
          "optimizer state does not match the model");
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(b1, t);
  const double corr2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *gs[i];
    Tensor& m1 = state.m1[i];
    Tensor& m2 = state.m2[i];
    for (std::size_t j = 0; j < p.v.size(); ++j) {
      const double gj = g.v[j] / static_cast<double>(cfg.batch_size);
      m1.v[j] = b1 * m1.v[j] + (1.0 - b1) * gj;
      m2.v[j] = b2 * m2.v[j] + (1.0 - b2) * gj * gj;
      p.v[j] -= cfg.learning_rate * (m1.v[j] / corr1) /
                (std::sqrt(m2.v[j] / corr2) + eps);
    }
  }
}

void write_trace(const std::filesystem::path& path,
                 const std::vector<double>& trace) {
  std::ofstream out(path);
  require(out.good(), "cannot write trace: " + path.string());
  out << "iteration,mean_loss\n";
  char buf[40];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, trace[i]);
    out << buf;
  }
  require(out.good(), "cannot write trace: " + path.string());
}

std::vector<double> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open trace: " + path.string());
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) &&
              line == "iteration,mean_loss",
          "malformed trace header in " + path.string());
  std::vector<double> trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    require(comma != std::string::npos,
            "malformed trace row in " + path.string() + ": " + line);
    trace.push_back(std::stod(line.substr(comma + 1)));
  }
  return trace;
}

namespace {

// Exact training-state sidecar: weights and optimizer moments as raw
// doubles, so a resumed run continues bit-for-bit where it stopped (the
// checkpoint file itself stores binary32 and would lose the low bits).
constexpr char kOptMagic[8] = {'S', 'R', 'O', 'O', 'D', 'O', 'P', 'T'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  require(in.good(), "truncated optimizer state: " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

void put_doubles(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

void get_doubles(std::istream& in, const std::string& path,
                 std::vector<double>& v) {
  for (double& x : v) x = std::bit_cast<double>(get_u64(in, path));
}

void save_optstate(const std::filesystem::path& path,
                   const RepairerModel& model, const OptimizerState& state,
                   Optimizer opt) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write optimizer state: " + path.string());
  out.write(kOptMagic, 8);
  put_u64(out, 1);  // format version
  put_u64(out, opt == Optimizer::sgd ? 0 : 1);
  put_u64(out, static_cast<std::uint64_t>(state.step));
  for_each_param(model, [&](const std::string&, const Tensor& t) {
    put_doubles(out, t.v);
  });
  put_doubles(out, model.latent_mean);
  if (opt == Optimizer::adaptive_moments) {
    for (const Tensor& t : state.m1) put_doubles(out, t.v);
    for (const Tensor& t : state.m2) put_doubles(out, t.v);
  }
  require(out.good(), "cannot write optimizer state: " + path.string());
}

void load_optstate(const std::filesystem::path& path, RepairerModel& model,
                   OptimizerState& state, Optimizer opt) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open optimizer state: " + path.string());
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kOptMagic, 8) == 0,
          "not an optimizer state file: " + path.string());
  require(get_u64(in, path.string()) == 1,
          "unsupported optimizer state version in " + path.string());
  const std::uint64_t kind = get_u64(in, path.string());
  require(kind == (opt == Optimizer::sgd ? 0u : 1u),
          "optimizer state in " + path.string() +
              " was written by a different optimizer");
  state.step = static_cast<std::int64_t>(get_u64(in, path.string()));
  for_each_param(model, [&](const std::string&, Tensor& t) {
    get_doubles(in, path.string(), t.v);
  });
  get_doubles(in, path.string(), model.latent_mean);
  if (opt == Optimizer::adaptive_moments) {
    for (Tensor& t : state.m1) get_doubles(in, path.string(), t.v);
    for (Tensor& t : state.m2) get_doubles(in, path.string(), t.v);
  }
}

std::string iter_stem(int iter) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "model_iter_%06d", iter);
  return buf;
}

/// Newest periodic checkpoint iteration at or below `limit`, or 0.
int find_resume_iteration(const std::filesystem::path& dir, int limit) {
  int best = 0;
  if (!std::filesystem::is_directory(dir)) return 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    int iter = 0;
    if (std::sscanf(name.c_str(), "model_iter_%d.optstate", &iter) != 1)
      continue;
    if (iter <= limit && iter > best &&
        std::filesystem::exists(dir / (iter_stem(iter) + ".ckpt")))
      best = iter;
  }
  return best;
}

}  // namespace

TrainResult train_repairer(const RepairerConfig& arch,
                           const DatasetManifest& manifest,
                           const ErosionSet& erosions,
                           const PerceptualExtractor& phi,
                           const LossWeights& weights, const TrainConfig& cfg,
                           const std::filesystem::path& out_dir, bool resume) {
  arch.validate();
  weights.validate();
  require(!erosions.ops.empty(), "erosion set is empty");
  require(cfg.n_iter >= 0, "n_iter must be non-negative");
  require(cfg.batch_size >= 1, "batch size must be positive");
  require(cfg.learning_rate > 0.0, "learning rate must be positive");
  require(cfg.checkpoint_every >= 0, "checkpoint_every must be non-negative");

  TrainResult result;
  result.model = init_repairer(arch, cfg.seed);
  OptimizerState state = OptimizerState::zeros_like(result.model,
                                                    cfg.optimizer);

  int start = 0;
  if (resume && !out_dir.empty()) {
    start = find_resume_iteration(out_dir, cfg.n_iter);
    if (start > 0) {
      // The sidecar holds the exact doubles; the ckpt is only consulted for
      // its architecture, which must match the request.
      const RepairerModel saved =
          load_repairer_checkpoint(out_dir / (iter_stem(start) + ".ckpt"));
      require(saved.config.encoder_widths == arch.encoder_widths &&
                  saved.config.decoder_widths == arch.decoder_widths &&
                  saved.config.latent_dim == arch.latent_dim &&
                  saved.config.height == arch.height &&
                  saved.config.width == arch.width &&
                  saved.config.channels == arch.channels,
              "periodic checkpoint architecture does not match the config");
      load_optstate(out_dir / (iter_stem(start) + ".optstate"), result.model,
                    state, cfg.optimizer);
      std::vector<double> prev = read_trace(out_dir / "trace.csv");
      require(static_cast<int>(prev.size()) >= start,
              "trace.csv is shorter than the resumed checkpoint");
      prev.resize(static_cast<std::size_t>(start));
      result.loss_trace = std::move(prev);
    }
  }
  result.start_iteration = start;

  SampleCache cache(manifest, arch.height, arch.width, arch.channels);
  RepairerGrads grads = RepairerGrads::zeros_like(result.model);

  for (int iter = start + 1; iter <= cfg.n_iter; ++iter) {
    Rng batch_rng =
        Rng::stream(cfg.seed, Rng::kBatch, static_cast<std::uint64_t>(iter));
    Rng ero_rng =
        Rng::stream(cfg.seed, Rng::kErosion, static_cast<std::uint64_t>(iter));
    const std::vector<std::int64_t> idxs = sample_batch_indices(
        manifest, Split::train, cfg.batch_size, batch_rng);

    grads.clear();
    double loss_sum = 0.0;
    for (std::int64_t idx : idxs) {
      const std::size_t which = sample_erosion_index(erosions, ero_rng);
      const LossParts parts = total_loss_grad(
          result.model, phi, erosions.ops[which], cache.get(idx), weights,
          grads);
      loss_sum += parts.total;
    }
    const double mean_loss = loss_sum / static_cast<double>(cfg.batch_size);
    require(std::isfinite(mean_loss),
            "training aborted: non-finite loss at iteration " +
                std::to_string(iter));
    result.loss_trace.push_back(mean_loss);

    gradient_step(result.model, grads, cfg, state);

    if (cfg.checkpoint_every > 0 && !out_dir.empty() &&
        iter % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(out_dir);
      save_repairer_checkpoint(out_dir / (iter_stem(iter) + ".ckpt"),
                               result.model);
      save_optstate(out_dir / (iter_stem(iter) + ".optstate"), result.model,
                    state, cfg.optimizer);
      write_trace(out_dir / "trace.csv", result.loss_trace);
    }
  }

  update_latent_mean(result.model, manifest);
  return result;
}

}  // namespace srood
