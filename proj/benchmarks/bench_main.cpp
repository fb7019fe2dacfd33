#include <benchmark/benchmark.h>

#include <vector>

#include <srood/erosion.hpp>
#include <srood/evaluation.hpp>
#include <srood/metrics.hpp>
#include <srood/repairer.hpp>
#include <srood/rng.hpp>
#include <srood/scoring.hpp>

namespace {

using namespace srood;

Image random_image(int c, int h, int w, std::uint64_t seed) {
  Image im = Image::zeros(h, w, c);
  Rng rng = Rng::stream(seed, Rng::kDiagnostics);
  for (double& p : im.pix) p = rng.uniform();
  return im;
}

RepairerModel bench_model() {
  RepairerConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.channels = 1;
  cfg.encoder_widths = {8, 16};
  cfg.latent_dim = 32;
  cfg.decoder_widths = {16, 8};
  return init_repairer(cfg, 7);
}

PerceptualExtractor bench_phi() {
  PhiConfig cfg;
  cfg.height = 32;
  cfg.width = 32;
  cfg.channels = 1;
  cfg.widths = {8, 16};
  cfg.taps = {1, 2};
  return init_phi(cfg, 7);
}

void BM_BicubicDownUp(benchmark::State& state) {
  const Image im = random_image(1, 32, 32, 1);
  for (auto _ : state) {
    Image down = bicubic_resize(im, 8, 8);
    Image up = bicubic_resize(down, 32, 32);
    benchmark::DoNotOptimize(up.pix.data());
  }
}
BENCHMARK(BM_BicubicDownUp);

void BM_MaskErosion(benchmark::State& state) {
  const Image im = random_image(1, 32, 32, 2);
  const ErosionOp op = ErosionOp::blackout({16, 16, 0, 8});
  for (auto _ : state) {
    Image out = apply_erosion(im, op);
    benchmark::DoNotOptimize(out.pix.data());
  }
}
BENCHMARK(BM_MaskErosion);

void BM_RepairForward(benchmark::State& state) {
  const RepairerModel model = bench_model();
  const Image im = random_image(1, 32, 32, 3);
  for (auto _ : state) {
    Image out = repair(model, im);
    benchmark::DoNotOptimize(out.pix.data());
  }
}
BENCHMARK(BM_RepairForward);

void BM_PerceptualDistance(benchmark::State& state) {
  const PerceptualExtractor phi = bench_phi();
  const Image a = random_image(1, 32, 32, 4);
  const Image b = random_image(1, 32, 32, 5);
  for (auto _ : state) {
    double d = lpips_distance(phi, a, b);
    benchmark::DoNotOptimize(d);
  }
}
BENCHMARK(BM_PerceptualDistance);

void BM_OodScore(benchmark::State& state) {
  const RepairerModel model = bench_model();
  const PerceptualExtractor phi = bench_phi();
  const ErosionOp op = ErosionOp::downsample(4);
  const Image im = random_image(1, 32, 32, 6);
  for (auto _ : state) {
    double s = ood_score(model, phi, op, im);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_OodScore);

void BM_LossGradient(benchmark::State& state) {
  const RepairerModel model = bench_model();
  const PerceptualExtractor phi = bench_phi();
  const ErosionOp op = ErosionOp::downsample(4);
  const Image im = random_image(1, 32, 32, 8);
  RepairerGrads g = RepairerGrads::zeros_like(model);
  LossWeights w;
  for (auto _ : state) {
    g.clear();
    LossParts parts = total_loss_grad(model, phi, op, im, w, g);
    benchmark::DoNotOptimize(parts.total);
  }
}
BENCHMARK(BM_LossGradient);

void BM_Auroc(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  Rng rng = Rng::stream(9, Rng::kDiagnostics);
  std::vector<double> id(n), ood(n);
  for (double& v : id) v = rng.uniform();
  for (double& v : ood) v = rng.uniform() + 0.3;
  for (auto _ : state) {
    double a = auroc(id, ood);
    benchmark::DoNotOptimize(a);
  }
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
