#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <srood/common.hpp>
#include <srood/config.hpp>

#include "synth.hpp"

using namespace srood;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const fs::path& dir, const std::string& name,
                    const std::string& body) {
  const fs::path p = dir / name;
  std::ofstream out(p);
  out << body;
  return p;
}

}  // namespace

TEST_CASE("config files tolerate comments and whitespace") {
  synth::TempDir tmp;
  const fs::path p = write_file(tmp.path(), "a.cfg",
                                "# experiment setup\n"
                                "dataset.manifest = data/m.csv\n"
                                "\n"
                                "  erosion.variant=inpaint   # trailing note\n"
                                "model.resolution   =  16\n"
                                "model.encoder_widths = 4, 8\n"
                                "train.optimizer = sgd\n"
                                "baselines.enabled = yes\n"
                                "seed = 17\n");
  const ExperimentConfig cfg = load_experiment_config(p);

  CHECK(cfg.manifest == (tmp.path() / "data/m.csv").string());
  CHECK(cfg.variant == "inpaint");
  CHECK(cfg.resolution == 16);
  CHECK(cfg.encoder_widths == std::vector<int>{4, 8});
  CHECK(cfg.train.optimizer == Optimizer::sgd);
  CHECK(cfg.baselines_enabled);
  CHECK(cfg.seed == 17);
  // The run seed feeds training unless train.seed is set separately.
  CHECK(cfg.train.seed == 17);

  // Untouched keys keep their defaults.
  CHECK(cfg.channels == 1);
  CHECK(cfg.latent_dim == 32);
  CHECK(cfg.decoder_widths == std::vector<int>{32, 16});
  CHECK(cfg.phi_taps == std::vector<int>{1, 2});
  CHECK(cfg.loss.lambda1 == 1.0);
  CHECK(cfg.loss.lambda2 == 0.8);
  CHECK(cfg.train.n_iter == 3000);
  CHECK(cfg.threshold_method == "id-quantile");
  CHECK(cfg.threshold_quantile == 0.95);
  CHECK(cfg.out == "run");
  CHECK(cfg.diagnostics_max_samples == 64);
}

TEST_CASE("absolute manifest paths stay untouched") {
  synth::TempDir tmp;
  const fs::path p = write_file(tmp.path(), "a.cfg",
                                "dataset.manifest = /abs/m.csv\n");
  CHECK(load_experiment_config(p).manifest == "/abs/m.csv");
}

TEST_CASE("default checkpoint paths hang off the output directory") {
  ExperimentConfig cfg;
  cfg.out = "runs/x";
  CHECK(cfg.phi_checkpoint_path() == fs::path("runs/x") / "phi.ckpt");
  CHECK(cfg.model_checkpoint_path() == fs::path("runs/x") / "model.ckpt");
  cfg.paths_phi = "shared/phi.ckpt";
  CHECK(cfg.phi_checkpoint_path() == fs::path("shared/phi.ckpt"));
}

TEST_CASE("config parse failures") {
  synth::TempDir tmp;
  const auto load = [&](const std::string& body) {
    return load_experiment_config(write_file(tmp.path(), "bad.cfg", body));
  };

  SUBCASE("missing file") {
    const fs::path ghost = tmp.path() / "ghost.cfg";
    CHECK_THROWS_WITH_AS(load_experiment_config(ghost),
                         ("cannot open config: " + ghost.string()).c_str(),
                         Error);
  }
  SUBCASE("line without an equals sign") {
    CHECK_THROWS_WITH_AS(load("# ok\njust words\n"),
                         "malformed config line 2: just words", Error);
  }
  SUBCASE("duplicate key") {
    CHECK_THROWS_WITH_AS(load("seed = 1\nseed = 2\n"),
                         "duplicate config key 'seed'", Error);
  }
  SUBCASE("unknown key") {
    CHECK_THROWS_WITH_AS(load("dataset.manifest = m\ntrain.iters = 5\n"),
                         "unknown config key 'train.iters'", Error);
  }
  SUBCASE("malformed integer") {
    CHECK_THROWS_WITH_AS(load("dataset.manifest = m\ntrain.n_iter = ten\n"),
                         "malformed integer for train.n_iter: ten", Error);
  }
  SUBCASE("malformed number") {
    CHECK_THROWS_WITH_AS(
        load("dataset.manifest = m\nloss.lambda1 = 1.2.3\n"),
        "malformed number for loss.lambda1: 1.2.3", Error);
  }
  SUBCASE("malformed boolean") {
    CHECK_THROWS_WITH_AS(
        load("dataset.manifest = m\nbaselines.enabled = maybe\n"),
        "malformed boolean for baselines.enabled: maybe", Error);
  }
  SUBCASE("malformed integer list") {
    CHECK_THROWS_WITH_AS(
        load("dataset.manifest = m\nmodel.encoder_widths = 4,,8\n"),
        "malformed integer list for model.encoder_widths: 4,,8", Error);
  }
  SUBCASE("bad optimizer name") {
    CHECK_THROWS_WITH_AS(
        load("dataset.manifest = m\ntrain.optimizer = adam\n"),
        "unknown optimizer 'adam' (expected sgd or adaptive-moments)", Error);
  }
}

TEST_CASE("config validation failures") {
  ExperimentConfig cfg;
  cfg.manifest = "m.csv";

  SUBCASE("missing manifest") {
    cfg.manifest.clear();
    CHECK_THROWS_WITH_AS(cfg.validate(), "config is missing dataset.manifest",
                         Error);
  }
  SUBCASE("bad variant") {
    cfg.variant = "foo";
    CHECK_THROWS_WITH_AS(cfg.validate(),
                         "erosion.variant must be rec, sr or inpaint", Error);
  }
  SUBCASE("zero quantile") {
    cfg.threshold_quantile = 0.0;
    CHECK_THROWS_WITH_AS(cfg.validate(),
                         "threshold.quantile must lie in (0, 1]", Error);
  }
  SUBCASE("bad threshold method") {
    cfg.threshold_method = "percentile";
    CHECK_THROWS_WITH_AS(cfg.validate(),
                         "threshold.method must be id-quantile or fixed",
                         Error);
  }
  SUBCASE("architecture errors surface through validate") {
    cfg.resolution = 7;  // odd, cannot halve through two stages
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
  SUBCASE("defaults plus a manifest pass") { cfg.validate(); }
}

TEST_CASE("resolved text is sorted, complete and canonical") {
  synth::TempDir tmp;
  const fs::path a = write_file(tmp.path(), "a.cfg",
                                "dataset.manifest = m.csv\n"
                                "seed = 5\n"
                                "model.resolution = 16\n");
  const fs::path b = write_file(tmp.path(), "b.cfg",
                                "# same settings, different layout\n"
                                "seed=5\n"
                                "   model.resolution = 16  # sixteen\n"
                                "dataset.manifest   =   m.csv\n");
  const ExperimentConfig ca = load_experiment_config(a);
  const ExperimentConfig cb = load_experiment_config(b);

  const std::string ta = resolved_text(ca);
  CHECK(ta == resolved_text(cb));
  CHECK(config_hash_hex(ca) == config_hash_hex(cb));

  std::vector<std::string> keys;
  std::stringstream ss(ta);
  std::string line;
  while (std::getline(ss, line)) {
    const auto sep = line.find(" = ");
    REQUIRE(sep != std::string::npos);
    keys.push_back(line.substr(0, sep));
  }
  CHECK(keys.size() == 36);
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  CHECK(std::count(keys.begin(), keys.end(), "train.optimizer") == 1);
  CHECK(std::count(keys.begin(), keys.end(), "paths.model") == 1);

  // Effective values appear, not the raw file text: the default optimizer
  // and the resolved checkpoint paths are spelled out.
  CHECK(ta.find("train.optimizer = adaptive-moments\n") != std::string::npos);
  CHECK(ta.find("model.resolution = 16\n") != std::string::npos);
  CHECK(ta.find("paths.phi = run/phi.ckpt\n") != std::string::npos);
}

TEST_CASE("config hash is sixteen hex digits keyed on content") {
  ExperimentConfig a;
  a.manifest = "m.csv";
  ExperimentConfig b = a;
  b.seed = 1;

  const std::string ha = config_hash_hex(a);
  const std::string hb = config_hash_hex(b);
  CHECK(ha.size() == 16);
  for (char c : ha)
    CHECK(std::isxdigit(static_cast<unsigned char>(c)));
  CHECK(ha != hb);
  CHECK(ha == config_hash_hex(a));

  // Pinned reference: the hash of the empty string under 64-bit FNV-1a.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("kv artifact files roundtrip") {
  synth::TempDir tmp;
  const fs::path p = tmp.path() / "t.txt";
  write_kv_file(p, {{"erosion", "mask:16,16,0,8"},
                    {"index", "3"},
                    {"note", "a = b"}});
  const auto kv = read_kv_file(p);
  REQUIRE(kv.size() == 3);
  CHECK(kv.at("erosion") == "mask:16,16,0,8");
  CHECK(kv.at("index") == "3");
  // Values keep everything after the first separator.
  CHECK(kv.at("note") == "a = b");

  std::ofstream(tmp.path() / "c.txt") << "# comment\n\nkey = v\n";
  const auto kv2 = read_kv_file(tmp.path() / "c.txt");
  CHECK(kv2.size() == 1);
  CHECK(kv2.at("key") == "v");

  CHECK_THROWS_AS(read_kv_file(tmp.path() / "ghost.txt"), Error);
  std::ofstream(tmp.path() / "bad.txt") << "no separator here\n";
  CHECK_THROWS_AS(read_kv_file(tmp.path() / "bad.txt"), Error);
}
