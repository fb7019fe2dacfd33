#include "srood/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "srood/common.hpp"

namespace srood {

RepairerConfig ExperimentConfig::repairer_config() const {
  RepairerConfig c;
  c.height = resolution;
  c.width = resolution;
  c.channels = channels;
  c.encoder_widths = encoder_widths;
  c.latent_dim = latent_dim;
  c.decoder_widths = decoder_widths;
  c.mix_alpha = mix_alpha;
  return c;
}

PhiConfig ExperimentConfig::phi_config() const {
  PhiConfig c;
  c.height = resolution;
  c.width = resolution;
  c.channels = channels;
  c.widths = phi_widths;
  c.taps = phi_taps;
  return c;
}

std::filesystem::path ExperimentConfig::phi_checkpoint_path() const {
  return paths_phi.empty() ? std::filesystem::path(out) / "phi.ckpt"
                           : std::filesystem::path(paths_phi);
}

std::filesystem::path ExperimentConfig::model_checkpoint_path() const {
  return paths_model.empty() ? std::filesystem::path(out) / "model.ckpt"
                             : std::filesystem::path(paths_model);
}

void ExperimentConfig::validate() const {
  require(!manifest.empty(), "config is missing dataset.manifest");
  require(variant == "rec" || variant == "sr" || variant == "inpaint",
          "erosion.variant must be rec, sr or inpaint");
  repairer_config().validate();
  phi_config().validate();
  loss.validate();
  require(train.n_iter >= 0, "train.n_iter must be non-negative");
  require(train.batch_size >= 1, "train.batch_size must be positive");
  require(train.learning_rate > 0.0, "train.learning_rate must be positive");
  require(train.checkpoint_every >= 0,
          "train.checkpoint_every must be non-negative");
  require(phi_n_iter >= 1, "phi.n_iter must be positive");
  require(phi_batch_size >= 1, "phi.batch_size must be positive");
  require(phi_learning_rate > 0.0, "phi.learning_rate must be positive");
  require(threshold_method == "id-quantile" || threshold_method == "fixed",
          "threshold.method must be id-quantile or fixed");
  require(threshold_quantile > 0.0 && threshold_quantile <= 1.0,
          "threshold.quantile must lie in (0, 1]");
  require(!out.empty(), "output directory must not be empty");
  require(diagnostics_max_samples >= 1,
          "diagnostics.max_samples must be positive");
  require(report_grid_samples >= 1, "report.grid_samples must be positive");
  require(baselines_n_iter >= 1, "baselines.n_iter must be positive");
  require(baselines_batch_size >= 1, "baselines.batch_size must be positive");
  require(baselines_learning_rate > 0.0,
          "baselines.learning_rate must be positive");
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    require(!item.empty() && item.find_first_not_of("0123456789") ==
                                 std::string::npos,
            "malformed integer list for " + key + ": " + s);
    out.push_back(std::stoi(item));
  }
  require(!out.empty(), "empty integer list for " + key);
  return out;
}

long parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    require(pos == s.size(), "");
    return v;
  } catch (...) {
    fail("malformed integer for " + key + ": " + s);
  }
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    require(pos == s.size(), "");
    return v;
  } catch (...) {
    fail("malformed number for " + key + ": " + s);
  }
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  fail("malformed boolean for " + key + ": " + s);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config: " + path.string());

  std::map<std::string, std::string> kv;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, "malformed config line " +
                                         std::to_string(line_no) + ": " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty(), "malformed config line " + std::to_string(line_no));
    require(kv.emplace(key, value).second,
            "duplicate config key '" + key + "'");
  }

  ExperimentConfig cfg;
  std::set<std::string> known;
  const auto take = [&](const std::string& key) -> const std::string* {
    known.insert(key);
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  const auto str = [&](const std::string& key, std::string& target) {
    if (const std::string* v = take(key)) target = *v;
  };
  const auto intval = [&](const std::string& key, int& target) {
    if (const std::string* v = take(key))
      target = static_cast<int>(parse_int(*v, key));
  };
  const auto dblval = [&](const std::string& key, double& target) {
    if (const std::string* v = take(key)) target = parse_double(*v, key);
  };
  const auto listval = [&](const std::string& key, std::vector<int>& target) {
    if (const std::string* v = take(key)) target = parse_int_list(*v, key);
  };
  const auto boolval = [&](const std::string& key, bool& target) {
    if (const std::string* v = take(key)) target = parse_bool(*v, key);
  };

  str("dataset.manifest", cfg.manifest);
  str("dataset.data_root", cfg.data_root);
  str("dataset.id_name", cfg.id_name);
  str("dataset.ood_name", cfg.ood_name);
  str("erosion.variant", cfg.variant);
  intval("model.resolution", cfg.resolution);
  intval("model.channels", cfg.channels);
  listval("model.encoder_widths", cfg.encoder_widths);
  intval("model.latent_dim", cfg.latent_dim);
  listval("model.decoder_widths", cfg.decoder_widths);
  dblval("model.mix_alpha", cfg.mix_alpha);
  listval("phi.widths", cfg.phi_widths);
  listval("phi.taps", cfg.phi_taps);
  intval("phi.n_iter", cfg.phi_n_iter);
  intval("phi.batch_size", cfg.phi_batch_size);
  dblval("phi.learning_rate", cfg.phi_learning_rate);
  dblval("loss.lambda1", cfg.loss.lambda1);
  dblval("loss.lambda2", cfg.loss.lambda2);
  intval("train.n_iter", cfg.train.n_iter);
  intval("train.batch_size", cfg.train.batch_size);
  dblval("train.learning_rate", cfg.train.learning_rate);
  intval("train.checkpoint_every", cfg.train.checkpoint_every);
  if (const std::string* v = take("train.optimizer"))
    cfg.train.optimizer = parse_optimizer(*v);
  str("threshold.method", cfg.threshold_method);
  dblval("threshold.quantile", cfg.threshold_quantile);
  dblval("threshold.epsilon", cfg.threshold_epsilon);
  if (const std::string* v = take("seed"))
    cfg.seed = static_cast<std::uint64_t>(parse_int(*v, "seed"));
  str("out", cfg.out);
  str("paths.phi", cfg.paths_phi);
  str("paths.model", cfg.paths_model);
  boolval("baselines.enabled", cfg.baselines_enabled);
  intval("baselines.n_iter", cfg.baselines_n_iter);
  intval("baselines.batch_size", cfg.baselines_batch_size);
  dblval("baselines.learning_rate", cfg.baselines_learning_rate);
  intval("diagnostics.max_samples", cfg.diagnostics_max_samples);
  intval("report.grid_samples", cfg.report_grid_samples);

  // phi.taps may legitimately be {0} for the identity extractor; the list
  // parser above rejects nothing here, so special handling is not needed.
  for (const auto& [key, value] : kv)
    require(known.count(key) != 0, "unknown config key '" + key + "'");

  // Resolve relative manifest paths against the config file's directory so
  // a config bundle stays relocatable.
  if (!cfg.manifest.empty() &&
      !std::filesystem::path(cfg.manifest).is_absolute() &&
      path.has_parent_path())
    cfg.manifest = (path.parent_path() / cfg.manifest).string();

  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

std::string resolved_text(const ExperimentConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["dataset.manifest"] = cfg.manifest;
  kv["dataset.data_root"] = cfg.data_root;
  kv["dataset.id_name"] = cfg.id_name;
  kv["dataset.ood_name"] = cfg.ood_name;
  kv["erosion.variant"] = cfg.variant;
  kv["model.resolution"] = std::to_string(cfg.resolution);
  kv["model.channels"] = std::to_string(cfg.channels);
  kv["model.encoder_widths"] = join_ints(cfg.encoder_widths);
  kv["model.latent_dim"] = std::to_string(cfg.latent_dim);
  kv["model.decoder_widths"] = join_ints(cfg.decoder_widths);
  kv["model.mix_alpha"] = fmt_double(cfg.mix_alpha);
  kv["phi.widths"] = join_ints(cfg.phi_widths);
  kv["phi.taps"] = join_ints(cfg.phi_taps);
  kv["phi.n_iter"] = std::to_string(cfg.phi_n_iter);
  kv["phi.batch_size"] = std::to_string(cfg.phi_batch_size);
  kv["phi.learning_rate"] = fmt_double(cfg.phi_learning_rate);
  kv["loss.lambda1"] = fmt_double(cfg.loss.lambda1);
  kv["loss.lambda2"] = fmt_double(cfg.loss.lambda2);
  kv["train.n_iter"] = std::to_string(cfg.train.n_iter);
  kv["train.batch_size"] = std::to_string(cfg.train.batch_size);
  kv["train.learning_rate"] = fmt_double(cfg.train.learning_rate);
  kv["train.optimizer"] = optimizer_name(cfg.train.optimizer);
  kv["train.checkpoint_every"] = std::to_string(cfg.train.checkpoint_every);
  kv["threshold.method"] = cfg.threshold_method;
  kv["threshold.quantile"] = fmt_double(cfg.threshold_quantile);
  kv["threshold.epsilon"] = fmt_double(cfg.threshold_epsilon);
  kv["seed"] = std::to_string(cfg.seed);
  kv["out"] = cfg.out;
  kv["paths.phi"] = cfg.phi_checkpoint_path().string();
  kv["paths.model"] = cfg.model_checkpoint_path().string();
  kv["baselines.enabled"] = cfg.baselines_enabled ? "true" : "false";
  kv["baselines.n_iter"] = std::to_string(cfg.baselines_n_iter);
  kv["baselines.batch_size"] = std::to_string(cfg.baselines_batch_size);
  kv["baselines.learning_rate"] = fmt_double(cfg.baselines_learning_rate);
  kv["diagnostics.max_samples"] = std::to_string(cfg.diagnostics_max_samples);
  kv["report.grid_samples"] = std::to_string(cfg.report_grid_samples);

  std::string text;
  for (const auto& [key, value] : kv) text += key + " = " + value + "\n";
  return text;
}

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(resolved_text(cfg))));
  return buf;
}

void write_kv_file(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path);
  require(out.good(), "cannot write " + path.string());
  for (const auto& [key, value] : kv) out << key << " = " << value << "\n";
  require(out.good(), "cannot write " + path.string());
}

std::map<std::string, std::string> read_kv_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            "malformed line in " + path.string() + ": " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace srood
