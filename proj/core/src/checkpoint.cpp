#include "srood/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "srood/common.hpp"

namespace srood {

namespace {

constexpr char kMagic[8] = {'S', 'R', 'O', 'O', 'D', 'C', 'K', 'P'};
constexpr std::uint32_t kKindRepairer = 0;
constexpr std::uint32_t kKindPhi = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v),
      static_cast<unsigned char>(v >> 8),
      static_cast<unsigned char>(v >> 16),
      static_cast<unsigned char>(v >> 24),
  };
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.good(), "truncated checkpoint: " + path);
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

void put_f32(std::ostream& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

float get_f32(std::istream& in, const std::string& path) {
  return std::bit_cast<float>(get_u32(in, path));
}

void put_string(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& path) {
  const std::uint32_t n = get_u32(in, path);
  require(n <= (1u << 20), "corrupt checkpoint string length: " + path);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  require(in.good(), "truncated checkpoint: " + path);
  return s;
}

void put_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  put_string(out, name);
  put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
  for (double v : t.v) put_f32(out, static_cast<float>(v));
}

void get_tensor_into(std::istream& in, const std::string& path,
                     const std::string& expect_name, Tensor& t) {
  const std::string name = get_string(in, path);
  require(name == expect_name, "checkpoint tensor order mismatch in " + path +
                                   ": found '" + name + "', expected '" +
                                   expect_name + "'");
  const std::uint32_t ndim = get_u32(in, path);
  require(ndim == t.shape.size(), "checkpoint tensor rank mismatch for '" +
                                      name + "' in " + path);
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    const std::uint32_t d = get_u32(in, path);
    require(d == static_cast<std::uint32_t>(t.shape[i]),
            "checkpoint tensor shape mismatch for '" + name + "' in " + path);
  }
  for (double& v : t.v) v = static_cast<double>(get_f32(in, path));
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

std::map<std::string, std::string> parse_kv(const std::string& text,
                                            const std::string& path) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            "corrupt checkpoint config line in " + path + ": " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& kv_get(const std::map<std::string, std::string>& kv,
                          const std::string& key, const std::string& path) {
  const auto it = kv.find(key);
  require(it != kv.end(),
          "checkpoint config in " + path + " is missing key '" + key + "'");
  return it->second;
}

void open_and_check_header(std::ifstream& in, const std::string& path,
                           std::uint32_t expect_kind) {
  require(in.good(), "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kMagic, 8) == 0,
          "not a checkpoint file: " + path);
  const std::uint32_t version = get_u32(in, path);
  require(version == kCheckpointVersion,
          "unsupported checkpoint format version " + std::to_string(version) +
              " in " + path + " (this build reads version " +
              std::to_string(kCheckpointVersion) + ")");
  const std::uint32_t kind = get_u32(in, path);
  require(kind == expect_kind,
          "checkpoint kind mismatch in " + path + ": the file holds a " +
              (kind == kKindRepairer ? std::string("repair model")
                                     : std::string("feature extractor")) +
              " checkpoint");
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_repairer_checkpoint(const std::filesystem::path& path,
                              const RepairerModel& model) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write checkpoint: " + path.string());
  out.write(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, kKindRepairer);

  const RepairerConfig& c = model.config;
  std::string cfg;
  cfg += "height=" + std::to_string(c.height) + "\n";
  cfg += "width=" + std::to_string(c.width) + "\n";
  cfg += "channels=" + std::to_string(c.channels) + "\n";
  cfg += "encoder_widths=" + join_ints(c.encoder_widths) + "\n";
  cfg += "latent_dim=" + std::to_string(c.latent_dim) + "\n";
  cfg += "decoder_widths=" + join_ints(c.decoder_widths) + "\n";
  cfg += "mix_alpha=" + fmt_double(c.mix_alpha) + "\n";
  put_string(out, cfg);

  std::uint32_t count = 1;  // latent_mean
  for_each_param(model, [&](const std::string&, const Tensor&) { ++count; });
  put_u32(out, count);
  for_each_param(model, [&](const std::string& name, const Tensor& t) {
    put_tensor(out, name, t);
  });
  Tensor lm = Tensor::zeros({c.latent_dim});
  lm.v = model.latent_mean;
  put_tensor(out, "latent_mean", lm);
  require(out.good(), "cannot write checkpoint: " + path.string());
}

RepairerModel load_repairer_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  open_and_check_header(in, path.string(), kKindRepairer);

  const auto kv = parse_kv(get_string(in, path.string()), path.string());
  RepairerConfig c;
  c.height = std::stoi(kv_get(kv, "height", path.string()));
  c.width = std::stoi(kv_get(kv, "width", path.string()));
  c.channels = std::stoi(kv_get(kv, "channels", path.string()));
  c.encoder_widths = parse_ints(kv_get(kv, "encoder_widths", path.string()));
  c.latent_dim = std::stoi(kv_get(kv, "latent_dim", path.string()));
  c.decoder_widths = parse_ints(kv_get(kv, "decoder_widths", path.string()));
  c.mix_alpha = std::stod(kv_get(kv, "mix_alpha", path.string()));

  RepairerModel model = init_repairer(c, /*seed=*/0);
  std::uint32_t expected = 1;
  for_each_param(model, [&](const std::string&, const Tensor&) { ++expected; });
  const std::uint32_t count = get_u32(in, path.string());
  require(count == expected, "checkpoint tensor count mismatch in " +
                                 path.string());
  for_each_param(model, [&](const std::string& name, Tensor& t) {
    get_tensor_into(in, path.string(), name, t);
  });
  Tensor lm = Tensor::zeros({c.latent_dim});
  get_tensor_into(in, path.string(), "latent_mean", lm);
  model.latent_mean = lm.v;
  return model;
}

void save_phi_checkpoint(const std::filesystem::path& path,
                         const PerceptualExtractor& phi) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write checkpoint: " + path.string());
  out.write(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, kKindPhi);

  const PhiConfig& c = phi.config;
  std::string cfg;
  cfg += "height=" + std::to_string(c.height) + "\n";
  cfg += "width=" + std::to_string(c.width) + "\n";
  cfg += "channels=" + std::to_string(c.channels) + "\n";
  cfg += "widths=" + join_ints(c.widths) + "\n";
  cfg += "taps=" + join_ints(c.taps) + "\n";
  put_string(out, cfg);

  put_u32(out, static_cast<std::uint32_t>(2 * phi.convs.size()));
  for (std::size_t i = 0; i < phi.convs.size(); ++i) {
    put_tensor(out, "conv" + std::to_string(i) + ".w", phi.convs[i].w);
    put_tensor(out, "conv" + std::to_string(i) + ".b", phi.convs[i].b);
  }
  require(out.good(), "cannot write checkpoint: " + path.string());
}

PerceptualExtractor load_phi_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  open_and_check_header(in, path.string(), kKindPhi);

  const auto kv = parse_kv(get_string(in, path.string()), path.string());
  PhiConfig c;
  c.height = std::stoi(kv_get(kv, "height", path.string()));
  c.width = std::stoi(kv_get(kv, "width", path.string()));
  c.channels = std::stoi(kv_get(kv, "channels", path.string()));
  c.widths = parse_ints(kv_get(kv, "widths", path.string()));
  c.taps = parse_ints(kv_get(kv, "taps", path.string()));

  PerceptualExtractor phi = init_phi(c, /*seed=*/0);
  const std::uint32_t count = get_u32(in, path.string());
  require(count == 2 * phi.convs.size(),
          "checkpoint tensor count mismatch in " + path.string());
  for (std::size_t i = 0; i < phi.convs.size(); ++i) {
    get_tensor_into(in, path.string(), "conv" + std::to_string(i) + ".w",
                    phi.convs[i].w);
    get_tensor_into(in, path.string(), "conv" + std::to_string(i) + ".b",
                    phi.convs[i].b);
  }
  return phi;
}

}  // namespace srood
