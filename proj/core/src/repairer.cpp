#include "srood/repairer.hpp"

#include <cmath>

#include "srood/common.hpp"

namespace srood {

void RepairerConfig::validate() const {
  require(channels == 1 || channels == 3, "channels must be 1 or 3");
  require(height >= 8 && width >= 8, "resolution must be at least 8x8");
  require(!encoder_widths.empty(), "encoder needs at least one conv stage");
  require(encoder_widths.size() == decoder_widths.size(),
          "encoder and decoder must have the same depth");
  for (int wdt : encoder_widths)
    require(wdt >= 1, "encoder widths must be positive");
  for (int wdt : decoder_widths)
    require(wdt >= 1, "decoder widths must be positive");
  require(latent_dim >= 1, "latent_dim must be positive");
  const int k = stages();
  require((height % (1 << k)) == 0 && (width % (1 << k)) == 0,
          "resolution must divide by 2^depth (" + std::to_string(1 << k) +
              ")");
  require(mix_alpha >= 0.0 && mix_alpha <= 1.0,
          "mix_alpha must lie in [0, 1]");
}

RepairerGrads RepairerGrads::zeros_like(const RepairerModel& m) {
  RepairerGrads g;
  for (const Conv2d& l : m.enc) {
    g.enc_w.push_back(Tensor::zeros(l.w.shape));
    g.enc_b.push_back(Tensor::zeros(l.b.shape));
  }
  g.enc_fc_w = Tensor::zeros(m.enc_fc.w.shape);
  g.enc_fc_b = Tensor::zeros(m.enc_fc.b.shape);
  g.dec_fc_w = Tensor::zeros(m.dec_fc.w.shape);
  g.dec_fc_b = Tensor::zeros(m.dec_fc.b.shape);
  for (const Deconv2d& l : m.dec) {
    g.dec_w.push_back(Tensor::zeros(l.w.shape));
    g.dec_b.push_back(Tensor::zeros(l.b.shape));
  }
  return g;
}

void RepairerGrads::clear() {
  const auto zero = [](Tensor& t) { std::fill(t.v.begin(), t.v.end(), 0.0); };
  for (auto& t : enc_w) zero(t);
  for (auto& t : enc_b) zero(t);
  zero(enc_fc_w);
  zero(enc_fc_b);
  zero(dec_fc_w);
  zero(dec_fc_b);
  for (auto& t : dec_w) zero(t);
  for (auto& t : dec_b) zero(t);
}

namespace {

template <class Model, class TensorT, class F>
void walk_params(Model& m, const F& f) {
  for (std::size_t i = 0; i < m.enc.size(); ++i) {
    f("enc" + std::to_string(i) + ".w", m.enc[i].w);
    f("enc" + std::to_string(i) + ".b", m.enc[i].b);
  }
  f("enc_fc.w", m.enc_fc.w);
  f("enc_fc.b", m.enc_fc.b);
  f("dec_fc.w", m.dec_fc.w);
  f("dec_fc.b", m.dec_fc.b);
  for (std::size_t i = 0; i < m.dec.size(); ++i) {
    f("dec" + std::to_string(i) + ".w", m.dec[i].w);
    f("dec" + std::to_string(i) + ".b", m.dec[i].b);
  }
}

}  // namespace

void for_each_param(RepairerModel& m,
                    const std::function<void(const std::string&, Tensor&)>& f) {
  walk_params<RepairerModel, Tensor>(m, f);
}

void for_each_param(
    const RepairerModel& m,
    const std::function<void(const std::string&, const Tensor&)>& f) {
  walk_params<const RepairerModel, const Tensor>(m, f);
}

void for_each_grad(RepairerGrads& g,
                   const std::function<void(const std::string&, Tensor&)>& f) {
  for (std::size_t i = 0; i < g.enc_w.size(); ++i) {
    f("enc" + std::to_string(i) + ".w", g.enc_w[i]);
    f("enc" + std::to_string(i) + ".b", g.enc_b[i]);
  }
  f("enc_fc.w", g.enc_fc_w);
  f("enc_fc.b", g.enc_fc_b);
  f("dec_fc.w", g.dec_fc_w);
  f("dec_fc.b", g.dec_fc_b);
  for (std::size_t i = 0; i < g.dec_w.size(); ++i) {
    f("dec" + std::to_string(i) + ".w", g.dec_w[i]);
    f("dec" + std::to_string(i) + ".b", g.dec_b[i]);
  }
}

RepairerModel init_repairer(const RepairerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RepairerModel m;
  m.config = cfg;
  const int k = cfg.stages();
  const int bh = cfg.bottleneck_h();
  const int bw = cfg.bottleneck_w();
  int in_ch = cfg.channels;
  for (int i = 0; i < k; ++i) {
    m.enc.push_back(Conv2d::make(in_ch, cfg.encoder_widths[i], /*stride=*/2));
    in_ch = cfg.encoder_widths[i];
  }
  m.enc_fc = Dense::make(cfg.encoder_widths.back() * bh * bw, cfg.latent_dim);
  m.dec_fc = Dense::make(cfg.latent_dim, cfg.decoder_widths.front() * bh * bw);
  for (int i = 0; i < k; ++i) {
    const int oc = i + 1 < k ? cfg.decoder_widths[i + 1] : cfg.channels;
    m.dec.push_back(Deconv2d::make(cfg.decoder_widths[i], oc));
  }
  m.latent_mean.assign(static_cast<std::size_t>(cfg.latent_dim), 0.0);

  Rng rng = Rng::stream(seed, Rng::kWeightInit);
  for (Conv2d& l : m.enc) init_conv(l, rng);
  init_dense(m.enc_fc, rng);
  init_dense(m.dec_fc, rng);
  for (Deconv2d& l : m.dec) init_deconv(l, rng);
  return m;
}

namespace {

void check_input(const RepairerModel& m, const Image& im) {
  require(im.height == m.config.height && im.width == m.config.width &&
              im.channels == m.config.channels,
          "input shape does not match the model configuration");
  for (const double p : im.pix) require(std::isfinite(p), "non-finite input");
}

}  // namespace

RepairTape repair_forward(const RepairerModel& m, const Image& eroded) {
  check_input(m, eroded);
  const RepairerConfig& c = m.config;
  const int k = c.stages();
  RepairTape t;
  t.input = eroded;

  // Encoder.
  std::vector<double> cur = eroded.pix;
  int h = c.height, w = c.width;
  for (int i = 0; i < k; ++i) {
    const int oh = conv_out_len(h, 2), ow = conv_out_len(w, 2);
    std::vector<double> pre(static_cast<std::size_t>(m.enc[i].out_ch) * oh * ow);
    conv2d_forward(cur.data(), h, w, m.enc[i], pre.data());
    t.enc_pre.push_back(pre);
    leaky_relu_forward(pre);
    t.enc_post.push_back(pre);
    cur = std::move(pre);
    h = oh;
    w = ow;
  }
  t.z.assign(static_cast<std::size_t>(c.latent_dim), 0.0);
  dense_forward(cur.data(), m.enc_fc, t.z.data());

  // Style mixing.
  t.z_mixed.resize(t.z.size());
  for (std::size_t i = 0; i < t.z.size(); ++i)
    t.z_mixed[i] = (1.0 - c.mix_alpha) * t.z[i] + c.mix_alpha * m.latent_mean[i];

  // Decoder.
  t.dec_fc_pre.assign(static_cast<std::size_t>(m.dec_fc.out_dim), 0.0);
  dense_forward(t.z_mixed.data(), m.dec_fc, t.dec_fc_pre.data());
  t.dec_fc_post = t.dec_fc_pre;
  leaky_relu_forward(t.dec_fc_post);
  cur = t.dec_fc_post;
  h = c.bottleneck_h();
  w = c.bottleneck_w();
  for (int i = 0; i < k; ++i) {
    const int oh = 2 * h, ow = 2 * w;
    std::vector<double> pre(static_cast<std::size_t>(m.dec[i].out_ch) * oh * ow);
    deconv2d_forward(cur.data(), h, w, m.dec[i], pre.data());
    t.dec_pre.push_back(pre);
    if (i + 1 < k)
      leaky_relu_forward(pre);
    else
      sigmoid_forward(pre);
    t.dec_post.push_back(pre);
    cur = std::move(pre);
    h = oh;
    w = ow;
  }
  t.output = Image::zeros(c.height, c.width, c.channels);
  t.output.pix = cur;
  return t;
}

std::vector<double> encode(const RepairerModel& m, const Image& im) {
  check_input(m, im);
  const RepairerConfig& c = m.config;
  std::vector<double> cur = im.pix;
  int h = c.height, w = c.width;
  for (std::size_t i = 0; i < m.enc.size(); ++i) {
    const int oh = conv_out_len(h, 2), ow = conv_out_len(w, 2);
    std::vector<double> out(static_cast<std::size_t>(m.enc[i].out_ch) * oh * ow);
    conv2d_forward(cur.data(), h, w, m.enc[i], out.data());
    leaky_relu_forward(out);
    cur = std::move(out);
    h = oh;
    w = ow;
  }
  std::vector<double> z(static_cast<std::size_t>(c.latent_dim), 0.0);
  dense_forward(cur.data(), m.enc_fc, z.data());
  return z;
}

Image decode(const RepairerModel& m, const std::vector<double>& z) {
  const RepairerConfig& c = m.config;
  require(static_cast<int>(z.size()) == c.latent_dim,
          "latent vector size does not match the model configuration");
  std::vector<double> cur(static_cast<std::size_t>(m.dec_fc.out_dim), 0.0);
  dense_forward(z.data(), m.dec_fc, cur.data());
  leaky_relu_forward(cur);
  int h = c.bottleneck_h(), w = c.bottleneck_w();
  const int k = c.stages();
  for (int i = 0; i < k; ++i) {
    const int oh = 2 * h, ow = 2 * w;
    std::vector<double> out(static_cast<std::size_t>(m.dec[i].out_ch) * oh * ow);
    deconv2d_forward(cur.data(), h, w, m.dec[i], out.data());
    if (i + 1 < k)
      leaky_relu_forward(out);
    else
      sigmoid_forward(out);
    cur = std::move(out);
    h = oh;
    w = ow;
  }
  Image out = Image::zeros(c.height, c.width, c.channels);
  out.pix = std::move(cur);
  return out;
}

std::vector<double> style_mix(const RepairerModel& m,
                              const std::vector<double>& z) {
  require(z.size() == m.latent_mean.size(),
          "latent vector size does not match the model configuration");
  std::vector<double> mixed(z.size());
  const double a = m.config.mix_alpha;
  for (std::size_t i = 0; i < z.size(); ++i)
    mixed[i] = (1.0 - a) * z[i] + a * m.latent_mean[i];
  return mixed;
}

Image repair(const RepairerModel& m, const Image& eroded) {
  return decode(m, style_mix(m, encode(m, eroded)));
}

void repair_backward(const RepairerModel& m, const RepairTape& t,
                     const std::vector<double>& dout, RepairerGrads& g) {
  const RepairerConfig& c = m.config;
  const int k = c.stages();
  require(dout.size() == t.output.pix.size(),
          "output gradient size mismatch");

  // Decoder, walked backwards.  Activation derivative first, then the
  // deconv kernel propagates to the stage input.
  std::vector<double> grad = dout;
  for (int i = k - 1; i >= 0; --i) {
    const std::vector<double>& post = t.dec_post[static_cast<std::size_t>(i)];
    const std::vector<double>& pre = t.dec_pre[static_cast<std::size_t>(i)];
    if (i == k - 1) {
      for (std::size_t j = 0; j < grad.size(); ++j)
        grad[j] *= sigmoid_grad_from_post(post[j]);
    } else {
      for (std::size_t j = 0; j < grad.size(); ++j)
        grad[j] *= leaky_relu_grad(pre[j]);
    }
    const int h = c.bottleneck_h() << i;
    const int w = c.bottleneck_w() << i;
    const std::vector<double>& stage_in =
        i == 0 ? t.dec_fc_post : t.dec_post[static_cast<std::size_t>(i) - 1];
    std::vector<double> gin(stage_in.size(), 0.0);
    deconv2d_backward(stage_in.data(), h, w, m.dec[static_cast<std::size_t>(i)],
                      grad.data(), gin.data(),
                      &g.dec_w[static_cast<std::size_t>(i)],
                      &g.dec_b[static_cast<std::size_t>(i)]);
    grad = std::move(gin);
  }
  for (std::size_t j = 0; j < grad.size(); ++j)
    grad[j] *= leaky_relu_grad(t.dec_fc_pre[j]);
  std::vector<double> dz_mixed(static_cast<std::size_t>(c.latent_dim), 0.0);
  dense_backward(t.z_mixed.data(), m.dec_fc, grad.data(), dz_mixed.data(),
                 &g.dec_fc_w, &g.dec_fc_b);

  // Style mixing: latent_mean is a constant, so only the (1 - alpha) branch
  // carries gradient.
  std::vector<double> dz(dz_mixed.size());
  for (std::size_t i = 0; i < dz.size(); ++i)
    dz[i] = (1.0 - c.mix_alpha) * dz_mixed[i];

  const std::vector<double>& enc_out =
      k > 0 ? t.enc_post.back() : t.input.pix;
  std::vector<double> gflat(enc_out.size(), 0.0);
  dense_backward(enc_out.data(), m.enc_fc, dz.data(), gflat.data(),
                 &g.enc_fc_w, &g.enc_fc_b);

  grad = std::move(gflat);
  for (int i = k - 1; i >= 0; --i) {
    const std::vector<double>& pre = t.enc_pre[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < grad.size(); ++j)
      grad[j] *= leaky_relu_grad(pre[j]);
    const int h = c.height >> i;
    const int w = c.width >> i;
    const std::vector<double>& stage_in =
        i == 0 ? t.input.pix : t.enc_post[static_cast<std::size_t>(i) - 1];
    std::vector<double> gin(i > 0 ? stage_in.size() : 0, 0.0);
    conv2d_backward(stage_in.data(), h, w, m.enc[static_cast<std::size_t>(i)],
                    grad.data(), i > 0 ? gin.data() : nullptr,
                    &g.enc_w[static_cast<std::size_t>(i)],
                    &g.enc_b[static_cast<std::size_t>(i)]);
    if (i > 0) grad = std::move(gin);
  }
}

void update_latent_mean(RepairerModel& m, const DatasetManifest& manifest) {
  const auto& train = manifest.split_indices(Split::train);
  require(!train.empty(), "train split is empty");
  std::vector<double> acc(m.latent_mean.size(), 0.0);
  for (std::int64_t idx : train) {
    const Image im = load_sample(manifest, idx, m.config.height,
                                 m.config.width, m.config.channels);
    const std::vector<double> z = encode(m, im);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += z[i];
  }
  for (std::size_t i = 0; i < acc.size(); ++i)
    m.latent_mean[i] = to_f32_grid(acc[i] / static_cast<double>(train.size()));
}

}  // namespace srood
