#include "srood/metrics.hpp"

#include <cmath>

#include "srood/common.hpp"

namespace srood {

void PhiConfig::validate() const {
  require(channels == 1 || channels == 3, "channels must be 1 or 3");
  require(height >= 1 && width >= 1, "resolution must be positive");
  for (int w : widths) require(w >= 1, "phi widths must be positive");
  require(!taps.empty(), "phi needs at least one tap");
  int prev = -1;
  for (int t : taps) {
    require(t > prev, "phi taps must be strictly ascending");
    require(t >= 0 && t <= static_cast<int>(widths.size()),
            "phi tap " + std::to_string(t) + " exceeds the trunk depth");
    prev = t;
  }
  const int k = static_cast<int>(widths.size());
  require((height % (1 << k)) == 0 && (width % (1 << k)) == 0,
          "resolution must divide by 2^depth of the phi trunk");
}

void LossWeights::validate() const {
  require(lambda1 >= 0.0 && lambda2 >= 0.0,
          "loss weights must be non-negative");
  require(lambda1 > 0.0 || lambda2 > 0.0,
          "at least one loss weight must be positive");
}

namespace {

PerceptualExtractor build_phi(const PhiConfig& cfg) {
  cfg.validate();
  PerceptualExtractor phi;
  phi.config = cfg;
  int in_ch = cfg.channels;
  for (int w : cfg.widths) {
    phi.convs.push_back(Conv2d::make(in_ch, w, /*stride=*/2));
    in_ch = w;
  }
  return phi;
}

/// Unit-normalizes `raw` across channels at every position; returns the
/// per-position norms.
FeatureMap normalize_map(const std::vector<double>& raw, int ch, int h, int w,
                         std::vector<double>* norms) {
  FeatureMap f;
  f.channels = ch;
  f.height = h;
  f.width = w;
  f.v.assign(raw.size(), 0.0);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  norms->assign(plane, 0.0);
  for (std::size_t p = 0; p < plane; ++p) {
    double sq = 0.0;
    for (int c = 0; c < ch; ++c) {
      const double v = raw[c * plane + p];
      sq += v * v;
    }
    const double n = std::sqrt(sq);
    (*norms)[p] = n;
    if (n > 0.0)
      for (int c = 0; c < ch; ++c) f.v[c * plane + p] = raw[c * plane + p] / n;
  }
  return f;
}

}  // namespace

PerceptualExtractor init_phi(const PhiConfig& cfg, std::uint64_t seed) {
  PerceptualExtractor phi = build_phi(cfg);
  Rng rng = Rng::stream(seed, Rng::kPhi, 0);
  for (Conv2d& l : phi.convs) init_conv(l, rng);
  return phi;
}

PhiTape phi_forward(const PerceptualExtractor& phi, const Image& im) {
  const PhiConfig& c = phi.config;
  require(im.height == c.height && im.width == c.width &&
              im.channels == c.channels,
          "input shape does not match the phi configuration");
  PhiTape t;
  std::vector<double> cur = im.pix;
  int h = c.height, w = c.width;
  for (std::size_t i = 0; i < phi.convs.size(); ++i) {
    const int oh = conv_out_len(h, 2), ow = conv_out_len(w, 2);
    std::vector<double> pre(static_cast<std::size_t>(phi.convs[i].out_ch) *
                            oh * ow);
    conv2d_forward(cur.data(), h, w, phi.convs[i], pre.data());
    t.pre.push_back(pre);
    leaky_relu_forward(pre);
    t.post.push_back(pre);
    cur = std::move(pre);
    h = oh;
    w = ow;
  }
  for (int tap : c.taps) {
    std::vector<double> norms;
    if (tap == 0) {
      t.feat.push_back(normalize_map(im.pix, c.channels, c.height, c.width,
                                     &norms));
    } else {
      const int th = c.height >> tap, tw = c.width >> tap;
      t.feat.push_back(normalize_map(t.post[static_cast<std::size_t>(tap) - 1],
                                     c.widths[static_cast<std::size_t>(tap) - 1],
                                     th, tw, &norms));
    }
    t.norms.push_back(std::move(norms));
  }
  return t;
}

std::vector<FeatureMap> extract_features(const PerceptualExtractor& phi,
                                         const Image& im) {
  return phi_forward(phi, im).feat;
}

std::vector<double> phi_backward_to_input(
    const PerceptualExtractor& phi, const Image& input, const PhiTape& tape,
    const std::vector<std::vector<double>>& dfeat) {
  const PhiConfig& c = phi.config;
  require(dfeat.size() == tape.feat.size(), "tap gradient count mismatch");
  const int stages = static_cast<int>(phi.convs.size());
  std::vector<std::vector<double>> dpost(static_cast<std::size_t>(stages));
  for (int i = 0; i < stages; ++i)
    dpost[static_cast<std::size_t>(i)].assign(tape.post[static_cast<std::size_t>(i)].size(), 0.0);
  std::vector<double> dinput(input.pix.size(), 0.0);

  // Normalization backward per tap:
  //   d(raw) = (d(fhat) - fhat * <d(fhat), fhat>) / norm,  zero where norm is.
  for (std::size_t ti = 0; ti < tape.feat.size(); ++ti) {
    const FeatureMap& f = tape.feat[ti];
    const std::vector<double>& norms = tape.norms[ti];
    const std::vector<double>& d = dfeat[ti];
    require(d.size() == f.v.size(), "tap gradient size mismatch");
    const std::size_t plane = static_cast<std::size_t>(f.height) * f.width;
    std::vector<double>& target =
        c.taps[ti] == 0 ? dinput
                        : dpost[static_cast<std::size_t>(c.taps[ti]) - 1];
    for (std::size_t p = 0; p < plane; ++p) {
      const double n = norms[p];
      if (n <= 0.0) continue;
      double dot = 0.0;
      for (int ch = 0; ch < f.channels; ++ch)
        dot += d[ch * plane + p] * f.v[ch * plane + p];
      for (int ch = 0; ch < f.channels; ++ch)
        target[ch * plane + p] +=
            (d[ch * plane + p] - f.v[ch * plane + p] * dot) / n;
    }
  }

  for (int i = stages - 1; i >= 0; --i) {
    std::vector<double>& g = dpost[static_cast<std::size_t>(i)];
    const std::vector<double>& pre = tape.pre[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < g.size(); ++j)
      g[j] *= leaky_relu_grad(pre[j]);
    const int h = c.height >> i, w = c.width >> i;
    const std::vector<double>& stage_in =
        i == 0 ? input.pix : tape.post[static_cast<std::size_t>(i) - 1];
    double* gin = i == 0 ? dinput.data()
                         : dpost[static_cast<std::size_t>(i) - 1].data();
    conv2d_backward(stage_in.data(), h, w, phi.convs[static_cast<std::size_t>(i)],
                    g.data(), gin, nullptr, nullptr);
  }
  return dinput;
}

double l2_loss(const Image& a, const Image& b) {
  require(a.same_shape(b), "l2_loss requires identically shaped images");
  require(!a.pix.empty(), "l2_loss on empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pix.size(); ++i) {
    const double d = a.pix[i] - b.pix[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.pix.size());
}

namespace {

double lpips_from_tapes(const PhiTape& ta, const PhiTape& tb) {
  double total = 0.0;
  for (std::size_t ti = 0; ti < ta.feat.size(); ++ti) {
    const FeatureMap& fa = ta.feat[ti];
    const FeatureMap& fb = tb.feat[ti];
    double layer = 0.0;
    for (std::size_t i = 0; i < fa.v.size(); ++i) {
      const double d = fa.v[i] - fb.v[i];
      layer += d * d;
    }
    total += layer / (static_cast<double>(fa.height) * fa.width);
  }
  return total / static_cast<double>(ta.feat.size());
}

}  // namespace

double lpips_distance(const PerceptualExtractor& phi, const Image& a,
                      const Image& b) {
  require(a.same_shape(b), "lpips_distance requires identically shaped images");
  const PhiTape ta = phi_forward(phi, a);
  const PhiTape tb = phi_forward(phi, b);
  return lpips_from_tapes(ta, tb);
}

LossParts total_loss(const RepairerModel& model, const PerceptualExtractor& phi,
                     const ErosionOp& op, const Image& x,
                     const LossWeights& w) {
  w.validate();
  const Image eroded = apply_erosion(x, op);
  const Image r = repair(model, eroded);
  LossParts parts;
  parts.l2 = l2_loss(r, x);
  parts.lpips = lpips_distance(phi, r, x);
  parts.total = w.lambda1 * parts.l2 + w.lambda2 * parts.lpips;
  return parts;
}

LossParts total_loss_grad(const RepairerModel& model,
                          const PerceptualExtractor& phi, const ErosionOp& op,
                          const Image& x, const LossWeights& w,
                          RepairerGrads& g) {
  w.validate();
  const Image eroded = apply_erosion(x, op);
  const RepairTape tape = repair_forward(model, eroded);
  const Image& r = tape.output;

  LossParts parts;
  parts.l2 = l2_loss(r, x);
  const PhiTape ta = phi_forward(phi, r);
  const PhiTape tb = phi_forward(phi, x);
  parts.lpips = lpips_from_tapes(ta, tb);
  parts.total = w.lambda1 * parts.l2 + w.lambda2 * parts.lpips;

  // d(total)/d(r): the l2 term plus the perceptual term through phi.
  const double n_pix = static_cast<double>(r.pix.size());
  std::vector<double> dr(r.pix.size(), 0.0);
  for (std::size_t i = 0; i < dr.size(); ++i)
    dr[i] = w.lambda1 * 2.0 * (r.pix[i] - x.pix[i]) / n_pix;

  if (w.lambda2 > 0.0) {
    const double layer_count = static_cast<double>(ta.feat.size());
    std::vector<std::vector<double>> dfeat(ta.feat.size());
    for (std::size_t ti = 0; ti < ta.feat.size(); ++ti) {
      const FeatureMap& fa = ta.feat[ti];
      const FeatureMap& fb = tb.feat[ti];
      const double scale =
          2.0 / (layer_count * static_cast<double>(fa.height) * fa.width);
      dfeat[ti].assign(fa.v.size(), 0.0);
      for (std::size_t i = 0; i < fa.v.size(); ++i)
        dfeat[ti][i] = scale * (fa.v[i] - fb.v[i]);
    }
    const std::vector<double> dphi =
        phi_backward_to_input(phi, r, ta, dfeat);
    for (std::size_t i = 0; i < dr.size(); ++i)
      dr[i] += w.lambda2 * dphi[i];
  }

  repair_backward(model, tape, dr, g);
  return parts;
}

PhiFitResult fit_phi(const DatasetManifest& manifest, const PhiFitConfig& cfg) {
  PhiFitResult result;
  result.phi = build_phi(cfg.arch);
  if (cfg.arch.widths.empty()) return result;  // identity extractor

  require(cfg.n_iter >= 1, "phi fit needs at least one iteration");
  require(cfg.batch_size >= 1, "phi fit batch size must be positive");
  require(cfg.learning_rate > 0.0, "phi fit learning rate must be positive");

  const PhiConfig& a = cfg.arch;
  const int k = static_cast<int>(a.widths.size());

  Rng init_rng = Rng::stream(cfg.seed, Rng::kPhi, 0);
  for (Conv2d& l : result.phi.convs) init_conv(l, init_rng);

  // Mirrored reconstruction decoder, discarded after the fit.
  std::vector<Deconv2d> dec;
  for (int i = k - 1; i >= 0; --i) {
    const int oc = i > 0 ? a.widths[static_cast<std::size_t>(i) - 1]
                         : a.channels;
    dec.push_back(Deconv2d::make(a.widths[static_cast<std::size_t>(i)], oc));
  }
  for (Deconv2d& l : dec) init_deconv(l, init_rng);

  std::vector<Tensor*> params;
  for (Conv2d& l : result.phi.convs) {
    params.push_back(&l.w);
    params.push_back(&l.b);
  }
  for (Deconv2d& l : dec) {
    params.push_back(&l.w);
    params.push_back(&l.b);
  }
  std::vector<Tensor> grads, m1, m2;
  for (Tensor* p : params) {
    grads.push_back(Tensor::zeros(p->shape));
    m1.push_back(Tensor::zeros(p->shape));
    m2.push_back(Tensor::zeros(p->shape));
  }

  SampleCache cache(manifest, a.height, a.width, a.channels);
  result.loss_trace.reserve(static_cast<std::size_t>(cfg.n_iter));

  for (int iter = 1; iter <= cfg.n_iter; ++iter) {
    Rng batch_rng = Rng::stream(cfg.seed, Rng::kPhi, static_cast<std::uint64_t>(iter));
    const std::vector<std::int64_t> idxs = sample_batch_indices(
        manifest, Split::train, cfg.batch_size, batch_rng);
    for (Tensor& t : grads) std::fill(t.v.begin(), t.v.end(), 0.0);

    double loss_sum = 0.0;
    for (std::int64_t idx : idxs) {
      const Image& x = cache.get(idx);
      // Forward through trunk and decoder, keeping activations.
      std::vector<std::vector<double>> pre(static_cast<std::size_t>(2 * k));
      std::vector<std::vector<double>> post(static_cast<std::size_t>(2 * k));
      std::vector<double> cur = x.pix;
      int h = a.height, w = a.width;
      for (int i = 0; i < k; ++i) {
        const int oh = conv_out_len(h, 2), ow = conv_out_len(w, 2);
        std::vector<double> act(
            static_cast<std::size_t>(result.phi.convs[static_cast<std::size_t>(i)].out_ch) * oh * ow);
        conv2d_forward(cur.data(), h, w,
                       result.phi.convs[static_cast<std::size_t>(i)],
                       act.data());
        pre[static_cast<std::size_t>(i)] = act;
        leaky_relu_forward(act);
        post[static_cast<std::size_t>(i)] = act;
        cur = std::move(act);
        h = oh;
        w = ow;
      }
      for (int i = 0; i < k; ++i) {
        const int oh = 2 * h, ow = 2 * w;
        std::vector<double> act(
            static_cast<std::size_t>(dec[static_cast<std::size_t>(i)].out_ch) * oh * ow);
        deconv2d_forward(cur.data(), h, w, dec[static_cast<std::size_t>(i)],
                         act.data());
        pre[static_cast<std::size_t>(k + i)] = act;
        if (i + 1 < k)
          leaky_relu_forward(act);
        else
          sigmoid_forward(act);
        post[static_cast<std::size_t>(k + i)] = act;
        cur = std::move(act);
        h = oh;
        w = ow;
      }

      const std::size_t n = cur.size();
      double loss = 0.0;
      std::vector<double> grad(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = cur[i] - x.pix[i];
        loss += d * d;
        grad[i] = 2.0 * d / static_cast<double>(n);
      }
      loss /= static_cast<double>(n);
      loss_sum += loss;

      // Backward through decoder then trunk, accumulating weight grads.
      for (int i = k - 1; i >= 0; --i) {
        const std::size_t s = static_cast<std::size_t>(k + i);
        if (i == k - 1)
          for (std::size_t j = 0; j < grad.size(); ++j)
            grad[j] *= sigmoid_grad_from_post(post[s][j]);
        else
          for (std::size_t j = 0; j < grad.size(); ++j)
            grad[j] *= leaky_relu_grad(pre[s][j]);
        const int ih = a.height >> (k - i), iw = a.width >> (k - i);
        const std::vector<double>& stage_in =
            i == 0 ? post[static_cast<std::size_t>(k) - 1]
                   : post[static_cast<std::size_t>(k + i) - 1];
        std::vector<double> gin(stage_in.size(), 0.0);
        const std::size_t pi = static_cast<std::size_t>(2 * (k + i));
        deconv2d_backward(stage_in.data(), ih, iw,
                          dec[static_cast<std::size_t>(i)], grad.data(),
                          gin.data(), &grads[pi], &grads[pi + 1]);
        grad = std::move(gin);
      }
      for (int i = k - 1; i >= 0; --i) {
        const std::size_t s = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < grad.size(); ++j)
          grad[j] *= leaky_relu_grad(pre[s][j]);
        const int ih = a.height >> i, iw = a.width >> i;
        const std::vector<double>& stage_in =
            i == 0 ? x.pix : post[static_cast<std::size_t>(i) - 1];
        std::vector<double> gin(i > 0 ? stage_in.size() : 0, 0.0);
        const std::size_t pi = static_cast<std::size_t>(2 * i);
        conv2d_backward(stage_in.data(), ih, iw,
                        result.phi.convs[static_cast<std::size_t>(i)],
                        grad.data(), i > 0 ? gin.data() : nullptr, &grads[pi],
                        &grads[pi + 1]);
        if (i > 0) grad = std::move(gin);
      }
    }

    const double mean_loss = loss_sum / static_cast<double>(cfg.batch_size);
    require(std::isfinite(mean_loss),
            "non-finite loss in phi fit at iteration " + std::to_string(iter));
    result.loss_trace.push_back(mean_loss);

    // Adam on the mean gradient.
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double t = static_cast<double>(iter);
    const double corr1 = 1.0 - std::pow(b1, t);
    const double corr2 = 1.0 - std::pow(b2, t);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor& p = *params[pi];
      for (std::size_t j = 0; j < p.v.size(); ++j) {
        const double gj =
            grads[pi].v[j] / static_cast<double>(cfg.batch_size);
        m1[pi].v[j] = b1 * m1[pi].v[j] + (1.0 - b1) * gj;
        m2[pi].v[j] = b2 * m2[pi].v[j] + (1.0 - b2) * gj * gj;
        const double mhat = m1[pi].v[j] / corr1;
        const double vhat = m2[pi].v[j] / corr2;
        p.v[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
  return result;
}

}  // namespace srood
