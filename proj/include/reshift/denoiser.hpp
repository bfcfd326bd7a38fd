#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "reshift/common.hpp"
#include "reshift/conditioning.hpp"
#include "reshift/rng.hpp"
#include "reshift/tensor.hpp"

// Small temporal-convolution noise predictor with hand-written backprop:
// four kernel-3 conv layers at a fixed channel width, residual connections,
// a sinusoidal step embedding added after the first layer, per-layer
// additive conditioning projections, and a bias-free 1x1 output layer.

namespace reshift {

struct DenoiserConfig {
  int n_mels = 128;
  int channels = 64;
  int cond_dim = 2;  // f0 + volume (+ content width when present)
  double f0_scale = 800.0;   // conditioning normalizer for the f0 channel
  double mel_mean = -3.0;    // log-mel normalization: x = (mel - mean) / scale
  double mel_scale = 8.0;

  void validate() const {
    if (n_mels < 1 || channels < 2 || cond_dim < 1)
      throw ConfigError("denoiser config: bad dimensions");
    if (mel_scale <= 0.0 || f0_scale <= 0.0)
      throw ConfigError("denoiser config: scales must be positive");
  }
};

struct Tensor {
  std::string name;
  std::vector<size_t> shape;
  std::vector<double> v;

  size_t size() const { return v.size(); }
};

inline Tensor make_tensor(std::string name, std::vector<size_t> shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  Tensor t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  t.v.assign(n, 0.0);
  return t;
}

struct DenoiserParams {
  DenoiserConfig cfg;
  std::vector<Tensor> tensors;

  Tensor& at(const std::string& name) {
    for (Tensor& t : tensors)
      if (t.name == name) return t;
    throw ConfigError("denoiser: unknown tensor " + name);
  }
  const Tensor& at(const std::string& name) const {
    for (const Tensor& t : tensors)
      if (t.name == name) return t;
    throw ConfigError("denoiser: unknown tensor " + name);
  }

  bool all_finite() const {
    for (const Tensor& t : tensors)
      for (double x : t.v)
        if (!std::isfinite(x)) return false;
    return true;
  }
};

// Conv weights are laid out [c_out][tap][c_in] so the innermost loop runs
// over contiguous memory.
inline DenoiserParams denoiser_init(const DenoiserConfig& cfg, uint64_t seed) {
  cfg.validate();
  const size_t C = static_cast<size_t>(cfg.channels);
  const size_t M = static_cast<size_t>(cfg.n_mels);
  const size_t D = static_cast<size_t>(cfg.cond_dim);

  DenoiserParams p;
  p.cfg = cfg;
  p.tensors.push_back(make_tensor("in_w", {C, 3, M}));
  p.tensors.push_back(make_tensor("in_b", {C}));
  for (int l = 1; l <= 3; ++l) {
    p.tensors.push_back(make_tensor("conv" + std::to_string(l) + "_w", {C, 3, C}));
    p.tensors.push_back(make_tensor("conv" + std::to_string(l) + "_b", {C}));
  }
  for (int l = 0; l <= 3; ++l) {
    p.tensors.push_back(make_tensor("cond" + std::to_string(l) + "_w", {C, D}));
    p.tensors.push_back(make_tensor("cond" + std::to_string(l) + "_b", {C}));
  }
  p.tensors.push_back(make_tensor("step_w", {C, C}));
  p.tensors.push_back(make_tensor("step_b", {C}));
  p.tensors.push_back(make_tensor("out_w", {M, C}));

  Rng rng(seed);
  for (Tensor& t : p.tensors) {
    if (t.shape.size() < 2) continue;  // biases start at zero
    size_t fan_in = 1;
    for (size_t i = 1; i < t.shape.size(); ++i) fan_in *= t.shape[i];
    double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    if (t.name == "out_w") scale *= 0.1;  // start close to the identity drift
    for (double& x : t.v) x = rng.normal() * scale;
  }
  return p;
}

inline std::vector<double> step_embedding(int t, int channels) {
  const int half = channels / 2;
  std::vector<double> emb(static_cast<size_t>(channels), 0.0);
  for (int i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / std::max(1, half - 1));
    emb[static_cast<size_t>(i)] = std::sin(t * freq);
    emb[static_cast<size_t>(half + i)] = std::cos(t * freq);
  }
  return emb;
}

// Conditioning rows as fed to the network.
inline Matrix conditioning_matrix(const Conditioning& cond, const DenoiserConfig& cfg) {
  cond.validate();
  if (static_cast<size_t>(cfg.cond_dim) != cond.width())
    throw ConfigError("denoiser: conditioning width " + std::to_string(cond.width()) +
                      " does not match configured cond_dim " + std::to_string(cfg.cond_dim));
  Matrix c(cond.frames(), static_cast<size_t>(cfg.cond_dim));
  for (size_t f = 0; f < cond.frames(); ++f) {
    c(f, 0) = cond.f0[f] / cfg.f0_scale;
    c(f, 1) = cond.volume[f];
    if (cond.has_content())
      for (size_t j = 0; j < cond.content.cols; ++j) c(f, 2 + j) = cond.content(f, j);
  }
  return c;
}

// Forward intermediates kept for backprop.
struct DenoiserTrace {
  Matrix x;      // input frames x mels
  Matrix cond;   // frames x cond_dim
  std::vector<double> emb;
  Matrix t0, t1, t2, t3;      // tanh outputs per layer
  Matrix h0p, h1, h2, h3;     // post-residual activations
};

namespace denoiser_detail {

// z[f][c] = sum_{d,ci} W[c][d][ci] * h[f+d-1][ci] + b[c] + Wc[c].cond[f] + bc[c]
inline void conv_forward(const Matrix& h, const Tensor& w, const Tensor& b, const Tensor& wc,
                         const Tensor& bc, const Matrix& cond, Matrix& z) {
  const size_t F = h.rows, Cin = h.cols, Cout = w.shape[0], D = cond.cols;
  z = Matrix(F, Cout);
  for (size_t f = 0; f < F; ++f) {
    for (size_t c = 0; c < Cout; ++c) {
      double acc = b.v[c] + bc.v[c];
      for (size_t d = 0; d < 3; ++d) {
        const long fi = static_cast<long>(f) + static_cast<long>(d) - 1;
        if (fi < 0 || fi >= static_cast<long>(F)) continue;
        const double* hw = h.row(static_cast<size_t>(fi));
        const double* ww = w.v.data() + (c * 3 + d) * Cin;
        double dot = 0.0;
        for (size_t ci = 0; ci < Cin; ++ci) dot += ww[ci] * hw[ci];
        acc += dot;
      }
      const double* wcr = wc.v.data() + c * D;
      const double* cr = cond.row(f);
      for (size_t j = 0; j < D; ++j) acc += wcr[j] * cr[j];
      z(f, c) = acc;
    }
  }
}

// Backprop through conv_forward: accumulates weight/bias/conditioning
// gradients and the gradient w.r.t. the layer input.
inline void conv_backward(const Matrix& h, const Tensor& w, const Matrix& cond, const Matrix& dz,
                          Tensor& dw, Tensor& db, Tensor& dwc, Tensor& dbc, Matrix& dh) {
  const size_t F = h.rows, Cin = h.cols, Cout = w.shape[0], D = cond.cols;
  dh = Matrix(F, Cin);
  for (size_t f = 0; f < F; ++f) {
    for (size_t c = 0; c < Cout; ++c) {
      const double g = dz(f, c);
      if (g == 0.0) continue;
      db.v[c] += g;
      dbc.v[c] += g;
      const double* cr = cond.row(f);
      double* dwcr = dwc.v.data() + c * D;
      for (size_t j = 0; j < D; ++j) dwcr[j] += g * cr[j];
      for (size_t d = 0; d < 3; ++d) {
        const long fi = static_cast<long>(f) + static_cast<long>(d) - 1;
        if (fi < 0 || fi >= static_cast<long>(F)) continue;
        const double* hw = h.row(static_cast<size_t>(fi));
        double* dww = dw.v.data() + (c * 3 + d) * Cin;
        double* dhw = dh.row(static_cast<size_t>(fi));
        const double* ww = w.v.data() + (c * 3 + d) * Cin;
        for (size_t ci = 0; ci < Cin; ++ci) {
          dww[ci] += g * hw[ci];
          dhw[ci] += g * ww[ci];
        }
      }
    }
  }
}

}  // namespace denoiser_detail

inline Matrix denoiser_forward_traced(const Matrix& x, const Conditioning& cond, int t,
                                      const DenoiserParams& p, DenoiserTrace* trace) {
  p.cfg.validate();
  if (x.cols != static_cast<size_t>(p.cfg.n_mels))
    throw ConfigError("denoiser: input has " + std::to_string(x.cols) + " mel bands, expected " +
                      std::to_string(p.cfg.n_mels));
  if (cond.frames() != x.rows)
    throw ConfigError("denoiser: conditioning frames do not match input frames");
  if (!p.all_finite()) throw ConfigError("denoiser: non-finite parameters");

  const size_t F = x.rows;
  const size_t C = static_cast<size_t>(p.cfg.channels);
  const size_t M = static_cast<size_t>(p.cfg.n_mels);
  const Matrix cm = conditioning_matrix(cond, p.cfg);
  const std::vector<double> emb = step_embedding(t, p.cfg.channels);

  // step projection
  const Tensor& sw = p.at("step_w");
  const Tensor& sb = p.at("step_b");
  std::vector<double> stepv(C, 0.0);
  for (size_t c = 0; c < C; ++c) {
    double acc = sb.v[c];
    const double* row = sw.v.data() + c * C;
    for (size_t e = 0; e < C; ++e) acc += row[e] * emb[e];
    stepv[c] = acc;
  }

  Matrix z;
  denoiser_detail::conv_forward(x, p.at("in_w"), p.at("in_b"), p.at("cond0_w"), p.at("cond0_b"),
                                cm, z);
  Matrix t0(F, C), h0p(F, C);
  for (size_t i = 0; i < z.data.size(); ++i) t0.data[i] = std::tanh(z.data[i]);
  for (size_t f = 0; f < F; ++f)
    for (size_t c = 0; c < C; ++c) h0p(f, c) = t0(f, c) + stepv[c];

  auto res_layer = [&](const Matrix& hin, int l, Matrix& tanh_out, Matrix& hout) {
    Matrix zz;
    denoiser_detail::conv_forward(hin, p.at("conv" + std::to_string(l) + "_w"),
                                  p.at("conv" + std::to_string(l) + "_b"),
                                  p.at("cond" + std::to_string(l) + "_w"),
                                  p.at("cond" + std::to_string(l) + "_b"), cm, zz);
    tanh_out = Matrix(hin.rows, hin.cols);
    hout = Matrix(hin.rows, hin.cols);
    for (size_t i = 0; i < zz.data.size(); ++i) {
      tanh_out.data[i] = std::tanh(zz.data[i]);
      hout.data[i] = tanh_out.data[i] + hin.data[i];
    }
  };

  Matrix t1, h1, t2, h2, t3, h3;
  res_layer(h0p, 1, t1, h1);
  res_layer(h1, 2, t2, h2);
  res_layer(h2, 3, t3, h3);

  const Tensor& ow = p.at("out_w");
  Matrix eps(F, M);
  for (size_t f = 0; f < F; ++f) {
    const double* hr = h3.row(f);
    for (size_t m = 0; m < M; ++m) {
      const double* wr = ow.v.data() + m * C;
      double acc = 0.0;
      for (size_t c = 0; c < C; ++c) acc += wr[c] * hr[c];
      eps(f, m) = acc;
    }
  }

  if (trace) {
    trace->x = x;
    trace->cond = cm;
    trace->emb = emb;
    trace->t0 = std::move(t0);
    trace->t1 = std::move(t1);
    trace->t2 = std::move(t2);
    trace->t3 = std::move(t3);
    trace->h0p = std::move(h0p);
    trace->h1 = std::move(h1);
    trace->h2 = std::move(h2);
    trace->h3 = std::move(h3);
  }
  return eps;
}

inline Matrix denoiser_forward(const Matrix& x, const Conditioning& cond, int t,
                               const DenoiserParams& p) {
  return denoiser_forward_traced(x, cond, t, p, nullptr);
}

inline std::vector<Tensor> make_gradients(const DenoiserParams& p) {
  std::vector<Tensor> g;
  g.reserve(p.tensors.size());
  for (const Tensor& t : p.tensors) g.push_back(make_tensor(t.name, t.shape));
  return g;
}

inline Tensor& grad_at(std::vector<Tensor>& grads, const std::string& name) {
  for (Tensor& t : grads)
    if (t.name == name) return t;
  throw ConfigError("gradients: unknown tensor " + name);
}

// Reverse pass; accumulates into grads (callers zero or reuse across a
// batch).
inline void denoiser_backward(const DenoiserTrace& tr, const Matrix& d_eps,
                              const DenoiserParams& p, std::vector<Tensor>& grads) {
  const size_t F = tr.x.rows;
  const size_t C = static_cast<size_t>(p.cfg.channels);
  const size_t M = static_cast<size_t>(p.cfg.n_mels);
  if (d_eps.rows != F || d_eps.cols != M) throw ConfigError("denoiser backward: shape mismatch");

  const Tensor& ow = p.at("out_w");
  Tensor& dow = grad_at(grads, "out_w");
  Matrix dh3(F, C);
  for (size_t f = 0; f < F; ++f) {
    const double* hr = tr.h3.row(f);
    const double* gr = d_eps.row(f);
    for (size_t m = 0; m < M; ++m) {
      const double g = gr[m];
      if (g == 0.0) continue;
      const double* wr = ow.v.data() + m * C;
      double* dwr = dow.v.data() + m * C;
      double* dhr = dh3.row(f);
      for (size_t c = 0; c < C; ++c) {
        dwr[c] += g * hr[c];
        dhr[c] += g * wr[c];
      }
    }
  }

  auto res_backward = [&](const Matrix& hin, const Matrix& tanh_out, int l, const Matrix& dhout,
                          Matrix& dhin) {
    // hout = tanh(z) + hin
    Matrix dz(F, C);
    for (size_t i = 0; i < dz.data.size(); ++i)
      dz.data[i] = dhout.data[i] * (1.0 - tanh_out.data[i] * tanh_out.data[i]);
    Matrix dh_conv;
    denoiser_detail::conv_backward(hin, p.at("conv" + std::to_string(l) + "_w"), tr.cond, dz,
                                   grad_at(grads, "conv" + std::to_string(l) + "_w"),
                                   grad_at(grads, "conv" + std::to_string(l) + "_b"),
                                   grad_at(grads, "cond" + std::to_string(l) + "_w"),
                                   grad_at(grads, "cond" + std::to_string(l) + "_b"), dh_conv);
    dhin = Matrix(F, C);
    for (size_t i = 0; i < dhin.data.size(); ++i)
      dhin.data[i] = dhout.data[i] + dh_conv.data[i];  // residual + conv path
  };

  Matrix dh2, dh1, dh0p;
  res_backward(tr.h2, tr.t3, 3, dh3, dh2);
  res_backward(tr.h1, tr.t2, 2, dh2, dh1);
  res_backward(tr.h0p, tr.t1, 1, dh1, dh0p);

  // h0p = tanh(z0) + step_v
  Tensor& dsw = grad_at(grads, "step_w");
  Tensor& dsb = grad_at(grads, "step_b");
  for (size_t c = 0; c < C; ++c) {
    double acc = 0.0;
    for (size_t f = 0; f < F; ++f) acc += dh0p(f, c);
    dsb.v[c] += acc;
    double* row = dsw.v.data() + c * C;
    for (size_t e = 0; e < C; ++e) row[e] += acc * tr.emb[e];
  }
  Matrix dz0(F, C);
  for (size_t i = 0; i < dz0.data.size(); ++i)
    dz0.data[i] = dh0p.data[i] * (1.0 - tr.t0.data[i] * tr.t0.data[i]);
  Matrix dx_unused;
  denoiser_detail::conv_backward(tr.x, p.at("in_w"), tr.cond, dz0, grad_at(grads, "in_w"),
                                 grad_at(grads, "in_b"), grad_at(grads, "cond0_w"),
                                 grad_at(grads, "cond0_b"), dx_unused);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long lr_decay_every = 10000;  // halve the rate each interval
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

inline AdamState make_adam_state(const DenoiserParams& p) {
  AdamState s;
  s.m = make_gradients(p);
  s.v = make_gradients(p);
  return s;
}

inline double adam_effective_lr(const AdamConfig& cfg, long step) {
  const long decays = cfg.lr_decay_every > 0 ? step / cfg.lr_decay_every : 0;
  return cfg.lr * std::pow(0.5, static_cast<double>(decays));
}

inline void adam_update(DenoiserParams& p, const std::vector<Tensor>& grads, AdamState& state,
                        const AdamConfig& cfg) {
  const double lr = adam_effective_lr(cfg, state.step);
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (size_t i = 0; i < p.tensors.size(); ++i) {
    Tensor& w = p.tensors[i];
    const Tensor& g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (size_t j = 0; j < w.v.size(); ++j) {
      m.v[j] = cfg.beta1 * m.v[j] + (1.0 - cfg.beta1) * g.v[j];
      v.v[j] = cfg.beta2 * v.v[j] + (1.0 - cfg.beta2) * g.v[j] * g.v[j];
      const double mh = m.v[j] / bc1;
      const double vh = v.v[j] / bc2;
      w.v[j] -= lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

}  // namespace reshift
