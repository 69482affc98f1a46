// Copyright 2026 The PromptForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "promptforge/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "promptforge/error.hpp"
#include "promptforge/parallel.hpp"

namespace promptforge::policy {
namespace {

constexpr double kLnEps = 1e-5;
constexpr const char* kProjNames[4] = {"q", "k", "v", "o"};

int proj_index(std::string_view target) {
  for (int p = 0; p < 4; ++p) {
    if (target == kProjNames[p]) return p;
  }
  return -1;
}

std::string layer_name(std::size_t l, std::string_view suffix) {
  return "h" + std::to_string(l) + "." + std::string(suffix);
}

std::vector<TensorSpec> build_layout(const PolicyConfig& c) {
  std::vector<TensorSpec> layout;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape, TensorKind kind) {
    std::size_t size = 1;
    for (auto s : shape) size *= s;
    layout.push_back(TensorSpec{std::move(name), std::move(shape), offset, size, kind});
    offset += size;
  };
  const std::size_t d = c.d_model;
  add("wte", {c.vocab_size, d}, TensorKind::kBase);
  add("wpe", {c.max_seq_len, d}, TensorKind::kBase);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    add(layer_name(l, "ln1.g"), {d}, TensorKind::kBase);
    add(layer_name(l, "ln1.b"), {d}, TensorKind::kBase);
    add(layer_name(l, "attn.wq"), {d, d}, TensorKind::kBase);
    add(layer_name(l, "attn.wk"), {d, d}, TensorKind::kBase);
    add(layer_name(l, "attn.wv"), {d, d}, TensorKind::kBase);
    add(layer_name(l, "attn.wo"), {d, d}, TensorKind::kBase);
    add(layer_name(l, "ln2.g"), {d}, TensorKind::kBase);
    add(layer_name(l, "ln2.b"), {d}, TensorKind::kBase);
    add(layer_name(l, "mlp.w1"), {d, c.d_ff}, TensorKind::kBase);
    add(layer_name(l, "mlp.b1"), {c.d_ff}, TensorKind::kBase);
    add(layer_name(l, "mlp.w2"), {c.d_ff, d}, TensorKind::kBase);
    add(layer_name(l, "mlp.b2"), {d}, TensorKind::kBase);
  }
  add("lnf.g", {d}, TensorKind::kBase);
  add("lnf.b", {d}, TensorKind::kBase);
  add("w_out", {d, c.vocab_size}, TensorKind::kBase);
  if (c.value_head) {
    add("value.w", {d}, TensorKind::kValueHead);
    add("value.b", {1}, TensorKind::kValueHead);
  }
  if (c.adapter_rank > 0) {
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      for (int p = 0; p < 4; ++p) {
        if (std::find(c.adapter_targets.begin(), c.adapter_targets.end(), kProjNames[p]) ==
            c.adapter_targets.end()) {
          continue;
        }
        add(layer_name(l, std::string("attn.") + kProjNames[p] + ".lora_a"), {c.adapter_rank, d},
            TensorKind::kAdapter);
        add(layer_name(l, std::string("attn.") + kProjNames[p] + ".lora_b"), {d, c.adapter_rank},
            TensorKind::kAdapter);
      }
    }
  }
  return layout;
}

struct LayerOffsets {
  std::size_t ln1_g, ln1_b, w[4], ln2_g, ln2_b, w1, b1, w2, b2;
  std::optional<std::size_t> lora_a[4], lora_b[4];
};

struct ModelOffsets {
  std::size_t wte, wpe, lnf_g, lnf_b, w_out;
  std::optional<std::size_t> value_w, value_b;
  std::vector<LayerOffsets> layers;
};

ModelOffsets offsets_of(const PolicyParameters& p) {
  ModelOffsets m{};
  auto off = [&](const std::string& name) { return p.spec(name).offset; };
  m.wte = off("wte");
  m.wpe = off("wpe");
  m.lnf_g = off("lnf.g");
  m.lnf_b = off("lnf.b");
  m.w_out = off("w_out");
  if (p.has_value_head()) {
    m.value_w = off("value.w");
    m.value_b = off("value.b");
  }
  const auto& c = p.config();
  m.layers.resize(c.n_layers);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    auto& L = m.layers[l];
    L.ln1_g = off(layer_name(l, "ln1.g"));
    L.ln1_b = off(layer_name(l, "ln1.b"));
    L.w[0] = off(layer_name(l, "attn.wq"));
    L.w[1] = off(layer_name(l, "attn.wk"));
    L.w[2] = off(layer_name(l, "attn.wv"));
    L.w[3] = off(layer_name(l, "attn.wo"));
    L.ln2_g = off(layer_name(l, "ln2.g"));
    L.ln2_b = off(layer_name(l, "ln2.b"));
    L.w1 = off(layer_name(l, "mlp.w1"));
    L.b1 = off(layer_name(l, "mlp.b1"));
    L.w2 = off(layer_name(l, "mlp.w2"));
    L.b2 = off(layer_name(l, "mlp.b2"));
    for (int q = 0; q < 4; ++q) {
      auto a = layer_name(l, std::string("attn.") + kProjNames[q] + ".lora_a");
      if (p.contains(a)) {
        L.lora_a[q] = off(a);
        L.lora_b[q] = off(layer_name(l, std::string("attn.") + kProjNames[q] + ".lora_b"));
      }
    }
  }
  return m;
}

// ---------------------------------------------------------------- kernels

// out[T x n] = in[T x m] * W[m x n] (+ b)
void linear_fwd(double* out, const double* in, const double* W, const double* b, std::size_t T,
                std::size_t m, std::size_t n) {
  for (std::size_t t = 0; t < T; ++t) {
    double* o = out + t * n;
    if (b) {
      std::copy(b, b + n, o);
    } else {
      std::fill(o, o + n, 0.0);
    }
    const double* x = in + t * m;
    for (std::size_t i = 0; i < m; ++i) {
      const double a = x[i];
      const double* w = W + i * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += a * w[j];
    }
  }
}

void linear_bwd(double* din, double* dW, double* db, const double* dout, const double* in,
                const double* W, std::size_t T, std::size_t m, std::size_t n) {
  for (std::size_t t = 0; t < T; ++t) {
    const double* g = dout + t * n;
    if (db) {
      for (std::size_t j = 0; j < n; ++j) db[j] += g[j];
    }
    const double* x = in + t * m;
    double* dx = din + t * m;
    for (std::size_t i = 0; i < m; ++i) {
      const double* w = W + i * n;
      double* dw = dW + i * n;
      const double xi = x[i];
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        s += g[j] * w[j];
        dw[j] += xi * g[j];
      }
      dx[i] += s;
    }
  }
}

// z[T x r] = in * A^T ; out += z * B^T, with A [r x d], B [d x r].
void adapter_fwd(double* out, double* z, const double* in, const double* A, const double* B,
                 std::size_t T, std::size_t d, std::size_t r) {
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = in + t * d;
    double* zt = z + t * r;
    for (std::size_t j = 0; j < r; ++j) {
      const double* a = A + j * d;
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += a[i] * x[i];
      zt[j] = s;
    }
    double* o = out + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double* b = B + i * r;
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) s += b[j] * zt[j];
      o[i] += s;
    }
  }
}

void adapter_bwd(double* din, double* dA, double* dB, const double* dout, const double* z,
                 const double* in, const double* A, const double* B, std::size_t T, std::size_t d,
                 std::size_t r) {
  std::vector<double> dz(r);
  for (std::size_t t = 0; t < T; ++t) {
    const double* g = dout + t * d;
    const double* zt = z + t * r;
    std::fill(dz.begin(), dz.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      const double* b = B + i * r;
      double* db = dB + i * r;
      for (std::size_t j = 0; j < r; ++j) {
        dz[j] += g[i] * b[j];
        db[j] += g[i] * zt[j];
      }
    }
    const double* x = in + t * d;
    double* dx = din + t * d;
    for (std::size_t j = 0; j < r; ++j) {
      const double* a = A + j * d;
      double* da = dA + j * d;
      for (std::size_t i = 0; i < d; ++i) {
        da[i] += dz[j] * x[i];
        dx[i] += dz[j] * a[i];
      }
    }
  }
}

void layernorm_fwd(double* out, double* mean, double* rstd, const double* in, const double* g,
                   const double* b, std::size_t T, std::size_t d) {
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = in + t * d;
    double m = 0.0;
    for (std::size_t i = 0; i < d; ++i) m += x[i];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (std::size_t i = 0; i < d; ++i) v += (x[i] - m) * (x[i] - m);
    v /= static_cast<double>(d);
    const double s = 1.0 / std::sqrt(v + kLnEps);
    double* o = out + t * d;
    for (std::size_t i = 0; i < d; ++i) o[i] = (x[i] - m) * s * g[i] + b[i];
    mean[t] = m;
    rstd[t] = s;
  }
}

void layernorm_bwd(double* din, double* dg, double* db, const double* dout, const double* in,
                   const double* g, const double* mean, const double* rstd, std::size_t T,
                   std::size_t d) {
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = in + t * d;
    const double* dy = dout + t * d;
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double xhat = (x[i] - mean[t]) * rstd[t];
      const double dxhat = dy[i] * g[i];
      sum_dxhat += dxhat;
      sum_dxhat_xhat += dxhat * xhat;
      dg[i] += dy[i] * xhat;
      db[i] += dy[i];
    }
    double* dx = din + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double xhat = (x[i] - mean[t]) * rstd[t];
      const double dxhat = dy[i] * g[i];
      dx[i] += rstd[t] * (dxhat - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  const double inner = kGeluC * (x + 0.044715 * x * x * x);
  const double th = std::tanh(inner);
  const double sech2 = 1.0 - th * th;
  return 0.5 * (1.0 + th) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

// ---------------------------------------------------------------- activations

struct LayerActs {
  std::vector<double> in, ln1, ln1_mean, ln1_rstd;
  std::vector<double> proj[3];  // q, k, v
  std::vector<double> z[4];     // adapter intermediates
  std::vector<double> att;      // H x T x T
  std::vector<double> ctx, res1, ln2, ln2_mean, ln2_rstd, hpre, hact;
};

struct Acts {
  std::size_t T = 0;
  std::vector<LayerActs> layers;
  std::vector<double> xf, lnf, lnf_mean, lnf_rstd;
};

void check_length(const PolicyConfig& c, std::size_t len) {
  if (len > c.max_seq_len) {
    throw Error(ErrorCode::kSequenceTooLong, "sequence of length " + std::to_string(len) +
                                                 " exceeds max_seq_len " +
                                                 std::to_string(c.max_seq_len));
  }
}

ForwardOutput run_forward(const PolicyParameters& params, const ModelOffsets& mo,
                          std::span<const TokenId> tokens, Acts* acts_out) {
  const auto& c = params.config();
  check_length(c, tokens.size());
  const double* P = params.values().data();
  const std::size_t T = tokens.size();
  const std::size_t d = c.d_model;
  const std::size_t H = c.n_heads;
  const std::size_t hd = d / H;
  const std::size_t r = c.adapter_rank;
  const std::size_t ff = c.d_ff;
  const std::size_t V = c.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Acts local;
  Acts& a = acts_out ? *acts_out : local;
  a.T = T;
  a.layers.assign(c.n_layers, LayerActs{});

  std::vector<double> x(T * d);
  for (std::size_t t = 0; t < T; ++t) {
    const TokenId tok = tokens[t];
    if (tok < 0 || static_cast<std::size_t>(tok) >= V) {
      throw Error(ErrorCode::kIndexOutOfRange, "token id " + std::to_string(tok));
    }
    const double* e = P + mo.wte + static_cast<std::size_t>(tok) * d;
    const double* p = P + mo.wpe + t * d;
    for (std::size_t i = 0; i < d; ++i) x[t * d + i] = e[i] + p[i];
  }

  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const auto& L = mo.layers[l];
    auto& A = a.layers[l];
    A.in = x;
    A.ln1.resize(T * d);
    A.ln1_mean.resize(T);
    A.ln1_rstd.resize(T);
    layernorm_fwd(A.ln1.data(), A.ln1_mean.data(), A.ln1_rstd.data(), A.in.data(), P + L.ln1_g,
                  P + L.ln1_b, T, d);
    for (int q = 0; q < 3; ++q) {
      A.proj[q].resize(T * d);
      linear_fwd(A.proj[q].data(), A.ln1.data(), P + L.w[q], nullptr, T, d, d);
      if (L.lora_a[q]) {
        A.z[q].resize(T * r);
        adapter_fwd(A.proj[q].data(), A.z[q].data(), A.ln1.data(), P + *L.lora_a[q],
                    P + *L.lora_b[q], T, d, r);
      }
    }
    const auto& Q = A.proj[0];
    const auto& K = A.proj[1];
    const auto& Vv = A.proj[2];
    A.att.assign(H * T * T, 0.0);
    A.ctx.assign(T * d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        double* prow = A.att.data() + (h * T + t) * T;
        const double* qt = Q.data() + t * d + h * hd;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s <= t; ++s) {
          const double* ks = K.data() + s * d + h * hd;
          double dot = 0.0;
          for (std::size_t i = 0; i < hd; ++i) dot += qt[i] * ks[i];
          prow[s] = dot * scale;
          mx = std::max(mx, prow[s]);
        }
        double sum = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          prow[s] = std::exp(prow[s] - mx);
          sum += prow[s];
        }
        const double inv = 1.0 / sum;
        double* ct = A.ctx.data() + t * d + h * hd;
        for (std::size_t s = 0; s <= t; ++s) {
          prow[s] *= inv;
          const double* vs = Vv.data() + s * d + h * hd;
          for (std::size_t i = 0; i < hd; ++i) ct[i] += prow[s] * vs[i];
        }
      }
    }
    std::vector<double> o(T * d);
    linear_fwd(o.data(), A.ctx.data(), P + L.w[3], nullptr, T, d, d);
    if (L.lora_a[3]) {
      A.z[3].resize(T * r);
      adapter_fwd(o.data(), A.z[3].data(), A.ctx.data(), P + *L.lora_a[3], P + *L.lora_b[3], T, d,
                  r);
    }
    A.res1.resize(T * d);
    for (std::size_t i = 0; i < T * d; ++i) A.res1[i] = A.in[i] + o[i];

    A.ln2.resize(T * d);
    A.ln2_mean.resize(T);
    A.ln2_rstd.resize(T);
    layernorm_fwd(A.ln2.data(), A.ln2_mean.data(), A.ln2_rstd.data(), A.res1.data(), P + L.ln2_g,
                  P + L.ln2_b, T, d);
    A.hpre.resize(T * ff);
    linear_fwd(A.hpre.data(), A.ln2.data(), P + L.w1, P + L.b1, T, d, ff);
    A.hact.resize(T * ff);
    for (std::size_t i = 0; i < T * ff; ++i) A.hact[i] = gelu(A.hpre[i]);
    std::vector<double> m(T * d);
    linear_fwd(m.data(), A.hact.data(), P + L.w2, P + L.b2, T, ff, d);
    for (std::size_t i = 0; i < T * d; ++i) x[i] = A.res1[i] + m[i];
  }

  a.xf = x;
  a.lnf.resize(T * d);
  a.lnf_mean.resize(T);
  a.lnf_rstd.resize(T);
  layernorm_fwd(a.lnf.data(), a.lnf_mean.data(), a.lnf_rstd.data(), a.xf.data(), P + mo.lnf_g,
                P + mo.lnf_b, T, d);

  ForwardOutput out;
  out.length = T;
  out.vocab = V;
  out.logits.resize(T * V);
  linear_fwd(out.logits.data(), a.lnf.data(), P + mo.w_out, nullptr, T, d, V);
  if (mo.value_w) {
    out.values.resize(T);
    const double* w = P + *mo.value_w;
    const double b = P[*mo.value_b];
    for (std::size_t t = 0; t < T; ++t) {
      double s = b;
      for (std::size_t i = 0; i < d; ++i) s += a.lnf[t * d + i] * w[i];
      out.values[t] = s;
    }
  }
  return out;
}

void run_backward(const PolicyParameters& params, const ModelOffsets& mo,
                  std::span<const TokenId> tokens, const Acts& a, const OutputGradient& og,
                  double* G) {
  const auto& c = params.config();
  const double* P = params.values().data();
  const std::size_t T = a.T;
  const std::size_t d = c.d_model;
  const std::size_t H = c.n_heads;
  const std::size_t hd = d / H;
  const std::size_t r = c.adapter_rank;
  const std::size_t ff = c.d_ff;
  const std::size_t V = c.vocab_size;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<double> dlnf(T * d, 0.0);
  linear_bwd(dlnf.data(), G + mo.w_out, nullptr, og.dlogits.data(), a.lnf.data(), P + mo.w_out,
             T, d, V);
  if (mo.value_w && !og.dvalues.empty()) {
    const double* w = P + *mo.value_w;
    double* dw = G + *mo.value_w;
    double& db = G[*mo.value_b];
    for (std::size_t t = 0; t < T; ++t) {
      const double g = og.dvalues[t];
      db += g;
      for (std::size_t i = 0; i < d; ++i) {
        dw[i] += g * a.lnf[t * d + i];
        dlnf[t * d + i] += g * w[i];
      }
    }
  }
  std::vector<double> dx(T * d, 0.0);
  layernorm_bwd(dx.data(), G + mo.lnf_g, G + mo.lnf_b, dlnf.data(), a.xf.data(), P + mo.lnf_g,
                a.lnf_mean.data(), a.lnf_rstd.data(), T, d);

  for (std::size_t li = c.n_layers; li-- > 0;) {
    const auto& L = mo.layers[li];
    const auto& A = a.layers[li];
    // x_out = res1 + mlp(ln2(res1)); dx holds d(x_out).
    std::vector<double> dres1 = dx;
    std::vector<double> dhact(T * ff, 0.0);
    linear_bwd(dhact.data(), G + L.w2, G + L.b2, dx.data(), A.hact.data(), P + L.w2, T, ff, d);
    std::vector<double> dhpre(T * ff);
    for (std::size_t i = 0; i < T * ff; ++i) dhpre[i] = dhact[i] * gelu_grad(A.hpre[i]);
    std::vector<double> dln2(T * d, 0.0);
    linear_bwd(dln2.data(), G + L.w1, G + L.b1, dhpre.data(), A.ln2.data(), P + L.w1, T, d, ff);
    layernorm_bwd(dres1.data(), G + L.ln2_g, G + L.ln2_b, dln2.data(), A.res1.data(), P + L.ln2_g,
                  A.ln2_mean.data(), A.ln2_rstd.data(), T, d);

    // res1 = in + attn_out(ctx)
    std::vector<double> din = dres1;
    std::vector<double> dctx(T * d, 0.0);
    linear_bwd(dctx.data(), G + L.w[3], nullptr, dres1.data(), A.ctx.data(), P + L.w[3], T, d, d);
    if (L.lora_a[3]) {
      adapter_bwd(dctx.data(), G + *L.lora_a[3], G + *L.lora_b[3], dres1.data(), A.z[3].data(),
                  A.ctx.data(), P + *L.lora_a[3], P + *L.lora_b[3], T, d, r);
    }

    std::vector<double> dproj[3];
    for (auto& v : dproj) v.assign(T * d, 0.0);
    const auto& Q = A.proj[0];
    const auto& K = A.proj[1];
    const auto& Vv = A.proj[2];
    std::vector<double> dp(T);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        const double* prow = A.att.data() + (h * T + t) * T;
        const double* dct = dctx.data() + t * d + h * hd;
        double dot_sum = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          const double* vs = Vv.data() + s * d + h * hd;
          double* dvs = dproj[2].data() + s * d + h * hd;
          double acc = 0.0;
          for (std::size_t i = 0; i < hd; ++i) {
            acc += dct[i] * vs[i];
            dvs[i] += prow[s] * dct[i];
          }
          dp[s] = acc;
          dot_sum += prow[s] * acc;
        }
        const double* qt = Q.data() + t * d + h * hd;
        double* dqt = dproj[0].data() + t * d + h * hd;
        for (std::size_t s = 0; s <= t; ++s) {
          const double dscore = prow[s] * (dp[s] - dot_sum) * scale;
          const double* ks = K.data() + s * d + h * hd;
          double* dks = dproj[1].data() + s * d + h * hd;
          for (std::size_t i = 0; i < hd; ++i) {
            dqt[i] += dscore * ks[i];
            dks[i] += dscore * qt[i];
          }
        }
      }
    }
    std::vector<double> dln1(T * d, 0.0);
    for (int q = 0; q < 3; ++q) {
      linear_bwd(dln1.data(), G + L.w[q], nullptr, dproj[q].data(), A.ln1.data(), P + L.w[q], T,
                 d, d);
      if (L.lora_a[q]) {
        adapter_bwd(dln1.data(), G + *L.lora_a[q], G + *L.lora_b[q], dproj[q].data(),
                    A.z[q].data(), A.ln1.data(), P + *L.lora_a[q], P + *L.lora_b[q], T, d, r);
      }
    }
    layernorm_bwd(din.data(), G + L.ln1_g, G + L.ln1_b, dln1.data(), A.in.data(), P + L.ln1_g,
                  A.ln1_mean.data(), A.ln1_rstd.data(), T, d);
    dx = std::move(din);
  }

  for (std::size_t t = 0; t < T; ++t) {
    double* de = G + mo.wte + static_cast<std::size_t>(tokens[t]) * d;
    double* dpos = G + mo.wpe + t * d;
    for (std::size_t i = 0; i < d; ++i) {
      de[i] += dx[t * d + i];
      dpos[i] += dx[t * d + i];
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- config

void PolicyConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kInvalidConfig, msg); };
  if (vocab_size < text::kNumSpecials) fail("vocab_size must cover the special markers");
  if (d_model == 0 || n_heads == 0 || n_layers == 0 || d_ff == 0 || max_seq_len == 0) {
    fail("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (!(init_scale > 0.0) || !std::isfinite(init_scale)) fail("init_scale must be positive");
  if (adapter_rank > 0) {
    if (adapter_targets.empty()) fail("adapters need at least one target");
    for (const auto& t : adapter_targets) {
      if (proj_index(t) < 0) fail("unknown adapter target '" + t + "'");
    }
  }
}

nlohmann::json PolicyConfig::to_json() const {
  return nlohmann::json{{"vocab_size", vocab_size},   {"d_model", d_model},
                        {"n_heads", n_heads},         {"n_layers", n_layers},
                        {"d_ff", d_ff},               {"max_seq_len", max_seq_len},
                        {"value_head", value_head},   {"adapter_rank", adapter_rank},
                        {"adapter_targets", adapter_targets}, {"init_scale", init_scale}};
}

PolicyConfig PolicyConfig::from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.value_head = j.value("value_head", c.value_head);
  c.adapter_rank = j.value("adapter_rank", c.adapter_rank);
  c.adapter_targets = j.value("adapter_targets", c.adapter_targets);
  c.init_scale = j.value("init_scale", c.init_scale);
  return c;
}

std::string_view to_string(Role role) {
  return role == Role::kSftReference ? "sft-reference" : "trainable-policy";
}

Role role_from_string(std::string_view s) {
  if (s == "sft-reference") return Role::kSftReference;
  if (s == "trainable-policy") return Role::kTrainablePolicy;
  throw Error(ErrorCode::kInvalidConfig, "unknown role '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- parameters

PolicyParameters::PolicyParameters(PolicyConfig config, Role role)
    : config_(std::move(config)), role_(role) {
  config_.validate();
  layout_ = build_layout(config_);
  std::size_t total = layout_.empty() ? 0 : layout_.back().offset + layout_.back().size;
  data_.assign(total, 0.0);
}

const TensorSpec& PolicyParameters::spec(std::string_view name) const {
  for (const auto& s : layout_) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::kInvalidConfig, "no tensor named '" + std::string(name) + "'");
}

bool PolicyParameters::contains(std::string_view name) const {
  return std::any_of(layout_.begin(), layout_.end(), [&](const auto& s) { return s.name == name; });
}

std::span<double> PolicyParameters::tensor(std::string_view name) {
  const auto& s = spec(name);
  return std::span<double>(data_).subspan(s.offset, s.size);
}

std::span<const double> PolicyParameters::tensor(std::string_view name) const {
  const auto& s = spec(name);
  return std::span<const double>(data_).subspan(s.offset, s.size);
}

bool PolicyParameters::is_trainable(const TensorSpec& spec) const noexcept {
  if (!has_adapters()) return true;
  return spec.kind != TensorKind::kBase;
}

bool PolicyParameters::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

PolicyParameters init_params(const PolicyConfig& config, Rng& rng) {
  PolicyParameters p(config, Role::kTrainablePolicy);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  for (const auto& s : p.layout()) {
    auto t = p.tensor(s.name);
    const bool gain = s.name.ends_with(".g");
    const bool bias = s.name.ends_with(".b") || s.name.ends_with(".b1") || s.name.ends_with(".b2");
    if (s.kind == TensorKind::kValueHead || s.name.ends_with("lora_b") || bias) {
      std::fill(t.begin(), t.end(), 0.0);
    } else if (gain) {
      std::fill(t.begin(), t.end(), 1.0);
    } else if (s.name.ends_with("lora_a")) {
      for (auto& v : t) v = rng.normal() * inv_sqrt_d;
    } else {
      for (auto& v : t) v = rng.normal() * config.init_scale;
    }
  }
  return p;
}

PolicyParameters attach_adapters(const PolicyParameters& base, std::size_t rank,
                                 const std::vector<std::string>& targets, Rng& rng) {
  if (rank == 0) throw Error(ErrorCode::kInvalidConfig, "adapter rank must be >= 1");
  PolicyConfig c = base.config();
  c.adapter_rank = rank;
  c.adapter_targets = targets;
  PolicyParameters p(c, base.role());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c.d_model));
  for (const auto& s : p.layout()) {
    auto t = p.tensor(s.name);
    if (s.kind != TensorKind::kAdapter) {
      auto src = base.tensor(s.name);
      std::copy(src.begin(), src.end(), t.begin());
    } else if (s.name.ends_with("lora_a")) {
      for (auto& v : t) v = rng.normal() * inv_sqrt_d;
    } else {
      std::fill(t.begin(), t.end(), 0.0);
    }
  }
  return p;
}

PolicyParameters with_value_head(const PolicyParameters& base) {
  if (base.has_value_head()) return base;
  PolicyConfig c = base.config();
  c.value_head = true;
  PolicyParameters p(c, base.role());
  for (const auto& s : p.layout()) {
    if (s.kind == TensorKind::kValueHead) continue;
    auto src = base.tensor(s.name);
    std::copy(src.begin(), src.end(), p.tensor(s.name).begin());
  }
  return p;
}

// ---------------------------------------------------------------- inference

ForwardOutput forward_logits(const PolicyParameters& params, std::span<const TokenId> tokens) {
  return run_forward(params, offsets_of(params), tokens, nullptr);
}

std::vector<double> value_estimate(const PolicyParameters& params,
                                   std::span<const TokenId> tokens) {
  if (!params.has_value_head()) throw Error(ErrorCode::kValueHeadDisabled, "no value head");
  return forward_logits(params, tokens).values;
}

double log_softmax_at(std::span<const double> row, std::size_t index) {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double v : row) sum += std::exp(v - mx);
  return row[index] - mx - std::log(sum);
}

std::vector<double> softmax(std::span<const double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  std::vector<double> p(row.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    p[i] = std::exp(row[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

FramedSequence frame(std::span<const TokenId> x, std::span<const TokenId> x_prime,
                     bool terminate) {
  FramedSequence f;
  f.tokens.reserve(x.size() + x_prime.size() + 3);
  f.tokens.push_back(text::Vocabulary::bos());
  f.tokens.insert(f.tokens.end(), x.begin(), x.end());
  f.tokens.push_back(text::Vocabulary::sep());
  f.target_begin = f.tokens.size();
  f.tokens.insert(f.tokens.end(), x_prime.begin(), x_prime.end());
  if (terminate) f.tokens.push_back(text::Vocabulary::eos());
  return f;
}

namespace {

double framed_logprob(const PolicyParameters& params, const FramedSequence& f) {
  check_length(params.config(), f.tokens.size());
  if (f.tokens.size() <= f.target_begin) return 0.0;
  std::span<const TokenId> input(f.tokens.data(), f.tokens.size() - 1);
  auto out = forward_logits(params, input);
  double total = 0.0;
  for (std::size_t t = f.target_begin; t < f.tokens.size(); ++t) {
    total += log_softmax_at(out.row(t - 1), static_cast<std::size_t>(f.tokens[t]));
  }
  return total;
}

}  // namespace

double sequence_logprob(const PolicyParameters& params, std::span<const TokenId> x,
                        std::span<const TokenId> x_prime) {
  return framed_logprob(params, frame(x, x_prime, true));
}

double prefix_logprob(const PolicyParameters& params, std::span<const TokenId> x,
                      std::span<const TokenId> x_prime) {
  return framed_logprob(params, frame(x, x_prime, false));
}

std::vector<double> response_logprobs(const PolicyParameters& params, std::span<const TokenId> x,
                                       std::span<const TokenId> response) {
  auto f = frame(x, response, false);
  check_length(params.config(), f.tokens.size());
  std::vector<double> lps;
  if (response.empty()) return lps;
  std::span<const TokenId> input(f.tokens.data(), f.tokens.size() - 1);
  auto out = forward_logits(params, input);
  lps.reserve(response.size());
  for (std::size_t t = f.target_begin; t < f.tokens.size(); ++t) {
    lps.push_back(log_softmax_at(out.row(t - 1), static_cast<std::size_t>(f.tokens[t])));
  }
  return lps;
}

void DecodeConfig::validate() const {
  if (max_new_tokens < 1) throw Error(ErrorCode::kInvalidConfig, "max_new_tokens must be >= 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kInvalidConfig, "temperature must be >= 0");
  }
  if (top_k && *top_k == 0) throw Error(ErrorCode::kInvalidConfig, "top_k must be >= 1");
}

nlohmann::json DecodeConfig::to_json() const {
  nlohmann::json j{{"max_new_tokens", max_new_tokens},
                   {"temperature", temperature},
                   {"stop_at_eos", stop_at_eos}};
  j["top_k"] = top_k ? nlohmann::json(*top_k) : nlohmann::json(nullptr);
  return j;
}

DecodeConfig DecodeConfig::from_json(const nlohmann::json& j) {
  DecodeConfig d;
  d.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
  d.temperature = j.value("temperature", d.temperature);
  d.stop_at_eos = j.value("stop_at_eos", d.stop_at_eos);
  if (j.contains("top_k") && !j["top_k"].is_null()) d.top_k = j["top_k"].get<std::size_t>();
  return d;
}

std::vector<TokenId> Continuation::response() const {
  std::vector<TokenId> r = tokens;
  if (terminated) r.push_back(text::Vocabulary::eos());
  return r;
}

Continuation sample_continuation(const PolicyParameters& params, std::span<const TokenId> x,
                                 const DecodeConfig& decode, Rng& rng) {
  decode.validate();
  const auto& c = params.config();
  std::vector<TokenId> seq;
  seq.push_back(text::Vocabulary::bos());
  seq.insert(seq.end(), x.begin(), x.end());
  seq.push_back(text::Vocabulary::sep());
  if (seq.size() >= c.max_seq_len) {
    throw Error(ErrorCode::kSequenceTooLong,
                "prompt of length " + std::to_string(x.size()) + " leaves no room to generate");
  }
  const std::size_t budget = std::min(decode.max_new_tokens, c.max_seq_len - seq.size());
  const ModelOffsets mo = offsets_of(params);
  Continuation out;
  std::vector<std::size_t> order(c.vocab_size);
  for (std::size_t step = 0; step < budget; ++step) {
    auto fw = run_forward(params, mo, seq, nullptr);
    auto row = fw.row(seq.size() - 1);
    std::size_t choice = 0;
    if (decode.temperature == 0.0) {
      choice = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      std::iota(order.begin(), order.end(), 0);
      std::size_t keep = row.size();
      if (decode.top_k && *decode.top_k < row.size()) {
        keep = *decode.top_k;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
      }
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < keep; ++i) mx = std::max(mx, row[order[i]]);
      std::vector<double> w(keep);
      double sum = 0.0;
      for (std::size_t i = 0; i < keep; ++i) {
        w[i] = std::exp((row[order[i]] - mx) / decode.temperature);
        sum += w[i];
      }
      const double u = rng.uniform() * sum;
      double acc = 0.0;
      choice = order[keep - 1];
      for (std::size_t i = 0; i < keep; ++i) {
        acc += w[i];
        if (u < acc) {
          choice = order[i];
          break;
        }
      }
    }
    out.logprobs.push_back(log_softmax_at(row, choice));
    const auto tok = static_cast<TokenId>(choice);
    if (decode.stop_at_eos && tok == text::Vocabulary::eos()) {
      out.terminated = true;
      break;
    }
    out.tokens.push_back(tok);
    seq.push_back(tok);
  }
  return out;
}

// ---------------------------------------------------------------- gradients

GradientSet::GradientSet(const PolicyParameters& params)
    : layout_(params.layout()), data_(params.values().size(), 0.0) {
  trainable_.reserve(layout_.size());
  for (const auto& s : layout_) trainable_.push_back(params.is_trainable(s));
}

bool GradientSet::contains(std::string_view name) const {
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].name == name) return trainable_[i];
  }
  return false;
}

std::span<const double> GradientSet::tensor(std::string_view name) const {
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (layout_[i].name == name && trainable_[i]) {
      return std::span<const double>(data_).subspan(layout_[i].offset, layout_[i].size);
    }
  }
  throw Error(ErrorCode::kInvalidConfig, "no gradient for '" + std::string(name) + "'");
}

std::vector<std::string> GradientSet::names() const {
  std::vector<std::string> n;
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (trainable_[i]) n.push_back(layout_[i].name);
  }
  return n;
}

void GradientSet::add(const GradientSet& other, double scale) {
  if (data_.empty()) {
    *this = other;
    this->scale(scale);
    return;
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

void GradientSet::scale(double factor) {
  for (auto& v : data_) v *= factor;
}

void GradientSet::mask() {
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (trainable_[i]) continue;
    std::fill_n(data_.begin() + static_cast<std::ptrdiff_t>(layout_[i].offset), layout_[i].size,
                0.0);
  }
}

bool GradientSet::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

LossAndGradient grad_loss(const PolicyParameters& params,
                          std::span<const std::vector<TokenId>> batch, const SequenceLoss& loss) {
  const ModelOffsets mo = offsets_of(params);
  const std::size_t n = batch.size();
  const std::size_t np = params.values().size();
  std::vector<double> losses(n, 0.0);

  auto one = [&](std::size_t i, std::vector<double>& buffer) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    Acts acts;
    auto out = run_forward(params, mo, batch[i], &acts);
    OutputGradient og;
    og.dlogits.assign(out.logits.size(), 0.0);
    og.dvalues.assign(out.values.size(), 0.0);
    losses[i] = loss(i, out, og);
    if (!std::isfinite(losses[i])) {
      throw Error(ErrorCode::kNonFiniteLoss, "loss of sequence " + std::to_string(i));
    }
    run_backward(params, mo, batch[i], acts, og, buffer.data());
  };

  LossAndGradient result;
  result.grads = GradientSet(params);
  auto total = result.grads.flat_mut();
  if (max_threads() <= 1 || n <= 1) {
    std::vector<double> buffer(np);
    for (std::size_t i = 0; i < n; ++i) {
      one(i, buffer);
      for (std::size_t k = 0; k < np; ++k) total[k] += buffer[k];
    }
  } else {
    std::vector<std::vector<double>> buffers(n, std::vector<double>(np));
    parallel_for(n, [&](std::size_t i) { one(i, buffers[i]); });
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < np; ++k) total[k] += buffers[i][k];
    }
  }
  for (double l : losses) result.loss += l;
  if (!std::isfinite(result.loss)) throw Error(ErrorCode::kNonFiniteLoss, "batch loss");
  result.grads.mask();
  return result;
}

}  // namespace promptforge::policy
