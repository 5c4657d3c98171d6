#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Dense>

#include "tflc/neural/tensor.hpp"

namespace tflc::neural {

template <class S>
using RMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapR = Eigen::Map<RMat<S>>;
template <class S>
using CMapR = Eigen::Map<const RMat<S>>;

// All feature maps are [N, C, F, T], T fastest.

/// Convolution along frequency (kernel K x 1, stride 1, zero "same" padding).
/// W is [Co, Ci, K], b is [Co].
template <class S>
Tensor<S> conv_freq(const Tensor<S>& x, const Tensor<S>& W, const Tensor<S>& b) {
  require_dims(x.shape().size() == 4 && W.shape().size() == 3 && W.dim(1) == x.dim(1) && b.size() == W.dim(0),
               "conv_freq: shape mismatch " + shape_str(x.shape()) + " * " + shape_str(W.shape()));
  const std::size_t N = x.dim(0), Ci = x.dim(1), F = x.dim(2), T = x.dim(3), Co = W.dim(0), K = W.dim(2);
  require(K % 2 == 1, "conv_freq: kernel length must be odd");
  const auto P = static_cast<std::ptrdiff_t>(F * T);
  const auto half = static_cast<std::ptrdiff_t>(K / 2);
  auto out = make_output<S>({N, Co, F, T}, {x, W, b});

  // Tap k reads x at frequency f + k - half: a column shift of s*T in the
  // flattened (Ci x F*T) view, restricted to the valid range.
  auto valid = [=](std::ptrdiff_t k, std::ptrdiff_t& lo, std::ptrdiff_t& len, std::ptrdiff_t& shift) {
    shift = (k - half) * static_cast<std::ptrdiff_t>(T);
    lo = std::max<std::ptrdiff_t>(0, -shift);
    len = P - std::abs(shift);
  };
  std::vector<RMat<S>> taps(K);
  for (std::size_t k = 0; k < K; ++k) {
    taps[k].resize(static_cast<Eigen::Index>(Co), static_cast<Eigen::Index>(Ci));
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t c = 0; c < Ci; ++c) taps[k](o, c) = W.data()[(o * Ci + c) * K + k];
  }
  for (std::size_t n = 0; n < N; ++n) {
    CMapR<S> X(x.data() + n * Ci * P, Ci, P);
    MapR<S> Y(out.data() + n * Co * P, Co, P);
    Y.colwise() = Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>>(b.data(), Co);
    for (std::size_t k = 0; k < K; ++k) {
      std::ptrdiff_t lo, len, shift;
      valid(static_cast<std::ptrdiff_t>(k), lo, len, shift);
      if (len <= 0) continue;
      Y.middleCols(lo, len).noalias() += taps[k] * X.middleCols(lo + shift, len);
    }
  }
  if (out.requires_grad()) {
    auto* o = out.node();
    auto xn = x.ptr(), wn = W.ptr(), bn = b.ptr();
    o->backward = [=, taps = std::move(taps)] {
      for (std::size_t n = 0; n < N; ++n) {
        CMapR<S> G(o->grad.data() + n * Co * P, Co, P);
        if (bn->requires_grad) {
          S* gb = bn->g();
          for (std::size_t c = 0; c < Co; ++c) gb[c] += G.row(static_cast<Eigen::Index>(c)).sum();
        }
        CMapR<S> X(xn->value.data() + n * Ci * P, Ci, P);
        for (std::size_t k = 0; k < K; ++k) {
          std::ptrdiff_t lo, len, shift;
          valid(static_cast<std::ptrdiff_t>(k), lo, len, shift);
          if (len <= 0) continue;
          if (wn->requires_grad) {
            RMat<S> gw = G.middleCols(lo, len) * X.middleCols(lo + shift, len).transpose();
            S* gW = wn->g();
            for (std::size_t oo = 0; oo < Co; ++oo)
              for (std::size_t c = 0; c < Ci; ++c) gW[(oo * Ci + c) * K + k] += gw(oo, c);
          }
          if (xn->requires_grad) {
            MapR<S> GX(xn->g() + n * Ci * P, Ci, P);
            GX.middleCols(lo + shift, len).noalias() += taps[k].transpose() * G.middleCols(lo, len);
          }
        }
      }
    };
  }
  check_finite(out, "conv_freq");
  return out;
}

/// Channel-wise linear map: W [Co, Ci], b [Co], applied at every (f, t).
template <class S>
Tensor<S> linear_channels(const Tensor<S>& x, const Tensor<S>& W, const Tensor<S>& b) {
  require_dims(x.shape().size() == 4 && W.shape().size() == 2 && W.dim(1) == x.dim(1) && b.size() == W.dim(0),
               "linear_channels: shape mismatch");
  const std::size_t N = x.dim(0), Ci = x.dim(1), F = x.dim(2), T = x.dim(3), Co = W.dim(0);
  const auto P = static_cast<Eigen::Index>(F * T);
  auto out = make_output<S>({N, Co, F, T}, {x, W, b});
  CMapR<S> Wm(W.data(), Co, Ci);
  for (std::size_t n = 0; n < N; ++n) {
    MapR<S> Y(out.data() + n * Co * P, Co, P);
    Y.noalias() = Wm * CMapR<S>(x.data() + n * Ci * P, Ci, P);
    Y.colwise() += Eigen::Map<const Eigen::Vector<S, Eigen::Dynamic>>(b.data(), Co);
  }
  if (out.requires_grad()) {
    auto* o = out.node();
    auto xn = x.ptr(), wn = W.ptr(), bn = b.ptr();
    o->backward = [=] {
      CMapR<S> Wm(wn->value.data(), Co, Ci);
      for (std::size_t n = 0; n < N; ++n) {
        CMapR<S> G(o->grad.data() + n * Co * P, Co, P);
        if (wn->requires_grad)
          MapR<S>(wn->g(), Co, Ci).noalias() += G * CMapR<S>(xn->value.data() + n * Ci * P, Ci, P).transpose();
        if (bn->requires_grad) Eigen::Map<Eigen::Vector<S, Eigen::Dynamic>>(bn->g(), Co) += G.rowwise().sum();
        if (xn->requires_grad) MapR<S>(xn->g() + n * Ci * P, Ci, P).noalias() += Wm.transpose() * G;
      }
    };
  }
  check_finite(out, "linear_channels");
  return out;
}

template <class S>
using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
template <class S>
using MapA = Eigen::Map<Arr<S>>;
template <class S>
using CMapA = Eigen::Map<const Arr<S>>;

template <class Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& v) {
  using S = typename Derived::Scalar;
  return (S(1) + (-v).exp()).inverse();
}

/// Gated linear unit over channels: first half * sigmoid(second half).
template <class S>
Tensor<S> glu(const Tensor<S>& x) {
  require_dims(x.shape().size() == 4 && x.dim(1) % 2 == 0, "glu: channel count must be even");
  const std::size_t N = x.dim(0), C = x.dim(1) / 2, P = x.dim(2) * x.dim(3);
  const auto L = static_cast<Eigen::Index>(C * P);
  auto out = make_output<S>({N, C, x.dim(2), x.dim(3)}, {x});
  Arr<S> sig(static_cast<Eigen::Index>(N) * L);
  for (std::size_t n = 0; n < N; ++n) {
    const S* base = x.data() + n * 2 * C * P;
    auto s = sig.segment(static_cast<Eigen::Index>(n) * L, L);
    s = sigmoid(CMapA<S>(base + C * P, L));
    MapA<S>(out.data() + n * C * P, L) = CMapA<S>(base, L) * s;
  }
  if (out.requires_grad()) {
    auto* o = out.node();
    auto xn = x.ptr();
    o->backward = [=, sig = std::move(sig)] {
      for (std::size_t n = 0; n < N; ++n) {
        const auto s = sig.segment(static_cast<Eigen::Index>(n) * L, L);
        CMapA<S> go(o->grad.data() + n * C * P, L), v(xn->value.data() + n * 2 * C * P, L);
        S* gx = xn->g() + n * 2 * C * P;
        MapA<S>(gx, L) += go * s;
        MapA<S>(gx + C * P, L) += go * v * s * (S(1) - s);
      }
    };
  }
  check_finite(out, "glu");
  return out;
}

/// Group normalization per (item, group) with per-channel affine terms.
template <class S>
Tensor<S> group_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, std::size_t groups,
                     S eps = S(1e-5)) {
  require_dims(x.shape().size() == 4 && x.dim(1) % groups == 0 && gamma.size() == x.dim(1) && beta.size() == x.dim(1),
               "group_norm: shape mismatch");
  const std::size_t N = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3), cg = C / groups, m = cg * P;
  const auto Pi = static_cast<Eigen::Index>(P), mi = static_cast<Eigen::Index>(m);
  auto out = make_output<S>(x.shape(), {x, gamma, beta});
  Arr<S> xhat(static_cast<Eigen::Index>(x.size()));
  std::vector<S> inv_std(N * groups);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = (n * C + g * cg) * P;
      CMapA<S> xs(x.data() + base, mi);
      const double mean = xs.template cast<double>().mean();
      const double var = (xs.template cast<double>() - mean).square().mean();
      const S is = S(1.0 / std::sqrt(var + double(eps)));
      inv_std[n * groups + g] = is;
      auto xh = xhat.segment(static_cast<Eigen::Index>(base), mi);
      xh = (xs - S(mean)) * is;
      for (std::size_t c = 0; c < cg; ++c) {
        const std::size_t ch = g * cg + c;
        MapA<S>(out.data() + base + c * P, Pi) =
            gamma.data()[ch] * xh.segment(static_cast<Eigen::Index>(c) * Pi, Pi) + beta.data()[ch];
      }
    }
  if (out.requires_grad()) {
    auto* o = out.node();
    auto xn = x.ptr(), gn = gamma.ptr(), bn = beta.ptr();
    o->backward = [=, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      Arr<S> gxh(Pi);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t g = 0; g < groups; ++g) {
          const std::size_t base = (n * C + g * cg) * P;
          double mg = 0.0, mgx = 0.0;
          for (std::size_t c = 0; c < cg; ++c) {
            const std::size_t ch = g * cg + c, off = base + c * P;
            CMapA<S> gy(o->grad.data() + off, Pi);
            const auto xh = xhat.segment(static_cast<Eigen::Index>(off), Pi);
            if (gn->requires_grad) gn->g()[ch] += (gy * xh).sum();
            if (bn->requires_grad) bn->g()[ch] += gy.sum();
            gxh = gy * gn->value[ch];
            mg += gxh.template cast<double>().sum();
            mgx += (gxh * xh).template cast<double>().sum();
          }
          if (!xn->requires_grad) continue;
          const S a = S(mg / double(m)), b = S(mgx / double(m)), is = inv_std[n * groups + g];
          for (std::size_t c = 0; c < cg; ++c) {
            const std::size_t ch = g * cg + c, off = base + c * P;
            CMapA<S> gy(o->grad.data() + off, Pi);
            const auto xh = xhat.segment(static_cast<Eigen::Index>(off), Pi);
            MapA<S>(xn->g() + off, Pi) += is * (gy * gn->value[ch] - a - xh * b);
          }
        }
    };
  }
  check_finite(out, "group_norm");
  return out;
}

template <class S>
Tensor<S> elu(const Tensor<S>& x) {
  auto out = make_output<S>(x.shape(), {x});
  const auto L = static_cast<Eigen::Index>(x.size());
  CMapA<S> v(x.data(), L);
  // exp(v) - 1 rather than expm1: vectorizes, and the cancellation near 0 is
  // far below what the network resolves.
  MapA<S>(out.data(), L) = (v > S(0)).select(v, v.min(S(0)).exp() - S(1));
  if (out.requires_grad()) {
    auto* o = out.node();
    auto xn = x.ptr();
    o->backward = [o, xn, L] {
      CMapA<S> v(xn->value.data(), L), go(o->grad.data(), L);
      MapA<S>(xn->g(), L) += go * (v > S(0)).select(Arr<S>::Ones(L), v.min(S(0)).exp());
    };
  }
  check_finite(out, "elu");
  return out;
}

template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  require_dims(a.shape().size() == 4 && b.shape().size() == 4 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
                   a.dim(3) == b.dim(3),
               "concat_channels: shape mismatch");
  const std::size_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), P = a.dim(2) * a.dim(3);
  auto out = make_output<S>({N, Ca + Cb, a.dim(2), a.dim(3)}, {a, b});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(a.data() + n * Ca * P, Ca * P, out.data() + n * (Ca + Cb) * P);
    std::copy_n(b.data() + n * Cb * P, Cb * P, out.data() + n * (Ca + Cb) * P + Ca * P);
  }
  if (out.requires_grad()) {
    auto* o = out.node();
    auto an = a.ptr(), bn = b.ptr();
    o->backward = [=] {
      for (std::size_t n = 0; n < N; ++n) {
        const S* g = o->grad.data() + n * (Ca + Cb) * P;
        if (an->requires_grad) {
          S* ga = an->g() + n * Ca * P;
          for (std::size_t i = 0; i < Ca * P; ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
          S* gb = bn->g() + n * Cb * P;
          for (std::size_t i = 0; i < Cb * P; ++i) gb[i] += g[Ca * P + i];
        }
      }
    };
  }
  return out;
}

/// One bidirectional LSTM layer run along time, independently for every
/// (item, frequency) pair with shared weights. Gate order i, f, g, o.
/// Per direction d: Wih[d] [4H, In], Whh[d] [4H, H], bias[d] [4H].
/// Output is [N, 2H, F, T]: forward direction first.
template <class S>
Tensor<S> bilstm(const Tensor<S>& x, const Tensor<S>& Wih_f, const Tensor<S>& Whh_f, const Tensor<S>& b_f,
                 const Tensor<S>& Wih_b, const Tensor<S>& Whh_b, const Tensor<S>& b_b) {
  require_dims(x.shape().size() == 4, "bilstm: input must be [N, C, F, T]");
  const std::size_t N = x.dim(0), In = x.dim(1), F = x.dim(2), T = x.dim(3), H = Whh_f.dim(1);
  for (const auto* w : {&Wih_f, &Wih_b}) require_dims(w->dim(0) == 4 * H && w->dim(1) == In, "bilstm: Wih shape");
  for (const auto* w : {&Whh_f, &Whh_b}) require_dims(w->dim(0) == 4 * H && w->dim(1) == H, "bilstm: Whh shape");
  for (const auto* w : {&b_f, &b_b}) require_dims(w->size() == 4 * H, "bilstm: bias shape");
  const auto B = static_cast<Eigen::Index>(N * F);
  const auto Ti = static_cast<Eigen::Index>(T), Hi = static_cast<Eigen::Index>(H);
  auto out = Tensor<S>(make_output<S>({N, 2 * H, F, T}, {x, Wih_f, Whh_f, b_f, Wih_b, Whh_b, b_b}));

  // [N, C, F, T] <-> rows (t, n*F + f) x C.
  auto gather = [=](const S* src, std::size_t C, std::size_t coff, std::size_t Ctot) {
    RMat<S> M(Ti * B, static_cast<Eigen::Index>(C));
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t f = 0; f < F; ++f) {
          const S* s = src + ((n * Ctot + coff + c) * F + f) * T;
          const auto row = static_cast<Eigen::Index>(n * F + f);
          for (std::size_t t = 0; t < T; ++t) M(static_cast<Eigen::Index>(t) * B + row, static_cast<Eigen::Index>(c)) = s[t];
        }
    return M;
  };
  const RMat<S> X = gather(x.data(), In, 0, In);

  struct Dir {
    RMat<S> gates;  // activated i, f, g, o per (t, b)
    RMat<S> c, tc;  // cell state and its tanh, (t, b) x H
    RMat<S> h;
  };
  const bool keep = out.requires_grad();
  auto run = [&](const Tensor<S>& Wih, const Tensor<S>& Whh, const Tensor<S>& bias, bool reverse, std::size_t off) {
    Dir d;
    CMapR<S> Wi(Wih.data(), 4 * H, In), Wh(Whh.data(), 4 * H, H);
    Eigen::Map<const Eigen::RowVector<S, Eigen::Dynamic>> bv(bias.data(), 4 * H);
    d.gates.noalias() = X * Wi.transpose();
    d.gates.rowwise() += bv;
    d.c.resize(Ti * B, Hi);
    d.tc.resize(Ti * B, Hi);
    d.h.resize(Ti * B, Hi);
    RMat<S> hprev = RMat<S>::Zero(B, Hi), cprev = RMat<S>::Zero(B, Hi);
    for (std::size_t step = 0; step < T; ++step) {
      const auto t = static_cast<Eigen::Index>(reverse ? T - 1 - step : step);
      auto G = d.gates.middleRows(t * B, B);
      G.noalias() += hprev * Wh.transpose();
      auto A = G.array();
      A.leftCols(2 * Hi) = sigmoid(A.leftCols(2 * Hi));
      A.middleCols(2 * Hi, Hi) = A.middleCols(2 * Hi, Hi).tanh();
      A.rightCols(Hi) = sigmoid(A.rightCols(Hi));
      cprev.array() = A.middleCols(Hi, Hi) * cprev.array() + A.leftCols(Hi) * A.middleCols(2 * Hi, Hi);
      auto tc = d.tc.middleRows(t * B, B);
      tc.array() = cprev.array().tanh();
      hprev.array() = A.rightCols(Hi) * tc.array();
      d.c.middleRows(t * B, B) = cprev;
      d.h.middleRows(t * B, B) = hprev;
    }
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t j = 0; j < H; ++j)
        for (std::size_t f = 0; f < F; ++f) {
          S* dst = out.data() + ((n * 2 * H + off + j) * F + f) * T;
          const auto row = static_cast<Eigen::Index>(n * F + f);
          for (std::size_t t = 0; t < T; ++t) dst[t] = d.h(static_cast<Eigen::Index>(t) * B + row, static_cast<Eigen::Index>(j));
        }
    if (!keep) d = Dir{};
    return d;
  };
  Dir fwd = run(Wih_f, Whh_f, b_f, false, 0);
  Dir bwd = run(Wih_b, Whh_b, b_b, true, H);

  if (keep) {
    auto* o = out.node();
    auto xn = x.ptr();
    std::array<typename Tensor<S>::NodeP, 6> w{Wih_f.ptr(), Whh_f.ptr(), b_f.ptr(), Wih_b.ptr(), Whh_b.ptr(), b_b.ptr()};
    o->backward = [=, X = std::move(X), fwd = std::move(fwd), bwd = std::move(bwd)] {
      RMat<S> dX = RMat<S>::Zero(X.rows(), X.cols());
      auto back = [&](const Dir& d, Node<S>* Wih, Node<S>* Whh, Node<S>* bias, bool reverse, std::size_t off) {
        CMapR<S> Wi(Wih->value.data(), 4 * H, In), Wh(Whh->value.data(), 4 * H, H);
        const RMat<S> dH = gather(o->grad.data(), H, off, 2 * H);
        RMat<S> dA(Ti * B, 4 * Hi);
        RMat<S> dh(B, Hi), dc(B, Hi);
        RMat<S> dh_next = RMat<S>::Zero(B, Hi), dc_next = RMat<S>::Zero(B, Hi);
        for (std::size_t step = 0; step < T; ++step) {
          const auto t = static_cast<Eigen::Index>(reverse ? step : T - 1 - step);
          const auto tprev = reverse ? t + 1 : t - 1;
          const bool has_prev = reverse ? t + 1 < Ti : t > 0;
          const auto A = d.gates.middleRows(t * B, B).array();
          const auto ig = A.leftCols(Hi), fg = A.middleCols(Hi, Hi), gg = A.middleCols(2 * Hi, Hi),
                     og = A.rightCols(Hi);
          const auto tc = d.tc.middleRows(t * B, B).array();
          auto D = dA.middleRows(t * B, B).array();
          dh.array() = dH.middleRows(t * B, B).array() + dh_next.array();
          dc.array() = dh.array() * og * (S(1) - tc.square()) + dc_next.array();
          D.leftCols(Hi) = dc.array() * gg * ig * (S(1) - ig);
          if (has_prev)
            D.middleCols(Hi, Hi) = dc.array() * d.c.middleRows(tprev * B, B).array() * fg * (S(1) - fg);
          else
            D.middleCols(Hi, Hi).setZero();
          D.middleCols(2 * Hi, Hi) = dc.array() * ig * (S(1) - gg.square());
          D.rightCols(Hi) = dh.array() * tc * og * (S(1) - og);
          dc_next.array() = dc.array() * fg;
          dh_next.noalias() = dA.middleRows(t * B, B) * Wh;
          if (Whh->requires_grad && has_prev)
            MapR<S>(Whh->g(), 4 * H, H).noalias() += dA.middleRows(t * B, B).transpose() * d.h.middleRows(tprev * B, B);
        }
        if (bias->requires_grad)
          Eigen::Map<Eigen::RowVector<S, Eigen::Dynamic>>(bias->g(), 4 * H) += dA.colwise().sum();
        if (Wih->requires_grad) MapR<S>(Wih->g(), 4 * H, In).noalias() += dA.transpose() * X;
        if (xn->requires_grad) dX.noalias() += dA * Wi;
      };
      back(fwd, w[0].get(), w[1].get(), w[2].get(), false, 0);
      back(bwd, w[3].get(), w[4].get(), w[5].get(), true, H);
      if (xn->requires_grad) {
        S* gx = xn->g();
        for (std::size_t n = 0; n < N; ++n)
          for (std::size_t c = 0; c < In; ++c)
            for (std::size_t f = 0; f < F; ++f) {
              const auto row = static_cast<Eigen::Index>(n * F + f);
              S* dst = gx + ((n * In + c) * F + f) * T;
              for (std::size_t t = 0; t < T; ++t) dst[t] += dX(static_cast<Eigen::Index>(t) * B + row, static_cast<Eigen::Index>(c));
            }
      }
    };
  }
  check_finite(out, "bilstm");
  return out;
}

/// Cross-attention gate: alpha[j, f, t] = softmax_j(<Q[:, f, t], K[j, :, f, t]> / sqrt(C)).
/// Q is [1, C, F, T], K is [J, C, F, T]; output is [J, F, T].
template <class S>
Tensor<S> attention_gate(const Tensor<S>& Q, const Tensor<S>& K) {
  require_dims(Q.shape().size() == 4 && K.shape().size() == 4 && Q.dim(0) == 1 && Q.dim(1) == K.dim(1) &&
                   Q.dim(2) == K.dim(2) && Q.dim(3) == K.dim(3),
               "attention_gate: shape mismatch");
  const std::size_t J = K.dim(0), C = K.dim(1), P = K.dim(2) * K.dim(3);
  const S inv = S(1) / std::sqrt(S(C));
  auto out = make_output<S>({J, K.dim(2), K.dim(3)}, {Q, K});
  std::vector<S> logit(J);
  for (std::size_t p = 0; p < P; ++p) {
    S mx = -std::numeric_limits<S>::infinity();
    for (std::size_t j = 0; j < J; ++j) {
      S s = 0;
      for (std::size_t c = 0; c < C; ++c) s += Q.data()[c * P + p] * K.data()[(j * C + c) * P + p];
      logit[j] = s * inv;
      mx = std::max(mx, logit[j]);
    }
    S z = 0;
    for (std::size_t j = 0; j < J; ++j) z += (logit[j] = std::exp(logit[j] - mx));
    for (std::size_t j = 0; j < J; ++j) out.data()[j * P + p] = logit[j] / z;
  }
  if (out.requires_grad()) {
    auto* o = out.node();
    auto qn = Q.ptr(), kn = K.ptr();
    o->backward = [=] {
      std::vector<S> gl(J);
      for (std::size_t p = 0; p < P; ++p) {
        S dot = 0;
        for (std::size_t j = 0; j < J; ++j) dot += o->value[j * P + p] * o->grad[j * P + p];
        for (std::size_t j = 0; j < J; ++j) gl[j] = o->value[j * P + p] * (o->grad[j * P + p] - dot) * inv;
        for (std::size_t c = 0; c < C; ++c) {
          if (qn->requires_grad) {
            S acc = 0;
            for (std::size_t j = 0; j < J; ++j) acc += gl[j] * kn->value[(j * C + c) * P + p];
            qn->g()[c * P + p] += acc;
          }
          if (kn->requires_grad) {
            const S q = qn->value[c * P + p];
            S* gk = kn->g();
            for (std::size_t j = 0; j < J; ++j) gk[(j * C + c) * P + p] += gl[j] * q;
          }
        }
      }
    };
  }
  check_finite(out, "attention_gate");
  return out;
}

/// S[f, t] = sum_j alpha[j, f, t] * y[j, f, t] with y complex and constant.
/// Output is [2, F, T] (real, imaginary); gradients reach alpha only.
template <class S>
Tensor<S> combine_beams(const Tensor<S>& alpha, const std::vector<std::complex<double>>& y) {
  require_dims(alpha.shape().size() == 3 && y.size() == alpha.size(), "combine_beams: shape mismatch");
  const std::size_t J = alpha.dim(0), F = alpha.dim(1), T = alpha.dim(2), P = F * T;
  auto out = make_output<S>({2, F, T}, {alpha});
  for (std::size_t p = 0; p < P; ++p) {
    double re = 0.0, im = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      re += double(alpha.data()[j * P + p]) * y[j * P + p].real();
      im += double(alpha.data()[j * P + p]) * y[j * P + p].imag();
    }
    out.data()[p] = S(re);
    out.data()[P + p] = S(im);
  }
  if (out.requires_grad()) {
    auto* o = out.node();
    auto an = alpha.ptr();
    o->backward = [=] {
      S* ga = an->g();
      for (std::size_t j = 0; j < J; ++j)
        for (std::size_t p = 0; p < P; ++p)
          ga[j * P + p] += S(double(o->grad[p]) * y[j * P + p].real() + double(o->grad[P + p]) * y[j * P + p].imag());
    };
  }
  return out;
}

}  // namespace tflc::neural
