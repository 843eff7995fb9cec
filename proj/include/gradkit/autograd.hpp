#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "gradkit/activations.hpp"
#include "gradkit/conv.hpp"
#include "gradkit/gcnn.hpp"
#include "gradkit/tensor.hpp"
#include "gradkit/tropical.hpp"

namespace gradkit {

using NodeId = std::int32_t;

/// Per-op constants fixed at record time (paddings, window sizes, targets...).
struct OpAttrs {
    std::vector<int> ints;
    std::vector<double> reals;
};

/// One recorded operation: tag, parents, retained forward values ("saved
/// tensors"), the forward value and the gradient accumulator.
struct TapeNode {
    std::string op;
    std::vector<NodeId> parents;
    OpAttrs attrs;
    std::vector<Tensor> saved;
    Tensor value;
    Tensor grad;
};

struct OpRule {
    int arity;
    std::function<Tensor(const std::vector<const Tensor*>&, const OpAttrs&, std::vector<Tensor>&)>
        forward;
    std::function<std::vector<Tensor>(const std::vector<Tensor>&, const std::vector<const Tensor*>&,
                                      const OpAttrs&)>
        vjp;
};

namespace rules {

inline Tensor dims_tensor(const Shape& s) {
    std::vector<double> d;
    for (int v : s.dims) d.push_back(static_cast<double>(v));
    return Tensor(Shape{static_cast<int>(d.size())}, d);
}

inline Shape dims_from_tensor(const Tensor& t) {
    std::vector<int> d;
    for (std::int64_t i = 0; i < t.numel(); ++i) d.push_back(static_cast<int>(t[i]));
    return Shape(d);
}

inline const Tensor& only(const std::vector<const Tensor*>& gs) {
    if (gs.size() != 1) throw ContractError("op expects exactly one output gradient");
    return *gs[0];
}

inline std::map<std::string, OpRule> make_registry() {
    std::map<std::string, OpRule> reg;

    reg["add"] = {2,
                  [](const std::vector<const Tensor*>& in, const OpAttrs&, std::vector<Tensor>&) {
                      return ew_add(*in[0], *in[1]);
                  },
                  [](const std::vector<Tensor>&, const std::vector<const Tensor*>& gs,
                     const OpAttrs&) -> std::vector<Tensor> {
                      const Tensor& g = only(gs);
                      return {g, g};
                  }};

    reg["sub"] = {2,
                  [](const std::vector<const Tensor*>& in, const OpAttrs&, std::vector<Tensor>&) {
                      return ew_sub(*in[0], *in[1]);
                  },
                  [](const std::vector<Tensor>&, const std::vector<const Tensor*>& gs,
                     const OpAttrs&) -> std::vector<Tensor> {
                      const Tensor& g = only(gs);
                      return {g, ew_scale(g, -1.0)};
                  }};

    reg["mul"] = {2,
                  [](const std::vector<const Tensor*>& in, const OpAttrs&, std::vector<Tensor>& sv) {
                      sv = {*in[0], *in[1]};
                      return ew_mul(*in[0], *in[1]);
                  },
                  [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                     const OpAttrs&) -> std::vector<Tensor> {
                      const Tensor& g = only(gs);
                      return {ew_mul(g, sv[1]), ew_mul(g, sv[0])};
                  }};

    reg["scale"] = {1,
                    [](const std::vector<const Tensor*>& in, const OpAttrs& a, std::vector<Tensor>&) {
                        return ew_scale(*in[0], a.reals.at(0));
                    },
                    [](const std::vector<Tensor>&, const std::vector<const Tensor*>& gs,
                       const OpAttrs& a) -> std::vector<Tensor> {
                        return {ew_scale(only(gs), a.reals.at(0))};
                    }};

    reg["negate"] = {1,
                     [](const std::vector<const Tensor*>& in, const OpAttrs&, std::vector<Tensor>&) {
                         return ew_scale(*in[0], -1.0);
                     },
                     [](const std::vector<Tensor>&, const std::vector<const Tensor*>& gs,
                        const OpAttrs&) -> std::vector<Tensor> {
                         return {ew_scale(only(gs), -1.0)};
                     }};

    // Fan-out: stacks two copies of the input; the backward is the sum of the
    // output gradients (one stacked tensor or two separate ones).
    reg["copy"] = {1,
                   [](const std::vector<const Tensor*>& in, const OpAttrs&, std::vector<Tensor>&) {
                       const Tensor& x = *in[0];
                       std::vector<int> d = x.shape().dims;
                       d.insert(d.begin(), 2);
                       Tensor out = Tensor::zeros(Shape(d));
                       std::copy(x.data(), x.data() + x.numel(), out.data());
                       std::copy(x.data(), x.data() + x.numel(), out.data() + x.numel());
                       return out;
                   },
                   [](const std::vector<Tensor>&, const std::vector<const Tensor*>& gs,
                      const OpAttrs&) -> std::vector<Tensor> {
                       if (gs.size() == 2) return {ew_add(*gs[0], *gs[1])};
                       const Tensor& g = only(gs);
                       const std::int64_t n = g.numel() / 2;
                       std::vector<int> d(g.shape().dims.begin() + 1, g.shape().dims.end());
                       Tensor out = Tensor::zeros(Shape(d));
                       for (std::int64_t i = 0; i < n; ++i) out[i] = g[i] + g[i + n];
                       return {out};
                   }};

    reg["matmul"] = {2,
                     [](const std::vector<const Tensor*>& in, const OpAttrs&, std::vector<Tensor>& sv) {
                         sv = {*in[0], *in[1]};
                         return matmul(*in[0], *in[1]);
                     },
                     [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                        const OpAttrs&) -> std::vector<Tensor> {
                         const Tensor& a = sv[0];
                         const Tensor& b = sv[1];
                         const Tensor& g = only(gs);
                         const int n = a.dim(0), k = a.dim(1);
                         Tensor abar = Tensor::zeros(a.shape());
                         Tensor bbar = Tensor::zeros(b.shape());
                         if (b.rank() == 1) {
                             for (int i = 0; i < n; ++i)
                                 for (int l = 0; l < k; ++l) {
                                     abar.at(i, l) = g[i] * b[l];
                                     bbar[l] += a.at(i, l) * g[i];
                                 }
                         } else {
                             const int mm = b.dim(1);
                             for (int i = 0; i < n; ++i)
                                 for (int l = 0; l < k; ++l) {
                                     double s = 0.0;
                                     for (int j = 0; j < mm; ++j) s += g.at(i, j) * b.at(l, j);
                                     abar.at(i, l) = s;
                                 }
                             for (int l = 0; l < k; ++l)
                                 for (int j = 0; j < mm; ++j) {
                                     double s = 0.0;
                                     for (int i = 0; i < n; ++i) s += a.at(i, l) * g.at(i, j);
                                     bbar.at(l, j) = s;
                                 }
                         }
                         return {abar, bbar};
                     }};

    reg["inner_product"] = {2,
                            [](const std::vector<const Tensor*>& in, const OpAttrs&,
                               std::vector<Tensor>& sv) {
                                sv = {*in[0], *in[1]};
                                return Tensor::scalar(dot(*in[0], *in[1]));
                            },
                            [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                               const OpAttrs&) -> std::vector<Tensor> {
                                const double c = only(gs)[0];
                                return {ew_scale(sv[1], c), ew_scale(sv[0], c)};
                            }};

    reg["relu"] = {1,
                   [](const std::vector<const Tensor*>& in, const OpAttrs&, std::vector<Tensor>& sv) {
                       sv = {*in[0]};
                       return scalar_act(ScalarAct::Relu, *in[0]);
                   },
                   [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                      const OpAttrs&) -> std::vector<Tensor> {
                       const Tensor& g = only(gs);
                       Tensor out = g;
                       for (std::int64_t i = 0; i < out.numel(); ++i)
                           out[i] *= relu_deriv(sv[0][i]);
                       return {out};
                   }};

    reg["sigmoid"] = {1,
                      [](const std::vector<const Tensor*>& in, const OpAttrs&,
                         std::vector<Tensor>& sv) {
                          Tensor y = scalar_act(ScalarAct::Sigmoid, *in[0]);
                          sv = {y};
                          return y;
                      },
                      [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                         const OpAttrs&) -> std::vector<Tensor> {
                          const Tensor& g = only(gs);
                          Tensor out = g;
                          for (std::int64_t i = 0; i < out.numel(); ++i)
                              out[i] *= sv[0][i] * (1.0 - sv[0][i]);
                          return {out};
                      }};

    reg["tanh"] = {1,
                   [](const std::vector<const Tensor*>& in, const OpAttrs&, std::vector<Tensor>& sv) {
                       Tensor y = scalar_act(ScalarAct::Tanh, *in[0]);
                       sv = {y};
                       return y;
                   },
                   [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                      const OpAttrs&) -> std::vector<Tensor> {
                       const Tensor& g = only(gs);
                       Tensor out = g;
                       for (std::int64_t i = 0; i < out.numel(); ++i)
                           out[i] *= 1.0 - sv[0][i] * sv[0][i];
                       return {out};
                   }};

    reg["swish"] = {1,
                    [](const std::vector<const Tensor*>& in, const OpAttrs& a,
                       std::vector<Tensor>& sv) {
                        sv = {*in[0]};
                        const double beta = a.reals.empty() ? 1.0 : a.reals[0];
                        return scalar_act(ScalarAct::Swish, *in[0], beta);
                    },
                    [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                       const OpAttrs& a) -> std::vector<Tensor> {
                        const double beta = a.reals.empty() ? 1.0 : a.reals[0];
                        const Tensor& g = only(gs);
                        Tensor out = g;
                        for (std::int64_t i = 0; i < out.numel(); ++i)
                            out[i] *= swish_deriv(sv[0][i], beta);
                        return {out};
                    }};

    reg["softmax"] = {1,
                      [](const std::vector<const Tensor*>& in, const OpAttrs&,
                         std::vector<Tensor>& sv) {
                          Tensor y = softmax(*in[0]);
                          sv = {y};
                          return y;
                      },
                      [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                         const OpAttrs&) -> std::vector<Tensor> {
                          const Tensor& y = sv[0];
                          const Tensor& g = only(gs);
                          const double inner = dot(g, y);
                          Tensor out = y;
                          for (std::int64_t i = 0; i < out.numel(); ++i)
                              out[i] = y[i] * (g[i] - inner);
                          return {out};
                      }};

    reg["zero_pad2d"] = {1,
                         [](const std::vector<const Tensor*>& in, const OpAttrs& a,
                            std::vector<Tensor>&) {
                             PadSpec p{a.ints.at(0), a.ints.at(1), a.ints.at(2), a.ints.at(3)};
                             return zero_pad2d(*in[0], p);
                         },
                         [](const std::vector<Tensor>&, const std::vector<const Tensor*>& gs,
                            const OpAttrs& a) -> std::vector<Tensor> {
                             PadSpec p{a.ints.at(0), a.ints.at(1), a.ints.at(2), a.ints.at(3)};
                             return {crop2d(only(gs), p)};
                         }};

    reg["conv2d_scc"] = {4,
                         [](const std::vector<const Tensor*>& in, const OpAttrs&,
                            std::vector<Tensor>& sv) {
                             Tensor corr;
                             Tensor out = scc_forward(*in[0], *in[1], *in[2], *in[3], &corr);
                             sv = {*in[0], *in[1], *in[2], corr};
                             return out;
                         },
                         [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                            const OpAttrs&) -> std::vector<Tensor> {
                             const Tensor& f = sv[0];
                             const Tensor& k = sv[1];
                             const Tensor& A = sv[2];
                             const Tensor& corr = sv[3];
                             const Tensor& g = only(gs);
                             const int C = f.dim(0), h = f.dim(1), w = f.dim(2);
                             const int m = k.dim(1);
                             const int Cp = A.dim(0);
                             const int oh = h - m + 1, ow = w - m + 1;
                             const std::int64_t plane = static_cast<std::int64_t>(oh) * ow;
                             Tensor fbar = Tensor::zeros(f.shape());
                             Tensor kbar = Tensor::zeros(k.shape());
                             Tensor Abar = Tensor::zeros(A.shape());
                             Tensor bbar = Tensor::zeros(Shape{Cp});
                             std::vector<double> u(static_cast<std::size_t>(plane));
                             for (int c = 0; c < C; ++c) {
                                 std::fill(u.begin(), u.end(), 0.0);
                                 for (int cp = 0; cp < Cp; ++cp) {
                                     const double a = A.at(cp, c);
                                     if (a == 0.0) continue;
                                     const double* og = g.data() + cp * plane;
                                     for (std::int64_t i = 0; i < plane; ++i)
                                         u[static_cast<std::size_t>(i)] += a * og[i];
                                 }
                                 detail::xcorr2d_kernel_grad_acc(
                                     kbar.data() + static_cast<std::int64_t>(c) * m * m, m,
                                     f.data() + static_cast<std::int64_t>(c) * h * w, h, w, u.data());
                                 detail::xcorr2d_input_grad_acc(
                                     fbar.data() + static_cast<std::int64_t>(c) * h * w,
                                     k.data() + static_cast<std::int64_t>(c) * m * m, m, u.data(),
                                     oh, ow, w);
                             }
                             for (int cp = 0; cp < Cp; ++cp) {
                                 const double* og = g.data() + cp * plane;
                                 double bs = 0.0;
                                 for (std::int64_t i = 0; i < plane; ++i) bs += og[i];
                                 bbar[cp] = bs;
                                 for (int c = 0; c < C; ++c) {
                                     const double* s = corr.data() + c * plane;
                                     double acc = 0.0;
                                     for (std::int64_t i = 0; i < plane; ++i) acc += og[i] * s[i];
                                     Abar.at(cp, c) = acc;
                                 }
                             }
                             return {fbar, kbar, Abar, bbar};
                         }};

    reg["conv2d_mcc"] = {3,
                         [](const std::vector<const Tensor*>& in, const OpAttrs&,
                            std::vector<Tensor>& sv) {
                             sv = {*in[0], *in[1]};
                             return mcc_forward(*in[0], *in[1], *in[2]);
                         },
                         [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                            const OpAttrs&) -> std::vector<Tensor> {
                             const Tensor& f = sv[0];
                             const Tensor& k = sv[1];
                             const Tensor& g = only(gs);
                             const int C = f.dim(0), h = f.dim(1), w = f.dim(2);
                             const int Cp = k.dim(0), m = k.dim(2);
                             const int oh = h - m + 1, ow = w - m + 1;
                             const std::int64_t plane = static_cast<std::int64_t>(oh) * ow;
                             Tensor fbar = Tensor::zeros(f.shape());
                             Tensor kbar = Tensor::zeros(k.shape());
                             Tensor bbar = Tensor::zeros(Shape{Cp});
                             for (int cp = 0; cp < Cp; ++cp) {
                                 const double* og = g.data() + cp * plane;
                                 double bs = 0.0;
                                 for (std::int64_t i = 0; i < plane; ++i) bs += og[i];
                                 bbar[cp] = bs;
                                 for (int c = 0; c < C; ++c) {
                                     detail::xcorr2d_kernel_grad_acc(
                                         kbar.data() + (static_cast<std::int64_t>(cp) * C + c) * m * m,
                                         m, f.data() + static_cast<std::int64_t>(c) * h * w, h, w, og);
                                     detail::xcorr2d_input_grad_acc(
                                         fbar.data() + static_cast<std::int64_t>(c) * h * w,
                                         k.data() + (static_cast<std::int64_t>(cp) * C + c) * m * m,
                                         m, og, oh, ow, w);
                                 }
                             }
                             return {fbar, kbar, bbar};
                         }};

    reg["maxpool2d"] = {1,
                        [](const std::vector<const Tensor*>& in, const OpAttrs& a,
                           std::vector<Tensor>& sv) {
                            std::vector<std::int64_t> arg;
                            Tensor out = maxpool2d(*in[0], a.ints.at(0), &arg);
                            Tensor args = Tensor::zeros(out.shape());
                            for (std::size_t i = 0; i < arg.size(); ++i)
                                args[static_cast<std::int64_t>(i)] = static_cast<double>(arg[i]);
                            sv = {args, dims_tensor(in[0]->shape())};
                            return out;
                        },
                        [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                           const OpAttrs&) -> std::vector<Tensor> {
                            const Tensor& g = only(gs);
                            Tensor fbar = Tensor::zeros(dims_from_tensor(sv[1]));
                            for (std::int64_t i = 0; i < g.numel(); ++i)
                                fbar[static_cast<std::int64_t>(sv[0][i])] += g[i];
                            return {fbar};
                        }};

    // attrs.ints layout: [S, len_1..len_S, indices...]
    reg["maxpool_sets"] = {1,
                           [](const std::vector<const Tensor*>& in, const OpAttrs& a,
                              std::vector<Tensor>& sv) {
                               const int S = a.ints.at(0);
                               std::size_t off = 1 + static_cast<std::size_t>(S);
                               Tensor out = Tensor::zeros(Shape{S});
                               Tensor args = Tensor::zeros(Shape{S});
                               for (int s = 0; s < S; ++s) {
                                   const int len = a.ints.at(1 + s);
                                   if (len < 1) throw ShapeError("maxpool_sets: empty index set");
                                   std::int64_t best = a.ints.at(off);
                                   double bv = (*in[0])[best];
                                   for (int j = 1; j < len; ++j) {
                                       const std::int64_t idx = a.ints.at(off + j);
                                       if ((*in[0])[idx] > bv) {
                                           bv = (*in[0])[idx];
                                           best = idx;
                                       }
                                   }
                                   out[s] = bv;
                                   args[s] = static_cast<double>(best);
                                   off += static_cast<std::size_t>(len);
                               }
                               sv = {args, dims_tensor(in[0]->shape())};
                               return out;
                           },
                           [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                              const OpAttrs&) -> std::vector<Tensor> {
                               const Tensor& g = only(gs);
                               Tensor fbar = Tensor::zeros(dims_from_tensor(sv[1]));
                               for (std::int64_t i = 0; i < g.numel(); ++i)
                                   fbar[static_cast<std::int64_t>(sv[0][i])] += g[i];
                               return {fbar};
                           }};

    reg["flatten"] = {1,
                      [](const std::vector<const Tensor*>& in, const OpAttrs&,
                         std::vector<Tensor>& sv) {
                          sv = {dims_tensor(in[0]->shape())};
                          return in[0]->reshaped(Shape{static_cast<int>(in[0]->numel())});
                      },
                      [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                         const OpAttrs&) -> std::vector<Tensor> {
                          return {only(gs).reshaped(dims_from_tensor(sv[0]))};
                      }};

    reg["l2_loss"] = {2,
                      [](const std::vector<const Tensor*>& in, const OpAttrs&,
                         std::vector<Tensor>& sv) {
                          Tensor d = ew_sub(*in[0], *in[1]);
                          double s = 0.0;
                          for (std::int64_t i = 0; i < d.numel(); ++i) s += d[i] * d[i];
                          sv = {d};
                          return Tensor::scalar(0.5 * s);
                      },
                      [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                         const OpAttrs&) -> std::vector<Tensor> {
                          const double lb = only(gs)[0];
                          return {ew_scale(sv[0], lb), ew_scale(sv[0], -lb)};
                      }};

    // Fused softmax + negative log-likelihood of the target class.
    reg["nll_loss"] = {1,
                       [](const std::vector<const Tensor*>& in, const OpAttrs& a,
                          std::vector<Tensor>& sv) {
                           const int target = a.ints.at(0);
                           if (target < 0 || target >= in[0]->numel())
                               throw ContractError("nll_loss: target out of range");
                           Tensor p = softmax(*in[0]);
                           sv = {p};
                           const double pt = std::max(p[target], 1e-300);
                           return Tensor::scalar(-std::log(pt));
                       },
                       [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                          const OpAttrs& a) -> std::vector<Tensor> {
                           const double lb = only(gs)[0];
                           const int target = a.ints.at(0);
                           Tensor out = ew_scale(sv[0], lb);
                           out[target] -= lb;
                           return {out};
                       }};

    reg["se2_lift"] = {4,
                       [](const std::vector<const Tensor*>& in, const OpAttrs& a,
                          std::vector<Tensor>& sv) {
                           Tensor corr;
                           Tensor out =
                               lift_forward(*in[0], *in[1], *in[2], *in[3], a.ints.at(0), &corr);
                           sv = {*in[0], *in[1], *in[2], corr};
                           return out;
                       },
                       [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                          const OpAttrs& a) -> std::vector<Tensor> {
                           LiftGrads g =
                               lift_backward(sv[0], sv[1], sv[2], sv[3], only(gs), a.ints.at(0));
                           return {g.f, g.kernels, g.mix, g.bias};
                       }};

    reg["se2_gconv"] = {4,
                        [](const std::vector<const Tensor*>& in, const OpAttrs&,
                           std::vector<Tensor>& sv) {
                            Tensor corr;
                            Tensor out = gconv_forward(*in[0], *in[1], *in[2], *in[3], &corr);
                            sv = {*in[0], *in[1], *in[2], corr};
                            return out;
                        },
                        [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                           const OpAttrs&) -> std::vector<Tensor> {
                            LiftGrads g = gconv_backward(sv[0], sv[1], sv[2], sv[3], only(gs));
                            return {g.f, g.kernels, g.mix, g.bias};
                        }};

    reg["se2_project_integrate"] = {1,
                                    [](const std::vector<const Tensor*>& in, const OpAttrs& a,
                                       std::vector<Tensor>& sv) {
                                        const bool scale = a.ints.empty() || a.ints[0] != 0;
                                        sv = {dims_tensor(in[0]->shape())};
                                        return project_integrate(*in[0], scale);
                                    },
                                    [](const std::vector<Tensor>& sv,
                                       const std::vector<const Tensor*>& gs,
                                       const OpAttrs& a) -> std::vector<Tensor> {
                                        const Shape s = dims_from_tensor(sv[0]);
                                        const int K = s[1];
                                        const bool scale = a.ints.empty() || a.ints[0] != 0;
                                        const double c = scale ? kTwoPi / K : 1.0;
                                        const Tensor& g = only(gs);
                                        Tensor fbar = Tensor::zeros(s);
                                        const std::int64_t plane =
                                            static_cast<std::int64_t>(s[2]) * s[3];
                                        for (int ch = 0; ch < s[0]; ++ch)
                                            for (int k = 0; k < K; ++k)
                                                for (std::int64_t i = 0; i < plane; ++i)
                                                    fbar[(static_cast<std::int64_t>(ch) * K + k) *
                                                             plane +
                                                         i] = c * g[ch * plane + i];
                                        return {fbar};
                                    }};

    reg["se2_project_max"] = {1,
                              [](const std::vector<const Tensor*>& in, const OpAttrs&,
                                 std::vector<Tensor>& sv) {
                                  std::vector<std::int64_t> arg;
                                  Tensor out = project_max(*in[0], &arg);
                                  Tensor args = Tensor::zeros(out.shape());
                                  for (std::size_t i = 0; i < arg.size(); ++i)
                                      args[static_cast<std::int64_t>(i)] =
                                          static_cast<double>(arg[i]);
                                  sv = {args, dims_tensor(in[0]->shape())};
                                  return out;
                              },
                              [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                                 const OpAttrs&) -> std::vector<Tensor> {
                                  const Tensor& g = only(gs);
                                  Tensor fbar = Tensor::zeros(dims_from_tensor(sv[1]));
                                  for (std::int64_t i = 0; i < g.numel(); ++i)
                                      fbar[static_cast<std::int64_t>(sv[0][i])] += g[i];
                                  return {fbar};
                              }};

    // Trainable tropical kernel: subgradient backward by argmax routing.
    reg["morph_conv2d"] = {2,
                           [](const std::vector<const Tensor*>& in, const OpAttrs& a,
                              std::vector<Tensor>& sv) {
                               const int stride = a.ints.empty() ? 1 : a.ints[0];
                               std::vector<std::int64_t> argf;
                               Tensor out = morph_conv2d(*in[0], *in[1], stride, &argf);
                               Tensor argsf = Tensor::zeros(out.shape());
                               Tensor argsk = Tensor::zeros(out.shape());
                               const int w = in[1]->dim(1);
                               const int m2 = in[0]->dim(1);
                               const int ow = out.dim(1);
                               for (std::int64_t i = 0; i < out.numel(); ++i) {
                                   argsf[i] = static_cast<double>(argf[static_cast<std::size_t>(i)]);
                                   // recover the kernel cell from the input cell
                                   const std::int64_t fi = argf[static_cast<std::size_t>(i)];
                                   const std::int64_t o1 = i / ow, o2 = i % ow;
                                   const std::int64_t j1 = fi / w - o1 * stride;
                                   const std::int64_t j2 = fi % w - o2 * stride;
                                   argsk[i] = static_cast<double>(j1 * m2 + j2);
                               }
                               sv = {argsk, argsf, dims_tensor(in[0]->shape()),
                                     dims_tensor(in[1]->shape())};
                               return out;
                           },
                           [](const std::vector<Tensor>& sv, const std::vector<const Tensor*>& gs,
                              const OpAttrs&) -> std::vector<Tensor> {
                               const Tensor& g = only(gs);
                               Tensor kbar = Tensor::zeros(dims_from_tensor(sv[2]));
                               Tensor fbar = Tensor::zeros(dims_from_tensor(sv[3]));
                               for (std::int64_t i = 0; i < g.numel(); ++i) {
                                   kbar[static_cast<std::int64_t>(sv[0][i])] += g[i];
                                   fbar[static_cast<std::int64_t>(sv[1][i])] += g[i];
                               }
                               return {kbar, fbar};
                           }};

    return reg;
}

} // namespace rules

inline const std::map<std::string, OpRule>& op_registry() {
    static const std::map<std::string, OpRule> reg = rules::make_registry();
    return reg;
}

inline const OpRule& op_rule(const std::string& tag) {
    const auto& reg = op_registry();
    auto it = reg.find(tag);
    if (it == reg.end()) throw RegistryError("unknown op '" + tag + "'");
    return it->second;
}

/// Standalone VJP evaluation of a single registered rule.
inline std::vector<Tensor> vjp(const std::string& tag, const std::vector<Tensor>& saved,
                               const std::vector<Tensor>& outgrads, const OpAttrs& attrs = {}) {
    const OpRule& rule = op_rule(tag);
    std::vector<const Tensor*> gs;
    gs.reserve(outgrads.size());
    for (const Tensor& t : outgrads) gs.push_back(&t);
    return rule.vjp(saved, gs, attrs);
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so node ids
/// are already a topological order; backward walks them in reverse.
/// A tape is confined to one thread for its lifetime.
class Tape {
public:
    NodeId leaf(Tensor v) {
        TapeNode n;
        n.op = "leaf";
        n.value = std::move(v);
        n.grad = Tensor::zeros(n.value.shape());
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    NodeId record(const std::string& tag, std::vector<NodeId> parents, OpAttrs attrs = {}) {
        const OpRule& rule = op_rule(tag);
        if (static_cast<int>(parents.size()) != rule.arity)
            throw ShapeError("op '" + tag + "' expects " + std::to_string(rule.arity) +
                             " parents, got " + std::to_string(parents.size()));
        std::vector<const Tensor*> in;
        in.reserve(parents.size());
        for (NodeId p : parents) {
            if (p < 0 || p >= static_cast<NodeId>(nodes_.size()))
                throw ContractError("record: parent id out of range");
            in.push_back(&nodes_[static_cast<std::size_t>(p)].value);
        }
        TapeNode n;
        n.op = tag;
        n.parents = std::move(parents);
        n.attrs = std::move(attrs);
        n.value = rule.forward(in, n.attrs, n.saved);
        n.grad = Tensor::zeros(n.value.shape());
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    std::size_t size() const { return nodes_.size(); }
    const TapeNode& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
    const Tensor& value(NodeId id) const { return node(id).value; }
    const Tensor& grad(NodeId id) const { return node(id).grad; }

    /// Seeds grad(loss) = 1 and sweeps the tape in decreasing id order; each
    /// node adds its VJP contributions into its parents' grads, so values
    /// consumed several times accumulate the sum of all contributions.
    void backward(NodeId loss) {
        if (loss < 0 || loss >= static_cast<NodeId>(nodes_.size()))
            throw ContractError("backward: loss id out of range");
        if (nodes_[static_cast<std::size_t>(loss)].value.numel() != 1)
            throw ContractError("backward: loss must be scalar");
        for (auto& n : nodes_) n.grad = Tensor::zeros(n.value.shape());
        std::vector<char> touched(nodes_.size(), 0);
        nodes_[static_cast<std::size_t>(loss)].grad = Tensor::full(
            nodes_[static_cast<std::size_t>(loss)].value.shape(), 1.0);
        touched[static_cast<std::size_t>(loss)] = 1;
        for (NodeId i = loss; i >= 0; --i) {
            TapeNode& n = nodes_[static_cast<std::size_t>(i)];
            if (n.parents.empty() || !touched[static_cast<std::size_t>(i)]) continue;
            const OpRule& rule = op_rule(n.op);
            std::vector<const Tensor*> gs{&n.grad};
            std::vector<Tensor> pgrads = rule.vjp(n.saved, gs, n.attrs);
            if (pgrads.size() != n.parents.size())
                throw ContractError("vjp of '" + n.op + "' returned wrong parent count");
            for (std::size_t j = 0; j < n.parents.size(); ++j) {
                TapeNode& p = nodes_[static_cast<std::size_t>(n.parents[j])];
                if (pgrads[j].shape() != p.value.shape())
                    throw ShapeError("vjp of '" + n.op + "' produced gradient of shape " +
                                     pgrads[j].shape().str() + " for parent of shape " +
                                     p.value.shape().str());
                double* d = p.grad.data();
                const double* s = pgrads[j].data();
                for (std::int64_t t = 0; t < p.grad.numel(); ++t) d[t] += s[t];
                touched[static_cast<std::size_t>(n.parents[j])] = 1;
            }
        }
    }

    /// Plain-text topological listing: "id op parents value-shape" per line.
    void dump(std::ostream& os) const {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            os << i << ' ' << nodes_[i].op << " [";
            for (std::size_t j = 0; j < nodes_[i].parents.size(); ++j)
                os << (j ? "," : "") << nodes_[i].parents[j];
            os << "] " << nodes_[i].value.shape().str() << '\n';
        }
    }

private:
    std::vector<TapeNode> nodes_;
};

/// Minimum distance to a non-smooth point over all kink-carrying ops on the
/// tape (relu zero crossings and max-style ties). Used to resample gradcheck
/// inputs away from subdifferentiable points.
/// Ties at exactly zero are skipped: those are relu floors, and the relu
/// margin already guarantees the clamped cells cannot move under the
/// finite-difference perturbation, so the routing is locally constant.
inline double min_kink_margin(const Tape& tape) {
    double margin = std::numeric_limits<double>::infinity();
    auto top2_gap = [&](const std::vector<double>& cand) {
        if (cand.size() < 2) return;
        double a = -std::numeric_limits<double>::infinity(), b = a;
        for (double v : cand) {
            if (v > a) {
                b = a;
                a = v;
            } else if (v > b) {
                b = v;
            }
        }
        if (a == b && a == 0.0) return;
        margin = std::min(margin, a - b);
    };
    for (std::size_t i = 0; i < tape.size(); ++i) {
        const TapeNode& n = tape.node(static_cast<NodeId>(i));
        if (n.op == "relu") {
            const Tensor& x = tape.value(n.parents[0]);
            for (std::int64_t t = 0; t < x.numel(); ++t) margin = std::min(margin, std::abs(x[t]));
        } else if (n.op == "maxpool2d") {
            const Tensor& x = tape.value(n.parents[0]);
            const int m = n.attrs.ints.at(0);
            const int r = x.rank();
            const int h = x.dim(r - 2), w = x.dim(r - 1);
            std::int64_t lead = 1;
            for (int d = 0; d < r - 2; ++d) lead *= x.dim(d);
            for (std::int64_t c = 0; c < lead; ++c) {
                const double* s = x.data() + c * h * w;
                for (int i1 = 0; i1 + m <= h; i1 += m)
                    for (int i2 = 0; i2 + m <= w; i2 += m) {
                        std::vector<double> cand;
                        for (int j1 = 0; j1 < m; ++j1)
                            for (int j2 = 0; j2 < m; ++j2)
                                cand.push_back(s[static_cast<std::size_t>(i1 + j1) * w + i2 + j2]);
                        top2_gap(cand);
                    }
            }
        } else if (n.op == "se2_project_max") {
            const Tensor& x = tape.value(n.parents[0]);
            const int C = x.dim(0), K = x.dim(1);
            const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
            for (int c = 0; c < C; ++c)
                for (std::int64_t p = 0; p < plane; ++p) {
                    std::vector<double> cand;
                    for (int k = 0; k < K; ++k)
                        cand.push_back(x[(static_cast<std::int64_t>(c) * K + k) * plane + p]);
                    top2_gap(cand);
                }
        } else if (n.op == "maxpool_sets") {
            const Tensor& x = tape.value(n.parents[0]);
            const int S = n.attrs.ints.at(0);
            std::size_t off = 1 + static_cast<std::size_t>(S);
            for (int s = 0; s < S; ++s) {
                const int len = n.attrs.ints.at(1 + s);
                std::vector<double> cand;
                for (int j = 0; j < len; ++j)
                    cand.push_back(x[n.attrs.ints.at(off + static_cast<std::size_t>(j))]);
                top2_gap(cand);
                off += static_cast<std::size_t>(len);
            }
        } else if (n.op == "morph_conv2d") {
            const Tensor& k = tape.value(n.parents[0]);
            const Tensor& f = tape.value(n.parents[1]);
            const int stride = n.attrs.ints.empty() ? 1 : n.attrs.ints[0];
            const int m1 = k.dim(0), m2 = k.dim(1);
            const int h = f.dim(0), w = f.dim(1);
            for (int i1 = 0; i1 * stride + m1 <= h; ++i1)
                for (int i2 = 0; i2 * stride + m2 <= w; ++i2) {
                    std::vector<double> cand;
                    for (int j1 = 0; j1 < m1; ++j1)
                        for (int j2 = 0; j2 < m2; ++j2)
                            if (k.at(j1, j2) != kTropZero)
                                cand.push_back(k.at(j1, j2) + f.at(i1 * stride + j1, i2 * stride + j2));
                    top2_gap(cand);
                }
        }
    }
    return margin;
}

/// A scalar-valued recorded function of one tensor input.
using GraphFn = std::function<NodeId(Tape&, NodeId)>;

/// Central-difference gradient check. Returns
/// max_i |analytic_i - numeric_i| / max(1, |numeric_i|).
inline double gradcheck(const GraphFn& f, const Tensor& point, double h) {
    if (!(h > 0.0)) throw ContractError("gradcheck: h must be positive");
    Tape tape;
    const NodeId x = tape.leaf(point);
    const NodeId loss = f(tape, x);
    if (tape.value(loss).numel() != 1) throw ContractError("gradcheck: f must be scalar-valued");
    tape.backward(loss);
    const Tensor analytic = tape.grad(x);

    auto eval = [&](const Tensor& p) {
        Tape t;
        const NodeId xi = t.leaf(p);
        const NodeId l = f(t, xi);
        return t.value(l)[0];
    };

    double worst = 0.0;
    for (std::int64_t i = 0; i < point.numel(); ++i) {
        Tensor xp = point, xm = point;
        xp[i] += h;
        xm[i] -= h;
        const double fp = eval(xp), fm = eval(xm);
        if (std::isnan(fp) || std::isnan(fm)) throw NumericError("gradcheck: NaN in evaluation");
        const double numeric = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, err);
    }
    return worst;
}

} // namespace gradkit
