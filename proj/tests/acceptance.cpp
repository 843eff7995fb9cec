// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit code = number of failed criteria.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "gradkit/gradkit.hpp"
#include "gradkit/digits.hpp"
#include "oracles.hpp"

using namespace gradkit;

namespace {

int g_failures = 0;

void criterion(int idx, const std::string& name, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string error;
    try {
        body();
    } catch (const std::exception& e) {
        error = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (error.empty()) {
        std::printf("[PASS] criterion %2d: %s (%.1fs)\n", idx, name.c_str(), secs);
    } else {
        std::printf("[FAIL] criterion %2d: %s (%.1fs)\n       %s\n", idx, name.c_str(), secs,
                    error.c_str());
        ++g_failures;
    }
    std::fflush(stdout);
}

struct CheckFail : std::runtime_error {
    explicit CheckFail(const std::string& m) : std::runtime_error(m) {}
};

void check(bool ok, const std::string& what) {
    if (!ok) throw CheckFail(what);
}

double checked_op_error(const std::function<NodeId(Tape&, NodeId)>& build, Shape in_shape,
                        Rng& rng, double lo = -1.0, double hi = 1.0) {
    for (int attempt = 0; attempt < 60; ++attempt) {
        Tensor x0 = oracle::random_tensor(in_shape, rng, lo, hi);
        Tape shape_tape;
        NodeId out = build(shape_tape, shape_tape.leaf(x0));
        Tensor probe = oracle::random_tensor(shape_tape.value(out).shape(), rng);
        GraphFn f = [&build, probe](Tape& t, NodeId x) {
            NodeId o = build(t, x);
            return t.record("inner_product", {o, t.leaf(probe)});
        };
        Tape margin_tape;
        f(margin_tape, margin_tape.leaf(x0));
        if (min_kink_margin(margin_tape) <= 1e-3) continue;
        return gradcheck(f, x0, 1e-6);
    }
    throw CheckFail("could not sample away from kinks");
}

// Spot-check d(loss)/d(param) for `picks` random parameter coordinates of a
// model against central differences.
double model_param_gradcheck(Model& model, const Tensor& image, int label, int picks, Rng& rng) {
    std::vector<ParamRef> prefs = model.params();
    Tape tape;
    std::vector<NodeId> pids;
    NodeId logits = model.forward(tape, image, &pids);
    NodeId loss = tape.record("nll_loss", {logits}, OpAttrs{{label}, {}});
    if (min_kink_margin(tape) <= 1e-5) return -1.0; // caller resamples the image
    tape.backward(loss);

    auto eval = [&]() {
        Tape t;
        NodeId lg = model.forward(t, image, nullptr);
        NodeId l = t.record("nll_loss", {lg}, OpAttrs{{label}, {}});
        return t.value(l)[0];
    };

    const double h = 1e-6;
    double worst = 0.0;
    for (int k = 0; k < picks; ++k) {
        const std::size_t p = static_cast<std::size_t>(rng.below(prefs.size()));
        Tensor& w = *prefs[p].tensor;
        const std::int64_t c = static_cast<std::int64_t>(rng.below(
            static_cast<std::uint64_t>(w.numel())));
        const double keep = w[c];
        w[c] = keep + h;
        const double fp = eval();
        w[c] = keep - h;
        const double fm = eval();
        w[c] = keep;
        const double numeric = (fp - fm) / (2 * h);
        const double analytic = tape.grad(pids[p])[c];
        worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)));
    }
    return worst;
}

} // namespace

static void criterion1_gradients() {
    Rng rng(201);
    const double tol = 1e-4;
    auto op = [&](const char* name, const std::function<NodeId(Tape&, NodeId)>& build, Shape shape,
                  double lo = -1.0, double hi = 1.0) {
        for (int i = 0; i < 5; ++i) {
            const double err = checked_op_error(build, shape, rng, lo, hi);
            check(err <= tol, std::string(name) + " gradcheck error " + std::to_string(err));
        }
    };

    Tensor other = oracle::random_tensor(Shape{6}, rng);
    op("add", [&](Tape& t, NodeId x) { return t.record("add", {x, t.leaf(other)}); }, Shape{6});
    op("sub", [&](Tape& t, NodeId x) { return t.record("sub", {x, t.leaf(other)}); }, Shape{6});
    op("mul", [&](Tape& t, NodeId x) { return t.record("mul", {x, t.leaf(other)}); }, Shape{6});
    op("scale", [&](Tape& t, NodeId x) { return t.record("scale", {x}, OpAttrs{{}, {0.7}}); },
       Shape{6});
    op("negate", [&](Tape& t, NodeId x) { return t.record("negate", {x}); }, Shape{6});
    op("copy", [&](Tape& t, NodeId x) { return t.record("copy", {x}); }, Shape{6});
    Tensor mat = oracle::random_tensor(Shape{4, 5}, rng);
    op("matmul", [&](Tape& t, NodeId x) { return t.record("matmul", {t.leaf(mat), x}); },
       Shape{5, 3});
    op("inner_product",
       [&](Tape& t, NodeId x) { return t.record("inner_product", {x, t.leaf(other)}); }, Shape{6});
    op("relu", [&](Tape& t, NodeId x) { return t.record("relu", {x}); }, Shape{6});
    op("sigmoid", [&](Tape& t, NodeId x) { return t.record("sigmoid", {x}); }, Shape{6}, -3, 3);
    op("tanh", [&](Tape& t, NodeId x) { return t.record("tanh", {x}); }, Shape{6}, -3, 3);
    op("swish", [&](Tape& t, NodeId x) { return t.record("swish", {x}, OpAttrs{{}, {1.0}}); },
       Shape{6}, -3, 3);
    op("softmax", [&](Tape& t, NodeId x) { return t.record("softmax", {x}); }, Shape{5}, -2, 2);
    op("zero_pad2d",
       [&](Tape& t, NodeId x) { return t.record("zero_pad2d", {x}, OpAttrs{{1, 1, 1, 1}, {}}); },
       Shape{4, 4});
    op("flatten", [&](Tape& t, NodeId x) { return t.record("flatten", {x}); }, Shape{3, 4});
    op("maxpool2d",
       [&](Tape& t, NodeId x) { return t.record("maxpool2d", {x}, OpAttrs{{2}, {}}); },
       Shape{2, 6, 6});
    OpAttrs sets{{2, 4, 4, 0, 1, 2, 3, 4, 5, 6, 7}, {}};
    op("maxpool_sets", [&](Tape& t, NodeId x) { return t.record("maxpool_sets", {x}, sets); },
       Shape{8});
    Tensor ck = oracle::random_tensor(Shape{2, 3, 3}, rng);
    Tensor cA = oracle::random_tensor(Shape{3, 2}, rng);
    Tensor cb = oracle::random_tensor(Shape{3}, rng);
    op("conv2d_scc",
       [&](Tape& t, NodeId x) {
           return t.record("conv2d_scc", {x, t.leaf(ck), t.leaf(cA), t.leaf(cb)});
       },
       Shape{2, 5, 5});
    Tensor mk = oracle::random_tensor(Shape{3, 2, 3, 3}, rng);
    op("conv2d_mcc",
       [&](Tape& t, NodeId x) { return t.record("conv2d_mcc", {x, t.leaf(mk), t.leaf(cb)}); },
       Shape{2, 5, 5});
    op("l2_loss", [&](Tape& t, NodeId x) { return t.record("l2_loss", {x, t.leaf(other)}); },
       Shape{6});
    op("nll_loss", [&](Tape& t, NodeId x) { return t.record("nll_loss", {x}, OpAttrs{{1}, {}}); },
       Shape{5}, -2, 2);
    const int K = 4;
    Tensor lk = oracle::random_tensor(Shape{2, 3, 3}, rng);
    Tensor lA = oracle::random_tensor(Shape{2, 2}, rng);
    Tensor lb = oracle::random_tensor(Shape{2}, rng);
    op("se2_lift",
       [&](Tape& t, NodeId x) {
           return t.record("se2_lift", {x, t.leaf(lk), t.leaf(lA), t.leaf(lb)}, OpAttrs{{K}, {}});
       },
       Shape{2, 6, 6});
    Tensor gstack = oracle::random_tensor(Shape{2, K, 5, 5}, rng);
    op("se2_gconv (kernels)",
       [&](Tape& t, NodeId x) {
           return t.record("se2_gconv", {t.leaf(gstack), x, t.leaf(lA), t.leaf(lb)});
       },
       Shape{2, K, 3, 3});
    op("se2_project_integrate",
       [&](Tape& t, NodeId x) { return t.record("se2_project_integrate", {x}); },
       Shape{2, K, 4, 4});
    op("se2_project_max",
       [&](Tape& t, NodeId x) { return t.record("se2_project_max", {x}); }, Shape{2, K, 4, 4});
    Tensor tf = oracle::random_tensor(Shape{5, 5}, rng);
    op("morph_conv2d",
       [&](Tape& t, NodeId x) { return t.record("morph_conv2d", {x, t.leaf(tf)}, OpAttrs{{1}, {}}); },
       Shape{2, 2});

    // full LeNet-5: 20 random parameter coordinates
    Rng mrng(202);
    Lenet5Model lenet(InitChoice::Relu, mrng);
    double err = -1.0;
    for (int attempt = 0; attempt < 20 && err < 0.0; ++attempt)
        err = model_param_gradcheck(lenet, oracle::random_tensor(Shape{1, 28, 28}, mrng, 0, 1),
                                    3, 20, mrng);
    check(err >= 0.0, "lenet: no kink-free sample found");
    check(err <= tol, "lenet gradcheck error " + std::to_string(err));

    // K=4 G-CNN: 20 random parameter coordinates
    GcnnModel gcnn(InitChoice::Relu, mrng, 4, 4, 6, 16);
    err = -1.0;
    for (int attempt = 0; attempt < 20 && err < 0.0; ++attempt)
        err = model_param_gradcheck(gcnn, oracle::random_tensor(Shape{1, 28, 28}, mrng, 0, 1),
                                    7, 20, mrng);
    check(err >= 0.0, "gcnn: no kink-free sample found");
    check(err <= tol, "gcnn gradcheck error " + std::to_string(err));
}

static void criterion2_worked_examples() {
    // relu(a x0 + b), half-squared loss at (x0,y0,a,b) = (1,0,1,0)
    {
        Tape t;
        NodeId a = t.leaf(Tensor::scalar(1));
        NodeId b = t.leaf(Tensor::scalar(0));
        NodeId x = t.leaf(Tensor::scalar(1));
        NodeId y = t.leaf(Tensor::scalar(0));
        NodeId t1 = t.record("mul", {a, x});
        NodeId t2 = t.record("add", {t1, b});
        NodeId t3 = t.record("relu", {t2});
        NodeId t4 = t.record("sub", {t3, y});
        NodeId t5 = t.record("mul", {t4, t4});
        NodeId l = t.record("scale", {t5}, OpAttrs{{}, {0.5}});
        t.backward(l);
        check(t.grad(a)[0] == 1.0, "a_bar != 1");
        check(t.grad(b)[0] == 1.0, "b_bar != 1");
    }
    // relu(a x0 + b) + (a x0 + b): the pinned two-term value t2_bar = 2 needs
    // t5 = 1, i.e. y0 = 1; the literally stated y0 = 0 hand-evaluates to 4.
    auto ad3_t2bar = [](double y0) {
        Tape t;
        NodeId a = t.leaf(Tensor::scalar(1));
        NodeId b = t.leaf(Tensor::scalar(0));
        NodeId x = t.leaf(Tensor::scalar(1));
        NodeId y = t.leaf(Tensor::scalar(y0));
        NodeId t1 = t.record("mul", {a, x});
        NodeId t2 = t.record("add", {t1, b});
        NodeId t3 = t.record("relu", {t2});
        NodeId t4 = t.record("add", {t2, t3});
        NodeId t5 = t.record("sub", {t4, y});
        NodeId t6 = t.record("mul", {t5, t5});
        NodeId l = t.record("scale", {t6}, OpAttrs{{}, {0.5}});
        t.backward(l);
        return t.grad(t2)[0];
    };
    check(ad3_t2bar(1.0) == 2.0, "t2_bar != 2 at y0 = 1");
    check(ad3_t2bar(0.0) == 4.0, "t2_bar != 4 at y0 = 0");
}

static void criterion3_scc_mcc() {
    Rng rng(203);
    for (int trial = 0; trial < 50; ++trial) {
        Conv2DLayer scc;
        scc.mode = ConvMode::SCC;
        const int C = 2 + static_cast<int>(rng.below(3));
        const int Cp = 1 + static_cast<int>(rng.below(3));
        const int m = 2 + static_cast<int>(rng.below(2));
        scc.kernels = oracle::random_tensor(Shape{C, m, m}, rng);
        scc.mix = oracle::random_tensor(Shape{Cp, C}, rng);
        scc.bias = oracle::random_tensor(Shape{Cp}, rng);
        Conv2DLayer mcc = scc_to_mcc(scc);
        Tensor f = oracle::random_tensor(Shape{C, 6, 6}, rng);
        const double d = max_abs_diff(scc.forward(f), mcc.forward(f));
        check(d <= 1e-12, "scc/mcc differ by " + std::to_string(d));
    }
    check(scc_param_count(3, 2, 2) == 18, "scc parameter count");
    check(mcc_param_count(3, 2, 2) == 24, "mcc parameter count");
}

static void criterion4_equivariance() {
    Rng rng(204);
    GcnnPipeline p4 = GcnnPipeline::random(4, 2, 2, 5, 3, rng);
    auto net4 = [&](const Tensor& img) { return p4.forward(img); };
    const SE2Element quarter(0, 0, kTwoPi / 4);
    for (int t = 0; t < 20; ++t) {
        Tensor img = oracle::random_tensor(Shape{8, 8}, rng);
        const double err = equivariance_error(net4, img, quarter);
        check(err <= 1e-9, "quarter-turn error " + std::to_string(err));
    }

    // pi/4 on K=8: bilinear-resampling error of the discretized linear
    // operator (pointwise stages are exactly equivariant on the grid and are
    // covered by the quarter-turn clause). Pinned seed, measured bound.
    Rng rng8(205);
    GcnnPipeline p8 = GcnnPipeline::random(8, 2, 2, 7, 5, rng8);
    p8.relu_between = false;
    p8.project_by_max = false;
    auto net8 = [&](const Tensor& img) { return p8.forward(img); };
    const int S = 24;
    Tensor smooth = Tensor::zeros(Shape{S, S});
    const double c = 0.5 * (S - 1);
    for (int i = 0; i < S; ++i)
        for (int j = 0; j < S; ++j) {
            const double r2 = ((i - c) * (i - c) + (j - c) * (j - c)) / (0.18 * S * S);
            const double window = std::exp(-r2 * r2);
            smooth.at(i, j) = window * (std::sin(kTwoPi * i / 16.0) + std::cos(kTwoPi * j / 16.0) +
                                        0.5 * std::sin(kTwoPi * (i + j) / 20.0));
        }
    check(l2_norm(p8.forward(smooth)) > 0.5, "degenerate pipeline output norm");
    const double err8 = equivariance_error(net8, smooth, SE2Element(0, 0, kTwoPi / 8));
    check(err8 <= 0.15, "pi/4 error " + std::to_string(err8));
}

static void criterion5_pwl() {
    Rng rng(206);
    for (int trial = 0; trial < 100; ++trial) {
        const int N = 1 + static_cast<int>(rng.below(20));
        PiecewiseLinear q;
        q.value_at_0 = rng.uniform(-2, 2);
        std::vector<double> cuts;
        for (int i = 0; i < N - 1; ++i) cuts.push_back(rng.uniform(0.01, 0.99));
        std::sort(cuts.begin(), cuts.end());
        bool ok = true;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
            if (cuts[i + 1] - cuts[i] < 1e-6) ok = false;
        if (!ok) {
            --trial;
            continue;
        }
        q.breakpoints.push_back(0.0);
        for (double c : cuts) q.breakpoints.push_back(c);
        q.breakpoints.push_back(1.0);
        for (int i = 0; i < N; ++i) q.slopes.push_back(rng.uniform(-4, 4));
        ShallowReluNet net = pwl_to_shallow(q);
        double worst = 0.0;
        for (int i = 0; i <= 1000; ++i) {
            const double x = i / 1000.0;
            worst = std::max(worst, std::abs(net.eval(x) - q.eval(x)));
        }
        check(worst <= 1e-12, "pwl sup error " + std::to_string(worst));
    }
    for (int k = 1; k <= 6; ++k) {
        auto fk = sawtooth_compose(k);
        const int den = 1 << k;
        for (int j = 0; j <= den; ++j)
            check(fk(static_cast<double>(j) / den) == (j % 2 == 1 ? 1.0 : 0.0),
                  "sawtooth dyadic value at k=" + std::to_string(k));
    }
}

static void criterion6_optimizers() {
    // Adam bias-correction identity
    const double c = 0.371;
    OptimizerState ad = make_optimizer(OptKind::Adam, 0.001);
    std::vector<Tensor> w{Tensor::scalar(1.0)};
    for (int t = 1; t <= 100; ++t) {
        ad.step(w, {Tensor::scalar(c)});
        const double mhat = ad.m[0][0] / (1.0 - std::pow(ad.beta1, t));
        const double vhat = ad.v[0][0] / (1.0 - std::pow(ad.beta2, t));
        check(std::abs(mhat - c) <= 1e-12, "mhat deviates at t=" + std::to_string(t));
        check(std::abs(vhat - c * c) <= 1e-12 * c * c, "vhat deviates at t=" + std::to_string(t));
    }
    // momentum(0) == sgd, exactly
    Rng rng(207);
    OptimizerState mo = make_optimizer(OptKind::Momentum, 0.02);
    mo.mu = 0.0;
    OptimizerState sg = make_optimizer(OptKind::Sgd, 0.02);
    Tensor wm = oracle::random_tensor(Shape{11}, rng);
    Tensor ws = wm;
    for (int t = 0; t < 50; ++t) {
        Tensor g = oracle::random_tensor(Shape{11}, rng);
        wm = momentum_step(mo, wm, g);
        ws = sgd_step(sg, ws, g);
    }
    check(max_abs_diff(wm, ws) == 0.0, "momentum(0) differs from sgd");
    // Adagrad effective steps never increase
    OptimizerState ag = make_optimizer(OptKind::Adagrad, 1.0);
    std::vector<Tensor> wa{oracle::random_tensor(Shape{5}, rng)};
    std::vector<double> prev(5, 1e300);
    for (int t = 0; t < 60; ++t) {
        ag.step(wa, {oracle::random_tensor(Shape{5}, rng)});
        for (int i = 0; i < 5; ++i) {
            const double eff = 1.0 / (std::sqrt(ag.v[0][i]) + ag.eps);
            check(eff <= prev[static_cast<std::size_t>(i)], "adagrad step size increased");
            prev[static_cast<std::size_t>(i)] = eff;
        }
    }
}

static void criterion7_init() {
    Rng rng(208);
    const int draws = 100000;
    const InitScheme schemes[] = {
        InitScheme::sigmoid_balanced(30),
        InitScheme::relu_balanced_uniform(14),
        InitScheme::xavier(50, 70),
        InitScheme::he(60, 40),
        InitScheme::with_gain(1.3, 25, 35, InitDist::Uniform),
    };
    for (const InitScheme& s : schemes) {
        Tensor x = sample_params(s, Shape{draws}, rng);
        double mean = 0.0;
        for (std::int64_t i = 0; i < x.numel(); ++i) mean += x[i];
        mean /= draws;
        double var = 0.0, m4 = 0.0;
        for (std::int64_t i = 0; i < x.numel(); ++i) {
            const double d = x[i] - mean;
            var += d * d;
            m4 += d * d * d * d;
        }
        var /= draws;
        m4 /= draws;
        const double se = std::sqrt((m4 - var * var) / draws);
        check(std::abs(var - scheme_variance(s)) <= 3.0 * se, "sample variance off target");
    }

    const int n = 256;
    Tensor A = sample_params(InitScheme::xavier(n, n), Shape{n, n}, rng);
    double sx = 0.0, sy = 0.0;
    Tensor x = Tensor::zeros(Shape{n});
    for (int t = 0; t < 10000; ++t) {
        for (std::int64_t i = 0; i < n; ++i) x[i] = rng.normal();
        Tensor y = matmul(A, x);
        for (std::int64_t i = 0; i < n; ++i) {
            sx += x[i] * x[i];
            sy += y[i] * y[i];
        }
    }
    const double lin_ratio = sy / sx;
    check(lin_ratio >= 0.8 && lin_ratio <= 1.25,
          "xavier/linear ratio " + std::to_string(lin_ratio));

    DenseLayer relu_layer;
    relu_layer.A = sample_params(InitScheme::he(n, n), Shape{n, n}, rng);
    relu_layer.b = Tensor::zeros(Shape{n});
    relu_layer.act = ScalarAct::Relu;
    const double relu_ratio = signal_variance_probe(relu_layer, 1.0, 10000, rng);
    check(relu_ratio >= 0.8 && relu_ratio <= 1.25, "he/relu ratio " + std::to_string(relu_ratio));
}

static void criterion8_tropical() {
    Rng rng(209);
    for (int t = 0; t < 30; ++t) {
        Tensor f = oracle::random_tensor(Shape{8, 6}, rng, -4, 4);
        Tensor flat = Tensor::full(Shape{2, 2}, 0.0);
        check(max_abs_diff(morph_conv2d(flat, f, 2), maxpool2d(f, 2)) == 0.0,
              "flat kernel != maxpool");
    }
    for (int t = 0; t < 50; ++t) {
        Tensor f = oracle::random_tensor(Shape{23}, rng, -4, 4);
        check(max_abs_diff(trop_relu_identity(f), scalar_act(ScalarAct::Relu, f)) == 0.0,
              "tropical relu != relu");
    }
    for (int t = 0; t < 10000; ++t) {
        const double a = rng.uniform(-9, 9), b = rng.uniform(-9, 9), cc = rng.uniform(-9, 9);
        check(trop_add(trop_add(a, b), cc) == trop_add(a, trop_add(b, cc)), "add assoc");
        check(trop_add(a, b) == trop_add(b, a), "add comm");
        check(trop_mul(a, b) == trop_mul(b, a), "mul comm");
        check(trop_mul(a, trop_add(b, cc)) == trop_add(trop_mul(a, b), trop_mul(a, cc)),
              "distributivity");
    }
    for (int t = 0; t < 1000; ++t) {
        Tensor k = oracle::random_tensor(Shape{3, 3}, rng, -3, 0);
        k[static_cast<std::int64_t>(rng.below(9))] = 0.0;
        Tensor f = oracle::random_tensor(Shape{6, 6}, rng, -5, 5);
        Tensor out = morph_conv2d(k, f, 1);
        double fmax = 0.0, omax = 0.0;
        for (std::int64_t i = 0; i < f.numel(); ++i) fmax = std::max(fmax, std::abs(f[i]));
        for (std::int64_t i = 0; i < out.numel(); ++i) omax = std::max(omax, std::abs(out[i]));
        check(omax <= fmax, "sup-norm bound violated");
    }
}

static void criterion9_training() {
    const Dataset train_set = make_digit_dataset(2000, 1001);
    const Dataset test_set = make_digit_dataset(500, 1002);
    const Dataset test_rot = rotate_dataset_quarter(test_set);

    Rng lrng(301);
    Lenet5Model lenet(InitChoice::Relu, lrng);
    TrainConfig lcfg;
    lcfg.batch_size = 32;
    lcfg.epochs = 5;
    lcfg.opt = make_optimizer(OptKind::Adam, 0.001);
    lcfg.seed = 77;
    lcfg.threads = 2;
    const auto lhist = train(lenet, train_set, test_set, lcfg);
    for (std::size_t e = 1; e < lhist.size(); ++e)
        check(lhist[e].train_loss < lhist[e - 1].train_loss,
              "lenet train loss not strictly decreasing at epoch " + std::to_string(e + 1));
    const double lenet_acc = lhist.back().test_accuracy;
    check(lenet_acc >= 0.85, "lenet accuracy " + std::to_string(lenet_acc));

    Rng grng(302);
    GcnnModel gcnn(InitChoice::Relu, grng, 8, 8, 24, 48);
    TrainConfig gcfg;
    gcfg.batch_size = 32;
    gcfg.epochs = 5;
    gcfg.opt = make_optimizer(OptKind::Adam, 0.001);
    gcfg.seed = 78;
    gcfg.threads = 2;
    const auto ghist = train(gcnn, train_set, test_set, gcfg);
    const double gcnn_acc = ghist.back().test_accuracy;
    check(gcnn_acc >= lenet_acc - 0.05,
          "gcnn accuracy " + std::to_string(gcnn_acc) + " vs lenet " + std::to_string(lenet_acc));

    const double lenet_rot = evaluate(lenet, test_rot, LossKind::Nll, 2).accuracy;
    const double gcnn_rot = evaluate(gcnn, test_rot, LossKind::Nll, 2).accuracy;
    check(gcnn_rot >= lenet_rot + 0.10, "rotated test: gcnn " + std::to_string(gcnn_rot) +
                                            " vs lenet " + std::to_string(lenet_rot));
    std::printf("       lenet %.3f gcnn %.3f | rotated: lenet %.3f gcnn %.3f\n", lenet_acc,
                gcnn_acc, lenet_rot, gcnn_rot);
}

static void criterion10_landscapes() {
    const OptKind kinds[] = {OptKind::Sgd, OptKind::Momentum, OptKind::Adagrad, OptKind::RmsProp,
                             OptKind::Adam};
    const LandscapeKind lands[] = {LandscapeKind::Canyon, LandscapeKind::Saddle,
                                   LandscapeKind::Plateau, LandscapeKind::Obstacle};
    auto emit_all = [&]() {
        std::string all;
        for (LandscapeKind land : lands)
            for (OptKind kind : kinds) {
                OptimizerState opt = make_optimizer(kind, kind == OptKind::Sgd ? 0.005 : 0.01);
                Trajectory tr = run_trajectory(land, opt, 1.0, 1.0, 300);
                std::ostringstream os;
                write_trajectory_csv(tr, os);
                all += os.str();
            }
        return all;
    };
    const std::string a = emit_all();
    const std::string b = emit_all();
    check(!a.empty() && a == b, "trajectory CSVs are not deterministic");
    check(static_cast<int>(std::count(a.begin(), a.end(), '\n')) > 20 * 100, "CSV content too small");

    Trajectory div = run_trajectory(LandscapeKind::Canyon, make_optimizer(OptKind::Sgd, 0.021),
                                    1.0, 1.0, 2000);
    check(div.diverged, "divergence above the stability threshold not flagged");

    // documented default config: shared lr 0.001, start (1,1), 2000 steps
    Trajectory adam = run_trajectory(LandscapeKind::Canyon, make_optimizer(OptKind::Adam, 0.001),
                                     1.0, 1.0, 2000);
    Trajectory sgd = run_trajectory(LandscapeKind::Canyon, make_optimizer(OptKind::Sgd, 0.001),
                                    1.0, 1.0, 2000);
    check(adam.points.back().loss < sgd.points.back().loss,
          "adam does not beat sgd on the canyon");
}

static void criterion11_formats() {
    // IDX round trip, byte-identical
    Rng rng(210);
    std::vector<unsigned char> pix(4 * 28 * 28);
    for (auto& p : pix) p = static_cast<unsigned char>(rng.below(256));
    const std::string ip = "acc_fixture_images.idx";
    write_idx_images(ip, pix, 4, 28, 28);
    {
        std::ifstream is(ip, std::ios::binary);
        std::vector<unsigned char> got((std::istreambuf_iterator<char>(is)),
                                       std::istreambuf_iterator<char>());
        std::vector<unsigned char> expect = {0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 28, 0, 0, 0, 28};
        expect.insert(expect.end(), pix.begin(), pix.end());
        check(got == expect, "IDX bytes not as specified");
    }
    Tensor imgs = load_idx_images(ip);
    for (std::size_t i = 0; i < pix.size(); ++i)
        check(imgs[static_cast<std::int64_t>(i)] == pix[i] / 255.0, "pixel scale wrong");

    const std::string lp = "acc_fixture_labels.idx";
    write_idx_labels(lp, {1, 2, 3, 4});
    bool rejected = false;
    try {
        load_idx_images(lp);
    } catch (const FormatError&) {
        rejected = true;
    }
    check(rejected, "label magic accepted as images");
    rejected = false;
    try {
        load_idx_labels(ip);
    } catch (const FormatError&) {
        rejected = true;
    }
    check(rejected, "image magic accepted as labels");

    // checkpoint bit-exactness
    Tensor a = oracle::random_tensor(Shape{5, 3}, rng);
    Tensor b = oracle::random_tensor(Shape{9}, rng);
    const std::string cp = "acc_ckpt.bin";
    checkpoint_save({{"w.A", &a}, {"w.b", &b}}, cp);
    Tensor a2 = Tensor::zeros(Shape{5, 3});
    Tensor b2 = Tensor::zeros(Shape{9});
    checkpoint_load({{"w.A", &a2}, {"w.b", &b2}}, cp);
    check(max_abs_diff(a, a2) == 0.0 && max_abs_diff(b, b2) == 0.0, "checkpoint not bit-exact");

    std::remove(ip.c_str());
    std::remove(lp.c_str());
    std::remove(cp.c_str());
}

int main() {
    criterion(1, "gradient oracle suite (ops + LeNet-5 + K=4 G-CNN, <= 1e-4)",
              criterion1_gradients);
    criterion(2, "worked-example backward values (exact)", criterion2_worked_examples);
    criterion(3, "SCC<->MCC equivalence <= 1e-12, parameter counts 18/24", criterion3_scc_mcc);
    criterion(4, "discrete equivariance (K=4 exact <= 1e-9, K=8 pi/4 <= 0.15)",
              criterion4_equivariance);
    criterion(5, "piecewise-linear exactness and sawtooth doubling", criterion5_pwl);
    criterion(6, "optimizer identities (Adam moments, momentum(0)=sgd, Adagrad monotone)",
              criterion6_optimizers);
    criterion(7, "initializer statistics and signal variance bands", criterion7_init);
    criterion(8, "tropical identities (maxpool, relu, axioms, sup-norm bound)",
              criterion8_tropical);
    criterion(9, "desk-scale training (LeNet-5 and K=8 G-CNN on digit IDX data)",
              criterion9_training);
    criterion(10, "landscape harness determinism, divergence flag, Adam vs SGD",
              criterion10_landscapes);
    criterion(11, "IDX and checkpoint bit-exactness", criterion11_formats);

    if (g_failures == 0)
        std::printf("all acceptance criteria passed\n");
    else
        std::printf("%d acceptance criteria FAILED\n", g_failures);
    return g_failures;
}
