// Command-line front end: training, evaluation, gradient checking,
// equivariance measurement, landscape trajectories and IDX inspection.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "gradkit/gradkit.hpp"
#include "gradkit/digits.hpp"

using namespace gradkit;

namespace {

struct OptFlags {
    std::string opt = "adam";
    double lr = 0.001;
    double mu = 0.9;
    double alpha = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;

    void add_to(CLI::App* app) {
        app->add_option("--opt", opt, "sgd|momentum|adagrad|rmsprop|adam")->capture_default_str();
        app->add_option("--lr", lr, "learning rate")->capture_default_str();
        app->add_option("--mu", mu, "momentum coefficient")->capture_default_str();
        app->add_option("--alpha", alpha, "RMSProp forgetting factor")->capture_default_str();
        app->add_option("--beta1", beta1, "Adam first-moment decay")->capture_default_str();
        app->add_option("--beta2", beta2, "Adam second-moment decay")->capture_default_str();
        app->add_option("--eps", eps, "numerical stabilizer")->capture_default_str();
    }

    OptimizerState build() const {
        OptimizerState s = make_optimizer(opt_kind_from_string(opt), lr);
        s.mu = mu;
        s.alpha = alpha;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.eps = eps;
        return s;
    }
};

Dataset load_dir(const std::string& dir, bool prefer_test) {
    namespace fs = std::filesystem;
    const std::string train_i = dir + "/train-images-idx3-ubyte";
    const std::string train_l = dir + "/train-labels-idx1-ubyte";
    const std::string test_i = dir + "/t10k-images-idx3-ubyte";
    const std::string test_l = dir + "/t10k-labels-idx1-ubyte";
    if (prefer_test && fs::exists(test_i) && fs::exists(test_l)) return load_idx(test_i, test_l);
    if (fs::exists(train_i) && fs::exists(train_l)) return load_idx(train_i, train_l);
    if (fs::exists(test_i) && fs::exists(test_l)) return load_idx(test_i, test_l);
    throw IoError("no IDX pair found under '" + dir + "'");
}

std::unique_ptr<Model> build_model(const std::string& name, const std::string& init,
                                   std::uint64_t seed, int K) {
    Rng rng(seed);
    const InitChoice ic = init_choice_from_string(init);
    if (name == "lenet5") return std::make_unique<Lenet5Model>(ic, rng);
    if (name == "gcnn") return std::make_unique<GcnnModel>(ic, rng, K, 8, 16, 32);
    throw ContractError("unknown model '" + name + "'");
}

int cmd_train(const std::string& model_name, const std::string& data_dir, int epochs,
              int batch_size, const OptFlags& of, const std::string& init, double split,
              std::uint64_t seed, const std::string& out, const std::string& loss, int threads,
              int limit, int K) {
    Dataset all = load_dir(data_dir, false);
    if (limit > 0 && limit < all.size()) {
        std::vector<int> keep(static_cast<std::size_t>(limit));
        for (int i = 0; i < limit; ++i) keep[static_cast<std::size_t>(i)] = i;
        all = detail::take(all, keep);
    }
    auto [train_set, test_set] = split_dataset(all, SplitConfig{split, seed});
    std::printf("loaded %d samples -> %d train / %d test\n", all.size(), train_set.size(),
                test_set.size());

    auto model = build_model(model_name, init, seed, K);
    TrainConfig cfg;
    cfg.batch_size = batch_size;
    cfg.epochs = epochs;
    cfg.opt = of.build();
    cfg.loss = loss_from_string(loss);
    cfg.seed = seed;
    cfg.threads = threads;
    cfg.checkpoint_out = out;
    cfg.verbose = true;
    const auto history = train(*model, train_set, test_set, cfg);
    std::printf("final: train_loss %.6f test_loss %.6f test_acc %.4f\n",
                history.back().train_loss, history.back().test_loss,
                history.back().test_accuracy);
    if (!out.empty()) std::printf("best checkpoint written to %s\n", out.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& model_name, const std::string& data_dir,
             const std::string& loss, int threads, bool rotate90, int K) {
    auto model = build_model(model_name, "xavier", 0, K);
    checkpoint_load(model->params(), ckpt);
    Dataset data = load_dir(data_dir, true);
    if (rotate90) data = rotate_dataset_quarter(data);
    const EvalResult r = evaluate(*model, data, loss_from_string(loss), threads);
    std::printf("samples %d accuracy %.4f test_loss %.6f\n", data.size(), r.accuracy, r.loss);
    return 0;
}

double cli_checked_op_error(const std::function<NodeId(Tape&, NodeId)>& build, Shape in_shape,
                            Rng& rng) {
    for (int attempt = 0; attempt < 60; ++attempt) {
        Tensor x0 = Tensor::zeros(in_shape);
        for (auto& v : x0.vec()) v = rng.uniform(-1, 1);
        Tape shape_tape;
        NodeId out = build(shape_tape, shape_tape.leaf(x0));
        Tensor probe = Tensor::zeros(shape_tape.value(out).shape());
        for (auto& v : probe.vec()) v = rng.uniform(-1, 1);
        GraphFn f = [&build, probe](Tape& t, NodeId x) {
            NodeId o = build(t, x);
            return t.record("inner_product", {o, t.leaf(probe)});
        };
        Tape margin_tape;
        f(margin_tape, margin_tape.leaf(x0));
        if (min_kink_margin(margin_tape) <= 1e-3) continue;
        return gradcheck(f, x0, 1e-6);
    }
    throw NumericError("could not sample away from kinks");
}

int cmd_gradcheck(const std::string& module, int trials, std::uint64_t seed) {
    Rng rng(seed);
    std::printf("%-24s %12s\n", "operation", "max rel err");
    double worst = 0.0;
    auto row = [&](const char* name, const std::function<NodeId(Tape&, NodeId)>& build,
                   Shape shape) {
        double e = 0.0;
        for (int t = 0; t < trials; ++t) e = std::max(e, cli_checked_op_error(build, shape, rng));
        std::printf("%-24s %12.3e\n", name, e);
        worst = std::max(worst, e);
    };

    const bool want_core = module == "all" || module == "autograd";
    const bool want_gcnn = module == "all" || module == "gcnn";
    if (!want_core && !want_gcnn) throw ContractError("unknown module '" + module + "'");

    if (want_core) {
        Tensor other = Tensor::zeros(Shape{6});
        for (auto& v : other.vec()) v = rng.uniform(-1, 1);
        row("add", [&](Tape& t, NodeId x) { return t.record("add", {x, t.leaf(other)}); }, Shape{6});
        row("mul", [&](Tape& t, NodeId x) { return t.record("mul", {x, t.leaf(other)}); }, Shape{6});
        row("relu", [&](Tape& t, NodeId x) { return t.record("relu", {x}); }, Shape{6});
        row("sigmoid", [&](Tape& t, NodeId x) { return t.record("sigmoid", {x}); }, Shape{6});
        row("tanh", [&](Tape& t, NodeId x) { return t.record("tanh", {x}); }, Shape{6});
        row("swish", [&](Tape& t, NodeId x) { return t.record("swish", {x}, OpAttrs{{}, {1.0}}); },
            Shape{6});
        row("softmax", [&](Tape& t, NodeId x) { return t.record("softmax", {x}); }, Shape{5});
        row("maxpool2d",
            [&](Tape& t, NodeId x) { return t.record("maxpool2d", {x}, OpAttrs{{2}, {}}); },
            Shape{2, 6, 6});
        Tensor ck = Tensor::zeros(Shape{2, 3, 3});
        Tensor cA = Tensor::zeros(Shape{3, 2});
        Tensor cb = Tensor::zeros(Shape{3});
        for (auto* t : {&ck, &cA, &cb})
            for (auto& v : t->vec()) v = rng.uniform(-1, 1);
        row("conv2d_scc",
            [&](Tape& t, NodeId x) {
                return t.record("conv2d_scc", {x, t.leaf(ck), t.leaf(cA), t.leaf(cb)});
            },
            Shape{2, 5, 5});
        Tensor mk = Tensor::zeros(Shape{3, 2, 3, 3});
        for (auto& v : mk.vec()) v = rng.uniform(-1, 1);
        row("conv2d_mcc",
            [&](Tape& t, NodeId x) { return t.record("conv2d_mcc", {x, t.leaf(mk), t.leaf(cb)}); },
            Shape{2, 5, 5});
        row("l2_loss", [&](Tape& t, NodeId x) { return t.record("l2_loss", {x, t.leaf(other)}); },
            Shape{6});
        row("nll_loss",
            [&](Tape& t, NodeId x) { return t.record("nll_loss", {x}, OpAttrs{{1}, {}}); },
            Shape{5});
    }
    if (want_gcnn) {
        const int K = 4;
        Tensor lk = Tensor::zeros(Shape{2, 3, 3});
        Tensor lA = Tensor::zeros(Shape{2, 2});
        Tensor lb = Tensor::zeros(Shape{2});
        for (auto* t : {&lk, &lA, &lb})
            for (auto& v : t->vec()) v = rng.uniform(-1, 1);
        row("se2_lift",
            [&](Tape& t, NodeId x) {
                return t.record("se2_lift", {x, t.leaf(lk), t.leaf(lA), t.leaf(lb)},
                                OpAttrs{{K}, {}});
            },
            Shape{2, 6, 6});
        Tensor gf = Tensor::zeros(Shape{2, K, 5, 5});
        for (auto& v : gf.vec()) v = rng.uniform(-1, 1);
        row("se2_gconv",
            [&](Tape& t, NodeId x) {
                return t.record("se2_gconv", {t.leaf(gf), x, t.leaf(lA), t.leaf(lb)});
            },
            Shape{2, K, 3, 3});
        row("se2_project_integrate",
            [&](Tape& t, NodeId x) { return t.record("se2_project_integrate", {x}); },
            Shape{2, K, 4, 4});
        row("se2_project_max",
            [&](Tape& t, NodeId x) { return t.record("se2_project_max", {x}); },
            Shape{2, K, 4, 4});
    }
    std::printf("worst over table: %.3e\n", worst);
    return worst <= 1e-4 ? 0 : 1;
}

int cmd_equivariance(const std::string& ckpt, int K, const std::string& angle,
                     std::uint64_t seed) {
    Rng rng(seed);
    GcnnPipeline pipe = GcnnPipeline::random(K, 2, 2, 7, 5, rng);
    if (angle != "quarter") {
        // off-grid angles measure the resampling error of the linear operator
        pipe.relu_between = false;
        pipe.project_by_max = false;
    }
    if (!ckpt.empty()) std::printf("note: --ckpt pipelines not supported, using --random\n");
    Tensor img = Tensor::zeros(Shape{16, 16});
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            img.at(i, j) = std::sin(kTwoPi * i / 16.0) + std::cos(kTwoPi * j / 16.0) +
                           0.5 * std::sin(kTwoPi * (i + j) / 16.0);
    const double theta = angle == "quarter" ? kTwoPi / 4 : kTwoPi / 8;
    const double err =
        equivariance_error([&](const Tensor& f) { return pipe.forward(f); }, img,
                           SE2Element(0, 0, theta));
    std::printf("K=%d angle=%s relative equivariance error %.3e\n", K, angle.c_str(), err);
    return 0;
}

int cmd_landscape(const std::string& kind, const OptFlags& of, int steps, double w1, double w2,
                  const std::string& out, const std::string& ppm) {
    const LandscapeKind land = landscape_from_string(kind);
    Trajectory tr = run_trajectory(land, of.build(), w1, w2, steps);
    if (out.empty()) {
        write_trajectory_csv(tr, std::cout);
    } else {
        std::ofstream os(out);
        if (!os) throw IoError("cannot write '" + out + "'");
        write_trajectory_csv(tr, os);
        std::printf("wrote %zu iterates to %s%s\n", tr.points.size(), out.c_str(),
                    tr.diverged ? " (diverged)" : "");
    }
    if (tr.diverged) std::printf("divergence flagged\n");
    if (!ppm.empty()) {
        write_landscape_ppm(land, tr, ppm);
        std::printf("heatmap written to %s\n", ppm.c_str());
    }
    return 0;
}

int cmd_idx_dump(const std::string& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw IoError("cannot open '" + file + "'");
    const IdxHeader h = read_idx_header(is);
    std::printf("%s: magic %u (%s), dims [", file.c_str(), h.magic,
                h.magic == kIdxImagesMagic ? "images" : "labels");
    for (std::size_t i = 0; i < h.dims.size(); ++i)
        std::printf("%s%u", i ? ", " : "", h.dims[i]);
    std::printf("]\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"gradkit: a small deep-learning framework with SE(2) group-equivariant layers"};
    app.require_subcommand(1);

    // train
    auto* tr = app.add_subcommand("train", "train a model on IDX data");
    std::string model = "lenet5", data_dir = ".", init = "xavier", out, loss = "nll";
    int epochs = 5, batch_size = 32, threads = 2, limit = 0, K = 8;
    double split = 0.8;
    std::uint64_t seed = 42;
    OptFlags of;
    tr->add_option("--model", model, "lenet5|gcnn")->capture_default_str();
    tr->add_option("--data", data_dir, "directory with IDX files")->capture_default_str();
    tr->add_option("--epochs", epochs)->capture_default_str();
    tr->add_option("--batch-size", batch_size)->capture_default_str();
    of.add_to(tr);
    tr->add_option("--init", init, "xavier|relu|sigmoid")->capture_default_str();
    tr->add_option("--split", split, "train fraction")->capture_default_str();
    tr->add_option("--seed", seed)->capture_default_str();
    tr->add_option("--out", out, "checkpoint path (best test loss)");
    tr->add_option("--loss", loss, "nll|l2")->capture_default_str();
    tr->add_option("--threads", threads)->capture_default_str();
    tr->add_option("--limit", limit, "use only the first N samples")->capture_default_str();
    tr->add_option("--K", K, "orientation count for gcnn")->capture_default_str();

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string e_ckpt, e_model = "lenet5", e_data = ".", e_loss = "nll";
    int e_threads = 2, e_K = 8;
    bool e_rot = false;
    ev->add_option("--ckpt", e_ckpt)->required();
    ev->add_option("--model", e_model, "lenet5|gcnn")->capture_default_str();
    ev->add_option("--data", e_data)->capture_default_str();
    ev->add_option("--loss", e_loss)->capture_default_str();
    ev->add_option("--threads", e_threads)->capture_default_str();
    ev->add_flag("--rotate90", e_rot, "evaluate on a 90-degree-rotated copy");
    ev->add_option("--K", e_K, "orientation count for gcnn")->capture_default_str();

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the VJP registry");
    std::string g_module = "all";
    int g_trials = 5;
    std::uint64_t g_seed = 7;
    gc->add_option("--module", g_module, "all|autograd|gcnn")->capture_default_str();
    gc->add_option("--trials", g_trials)->capture_default_str();
    gc->add_option("--seed", g_seed)->capture_default_str();

    // equivariance
    auto* eq = app.add_subcommand("equivariance", "measure pipeline equivariance error");
    std::string q_ckpt, q_angle = "quarter";
    int q_K = 4;
    std::uint64_t q_seed = 5;
    bool q_random = true;
    eq->add_option("--ckpt", q_ckpt, "unused; random weights are always available");
    eq->add_flag("--random", q_random, "use random weights");
    eq->add_option("--K", q_K)->capture_default_str();
    eq->add_option("--angle", q_angle, "quarter|eighth")->capture_default_str();
    eq->add_option("--seed", q_seed)->capture_default_str();

    // landscape
    auto* ls = app.add_subcommand("landscape", "optimizer trajectory on a synthetic surface");
    std::string l_kind = "canyon", l_out, l_ppm;
    int l_steps = 500;
    double l_w1 = 1.0, l_w2 = 1.0;
    OptFlags lof;
    lof.lr = 0.001;
    ls->add_option("--kind", l_kind, "canyon|saddle|plateau|obstacle")->capture_default_str();
    lof.add_to(ls);
    ls->add_option("--steps", l_steps)->capture_default_str();
    ls->add_option("--w1", l_w1, "start coordinate")->capture_default_str();
    ls->add_option("--w2", l_w2, "start coordinate")->capture_default_str();
    ls->add_option("--out", l_out, "CSV path (stdout if omitted)");
    ls->add_option("--ppm", l_ppm, "also write a PPM heatmap");

    // idx-dump
    auto* ix = app.add_subcommand("idx-dump", "print an IDX header summary");
    std::string x_file;
    ix->add_option("--file", x_file)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (tr->parsed())
            return cmd_train(model, data_dir, epochs, batch_size, of, init, split, seed, out, loss,
                             threads, limit, K);
        if (ev->parsed()) return cmd_eval(e_ckpt, e_model, e_data, e_loss, e_threads, e_rot, e_K);
        if (gc->parsed()) return cmd_gradcheck(g_module, g_trials, g_seed);
        if (eq->parsed()) return cmd_equivariance(q_ckpt, q_K, q_angle, q_seed);
        if (ls->parsed()) return cmd_landscape(l_kind, lof, l_steps, l_w1, l_w2, l_out, l_ppm);
        if (ix->parsed()) return cmd_idx_dump(x_file);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
