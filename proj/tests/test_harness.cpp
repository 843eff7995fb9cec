#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "gradkit/checkpoint.hpp"
#include "gradkit/idx.hpp"
#include "gradkit/train.hpp"
#include "oracles.hpp"

using namespace gradkit;

namespace {

std::string tmp_path(const char* name) {
    return std::string("gradkit_test_") + name;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream os(path, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(is),
                                      std::istreambuf_iterator<char>());
}

// Minimal one-hidden-layer classifier over flattened images; enough
// machinery to train (the bars task below is not linearly separable).
class TinyModel final : public Model {
public:
    Tensor A1, b1, A2, b2;

    TinyModel(int pixels, int classes, Rng& rng) {
        const int hidden = 16;
        A1 = sample_params(InitScheme::he(pixels, hidden), Shape{hidden, pixels}, rng);
        b1 = Tensor::zeros(Shape{hidden});
        A2 = sample_params(InitScheme::xavier(hidden, classes), Shape{classes, hidden}, rng);
        b2 = Tensor::zeros(Shape{classes});
    }

    std::string name() const override { return "tiny"; }
    int num_classes() const override { return b2.dim(0); }
    std::vector<ParamRef> params() override {
        return {{"A1", &A1}, {"b1", &b1}, {"A2", &A2}, {"b2", &b2}};
    }

    NodeId forward(Tape& t, const Tensor& image, std::vector<NodeId>* param_ids) const override {
        const NodeId pa1 = t.leaf(A1), pb1 = t.leaf(b1);
        const NodeId pa2 = t.leaf(A2), pb2 = t.leaf(b2);
        if (param_ids) *param_ids = {pa1, pb1, pa2, pb2};
        NodeId x = t.leaf(image);
        x = t.record("flatten", {x});
        x = t.record("matmul", {pa1, x});
        x = t.record("add", {x, pb1});
        x = t.record("relu", {x});
        x = t.record("matmul", {pa2, x});
        return t.record("add", {x, pb2});
    }
};

// Two-class bars dataset: class 0 has a bright row, class 1 a bright column.
Dataset bars_dataset(int n, int side, Rng& rng) {
    Dataset d;
    d.images = Tensor::zeros(Shape{n, 1, side, side});
    for (int i = 0; i < n; ++i) {
        const int cls = static_cast<int>(rng.below(2));
        const int pos = static_cast<int>(rng.below(static_cast<std::uint64_t>(side)));
        for (int j = 0; j < side; ++j) {
            const int r = cls == 0 ? pos : j;
            const int c = cls == 0 ? j : pos;
            d.images[((static_cast<std::int64_t>(i)) * side + r) * side + c] =
                0.5 + 0.5 * rng.uniform01();
        }
        d.labels.push_back(cls);
    }
    return d;
}

} // namespace

TEST_CASE("idx fixture with known bytes") {
    // hand-authored file: 4 images of 2x2, bytes 0..15
    std::vector<unsigned char> img = {0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2};
    for (int i = 0; i < 16; ++i) img.push_back(static_cast<unsigned char>(i * 16 + 1));
    const std::string ipath = tmp_path("fixture-images.idx");
    write_bytes(ipath, img);

    Tensor t = load_idx_images(ipath);
    REQUIRE(t.shape() == Shape{4, 1, 2, 2});
    for (int i = 0; i < 16; ++i) REQUIRE(t[i] == (i * 16 + 1) / 255.0);

    std::vector<unsigned char> lab = {0, 0, 8, 1, 0, 0, 0, 4, 7, 0, 9, 3};
    const std::string lpath = tmp_path("fixture-labels.idx");
    write_bytes(lpath, lab);
    const std::vector<int> labels = load_idx_labels(lpath);
    REQUIRE(labels == std::vector<int>{7, 0, 9, 3});

    Dataset d = load_idx(ipath, lpath);
    REQUIRE(d.size() == 4);

    // image magic passed as labels and vice versa
    REQUIRE_THROWS_AS(load_idx_labels(ipath), FormatError);
    REQUIRE_THROWS_AS(load_idx_images(lpath), FormatError);

    // empty and truncated files
    const std::string epath = tmp_path("empty.idx");
    write_bytes(epath, {});
    REQUIRE_THROWS_AS(load_idx_images(epath), IoError);
    std::vector<unsigned char> trunc(img.begin(), img.begin() + 20);
    const std::string tpath = tmp_path("trunc.idx");
    write_bytes(tpath, trunc);
    REQUIRE_THROWS_AS(load_idx_images(tpath), IoError);

    // writer/loader round trip is byte-identical
    std::vector<unsigned char> pix(316);
    Rng rng(120);
    for (auto& p : pix) p = static_cast<unsigned char>(rng.below(256));
    const std::string rpath = tmp_path("roundtrip.idx");
    write_idx_images(rpath, pix, 79, 2, 2);
    std::vector<unsigned char> expect = {0, 0, 8, 3, 0, 0, 0, 79, 0, 0, 0, 2, 0, 0, 0, 2};
    expect.insert(expect.end(), pix.begin(), pix.end());
    REQUIRE(read_bytes(rpath) == expect);

    std::remove(ipath.c_str());
    std::remove(lpath.c_str());
    std::remove(epath.c_str());
    std::remove(tpath.c_str());
    std::remove(rpath.c_str());
}

TEST_CASE("split dataset") {
    Rng rng(121);
    Dataset d = bars_dataset(10, 4, rng);
    auto [train, test] = split_dataset(d, SplitConfig{0.8, 7});
    REQUIRE(train.size() == 8);
    REQUIRE(test.size() == 2);

    // same seed twice: identical split
    auto [train2, test2] = split_dataset(d, SplitConfig{0.8, 7});
    REQUIRE(max_abs_diff(train.images, train2.images) == 0.0);
    REQUIRE(train.labels == train2.labels);

    // union of halves is the original multiset (checked via sorted pixel sums)
    std::vector<double> sums;
    auto collect = [&](const Dataset& part) {
        for (int i = 0; i < part.size(); ++i) {
            double s = 0.0;
            const Tensor img = part.image(i);
            for (std::int64_t j = 0; j < img.numel(); ++j) s += img[j];
            sums.push_back(s + 1000.0 * part.labels[static_cast<std::size_t>(i)]);
        }
    };
    collect(train);
    collect(test);
    std::vector<double> orig;
    for (int i = 0; i < d.size(); ++i) {
        double s = 0.0;
        const Tensor img = d.image(i);
        for (std::int64_t j = 0; j < img.numel(); ++j) s += img[j];
        orig.push_back(s + 1000.0 * d.labels[static_cast<std::size_t>(i)]);
    }
    std::sort(sums.begin(), sums.end());
    std::sort(orig.begin(), orig.end());
    REQUIRE(sums == orig);

    REQUIRE_THROWS_AS(split_dataset(d, SplitConfig{1.5, 0}), ContractError);
}

TEST_CASE("make_batches") {
    Rng rng(122);
    auto batches = make_batches(10, 3, rng);
    REQUIRE(batches.size() == 4);
    std::vector<std::size_t> sizes;
    for (const auto& b : batches) sizes.push_back(b.size());
    REQUIRE(sizes == std::vector<std::size_t>{3, 3, 2, 2});

    // single full batch
    Rng rng2(123);
    auto full = make_batches(10, 10, rng2);
    REQUIRE(full.size() == 1);
    REQUIRE(full[0].size() == 10);

    // disjoint cover: every index exactly once
    Rng rng3(124);
    for (int n : {7, 24, 53}) {
        auto bs = make_batches(n, 5, rng3);
        std::vector<int> seen(static_cast<std::size_t>(n), 0);
        std::size_t lo = 1000, hi = 0;
        for (const auto& b : bs) {
            lo = std::min(lo, b.size());
            hi = std::max(hi, b.size());
            for (int i : b) seen[static_cast<std::size_t>(i)]++;
        }
        for (int c : seen) REQUIRE(c == 1);
        REQUIRE(hi - lo <= 1);
    }
}

TEST_CASE("batch gradients are an unbiased cover of the full gradient") {
    Rng rng(125);
    Dataset d = bars_dataset(12, 4, rng);
    TinyModel model(16, 2, rng);

    const std::size_t np = model.params().size();
    auto mean_grad = [&](const std::vector<int>& idx) {
        std::vector<Tensor> acc;
        for (ParamRef p : model.params()) acc.push_back(Tensor::zeros(p.tensor->shape()));
        for (int i : idx) {
            Tape t;
            std::vector<NodeId> pids;
            NodeId logits = model.forward(t, d.image(i), &pids);
            NodeId l = record_loss(t, logits, d.labels[static_cast<std::size_t>(i)], 2,
                                   LossKind::Nll);
            t.backward(l);
            for (std::size_t p = 0; p < np; ++p) acc[p] = ew_add(acc[p], t.grad(pids[p]));
        }
        for (auto& a : acc)
            for (auto& v : a.vec()) v /= static_cast<double>(idx.size());
        return acc;
    };

    Rng brng(126);
    auto batches = make_batches(12, 4, brng); // three equal batches
    std::vector<Tensor> avg;
    for (ParamRef p : model.params()) avg.push_back(Tensor::zeros(p.tensor->shape()));
    for (const auto& b : batches) {
        auto g = mean_grad(b);
        for (std::size_t p = 0; p < np; ++p) avg[p] = ew_add(avg[p], g[p]);
    }
    for (auto& a : avg)
        for (auto& v : a.vec()) v /= static_cast<double>(batches.size());

    std::vector<int> all(12);
    for (int i = 0; i < 12; ++i) all[static_cast<std::size_t>(i)] = i;
    auto full = mean_grad(all);
    for (std::size_t p = 0; p < np; ++p) REQUIRE(max_abs_diff(avg[p], full[p]) <= 1e-10);
}

TEST_CASE("training loop determinism and zero-lr behaviour") {
    Rng rng(127);
    Dataset data = bars_dataset(60, 4, rng);
    auto [train_set, test_set] = split_dataset(data, SplitConfig{0.8, 3});

    auto run = [&](int threads) {
        Rng mrng(9);
        TinyModel model(16, 2, mrng);
        TrainConfig cfg;
        cfg.batch_size = 8;
        cfg.epochs = 3;
        cfg.opt = make_optimizer(OptKind::Adam, 0.05);
        cfg.seed = 11;
        cfg.threads = threads;
        return train(model, train_set, test_set, cfg);
    };
    auto h1 = run(1);
    auto h2 = run(2);
    REQUIRE(h1.size() == h2.size());
    for (std::size_t i = 0; i < h1.size(); ++i) {
        REQUIRE(h1[i].train_loss == h2[i].train_loss);
        REQUIRE(h1[i].test_loss == h2[i].test_loss);
        REQUIRE(h1[i].test_accuracy == h2[i].test_accuracy);
    }
    // it actually learns the bars
    REQUIRE(h1.back().test_accuracy >= 0.9);

    // zero learning rate: per-epoch train loss equals the static full loss
    Rng mrng(9);
    TinyModel frozen(16, 2, mrng);
    const EvalResult before = evaluate(frozen, train_set, LossKind::Nll);
    TrainConfig cfg0;
    cfg0.batch_size = 48; // one batch, so composition does not enter
    cfg0.epochs = 1;
    cfg0.opt = make_optimizer(OptKind::Sgd, 1e-300);
    auto h0 = train(frozen, train_set, test_set, cfg0);
    REQUIRE(h0[0].train_loss == Catch::Approx(before.loss).epsilon(1e-12));
}

TEST_CASE("training divergence is reported") {
    Rng rng(128);
    Dataset data = bars_dataset(24, 4, rng);
    auto [train_set, test_set] = split_dataset(data, SplitConfig{0.8, 3});
    Rng mrng(10);
    TinyModel model(16, 2, mrng);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 50;
    cfg.loss = LossKind::L2; // unbounded, so the blow-up is visible in the loss
    cfg.opt = make_optimizer(OptKind::Sgd, 1e14);
    REQUIRE_THROWS_AS(train(model, train_set, test_set, cfg), NumericError);
}

TEST_CASE("checkpoint round trip") {
    Rng rng(129);
    Tensor a = oracle::random_tensor(Shape{3, 4}, rng);
    Tensor b = oracle::random_tensor(Shape{7}, rng);
    a[0] = -0.0;
    a[1] = 1e-310; // subnormal survives
    std::vector<ParamRef> params{{"layer.A", &a}, {"layer.b", &b}};
    const std::string path = tmp_path("ckpt.bin");
    checkpoint_save(params, path);

    Tensor a2 = Tensor::zeros(Shape{3, 4});
    Tensor b2 = Tensor::zeros(Shape{7});
    std::vector<ParamRef> dst{{"layer.A", &a2}, {"layer.b", &b2}};
    checkpoint_load(dst, path);
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        REQUIRE(std::memcmp(&a2[i], &a[i], 8) == 0);
    }
    REQUIRE(max_abs_diff(b, b2) == 0.0);

    // truncation -> corruption
    auto bytes = read_bytes(path);
    const std::string tp = tmp_path("ckpt-trunc.bin");
    write_bytes(tp, std::vector<unsigned char>(bytes.begin(), bytes.end() - 9));
    REQUIRE_THROWS_AS(checkpoint_load(dst, tp), CorruptionError);

    // bit flip -> checksum mismatch
    auto flipped = bytes;
    flipped[20] ^= 0x40;
    const std::string fp = tmp_path("ckpt-flip.bin");
    write_bytes(fp, flipped);
    REQUIRE_THROWS_AS(checkpoint_load(dst, fp), CorruptionError);

    // wrong tensor names -> format error naming the first mismatch
    Tensor c = Tensor::zeros(Shape{3, 4});
    Tensor d2 = Tensor::zeros(Shape{7});
    std::vector<ParamRef> other{{"другое.A", &c}, {"layer.b", &d2}};
    try {
        checkpoint_load(other, path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        REQUIRE(std::string(e.what()).find("layer.A") != std::string::npos);
    }

    // not a checkpoint at all
    const std::string np = tmp_path("ckpt-no.bin");
    write_bytes(np, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15,
                     16, 17, 18, 19, 20, 21, 22, 23, 24, 25});
    REQUIRE_THROWS_AS(checkpoint_load(dst, np), FormatError);

    std::remove(path.c_str());
    std::remove(tp.c_str());
    std::remove(fp.c_str());
    std::remove(np.c_str());
}

TEST_CASE("gcnn classifier is invariant to quarter turns") {
    Rng rng(130);
    GcnnModel model(InitChoice::Relu, rng, 4, 4, 6, 16);
    Tensor img = oracle::random_tensor(Shape{1, 28, 28}, rng, 0, 1);

    Tape t1;
    const Tensor logits1 = [&] {
        NodeId l = model.forward(t1, img, nullptr);
        return t1.value(l);
    }();

    Tensor rot = act_on_image(SE2Element(0, 0, kTwoPi / 4), img.reshaped(Shape{28, 28}))
                     .reshaped(Shape{1, 28, 28});
    Tape t2;
    const Tensor logits2 = [&] {
        NodeId l = model.forward(t2, rot, nullptr);
        return t2.value(l);
    }();

    REQUIRE(max_abs_diff(logits1, logits2) <= 1e-9);
}
