// Writes a deterministic synthetic digit dataset in IDX format, so the
// training CLI can be exercised end to end without external data.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

#include "gradkit/digits.hpp"

int main(int argc, char** argv) {
    CLI::App app{"generate synthetic 28x28 digit IDX files"};
    std::string out_dir = ".";
    int n_train = 2500;
    int n_test = 500;
    std::uint64_t seed = 1001;
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--train", n_train, "training sample count")->capture_default_str();
    app.add_option("--test", n_test, "test sample count")->capture_default_str();
    app.add_option("--seed", seed)->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir);
        const gradkit::Dataset train = gradkit::make_digit_dataset(n_train, seed);
        const gradkit::Dataset test = gradkit::make_digit_dataset(n_test, seed + 1);
        gradkit::write_digit_idx(train, out_dir + "/train-images-idx3-ubyte",
                                 out_dir + "/train-labels-idx1-ubyte");
        gradkit::write_digit_idx(test, out_dir + "/t10k-images-idx3-ubyte",
                                 out_dir + "/t10k-labels-idx1-ubyte");
        std::printf("wrote %d train and %d test samples to %s\n", n_train, n_test,
                    out_dir.c_str());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
