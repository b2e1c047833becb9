#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "unicad/dae.hpp"

using namespace unicad;
using nn::Tensor;

namespace {

DaeConfig tiny_config() {
    DaeConfig cfg;
    cfg.widths = {2, 3, 4};
    cfg.res_blocks = 1;
    cfg.epochs = 1;
    cfg.batch = 4;
    cfg.train_eps = {0.1};
    cfg.seed = 3;
    return cfg;
}

ImageTensor random_image(int c, int h, int w, Rng& rng) {
    ImageTensor img(c, h, w);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (auto& p : img.pixels) p = dist(rng);
    return img;
}

LabeledDataset random_dataset(int n, int h, int w, Rng& rng) {
    LabeledDataset ds;
    ds.num_classes = 2;
    for (int i = 0; i < n; ++i) {
        ds.images.push_back(random_image(3, h, w, rng));
        ds.labels.push_back(i % 2);
    }
    return ds;
}

void check_close(double analytic, double fd, double tol = 1e-6) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(fd)});
    REQUIRE(std::abs(analytic - fd) <= tol * scale);
}

}  // namespace

TEST_CASE("autoencoder construction is seed deterministic") {
    const auto cfg = tiny_config();
    Dae<float> a(cfg), b(cfg);
    auto pa = a.params(), pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(*pa[i].value == *pb[i].value);

    DaeConfig other = cfg;
    other.seed = 4;
    Dae<float> c(other);
    auto pc = c.params();
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size() && !any_diff; ++i)
        any_diff = *pa[i].value != *pc[i].value;
    CHECK(any_diff);
}

TEST_CASE("denoise output stays in the unit range for arbitrary inputs") {
    Dae<float> net(tiny_config());
    auto rng = make_rng(41);

    std::vector<ImageTensor> probes;
    probes.push_back(ImageTensor(3, 8, 8, 0.0f));  // all zeros
    probes.push_back(ImageTensor(3, 8, 8, 1.0f));
    for (int i = 0; i < 4; ++i) probes.push_back(random_image(3, 8, 8, rng));

    for (const auto& p : probes) {
        const auto y = net.denoise(p);
        REQUIRE(y.channels == 3);
        REQUIRE(y.height == 8);
        REQUIRE(y.width == 8);
        for (float v : y.pixels) {
            REQUIRE(v >= 0.0f);
            REQUIRE(v <= 1.0f);
        }
    }
}

TEST_CASE("autoencoder rejects unusable shapes") {
    Dae<float> net(tiny_config());
    CHECK_THROWS_AS(net.denoise(ImageTensor(1, 8, 8, 0.5f)), DimensionError);
    CHECK_THROWS_AS(net.denoise(ImageTensor(3, 12, 8, 0.5f)), DimensionError);
    CHECK_THROWS_AS(net.denoise(ImageTensor(3, 8, 4, 0.5f)), DimensionError);
    CHECK_NOTHROW(net.denoise(ImageTensor(3, 16, 8, 0.5f)));
}

TEST_CASE("config validation rejects bad settings") {
    DaeConfig cfg = tiny_config();
    cfg.widths = {2, 3};
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = tiny_config();
    cfg.widths = {2, 0, 4};
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = tiny_config();
    cfg.res_blocks = -1;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = tiny_config();
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = tiny_config();
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = tiny_config();
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = tiny_config();
    cfg.train_eps = {-0.1};
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("full network parameter and input gradients match finite differences") {
    DaeConfig cfg = tiny_config();
    Dae<double> net(cfg);
    auto rng = make_rng(42);

    Tensor<double> x(2, 3, 8, 8);
    Tensor<double> target(2, 3, 8, 8);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (auto& v : x.v) v = dist(rng);
    for (auto& v : target.v) v = dist(rng);

    auto params = net.params();
    auto buffers = net.buffers();
    std::vector<std::vector<double>> snap;
    for (auto* b : buffers) snap.push_back(*b);
    auto restore = [&] {
        for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i] = snap[i];
    };

    // L = sum (y - t)^2 over the batch output, train-mode forward
    auto loss = [&] {
        Tensor<double> y = net.forward(x, true);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double d = y.v[i] - target.v[i];
            acc += d * d;
        }
        restore();
        return acc;
    };

    for (auto& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.0);
    Tensor<double> y = net.forward(x, true);
    Tensor<double> dy(y.n, y.c, y.h, y.w);
    for (std::size_t i = 0; i < y.size(); ++i) dy.v[i] = 2.0 * (y.v[i] - target.v[i]);
    Tensor<double> dx = net.backward(dy);
    restore();

    const double h = 1e-5;
    for (auto& p : params) {
        const std::size_t coords[3] = {0, p.value->size() / 2, p.value->size() - 1};
        for (std::size_t c : coords) {
            double& slot = (*p.value)[c];
            const double orig = slot;
            slot = orig + h;
            const double fp = loss();
            slot = orig - h;
            const double fm = loss();
            slot = orig;
            check_close((*p.grad)[c], (fp - fm) / (2.0 * h));
        }
    }

    for (std::size_t c = 0; c < x.size(); c += 37) {
        const double orig = x.v[c];
        x.v[c] = orig + h;
        const double fp = loss();
        x.v[c] = orig - h;
        const double fm = loss();
        x.v[c] = orig;
        check_close(dx.v[c], (fp - fm) / (2.0 * h));
    }
}

TEST_CASE("training lowers the combined loss on a tiny set") {
    auto rng = make_rng(43);
    const auto ds = random_dataset(16, 8, 8, rng);
    auto oracle = LinearOracle::random(2, 4, 3, 8, 8, 7);

    DaeConfig cfg;
    cfg.widths = {4, 6, 8};
    cfg.res_blocks = 1;
    cfg.weights = {1.0, 0.5, 0.0};
    cfg.epochs = 6;
    cfg.lr = 2e-3;
    cfg.batch = 8;
    cfg.train_eps = {0.1};
    cfg.seed = 9;

    Dae<float> net(cfg);
    const auto log = net.train(ds, oracle);
    REQUIRE(log.size() == 6);
    for (const auto& row : log) {
        REQUIRE(row.attacked.size() == 1);
        CHECK(row.combined ==
              Catch::Approx(row.clean + row.attacked[0]).margin(1e-9));
        REQUIRE(std::isfinite(row.combined));
    }
    CHECK(log.back().combined < log.front().combined);
}

TEST_CASE("no attack branch and mse-only weights reduce to a plain autoencoder") {
    auto rng = make_rng(44);
    const auto ds = random_dataset(8, 8, 8, rng);
    auto oracle = LinearOracle::random(2, 4, 3, 8, 8, 8);

    DaeConfig cfg;
    cfg.widths = {3, 4, 5};
    cfg.weights = {1.0, 0.0, 0.0};
    cfg.epochs = 2;
    cfg.batch = 4;
    cfg.train_eps = {};
    cfg.seed = 10;

    Dae<float> net(cfg);
    const auto log = net.train(ds, oracle);
    for (const auto& row : log) {
        CHECK(row.attacked.empty());
        CHECK(row.combined == row.clean);
    }
}

TEST_CASE("empty training set is rejected") {
    Dae<float> net(tiny_config());
    auto oracle = LinearOracle::random(2, 4, 3, 8, 8, 7);
    LabeledDataset empty;
    empty.num_classes = 2;
    CHECK_THROWS_AS(net.train(empty, oracle), DomainError);
}

TEST_CASE("serialization round trip preserves denoise outputs bit-exactly") {
    auto rng = make_rng(45);
    const auto ds = random_dataset(8, 8, 8, rng);
    auto oracle = LinearOracle::random(2, 4, 3, 8, 8, 11);

    DaeConfig cfg = tiny_config();
    cfg.weights = {1.0, 0.5, 0.0};
    Dae<float> net(cfg);
    net.train(ds, oracle);  // move parameters and batch-norm buffers off init

    const auto path =
        (std::filesystem::temp_directory_path() / "unicad_dae_rt.bin").string();
    net.save(path);
    auto loaded = Dae<float>::load(path);

    const auto probe = random_image(3, 8, 8, rng);
    const auto a = net.denoise(probe);
    const auto b = loaded.denoise(probe);
    REQUIRE(a.pixels == b.pixels);

    REQUIRE(std::filesystem::exists(path + ".json"));

    std::ofstream bad(path, std::ios::binary);
    bad.write("NOPE", 4);
    bad.close();
    CHECK_THROWS_AS(Dae<float>::load(path), FormatError);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
    CHECK_THROWS_AS(Dae<float>::load(path), FormatError);
}

TEST_CASE("batched and single denoise agree") {
    auto rng = make_rng(46);
    Dae<float> net(tiny_config());
    std::vector<ImageTensor> imgs;
    for (int i = 0; i < 5; ++i) imgs.push_back(random_image(3, 8, 8, rng));

    const auto batched = net.denoise_batch(imgs, 3);
    REQUIRE(batched.size() == imgs.size());
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        const auto single = net.denoise(imgs[i]);
        for (std::size_t j = 0; j < single.pixels.size(); ++j)
            REQUIRE(batched[i].pixels[j] ==
                    Catch::Approx(single.pixels[j]).margin(1e-4).epsilon(1e-5));
    }
}
