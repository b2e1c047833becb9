#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "unicad/losses.hpp"
#include "unicad/oracle.hpp"

using namespace unicad;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

ImageTensor random_image(int c, int h, int w, Rng& rng) {
    ImageTensor img(c, h, w);
    std::uniform_real_distribution<float> dist(0.05f, 0.95f);
    for (auto& p : img.pixels) p = dist(rng);
    return img;
}

void check_close(double analytic, double fd, double tol = 1e-6) {
    const double scale = std::max({1.0, std::abs(analytic), std::abs(fd)});
    REQUIRE(std::abs(analytic - fd) <= tol * scale);
}

// Oracle that refuses all feature work, to prove the feature term is skipped
// when its weight is zero.
class NoFeatureOracle final : public ModelOracle {
public:
    std::string name() const override { return "no-feature"; }
    int feature_dim() const override { return 1; }
    int num_classes() const override { return 2; }
    std::vector<float> logits(const ImageTensor&) override { return {0.0f, 0.0f}; }
    std::vector<float> features(const ImageTensor&) override {
        throw Error("features must not be requested");
    }
    ImageTensor loss_gradient(const ImageTensor& x, int) override { return x; }
    ImageTensor logit_vjp(const ImageTensor& x, const std::vector<float>&) override {
        return x;
    }
    ImageTensor feature_vjp(const ImageTensor&, const std::vector<float>&) override {
        throw Error("feature vjp must not be requested");
    }
};

}  // namespace

TEST_CASE("mse matches hand values") {
    CHECK(mse_loss({0.3, 0.7}, {0.3, 0.7}) == 0.0);
    CHECK(mse_loss({0.0, 1.0}, {1.0, 0.0}) == Catch::Approx(1.0).margin(1e-15));
    CHECK(mse_loss({0.5}, {0.0}) == Catch::Approx(0.25).margin(1e-15));
    CHECK_THROWS_AS(mse_loss({0.1}, {0.1, 0.2}), DimensionError);
    CHECK_THROWS_AS(mse_loss({}, {}), DimensionError);
}

TEST_CASE("ssim loss is zero for identical images and matches the constant-image form") {
    auto rng = make_rng(11);
    const auto x = random_vec(48, rng);
    CHECK(ssim_loss(x, x) == Catch::Approx(0.0).margin(1e-12));

    // constant images a and b have zero variance, so only the luminance term
    // survives: SSIM = (2ab + C1) / (a^2 + b^2 + C1)
    const double a = 0.8, b = 0.3;
    const std::vector<double> xa(30, a), xb(30, b);
    const double expect = 1.0 - (2.0 * a * b + kSsimC1) / (a * a + b * b + kSsimC1);
    CHECK(ssim_loss(xa, xb) == Catch::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(ssim_loss({0.1}, {0.1, 0.2}), DimensionError);
}

TEST_CASE("ssim loss stays within [0, 2] on random pairs") {
    auto rng = make_rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = random_vec(27, rng);
        const auto y = random_vec(27, rng);
        const double l = ssim_loss(x, y);
        REQUIRE(l >= 0.0);
        REQUIRE(l <= 2.0);
    }
    // anti-correlated pair drives the loss near its upper end
    CHECK(ssim_loss({0.0, 1.0}, {1.0, 0.0}) > 1.9);
}

TEST_CASE("feature loss matches the cosine hand values") {
    CHECK(feature_loss({1.0, 0.0}, {2.0, 0.0}) == Catch::Approx(0.0).margin(1e-12));
    CHECK(feature_loss({1.0, 0.0}, {0.0, 3.0}) == Catch::Approx(1.0).margin(1e-12));
    CHECK(feature_loss({1.0, 1.0}, {-2.0, -2.0}) == Catch::Approx(2.0).margin(1e-12));
    CHECK_THROWS_AS(feature_loss({0.0, 0.0}, {1.0, 0.0}), DomainError);
    CHECK_THROWS_AS(feature_loss({1.0, 0.0}, {0.0, 0.0}), DomainError);
    CHECK_THROWS_AS(feature_loss({1.0}, {1.0, 2.0}), DimensionError);
}

TEST_CASE("loss gradients agree with central differences") {
    auto rng = make_rng(13);
    const auto x = random_vec(36, rng);
    auto y = random_vec(36, rng);

    std::vector<double> gm, gs;
    mse_loss(x, y, &gm);
    ssim_loss(x, y, &gs);
    const double h = 1e-6;
    for (std::size_t i = 0; i < y.size(); i += 5) {
        const double orig = y[i];
        y[i] = orig + h;
        const double mp = mse_loss(x, y), sp = ssim_loss(x, y);
        y[i] = orig - h;
        const double mm = mse_loss(x, y), sm = ssim_loss(x, y);
        y[i] = orig;
        check_close(gm[i], (mp - mm) / (2.0 * h));
        check_close(gs[i], (sp - sm) / (2.0 * h));
    }

    const auto f = random_vec(16, rng, -1.0, 1.0);
    auto fp = random_vec(16, rng, -1.0, 1.0);
    std::vector<double> gf;
    feature_loss(f, fp, &gf);
    for (std::size_t i = 0; i < fp.size(); ++i) {
        const double orig = fp[i];
        fp[i] = orig + h;
        const double lp = feature_loss(f, fp);
        fp[i] = orig - h;
        const double lm = feature_loss(f, fp);
        fp[i] = orig;
        check_close(gf[i], (lp - lm) / (2.0 * h));
    }
}

TEST_CASE("combined loss is the exact weighted sum of its parts") {
    auto rng = make_rng(14);
    auto oracle = LinearOracle::random(4, 8, 3, 4, 4, 77);
    const auto x = random_image(3, 4, 4, rng);
    const auto xp = random_image(3, 4, 4, rng);

    const LossWeights w{1.0, 0.5, 0.1};
    const auto b = combined_loss(x, xp, oracle, w);
    CHECK(b.combined ==
          Catch::Approx(w.mse * b.mse + w.ssim * b.ssim + w.feat * b.feat).margin(1e-9));
    CHECK(b.mse > 0.0);
    CHECK(b.ssim > 0.0);

    const LossWeights heavier{2.0, 3.0, 4.0};
    const auto b2 = combined_loss(x, xp, oracle, heavier);
    CHECK(b2.mse == Catch::Approx(b.mse).margin(1e-15));
    CHECK(b2.combined ==
          Catch::Approx(2.0 * b2.mse + 3.0 * b2.ssim + 4.0 * b2.feat).margin(1e-9));
}

TEST_CASE("zero feature weight skips the oracle entirely") {
    auto rng = make_rng(15);
    NoFeatureOracle oracle;
    const auto x = random_image(3, 4, 4, rng);
    const auto xp = random_image(3, 4, 4, rng);
    const LossWeights w{1.0, 0.0, 0.0};

    const auto b = combined_loss(x, xp, oracle, w);
    CHECK(b.combined == Catch::Approx(b.mse).margin(1e-15));
    CHECK(b.feat == 0.0);

    ImageTensor g;
    const auto bg = combined_loss_grad(x, xp, oracle, w, g);
    CHECK(bg.combined == Catch::Approx(b.combined).margin(1e-15));
    std::vector<double> gm;
    const auto xd = std::vector<double>(x.pixels.begin(), x.pixels.end());
    const auto xpd = std::vector<double>(xp.pixels.begin(), xp.pixels.end());
    mse_loss(xd, xpd, &gm);
    for (std::size_t i = 0; i < gm.size(); ++i)
        CHECK(static_cast<double>(g.pixels[i]) == Catch::Approx(gm[i]).margin(1e-7));
}

TEST_CASE("weight validation rejects bad configurations") {
    CHECK_THROWS_AS((LossWeights{-1.0, 0.5, 0.1}.validate()), DomainError);
    CHECK_THROWS_AS((LossWeights{0.0, 0.0, 0.0}.validate()), DomainError);
    CHECK_NOTHROW(LossWeights{}.validate());
}

TEST_CASE("combined gradient agrees with central differences through the oracle") {
    auto rng = make_rng(16);
    auto oracle = LinearOracle::random(4, 8, 3, 3, 3, 99);
    const auto x = random_image(3, 3, 3, rng);
    auto xp = random_image(3, 3, 3, rng);
    const LossWeights w{1.0, 0.5, 0.1};

    ImageTensor g;
    combined_loss_grad(x, xp, oracle, w, g);

    const float h = 1e-3f;
    for (std::size_t i = 0; i < xp.pixels.size(); ++i) {
        const float orig = xp.pixels[i];
        xp.pixels[i] = orig + h;
        const double fp = combined_loss(x, xp, oracle, w).combined;
        const double hi = xp.pixels[i];
        xp.pixels[i] = orig - h;
        const double fm = combined_loss(x, xp, oracle, w).combined;
        const double lo = xp.pixels[i];
        xp.pixels[i] = orig;
        const double fd = (fp - fm) / (hi - lo);
        const double analytic = static_cast<double>(g.pixels[i]);
        const double scale = std::max({1e-2, std::abs(fd), std::abs(analytic)});
        REQUIRE(std::abs(analytic - fd) <= 1e-3 * scale);
    }
}

TEST_CASE("combined loss rejects shape mismatches") {
    auto rng = make_rng(17);
    auto oracle = LinearOracle::random(4, 8, 3, 4, 4, 5);
    const auto x = random_image(3, 4, 4, rng);
    const auto bad = random_image(3, 4, 5, rng);
    const LossWeights w;
    CHECK_THROWS_AS(combined_loss(x, bad, oracle, w), DimensionError);
    ImageTensor g;
    CHECK_THROWS_AS(combined_loss_grad(x, bad, oracle, w, g), DimensionError);
}
