#ifndef UNICAD_ORACLE_HPP
#define UNICAD_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "unicad/common.hpp"
#include "unicad/image.hpp"

namespace unicad {

// Query surface the rest of the system uses to talk to a classifier. The
// framework never touches model weights directly: it asks for logits,
// penultimate-layer features, and gradients with respect to input pixels.
class ModelOracle {
public:
    virtual ~ModelOracle() = default;

    virtual std::string name() const = 0;
    virtual int feature_dim() const = 0;
    virtual int num_classes() const = 0;

    virtual std::vector<float> logits(const ImageTensor& x) = 0;
    virtual std::vector<float> features(const ImageTensor& x) = 0;

    // d(cross-entropy(logits(x), label)) / d(pixels)
    virtual ImageTensor loss_gradient(const ImageTensor& x, int label) = 0;

    // v^T d(logits)/d(pixels) and v^T d(features)/d(pixels)
    virtual ImageTensor logit_vjp(const ImageTensor& x, const std::vector<float>& v) = 0;
    virtual ImageTensor feature_vjp(const ImageTensor& x, const std::vector<float>& v) = 0;

    // batched feature extraction; out has room for n * feature_dim floats
    virtual void features_batch(const ImageTensor* imgs, int n, float* out) {
        for (int i = 0; i < n; ++i) {
            const auto f = features(imgs[i]);
            std::copy(f.begin(), f.end(), out + static_cast<std::size_t>(i) * feature_dim());
        }
    }

    std::vector<double> probabilities(const ImageTensor& x) {
        const auto z = logits(x);
        double zmax = z[0];
        for (float v : z) zmax = std::max(zmax, static_cast<double>(v));
        std::vector<double> p(z.size());
        double denom = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            p[i] = std::exp(static_cast<double>(z[i]) - zmax);
            denom += p[i];
        }
        for (auto& v : p) v /= denom;
        return p;
    }

    // argmax of logits; ties resolve to the lowest class id
    int predict(const ImageTensor& x) {
        const auto z = logits(x);
        int best = 0;
        for (int c = 1; c < static_cast<int>(z.size()); ++c)
            if (z[c] > z[best]) best = c;
        return best;
    }

    double loss(const ImageTensor& x, int label) {
        if (label < 0 || label >= num_classes()) throw DomainError("label out of range");
        const auto z = logits(x);
        double zmax = z[0];
        for (float v : z) zmax = std::max(zmax, static_cast<double>(v));
        double lse = 0.0;
        for (float v : z) lse += std::exp(static_cast<double>(v) - zmax);
        return zmax + std::log(lse) - static_cast<double>(z[label]);
    }
};

// Toy provider with closed-form behaviour: logits = W x + b over flattened
// pixels, features = F x. Used by attack and loss tests that need analytic
// ground truth.
class LinearOracle final : public ModelOracle {
public:
    LinearOracle(int classes, int feat_dim, int channels, int height, int width,
                 std::vector<double> W, std::vector<double> b, std::vector<double> F)
        : classes_(classes), feat_dim_(feat_dim), c_(channels), h_(height), w_(width),
          W_(std::move(W)), b_(std::move(b)), F_(std::move(F)) {
        const std::size_t d = dim();
        if (W_.size() != static_cast<std::size_t>(classes_) * d ||
            b_.size() != static_cast<std::size_t>(classes_) ||
            F_.size() != static_cast<std::size_t>(feat_dim_) * d)
            throw DimensionError("linear oracle weight shapes do not match image shape");
    }

    static LinearOracle random(int classes, int feat_dim, int channels, int height,
                               int width, std::uint32_t seed) {
        auto rng = make_rng(seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        const std::size_t d =
            static_cast<std::size_t>(channels) * height * width;
        std::vector<double> W(classes * d), b(classes), F(feat_dim * d);
        for (auto& v : W) v = dist(rng);
        for (auto& v : b) v = dist(rng);
        for (auto& v : F) v = dist(rng);
        return LinearOracle(classes, feat_dim, channels, height, width, std::move(W),
                            std::move(b), std::move(F));
    }

    std::string name() const override { return "linear-toy"; }
    int feature_dim() const override { return feat_dim_; }
    int num_classes() const override { return classes_; }

    std::vector<float> logits(const ImageTensor& x) override {
        check(x);
        std::vector<float> z(classes_);
        for (int k = 0; k < classes_; ++k) {
            double acc = b_[k];
            const double* row = W_.data() + static_cast<std::size_t>(k) * dim();
            for (std::size_t i = 0; i < dim(); ++i) acc += row[i] * x.pixels[i];
            z[k] = static_cast<float>(acc);
        }
        return z;
    }

    std::vector<float> features(const ImageTensor& x) override {
        check(x);
        std::vector<float> f(feat_dim_);
        for (int k = 0; k < feat_dim_; ++k) {
            double acc = 0.0;
            const double* row = F_.data() + static_cast<std::size_t>(k) * dim();
            for (std::size_t i = 0; i < dim(); ++i) acc += row[i] * x.pixels[i];
            f[k] = static_cast<float>(acc);
        }
        return f;
    }

    ImageTensor loss_gradient(const ImageTensor& x, int label) override {
        check(x);
        if (label < 0 || label >= classes_) throw DomainError("label out of range");
        const auto p = probabilities(x);
        ImageTensor g(c_, h_, w_);
        for (int k = 0; k < classes_; ++k) {
            const double coef = p[k] - (k == label ? 1.0 : 0.0);
            const double* row = W_.data() + static_cast<std::size_t>(k) * dim();
            for (std::size_t i = 0; i < dim(); ++i)
                g.pixels[i] += static_cast<float>(coef * row[i]);
        }
        return g;
    }

    ImageTensor logit_vjp(const ImageTensor& x, const std::vector<float>& v) override {
        check(x);
        if (v.size() != static_cast<std::size_t>(classes_))
            throw DimensionError("logit vjp vector size mismatch");
        ImageTensor g(c_, h_, w_);
        for (int k = 0; k < classes_; ++k) {
            const double* row = W_.data() + static_cast<std::size_t>(k) * dim();
            for (std::size_t i = 0; i < dim(); ++i)
                g.pixels[i] += static_cast<float>(static_cast<double>(v[k]) * row[i]);
        }
        return g;
    }

    ImageTensor feature_vjp(const ImageTensor& x, const std::vector<float>& v) override {
        check(x);
        if (v.size() != static_cast<std::size_t>(feat_dim_))
            throw DimensionError("feature vjp vector size mismatch");
        ImageTensor g(c_, h_, w_);
        for (int k = 0; k < feat_dim_; ++k) {
            const double* row = F_.data() + static_cast<std::size_t>(k) * dim();
            for (std::size_t i = 0; i < dim(); ++i)
                g.pixels[i] += static_cast<float>(static_cast<double>(v[k]) * row[i]);
        }
        return g;
    }

    const std::vector<double>& weight() const { return W_; }
    const std::vector<double>& bias() const { return b_; }

private:
    std::size_t dim() const { return static_cast<std::size_t>(c_) * h_ * w_; }
    void check(const ImageTensor& x) const {
        if (x.channels != c_ || x.height != h_ || x.width != w_)
            throw DimensionError("linear oracle image shape mismatch");
    }

    int classes_, feat_dim_, c_, h_, w_;
    std::vector<double> W_, b_, F_;
};

}  // namespace unicad

#endif
