#ifndef UNICAD_SMALL_CNN_HPP
#define UNICAD_SMALL_CNN_HPP

#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "unicad/dataset.hpp"
#include "unicad/nn.hpp"
#include "unicad/oracle.hpp"

// Desk-scale convolutional backbone for 32x32x3 inputs. Three conv/pool
// stages followed by a feature layer; the penultimate activations (post-ReLU)
// are the feature vector the similarity engine consumes.

namespace unicad {

template <class T>
nn::Tensor<T> to_batch(const ImageTensor* imgs, int n) {
    if (n <= 0) throw DomainError("empty image batch");
    nn::Tensor<T> t(n, imgs[0].channels, imgs[0].height, imgs[0].width);
    for (int s = 0; s < n; ++s) {
        if (!imgs[s].same_shape(imgs[0])) throw DimensionError("ragged image batch");
        T* dst = t.sample(s);
        for (std::size_t i = 0; i < imgs[s].pixels.size(); ++i)
            dst[i] = static_cast<T>(imgs[s].pixels[i]);
    }
    return t;
}

template <class T>
ImageTensor from_sample(const nn::Tensor<T>& t, int s) {
    ImageTensor img(t.c, t.h, t.w);
    const T* src = t.sample(s);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        img.pixels[i] = static_cast<float>(src[i]);
    return img;
}

template <class T>
class SmallCnn {
public:
    struct Config {
        int c1 = 16, c2 = 32, c3 = 64;
        int feat = 64;
        int classes = 10;
    };

    struct TrainConfig {
        int epochs = 10;
        int batch = 64;
        double lr = 1e-3;
        std::uint32_t seed = 1;
    };

    struct TrainStats {
        std::vector<double> epoch_loss;
        std::vector<double> epoch_accuracy;
    };

    SmallCnn() : SmallCnn(Config{}, 0) {}
    SmallCnn(Config cfg, std::uint32_t seed) : cfg_(cfg) {
        auto rng = make_rng(seed);
        conv1_ = nn::Conv2d<T>(3, cfg.c1, 3, 1, 1, rng);
        conv2_ = nn::Conv2d<T>(cfg.c1, cfg.c2, 3, 1, 1, rng);
        conv3_ = nn::Conv2d<T>(cfg.c2, cfg.c3, 3, 1, 1, rng);
        fc1_ = nn::Linear<T>(cfg.c3 * 4 * 4, cfg.feat, rng);
        fc2_ = nn::Linear<T>(cfg.feat, cfg.classes, rng);
    }

    const Config& config() const { return cfg_; }

    nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Tensor<T>* features = nullptr) {
        if (x.h != 32 || x.w != 32) throw DimensionError("backbone expects 32x32 input");
        nn::Tensor<T> t = p1_.forward(r1_.forward(conv1_.forward(x)));
        t = p2_.forward(r2_.forward(conv2_.forward(t)));
        t = p3_.forward(r3_.forward(conv3_.forward(t)));
        feat_ = rf_.forward(fc1_.forward(t));
        if (features) *features = feat_;
        return fc2_.forward(feat_);
    }

    // gradient of mean cross-entropy over the batch w.r.t. input pixels
    nn::Tensor<T> input_gradient(const nn::Tensor<T>& x, const std::vector<int>& labels,
                                 T* loss_out = nullptr) {
        nn::Tensor<T> logits = forward(x);
        nn::Tensor<T> dlogits;
        const T l = nn::softmax_cross_entropy(logits, labels, &dlogits);
        if (loss_out) *loss_out = l;
        return backward_from_logits(dlogits);
    }

    // call forward(x) first; dfeat has the feature tensor's shape
    nn::Tensor<T> feature_vjp_cached(const nn::Tensor<T>& dfeat) {
        return backward_from_features(rf_.backward(dfeat));
    }

    nn::Tensor<T> logit_vjp_cached(const nn::Tensor<T>& dlogits) {
        return backward_from_logits(dlogits);
    }

    TrainStats train(const LabeledDataset& ds, const TrainConfig& tc) {
        if (ds.images.empty()) throw DomainError("empty training set");
        auto opt = make_adam(static_cast<T>(tc.lr));
        auto rng = make_rng(tc.seed);
        std::vector<int> order(ds.images.size());
        std::iota(order.begin(), order.end(), 0);
        TrainStats stats;
        for (int e = 0; e < tc.epochs; ++e) {
            std::shuffle(order.begin(), order.end(), rng);
            double loss_sum = 0.0;
            long correct = 0;
            for (std::size_t beg = 0; beg < order.size(); beg += tc.batch) {
                const int nb = static_cast<int>(
                    std::min<std::size_t>(tc.batch, order.size() - beg));
                std::vector<ImageTensor> imgs(nb);
                std::vector<int> labels(nb);
                for (int i = 0; i < nb; ++i) {
                    imgs[i] = ds.images[order[beg + i]];
                    labels[i] = ds.labels[order[beg + i]];
                }
                nn::Tensor<T> x = to_batch<T>(imgs.data(), nb);
                nn::Tensor<T> logits = forward(x);
                nn::Tensor<T> dlogits;
                const T l = nn::softmax_cross_entropy(logits, labels, &dlogits);
                loss_sum += static_cast<double>(l) * nb;
                for (int i = 0; i < nb; ++i) {
                    const T* z = logits.sample(i);
                    int best = 0;
                    for (int c = 1; c < cfg_.classes; ++c)
                        if (z[c] > z[best]) best = c;
                    if (best == labels[i]) ++correct;
                }
                opt.zero_grad();
                backward_from_logits(dlogits);
                opt.step();
            }
            stats.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
            stats.epoch_accuracy.push_back(100.0 * correct /
                                           static_cast<double>(order.size()));
        }
        return stats;
    }

    std::vector<nn::ParamRef<T>> params() {
        std::vector<nn::ParamRef<T>> ps;
        conv1_.params(ps);
        conv2_.params(ps);
        conv3_.params(ps);
        fc1_.params(ps);
        fc2_.params(ps);
        return ps;
    }

    void save(const std::string& path) {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw FormatError("cannot open " + path + " for writing");
        os.write(kMagic, 4);
        const std::int32_t meta[6] = {1, cfg_.c1, cfg_.c2, cfg_.c3, cfg_.feat,
                                      cfg_.classes};
        os.write(reinterpret_cast<const char*>(meta), sizeof(meta));
        for (auto& p : params()) nn::write_vec(os, *p.value);
        if (!os) throw FormatError("failed writing " + path);
    }

    static SmallCnn load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw FormatError("cannot open " + path);
        char magic[4];
        is.read(magic, 4);
        if (!is || std::string(magic, 4) != kMagic)
            throw FormatError(path + " is not a backbone parameter file");
        std::int32_t meta[6];
        is.read(reinterpret_cast<char*>(meta), sizeof(meta));
        if (!is || meta[0] != 1) throw FormatError("unsupported backbone file version");
        Config cfg;
        cfg.c1 = meta[1];
        cfg.c2 = meta[2];
        cfg.c3 = meta[3];
        cfg.feat = meta[4];
        cfg.classes = meta[5];
        SmallCnn net(cfg, 0);
        for (auto& p : net.params()) nn::read_vec(is, *p.value);
        return net;
    }

    // copy weights across scalar types, e.g. to run a double-precision check
    template <class U>
    void copy_params_from(SmallCnn<U>& other) {
        auto dst = params();
        auto src = other.params();
        if (dst.size() != src.size()) throw DimensionError("parameter list mismatch");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (dst[i].value->size() != src[i].value->size())
                throw DimensionError("parameter vector mismatch");
            for (std::size_t j = 0; j < dst[i].value->size(); ++j)
                (*dst[i].value)[j] = static_cast<T>((*src[i].value)[j]);
        }
    }

private:
    static constexpr const char* kMagic = "UCNN";

    nn::Adam<T> make_adam(T lr) { return nn::Adam<T>(params(), lr); }

    nn::Tensor<T> backward_from_logits(const nn::Tensor<T>& dlogits) {
        return backward_from_features(rf_.backward(fc2_.backward(dlogits)));
    }

    nn::Tensor<T> backward_from_features(const nn::Tensor<T>& dfc1_out) {
        nn::Tensor<T> d = conv3_.backward(r3_.backward(p3_.backward(fc1_.backward(dfc1_out))));
        d = conv2_.backward(r2_.backward(p2_.backward(d)));
        return conv1_.backward(r1_.backward(p1_.backward(d)));
    }

    Config cfg_;
    nn::Conv2d<T> conv1_, conv2_, conv3_;
    nn::ReLU<T> r1_, r2_, r3_, rf_;
    nn::MaxPool2x2<T> p1_, p2_, p3_;
    nn::Linear<T> fc1_, fc2_;
    nn::Tensor<T> feat_;
};

// ModelOracle adapter over the float instantiation.
class SmallCnnOracle final : public ModelOracle {
public:
    explicit SmallCnnOracle(SmallCnn<float> net) : net_(std::move(net)) {}

    static SmallCnnOracle load(const std::string& path) {
        return SmallCnnOracle(SmallCnn<float>::load(path));
    }

    std::string name() const override { return "small"; }
    int feature_dim() const override { return net_.config().feat; }
    int num_classes() const override { return net_.config().classes; }

    std::vector<float> logits(const ImageTensor& x) override {
        nn::Tensor<float> z = net_.forward(to_batch<float>(&x, 1));
        return {z.v.begin(), z.v.end()};
    }

    std::vector<float> features(const ImageTensor& x) override {
        nn::Tensor<float> f;
        net_.forward(to_batch<float>(&x, 1), &f);
        return {f.v.begin(), f.v.end()};
    }

    ImageTensor loss_gradient(const ImageTensor& x, int label) override {
        if (label < 0 || label >= num_classes()) throw DomainError("label out of range");
        nn::Tensor<float> g = net_.input_gradient(to_batch<float>(&x, 1), {label});
        return from_sample(g, 0);
    }

    ImageTensor logit_vjp(const ImageTensor& x, const std::vector<float>& v) override {
        if (v.size() != static_cast<std::size_t>(num_classes()))
            throw DimensionError("logit vjp vector size mismatch");
        net_.forward(to_batch<float>(&x, 1));
        nn::Tensor<float> dl(1, num_classes(), 1, 1);
        dl.v.assign(v.begin(), v.end());
        return from_sample(net_.logit_vjp_cached(dl), 0);
    }

    ImageTensor feature_vjp(const ImageTensor& x, const std::vector<float>& v) override {
        if (v.size() != static_cast<std::size_t>(feature_dim()))
            throw DimensionError("feature vjp vector size mismatch");
        net_.forward(to_batch<float>(&x, 1));
        nn::Tensor<float> df(1, feature_dim(), 1, 1);
        df.v.assign(v.begin(), v.end());
        return from_sample(net_.feature_vjp_cached(df), 0);
    }

    void features_batch(const ImageTensor* imgs, int n, float* out) override {
        const int chunk = 64;
        for (int beg = 0; beg < n; beg += chunk) {
            const int nb = std::min(chunk, n - beg);
            nn::Tensor<float> f;
            net_.forward(to_batch<float>(imgs + beg, nb), &f);
            std::copy(f.v.begin(), f.v.end(),
                      out + static_cast<std::size_t>(beg) * feature_dim());
        }
    }

    SmallCnn<float>& net() { return net_; }

private:
    SmallCnn<float> net_;
};

}  // namespace unicad

#endif
