#ifndef UNICAD_DAE_HPP
#define UNICAD_DAE_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "unicad/attacks.hpp"
#include "unicad/common.hpp"
#include "unicad/dataset.hpp"
#include "unicad/image.hpp"
#include "unicad/losses.hpp"
#include "unicad/nn.hpp"
#include "unicad/oracle.hpp"
#include "unicad/small_cnn.hpp"

// Denoising autoencoder: three encoder stages of conv/batch-norm/relu/residual
// blocks with 2x downsampling, a mirrored transposed-convolution decoder, and
// a sigmoid output. Trained on clean images plus FGSM-attacked copies, both
// reconstructing the clean original.

namespace unicad {

struct DaeConfig {
    std::vector<int> widths{32, 64, 128};
    int res_blocks = 1;
    LossWeights weights{};
    int epochs = 20;
    double lr = 1e-3;
    int batch = 128;
    std::vector<double> train_eps{0.3, 0.03};
    std::uint32_t seed = 0;

    void validate() const {
        if (widths.size() != 3) throw DomainError("exactly three encoder widths required");
        for (int w : widths)
            if (w < 1) throw DomainError("encoder widths must be positive");
        if (res_blocks < 0) throw DomainError("residual block count must be non-negative");
        weights.validate();
        if (epochs < 1) throw DomainError("epochs must be at least 1");
        if (lr <= 0.0) throw DomainError("learning rate must be positive");
        if (batch < 1) throw DomainError("batch size must be at least 1");
        for (double e : train_eps)
            if (e < 0.0) throw DomainError("training epsilon must be non-negative");
    }

    nlohmann::json to_json() const {
        return {{"widths", widths},
                {"res_blocks", res_blocks},
                {"weights", {{"mse", weights.mse}, {"ssim", weights.ssim}, {"feat", weights.feat}}},
                {"epochs", epochs},
                {"lr", lr},
                {"batch", batch},
                {"train_eps", train_eps},
                {"seed", seed}};
    }
};

struct DaeEpoch {
    double combined = 0.0;             // clean + sum of attacked branch means
    double clean = 0.0;                // mean clean-branch loss
    std::vector<double> attacked;      // mean loss per training epsilon
};

template <class T>
class Dae {
public:
    explicit Dae(const DaeConfig& cfg, int in_channels = 3)
        : cfg_(cfg), in_ch_(in_channels) {
        cfg_.validate();
        auto rng = make_rng(cfg_.seed);
        const auto& w = cfg_.widths;
        int cin = in_channels;
        for (int s = 0; s < 3; ++s) {
            enc_conv_[s] = nn::Conv2d<T>(cin, w[s], 3, 1, 1, rng);
            enc_bn_[s] = nn::BatchNorm2d<T>(w[s]);
            for (int r = 0; r < cfg_.res_blocks; ++r) enc_res_[s].emplace_back(w[s], rng);
            cin = w[s];
        }
        const std::array<int, 3> from{w[2], w[1], w[0]};
        const std::array<int, 3> to{w[1], w[0], w[0]};
        for (int s = 0; s < 3; ++s) {
            dec_t_[s] = nn::ConvTranspose2x2<T>(from[s], to[s], rng);
            dec_bn_[s] = nn::BatchNorm2d<T>(to[s]);
            for (int r = 0; r < cfg_.res_blocks; ++r) dec_res_[s].emplace_back(to[s], rng);
        }
        final_ = nn::Conv2d<T>(w[0], in_channels, 3, 1, 1, rng);
    }

    const DaeConfig& config() const { return cfg_; }
    int in_channels() const { return in_ch_; }

    nn::Tensor<T> forward(const nn::Tensor<T>& x, bool train) {
        if (x.c != in_ch_)
            throw DimensionError("autoencoder expects " + std::to_string(in_ch_) +
                                 " channels, got " + std::to_string(x.c));
        if (x.h < 8 || x.w < 8 || x.h % 8 != 0 || x.w % 8 != 0)
            throw DimensionError("image sides must be positive multiples of 8 for the "
                                 "three 2x downsampling stages");
        nn::Tensor<T> h = x;
        for (int s = 0; s < 3; ++s) {
            h = enc_relu_[s].forward(enc_bn_[s].forward(enc_conv_[s].forward(h), train));
            for (auto& r : enc_res_[s]) h = r.forward(h, train);
            h = enc_pool_[s].forward(h);
        }
        for (int s = 0; s < 3; ++s) {
            h = dec_relu_[s].forward(dec_bn_[s].forward(dec_t_[s].forward(h), train));
            for (auto& r : dec_res_[s]) h = r.forward(h, train);
        }
        return out_sig_.forward(final_.forward(h));
    }

    // valid after a train-mode forward; accumulates parameter gradients
    nn::Tensor<T> backward(const nn::Tensor<T>& dy) {
        nn::Tensor<T> d = final_.backward(out_sig_.backward(dy));
        for (int s = 2; s >= 0; --s) {
            for (auto it = dec_res_[s].rbegin(); it != dec_res_[s].rend(); ++it)
                d = it->backward(d);
            d = dec_t_[s].backward(dec_bn_[s].backward(dec_relu_[s].backward(d)));
        }
        for (int s = 2; s >= 0; --s) {
            d = enc_pool_[s].backward(d);
            for (auto it = enc_res_[s].rbegin(); it != enc_res_[s].rend(); ++it)
                d = it->backward(d);
            d = enc_conv_[s].backward(enc_bn_[s].backward(enc_relu_[s].backward(d)));
        }
        return d;
    }

    std::vector<nn::ParamRef<T>> params() {
        std::vector<nn::ParamRef<T>> out;
        for (int s = 0; s < 3; ++s) {
            enc_conv_[s].params(out);
            enc_bn_[s].params(out);
            for (auto& r : enc_res_[s]) r.params(out);
        }
        for (int s = 0; s < 3; ++s) {
            dec_t_[s].params(out);
            dec_bn_[s].params(out);
            for (auto& r : dec_res_[s]) r.params(out);
        }
        final_.params(out);
        return out;
    }

    std::vector<std::vector<T>*> buffers() {
        std::vector<std::vector<T>*> out;
        for (int s = 0; s < 3; ++s) {
            enc_bn_[s].buffers(out);
            for (auto& r : enc_res_[s]) r.buffers(out);
        }
        for (int s = 0; s < 3; ++s) {
            dec_bn_[s].buffers(out);
            for (auto& r : dec_res_[s]) r.buffers(out);
        }
        return out;
    }

    ImageTensor denoise(const ImageTensor& img) {
        nn::Tensor<T> y = forward(to_batch<T>(&img, 1), false);
        return from_sample(y, 0);
    }

    std::vector<ImageTensor> denoise_batch(const std::vector<ImageTensor>& imgs,
                                           int chunk = 64) {
        std::vector<ImageTensor> out;
        out.reserve(imgs.size());
        for (std::size_t beg = 0; beg < imgs.size(); beg += chunk) {
            const int nb = static_cast<int>(
                std::min<std::size_t>(chunk, imgs.size() - beg));
            nn::Tensor<T> y = forward(to_batch<T>(imgs.data() + beg, nb), false);
            for (int i = 0; i < nb; ++i) out.push_back(from_sample(y, i));
        }
        return out;
    }

    // Batchnorm running averages finish training skewed toward the branches
    // seen last (the large-epsilon copies); re-estimate them on clean batches
    // so eval-mode normalization matches the input distribution it serves.
    void calibrate(const std::vector<ImageTensor>& imgs) {
        for (std::size_t beg = 0; beg < imgs.size();
             beg += static_cast<std::size_t>(cfg_.batch)) {
            const int nb = static_cast<int>(
                std::min<std::size_t>(cfg_.batch, imgs.size() - beg));
            forward(to_batch<T>(imgs.data() + beg, nb), true);
        }
    }

    // Eq-style objective: mean over images of the clean reconstruction loss
    // plus one loss term per training epsilon, every branch targeting the
    // clean image. FGSM copies depend only on the frozen oracle, so they are
    // generated once up front.
    std::vector<DaeEpoch> train(const LabeledDataset& ds, ModelOracle& oracle) {
        cfg_.validate();
        if (ds.size() == 0) throw DomainError("training set is empty");

        std::vector<std::vector<ImageTensor>> adv(cfg_.train_eps.size());
        for (std::size_t e = 0; e < cfg_.train_eps.size(); ++e) {
            adv[e].reserve(ds.size());
            for (std::size_t i = 0; i < ds.size(); ++i)
                adv[e].push_back(fgsm(oracle, ds.images[i], ds.labels[i], cfg_.train_eps[e]));
        }

        nn::Adam<T> opt(params(), static_cast<T>(cfg_.lr));
        auto rng = make_rng(cfg_.seed + 1);
        std::vector<std::size_t> order(ds.size());
        std::iota(order.begin(), order.end(), 0);

        std::vector<DaeEpoch> log;
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            DaeEpoch row;
            row.attacked.assign(cfg_.train_eps.size(), 0.0);

            for (std::size_t beg = 0; beg < order.size();
                 beg += static_cast<std::size_t>(cfg_.batch)) {
                const int nb = static_cast<int>(
                    std::min<std::size_t>(cfg_.batch, order.size() - beg));
                opt.zero_grad();
                for (int b = 0; b < 1 + static_cast<int>(adv.size()); ++b) {
                    const std::vector<ImageTensor>& source = b == 0 ? ds.images : adv[b - 1];
                    nn::Tensor<T> x = gather(source, order, beg, nb);
                    nn::Tensor<T> y = forward(x, true);
                    nn::Tensor<T> dy(y.n, y.c, y.h, y.w);
                    double branch_sum = 0.0;
                    for (int i = 0; i < nb; ++i) {
                        const ImageTensor& target = ds.images[order[beg + i]];
                        const ImageTensor yimg = from_sample(y, i);
                        ImageTensor gimg;
                        const auto lb =
                            combined_loss_grad(target, yimg, oracle, cfg_.weights, gimg);
                        branch_sum += lb.combined;
                        T* dst = dy.sample(i);
                        for (std::size_t j = 0; j < gimg.pixels.size(); ++j)
                            dst[j] = static_cast<T>(static_cast<double>(gimg.pixels[j]) / nb);
                    }
                    if (!std::isfinite(branch_sum))
                        throw Error("training diverged at epoch " + std::to_string(epoch + 1) +
                                    ", batch " + std::to_string(beg / cfg_.batch + 1) +
                                    ", branch " + std::to_string(b));
                    backward(dy);
                    if (b == 0) row.clean += branch_sum;
                    else row.attacked[b - 1] += branch_sum;
                }
                opt.step();
            }

            const double n = static_cast<double>(ds.size());
            row.clean /= n;
            row.combined = row.clean;
            for (auto& a : row.attacked) {
                a /= n;
                row.combined += a;
            }
            log.push_back(std::move(row));
        }
        calibrate(ds.images);
        return log;
    }

    void save(const std::string& path) {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw FormatError("cannot open " + path + " for writing");
        os.write(kMagic, 4);
        const std::int32_t meta[6] = {1, in_ch_, cfg_.widths[0], cfg_.widths[1],
                                      cfg_.widths[2], cfg_.res_blocks};
        os.write(reinterpret_cast<const char*>(meta), sizeof(meta));
        for (auto& p : params()) nn::write_vec(os, *p.value);
        for (auto* b : buffers()) nn::write_vec(os, *b);
        if (!os) throw FormatError("failed writing " + path);

        std::ofstream js(path + ".json");
        if (!js) throw FormatError("cannot open " + path + ".json for writing");
        js << cfg_.to_json().dump(2) << "\n";
    }

    static Dae load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw FormatError("cannot open " + path);
        char magic[4];
        is.read(magic, 4);
        if (!is || std::string(magic, 4) != kMagic)
            throw FormatError(path + " is not an autoencoder parameter file");
        std::int32_t meta[6];
        is.read(reinterpret_cast<char*>(meta), sizeof(meta));
        if (!is || meta[0] != 1) throw FormatError("unsupported autoencoder file version");
        DaeConfig cfg;
        cfg.widths = {meta[2], meta[3], meta[4]};
        cfg.res_blocks = meta[5];
        Dae net(cfg, meta[1]);
        for (auto& p : net.params()) nn::read_vec(is, *p.value);
        for (auto* b : net.buffers()) nn::read_vec(is, *b);
        return net;
    }

private:
    static constexpr const char* kMagic = "UDAE";

    nn::Tensor<T> gather(const std::vector<ImageTensor>& source,
                         const std::vector<std::size_t>& order, std::size_t beg, int nb) {
        const ImageTensor& first = source[order[beg]];
        nn::Tensor<T> t(nb, first.channels, first.height, first.width);
        for (int i = 0; i < nb; ++i) {
            const ImageTensor& img = source[order[beg + i]];
            if (!img.same_shape(first)) throw DimensionError("ragged training images");
            T* dst = t.sample(i);
            for (std::size_t j = 0; j < img.pixels.size(); ++j)
                dst[j] = static_cast<T>(img.pixels[j]);
        }
        return t;
    }

    DaeConfig cfg_;
    int in_ch_ = 3;
    std::array<nn::Conv2d<T>, 3> enc_conv_;
    std::array<nn::BatchNorm2d<T>, 3> enc_bn_;
    std::array<nn::ReLU<T>, 3> enc_relu_;
    std::array<std::vector<nn::ResidualBlock<T>>, 3> enc_res_;
    std::array<nn::MaxPool2x2<T>, 3> enc_pool_;
    std::array<nn::ConvTranspose2x2<T>, 3> dec_t_;
    std::array<nn::BatchNorm2d<T>, 3> dec_bn_;
    std::array<nn::ReLU<T>, 3> dec_relu_;
    std::array<std::vector<nn::ResidualBlock<T>>, 3> dec_res_;
    nn::Conv2d<T> final_;
    nn::Sigmoid<T> out_sig_;
};

}  // namespace unicad

#endif
