#ifndef UNICAD_NN_HPP
#define UNICAD_NN_HPP

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "unicad/common.hpp"

// Minimal CNN substrate used by the desk-scale backbone and the denoiser:
// im2col convolutions on Eigen GEMM, batch norm, pooling, and Adam. Scalar
// type is a template parameter so gradient checks can run in double.

namespace unicad::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using MapRM = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using CMapRM = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)) {}

    std::size_t size() const { return v.size(); }
    int per_sample() const { return c * h * w; }
    T* sample(int s) { return v.data() + static_cast<std::size_t>(s) * per_sample(); }
    const T* sample(int s) const { return v.data() + static_cast<std::size_t>(s) * per_sample(); }
    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

template <class T>
struct ParamRef {
    std::vector<T>* value;
    std::vector<T>* grad;
};

// --- layers -----------------------------------------------------------------

template <class T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int k, int stride, int pad, Rng& rng)
        : ic_(in_ch), oc_(out_ch), k_(k), stride_(stride), pad_(pad) {
        const int fan_in = ic_ * k_ * k_;
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
        w_.resize(static_cast<std::size_t>(oc_) * fan_in);
        for (auto& x : w_) x = static_cast<T>(dist(rng));
        b_.assign(oc_, T(0));
        gw_.assign(w_.size(), T(0));
        gb_.assign(b_.size(), T(0));
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.c != ic_) throw DimensionError("conv input channels mismatch");
        x_ = x;
        const int oh = out_dim(x.h), ow = out_dim(x.w);
        Tensor<T> y(x.n, oc_, oh, ow);
        const int K = ic_ * k_ * k_, L = oh * ow;
        Mat<T> col(K, L);
        CMapRM<T> wmap(w_.data(), oc_, K);
        for (int s = 0; s < x.n; ++s) {
            im2col(x.sample(s), x.h, x.w, col);
            MapRM<T> ymap(y.sample(s), oc_, L);
            ymap.noalias() = wmap * col;
            for (int o = 0; o < oc_; ++o) ymap.row(o).array() += b_[o];
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const int oh = out_dim(x_.h), ow = out_dim(x_.w);
        const int K = ic_ * k_ * k_, L = oh * ow;
        Tensor<T> dx(x_.n, ic_, x_.h, x_.w);
        Mat<T> col(K, L), dcol(K, L);
        CMapRM<T> wmap(w_.data(), oc_, K);
        MapRM<T> gwmap(gw_.data(), oc_, K);
        for (int s = 0; s < x_.n; ++s) {
            im2col(x_.sample(s), x_.h, x_.w, col);
            CMapRM<T> dymap(dy.sample(s), oc_, L);
            gwmap.noalias() += dymap * col.transpose();
            for (int o = 0; o < oc_; ++o) gb_[o] += dymap.row(o).sum();
            dcol.noalias() = wmap.transpose() * dymap;
            col2im(dcol, x_.h, x_.w, dx.sample(s));
        }
        return dx;
    }

    void params(std::vector<ParamRef<T>>& out) {
        out.push_back({&w_, &gw_});
        out.push_back({&b_, &gb_});
    }
    void buffers(std::vector<std::vector<T>*>&) {}

private:
    int out_dim(int d) const { return (d + 2 * pad_ - k_) / stride_ + 1; }

    void im2col(const T* x, int h, int w, Mat<T>& col) const {
        const int oh = out_dim(h), ow = out_dim(w);
        for (int ci = 0; ci < ic_; ++ci) {
            const T* plane = x + static_cast<std::size_t>(ci) * h * w;
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const int row = (ci * k_ + ky) * k_ + kx;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride_ + ky - pad_;
                        if (iy < 0 || iy >= h) {
                            for (int ox = 0; ox < ow; ++ox)
                                col(row, oy * ow + ox) = T(0);
                            continue;
                        }
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride_ + kx - pad_;
                            col(row, oy * ow + ox) =
                                (ix < 0 || ix >= w) ? T(0) : plane[iy * w + ix];
                        }
                    }
                }
            }
        }
    }

    void col2im(const Mat<T>& dcol, int h, int w, T* dx) const {
        const int oh = out_dim(h), ow = out_dim(w);
        for (int ci = 0; ci < ic_; ++ci) {
            T* plane = dx + static_cast<std::size_t>(ci) * h * w;
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const int row = (ci * k_ + ky) * k_ + kx;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride_ + ky - pad_;
                        if (iy < 0 || iy >= h) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride_ + kx - pad_;
                            if (ix < 0 || ix >= w) continue;
                            plane[iy * w + ix] += dcol(row, oy * ow + ox);
                        }
                    }
                }
            }
        }
    }

    int ic_ = 0, oc_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    std::vector<T> w_, b_, gw_, gb_;
    Tensor<T> x_;
};

// Transposed convolution with kernel 2, stride 2: every input pixel expands
// into a 2x2 output patch with no overlap.
template <class T>
class ConvTranspose2x2 {
public:
    ConvTranspose2x2() = default;
    ConvTranspose2x2(int in_ch, int out_ch, Rng& rng) : ic_(in_ch), oc_(out_ch) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / ic_));
        w_.resize(static_cast<std::size_t>(oc_) * 4 * ic_);
        for (auto& x : w_) x = static_cast<T>(dist(rng));
        b_.assign(oc_, T(0));
        gw_.assign(w_.size(), T(0));
        gb_.assign(b_.size(), T(0));
    }

    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.n, oc_, x.h * 2, x.w * 2);
        const int L = x.h * x.w;
        CMapRM<T> wmap(w_.data(), oc_ * 4, ic_);
        Mat<T> patch(oc_ * 4, L);
        for (int s = 0; s < x.n; ++s) {
            CMapRM<T> xmap(x.sample(s), ic_, L);
            patch.noalias() = wmap * xmap;
            scatter(patch, x.h, x.w, y.sample(s));
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(x_.n, ic_, x_.h, x_.w);
        const int L = x_.h * x_.w;
        CMapRM<T> wmap(w_.data(), oc_ * 4, ic_);
        MapRM<T> gwmap(gw_.data(), oc_ * 4, ic_);
        Mat<T> dpatch(oc_ * 4, L);
        for (int s = 0; s < x_.n; ++s) {
            gather(dy.sample(s), x_.h, x_.w, dpatch);
            CMapRM<T> xmap(x_.sample(s), ic_, L);
            gwmap.noalias() += dpatch * xmap.transpose();
            MapRM<T> dxmap(dx.sample(s), ic_, L);
            dxmap.noalias() = wmap.transpose() * dpatch;
        }
        for (int s = 0; s < dy.n; ++s)
            for (int o = 0; o < oc_; ++o) {
                const T* plane = dy.sample(s) + static_cast<std::size_t>(o) * dy.h * dy.w;
                T acc = T(0);
                for (int i = 0; i < dy.h * dy.w; ++i) acc += plane[i];
                gb_[o] += acc;
            }
        return dx;
    }

    void params(std::vector<ParamRef<T>>& out) {
        out.push_back({&w_, &gw_});
        out.push_back({&b_, &gb_});
    }
    void buffers(std::vector<std::vector<T>*>&) {}

private:
    void scatter(const Mat<T>& patch, int h, int w, T* y) const {
        const int oh = h * 2, ow = w * 2;
        for (int o = 0; o < oc_; ++o) {
            T* plane = y + static_cast<std::size_t>(o) * oh * ow;
            for (int dy_ = 0; dy_ < 2; ++dy_)
                for (int dx_ = 0; dx_ < 2; ++dx_) {
                    const int row = (o * 2 + dy_) * 2 + dx_;
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < w; ++j)
                            plane[(2 * i + dy_) * ow + (2 * j + dx_)] =
                                patch(row, i * w + j) + b_[o];
                }
        }
    }

    void gather(const T* dy, int h, int w, Mat<T>& dpatch) const {
        const int oh = h * 2, ow = w * 2;
        for (int o = 0; o < oc_; ++o) {
            const T* plane = dy + static_cast<std::size_t>(o) * oh * ow;
            for (int dy_ = 0; dy_ < 2; ++dy_)
                for (int dx_ = 0; dx_ < 2; ++dx_) {
                    const int row = (o * 2 + dy_) * 2 + dx_;
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < w; ++j)
                            dpatch(row, i * w + j) = plane[(2 * i + dy_) * ow + (2 * j + dx_)];
                }
        }
    }

    int ic_ = 0, oc_ = 0;
    std::vector<T> w_, b_, gw_, gb_;
    Tensor<T> x_;
};

template <class T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(int ch) : ch_(ch) {
        gamma_.assign(ch, T(1));
        beta_.assign(ch, T(0));
        ggamma_.assign(ch, T(0));
        gbeta_.assign(ch, T(0));
        run_mean_.assign(ch, T(0));
        run_var_.assign(ch, T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        Tensor<T> y(x.n, x.c, x.h, x.w);
        const int plane = x.h * x.w;
        const std::size_t per = static_cast<std::size_t>(x.c) * plane;
        if (train) {
            xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
            inv_std_.assign(ch_, T(0));
            const T count = static_cast<T>(x.n) * plane;
            for (int c = 0; c < ch_; ++c) {
                T mean = T(0);
                for (int s = 0; s < x.n; ++s) {
                    const T* p = x.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                    for (int i = 0; i < plane; ++i) mean += p[i];
                }
                mean /= count;
                T var = T(0);
                for (int s = 0; s < x.n; ++s) {
                    const T* p = x.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                    for (int i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
                }
                var /= count;
                const T inv = T(1) / std::sqrt(var + eps_);
                inv_std_[c] = inv;
                for (int s = 0; s < x.n; ++s) {
                    const T* p = x.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                    T* xh = xhat_.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                    T* yo = y.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                    for (int i = 0; i < plane; ++i) {
                        xh[i] = (p[i] - mean) * inv;
                        yo[i] = gamma_[c] * xh[i] + beta_[c];
                    }
                }
                run_mean_[c] = (T(1) - momentum_) * run_mean_[c] + momentum_ * mean;
                run_var_[c] = (T(1) - momentum_) * run_var_[c] + momentum_ * var;
            }
        } else {
            for (int c = 0; c < ch_; ++c) {
                const T inv = T(1) / std::sqrt(run_var_[c] + eps_);
                for (int s = 0; s < x.n; ++s) {
                    const T* p = x.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                    T* yo = y.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                    for (int i = 0; i < plane; ++i)
                        yo[i] = gamma_[c] * (p[i] - run_mean_[c]) * inv + beta_[c];
                }
            }
        }
        return y;
    }

    // valid after a train-mode forward
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.n, dy.c, dy.h, dy.w);
        const int plane = dy.h * dy.w;
        const std::size_t per = static_cast<std::size_t>(dy.c) * plane;
        const T count = static_cast<T>(dy.n) * plane;
        for (int c = 0; c < ch_; ++c) {
            T sum_dy = T(0), sum_dy_xhat = T(0);
            for (int s = 0; s < dy.n; ++s) {
                const T* d = dy.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                const T* xh = xhat_.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                for (int i = 0; i < plane; ++i) {
                    sum_dy += d[i];
                    sum_dy_xhat += d[i] * xh[i];
                }
            }
            gbeta_[c] += sum_dy;
            ggamma_[c] += sum_dy_xhat;
            const T g = gamma_[c], inv = inv_std_[c];
            for (int s = 0; s < dy.n; ++s) {
                const T* d = dy.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                const T* xh = xhat_.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                T* o = dx.v.data() + s * per + static_cast<std::size_t>(c) * plane;
                for (int i = 0; i < plane; ++i)
                    o[i] = g * inv / count * (count * d[i] - sum_dy - xh[i] * sum_dy_xhat);
            }
        }
        return dx;
    }

    void params(std::vector<ParamRef<T>>& out) {
        out.push_back({&gamma_, &ggamma_});
        out.push_back({&beta_, &gbeta_});
    }
    void buffers(std::vector<std::vector<T>*>& out) {
        out.push_back(&run_mean_);
        out.push_back(&run_var_);
    }

private:
    int ch_ = 0;
    T eps_ = T(1e-5);
    T momentum_ = T(0.1);
    std::vector<T> gamma_, beta_, ggamma_, gbeta_, run_mean_, run_var_;
    std::vector<T> inv_std_;
    Tensor<T> xhat_;
};

template <class T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        mask_.assign(x.size(), 0);
        Tensor<T> y = x;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (y.v[i] > T(0)) mask_[i] = 1;
            else y.v[i] = T(0);
        }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!mask_[i]) dx.v[i] = T(0);
        return dx;
    }

private:
    std::vector<std::uint8_t> mask_;
};

template <class T>
class Sigmoid {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        y_ = x;
        for (auto& v : y_.v) v = T(1) / (T(1) + std::exp(-v));
        return y_;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            dx.v[i] *= y_.v[i] * (T(1) - y_.v[i]);
        return dx;
    }

private:
    Tensor<T> y_;
};

template <class T>
class MaxPool2x2 {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        in_n_ = x.n; in_c_ = x.c; in_h_ = x.h; in_w_ = x.w;
        Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
        arg_.assign(y.size(), 0);
        std::size_t oi = 0;
        for (int s = 0; s < x.n; ++s)
            for (int c = 0; c < x.c; ++c) {
                const T* plane = x.sample(s) + static_cast<std::size_t>(c) * x.h * x.w;
                for (int i = 0; i < y.h; ++i)
                    for (int j = 0; j < y.w; ++j, ++oi) {
                        int best = (2 * i) * x.w + 2 * j;
                        T bv = plane[best];
                        const int cand[3] = {(2 * i) * x.w + 2 * j + 1,
                                             (2 * i + 1) * x.w + 2 * j,
                                             (2 * i + 1) * x.w + 2 * j + 1};
                        for (int idx : cand)
                            if (plane[idx] > bv) { bv = plane[idx]; best = idx; }
                        arg_[oi] = best;
                        y.v[oi] = bv;
                    }
            }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(in_n_, in_c_, in_h_, in_w_);
        std::size_t oi = 0;
        for (int s = 0; s < dy.n; ++s)
            for (int c = 0; c < dy.c; ++c) {
                T* plane = dx.sample(s) + static_cast<std::size_t>(c) * in_h_ * in_w_;
                for (int i = 0; i < dy.h * dy.w; ++i, ++oi)
                    plane[arg_[oi]] += dy.v[oi];
            }
        return dx;
    }

private:
    int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
    std::vector<int> arg_;
};

template <class T>
class Linear {
public:
    Linear() = default;
    Linear(int in, int out, Rng& rng) : in_(in), out_(out) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / in));
        w_.resize(static_cast<std::size_t>(out) * in);
        for (auto& x : w_) x = static_cast<T>(dist(rng));
        b_.assign(out, T(0));
        gw_.assign(w_.size(), T(0));
        gb_.assign(b_.size(), T(0));
    }

    // input is flattened to (n, in); output (n, out, 1, 1)
    Tensor<T> forward(const Tensor<T>& x) {
        if (x.per_sample() != in_) throw DimensionError("linear input size mismatch");
        x_ = x;
        Tensor<T> y(x.n, out_, 1, 1);
        CMapRM<T> wmap(w_.data(), out_, in_);
        CMapRM<T> xmap(x.v.data(), x.n, in_);
        MapRM<T> ymap(y.v.data(), x.n, out_);
        ymap.noalias() = xmap * wmap.transpose();
        for (int s = 0; s < x.n; ++s) ymap.row(s) += CMapRM<T>(b_.data(), 1, out_);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(x_.n, x_.c, x_.h, x_.w);
        CMapRM<T> wmap(w_.data(), out_, in_);
        MapRM<T> gwmap(gw_.data(), out_, in_);
        CMapRM<T> dy_n(dy.v.data(), dy.n, out_);
        CMapRM<T> xmap(x_.v.data(), x_.n, in_);
        gwmap.noalias() += dy_n.transpose() * xmap;
        for (int s = 0; s < dy.n; ++s)
            for (int o = 0; o < out_; ++o) gb_[o] += dy_n(s, o);
        MapRM<T> dxmap(dx.v.data(), x_.n, in_);
        dxmap.noalias() = dy_n * wmap;
        return dx;
    }

    void params(std::vector<ParamRef<T>>& out) {
        out.push_back({&w_, &gw_});
        out.push_back({&b_, &gb_});
    }
    void buffers(std::vector<std::vector<T>*>&) {}

private:
    int in_ = 0, out_ = 0;
    std::vector<T> w_, b_, gw_, gb_;
    Tensor<T> x_;
};

// conv -> bn -> relu -> conv -> bn, plus identity skip, then relu
template <class T>
class ResidualBlock {
public:
    ResidualBlock() = default;
    ResidualBlock(int ch, Rng& rng)
        : conv1_(ch, ch, 3, 1, 1, rng), bn1_(ch), conv2_(ch, ch, 3, 1, 1, rng), bn2_(ch) {}

    Tensor<T> forward(const Tensor<T>& x, bool train) {
        Tensor<T> t = relu1_.forward(bn1_.forward(conv1_.forward(x), train));
        Tensor<T> y = bn2_.forward(conv2_.forward(t), train);
        for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += x.v[i];
        return relu2_.forward(y);
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> d = relu2_.backward(dy);
        Tensor<T> dbranch = conv1_.backward(bn1_.backward(relu1_.backward(
            conv2_.backward(bn2_.backward(d)))));
        for (std::size_t i = 0; i < d.size(); ++i) dbranch.v[i] += d.v[i];
        return dbranch;
    }

    void params(std::vector<ParamRef<T>>& out) {
        conv1_.params(out);
        bn1_.params(out);
        conv2_.params(out);
        bn2_.params(out);
    }
    void buffers(std::vector<std::vector<T>*>& out) {
        bn1_.buffers(out);
        bn2_.buffers(out);
    }

private:
    Conv2d<T> conv1_;
    BatchNorm2d<T> bn1_;
    Conv2d<T> conv2_;
    BatchNorm2d<T> bn2_;
    ReLU<T> relu1_, relu2_;
};

// --- loss and optimizer -----------------------------------------------------

// Mean cross-entropy over the batch; writes d(loss)/d(logits) into dlogits.
template <class T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                        Tensor<T>* dlogits = nullptr) {
    const int n = logits.n, classes = logits.c;
    if (dlogits) *dlogits = Tensor<T>(n, classes, 1, 1);
    T total = T(0);
    for (int s = 0; s < n; ++s) {
        const T* z = logits.sample(s);
        T zmax = z[0];
        for (int c = 1; c < classes; ++c) zmax = std::max(zmax, z[c]);
        T lse = T(0);
        for (int c = 0; c < classes; ++c) lse += std::exp(z[c] - zmax);
        lse = zmax + std::log(lse);
        total += lse - z[labels[s]];
        if (dlogits) {
            T* d = dlogits->sample(s);
            for (int c = 0; c < classes; ++c)
                d[c] = std::exp(z[c] - lse) / static_cast<T>(n);
            d[labels[s]] -= T(1) / static_cast<T>(n);
        }
    }
    return total / static_cast<T>(n);
}

template <class T>
class Adam {
public:
    explicit Adam(std::vector<ParamRef<T>> params, T lr = T(1e-3))
        : params_(std::move(params)), lr_(lr) {
        for (const auto& p : params_) {
            m_.emplace_back(p.value->size(), T(0));
            v_.emplace_back(p.value->size(), T(0));
        }
    }

    void zero_grad() {
        for (auto& p : params_) std::fill(p.grad->begin(), p.grad->end(), T(0));
    }

    void step() {
        ++t_;
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& w = *params_[i].value;
            auto& g = *params_[i].grad;
            for (std::size_t j = 0; j < w.size(); ++j) {
                m_[i][j] = beta1_ * m_[i][j] + (T(1) - beta1_) * g[j];
                v_[i][j] = beta2_ * v_[i][j] + (T(1) - beta2_) * g[j] * g[j];
                w[j] -= lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
            }
        }
    }

private:
    std::vector<ParamRef<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    T lr_, beta1_ = T(0.9), beta2_ = T(0.999), eps_ = T(1e-8);
    long t_ = 0;
};

// --- serialization ----------------------------------------------------------

template <class T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
    const std::uint64_t n = v.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof(n));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void read_vec(std::istream& is, std::vector<T>& v) {
    std::uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!is) throw FormatError("truncated parameter blob");
    if (n != v.size())
        throw DimensionError("parameter vector size mismatch: file " + std::to_string(n) +
                             ", model " + std::to_string(v.size()));
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!is) throw FormatError("truncated parameter blob");
}

}  // namespace unicad::nn

#endif
