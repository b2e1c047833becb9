#ifndef UNICAD_LOSSES_HPP
#define UNICAD_LOSSES_HPP

#include <cmath>
#include <vector>

#include "unicad/common.hpp"
#include "unicad/image.hpp"
#include "unicad/oracle.hpp"

// Reconstruction losses for the denoiser: pixel MSE, global-statistics SSIM,
// and cosine feature loss, plus their weighted combination. The math runs in
// double; gradients are taken with respect to the second (reconstruction)
// argument.

namespace unicad {

inline constexpr double kSsimC1 = 0.01 * 0.01;  // (K1*L)^2 for dynamic range 1
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct LossWeights {
    double mse = 1.0;
    double ssim = 0.5;
    double feat = 0.1;

    void validate() const {
        if (mse < 0.0 || ssim < 0.0 || feat < 0.0)
            throw DomainError("loss weights must be non-negative");
        if (mse == 0.0 && ssim == 0.0 && feat == 0.0)
            throw DomainError("at least one loss weight must be positive");
    }
};

struct LossBreakdown {
    double mse = 0.0;
    double ssim = 0.0;
    double feat = 0.0;
    double combined = 0.0;
};

inline double mse_loss(const std::vector<double>& y, const std::vector<double>& yp,
                       std::vector<double>* grad = nullptr) {
    if (y.size() != yp.size() || y.empty())
        throw DimensionError("mse operands must share a non-zero pixel count");
    const double m = static_cast<double>(y.size());
    double acc = 0.0;
    if (grad) grad->assign(y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - yp[i];
        acc += d * d;
        if (grad) (*grad)[i] = 2.0 * (yp[i] - y[i]) / m;
    }
    return acc / m;
}

// 1 - SSIM(x, xp) with image-global statistics and dynamic range 1.
inline double ssim_loss(const std::vector<double>& x, const std::vector<double>& xp,
                        std::vector<double>* grad = nullptr) {
    if (x.size() != xp.size() || x.empty())
        throw DimensionError("ssim operands must share a non-zero pixel count");
    const double m = static_cast<double>(x.size());
    double mux = 0.0, muy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mux += x[i];
        muy += xp[i];
    }
    mux /= m;
    muy /= m;
    double vx = 0.0, vy = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        vx += (x[i] - mux) * (x[i] - mux);
        vy += (xp[i] - muy) * (xp[i] - muy);
        cov += (x[i] - mux) * (xp[i] - muy);
    }
    vx /= m;
    vy /= m;
    cov /= m;

    const double a1 = 2.0 * mux * muy + kSsimC1;
    const double a2 = 2.0 * cov + kSsimC2;
    const double b1 = mux * mux + muy * muy + kSsimC1;
    const double b2 = vx + vy + kSsimC2;
    const double ssim = (a1 * a2) / (b1 * b2);

    if (grad) {
        grad->assign(x.size(), 0.0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double da1 = 2.0 * mux / m;
            const double da2 = 2.0 * (x[i] - mux) / m;
            const double db1 = 2.0 * muy / m;
            const double db2 = 2.0 * (xp[i] - muy) / m;
            const double dssim =
                ((da1 * a2 + a1 * da2) * b1 * b2 - a1 * a2 * (db1 * b2 + b1 * db2)) /
                (b1 * b2 * b1 * b2);
            (*grad)[i] = -dssim;
        }
    }
    return 1.0 - ssim;
}

// 1 - cosine(f, fp), gradient with respect to fp.
inline double feature_loss(const std::vector<double>& f, const std::vector<double>& fp,
                           std::vector<double>* grad = nullptr) {
    if (f.size() != fp.size() || f.empty())
        throw DimensionError("feature operands must share a non-zero length");
    double dot = 0.0, nf = 0.0, np = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        dot += f[i] * fp[i];
        nf += f[i] * f[i];
        np += fp[i] * fp[i];
    }
    nf = std::sqrt(nf);
    np = std::sqrt(np);
    if (nf < 1e-12 || np < 1e-12)
        throw DomainError("cosine is undefined for a zero feature vector");
    const double cosine = dot / (nf * np);
    if (grad) {
        grad->assign(f.size(), 0.0);
        for (std::size_t i = 0; i < f.size(); ++i)
            (*grad)[i] = -(f[i] / (nf * np) - dot * fp[i] / (nf * np * np * np));
    }
    return 1.0 - cosine;
}

namespace detail {

inline std::vector<double> widen(const std::vector<float>& v) {
    return std::vector<double>(v.begin(), v.end());
}

}  // namespace detail

inline LossBreakdown combined_loss(const ImageTensor& x, const ImageTensor& xp,
                                   ModelOracle& oracle, const LossWeights& w) {
    w.validate();
    if (!x.same_shape(xp)) throw DimensionError("combined loss image shape mismatch");
    const auto xd = detail::widen(x.pixels);
    const auto xpd = detail::widen(xp.pixels);
    LossBreakdown out;
    out.mse = mse_loss(xd, xpd);
    out.ssim = ssim_loss(xd, xpd);
    if (w.feat > 0.0)
        out.feat = feature_loss(detail::widen(oracle.features(x)),
                                detail::widen(oracle.features(xp)));
    out.combined = w.mse * out.mse + w.ssim * out.ssim + w.feat * out.feat;
    return out;
}

// Breakdown plus d(combined)/d(xp pixels); the feature term pulls its input
// gradient through the oracle.
inline LossBreakdown combined_loss_grad(const ImageTensor& x, const ImageTensor& xp,
                                        ModelOracle& oracle, const LossWeights& w,
                                        ImageTensor& grad_out) {
    w.validate();
    if (!x.same_shape(xp)) throw DimensionError("combined loss image shape mismatch");
    const auto xd = detail::widen(x.pixels);
    const auto xpd = detail::widen(xp.pixels);

    LossBreakdown out;
    std::vector<double> gm, gs;
    out.mse = mse_loss(xd, xpd, &gm);
    out.ssim = ssim_loss(xd, xpd, &gs);

    grad_out = ImageTensor(x.channels, x.height, x.width);
    std::vector<double> total(x.pixels.size(), 0.0);
    for (std::size_t i = 0; i < total.size(); ++i)
        total[i] = w.mse * gm[i] + w.ssim * gs[i];

    if (w.feat > 0.0) {
        std::vector<double> gf;
        out.feat = feature_loss(detail::widen(oracle.features(x)),
                                detail::widen(oracle.features(xp)), &gf);
        std::vector<float> gff(gf.begin(), gf.end());
        const ImageTensor gimg = oracle.feature_vjp(xp, gff);
        for (std::size_t i = 0; i < total.size(); ++i)
            total[i] += w.feat * static_cast<double>(gimg.pixels[i]);
    }
    for (std::size_t i = 0; i < total.size(); ++i)
        grad_out.pixels[i] = static_cast<float>(total[i]);

    out.combined = w.mse * out.mse + w.ssim * out.ssim + w.feat * out.feat;
    return out;
}

}  // namespace unicad

#endif
