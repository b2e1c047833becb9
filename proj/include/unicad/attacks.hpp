#ifndef UNICAD_ATTACKS_HPP
#define UNICAD_ATTACKS_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "unicad/common.hpp"
#include "unicad/dataset.hpp"
#include "unicad/image.hpp"
#include "unicad/oracle.hpp"

// Gradient-based evasion attacks against a ModelOracle: fast gradient sign,
// projected gradient descent (Linf and L2), and the Carlini-Wagner L2 attack.

namespace unicad {

enum class AttackKind { FGSM, PGD, CW };
enum class NormKind { Linf, L2 };

inline const char* attack_kind_name(AttackKind k) {
    switch (k) {
        case AttackKind::FGSM: return "fgsm";
        case AttackKind::PGD: return "pgd";
        case AttackKind::CW: return "cw";
    }
    return "unknown";
}

inline const char* norm_name(NormKind n) {
    return n == NormKind::Linf ? "linf" : "l2";
}

struct AttackSpec {
    AttackKind kind = AttackKind::FGSM;
    double epsilon = 0.03;
    NormKind norm = NormKind::Linf;
    int steps = 40;
    double step_size = 0.0;  // 0 means epsilon / 10
    double c = -1.0;         // negative means binary search over [1e-3, 10]
    double kappa = 0.0;
    int cw_iters = 100;
    int cw_search_steps = 5;
    double cw_lr = 1e-2;
    std::uint32_t seed = 0;
    bool random_start = true;  // PGD only
    bool descend = false;      // flip the FGSM step to the descent direction

    void validate() const {
        if (epsilon < 0.0) throw DomainError("epsilon must be non-negative");
        if (steps < 1) throw DomainError("steps must be at least 1");
        if (cw_iters < 1 || cw_search_steps < 1)
            throw DomainError("iteration counts must be at least 1");
    }

    nlohmann::json to_json() const {
        return {{"kind", attack_kind_name(kind)}, {"epsilon", epsilon},
                {"norm", norm_name(norm)},        {"steps", steps},
                {"step_size", step_size},         {"c", c},
                {"kappa", kappa},                 {"cw_iters", cw_iters},
                {"cw_search_steps", cw_search_steps}, {"cw_lr", cw_lr},
                {"seed", seed},                   {"random_start", random_start},
                {"descend", descend}};
    }

    static AttackSpec from_json(const nlohmann::json& j) {
        AttackSpec s;
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "fgsm") s.kind = AttackKind::FGSM;
        else if (kind == "pgd") s.kind = AttackKind::PGD;
        else if (kind == "cw") s.kind = AttackKind::CW;
        else throw FormatError("unknown attack kind '" + kind + "'");
        const auto norm = j.at("norm").get<std::string>();
        if (norm == "linf") s.norm = NormKind::Linf;
        else if (norm == "l2") s.norm = NormKind::L2;
        else throw FormatError("unknown norm '" + norm + "'");
        s.epsilon = j.value("epsilon", s.epsilon);
        s.steps = j.value("steps", s.steps);
        s.step_size = j.value("step_size", s.step_size);
        s.c = j.value("c", s.c);
        s.kappa = j.value("kappa", s.kappa);
        s.cw_iters = j.value("cw_iters", s.cw_iters);
        s.cw_search_steps = j.value("cw_search_steps", s.cw_search_steps);
        s.cw_lr = j.value("cw_lr", s.cw_lr);
        s.seed = j.value("seed", s.seed);
        s.random_start = j.value("random_start", s.random_start);
        s.descend = j.value("descend", s.descend);
        return s;
    }
};

namespace detail {

// Tightest float whose exact distance from origin stays within eps; the
// rounded sum origin + float(eps) can land half an ulp outside the ball.
inline float ball_upper(float origin, double eps) {
    float hi = static_cast<float>(static_cast<double>(origin) + eps);
    while (static_cast<double>(hi) - origin > eps)
        hi = std::nextafter(hi, -std::numeric_limits<float>::infinity());
    return hi;
}

inline float ball_lower(float origin, double eps) {
    float lo = static_cast<float>(static_cast<double>(origin) - eps);
    while (static_cast<double>(origin) - lo > eps)
        lo = std::nextafter(lo, std::numeric_limits<float>::infinity());
    return lo;
}

inline void project_ball(ImageTensor& x, const ImageTensor& origin, double eps,
                         NormKind norm) {
    if (norm == NormKind::Linf) {
        for (std::size_t i = 0; i < x.pixels.size(); ++i)
            x.pixels[i] = std::clamp(x.pixels[i], ball_lower(origin.pixels[i], eps),
                                     ball_upper(origin.pixels[i], eps));
    } else {
        std::vector<double> diff(x.pixels.size());
        double n2 = 0.0;
        for (std::size_t i = 0; i < x.pixels.size(); ++i) {
            diff[i] = static_cast<double>(x.pixels[i]) - origin.pixels[i];
            n2 += diff[i] * diff[i];
        }
        const double n = std::sqrt(n2);
        if (n <= eps || n == 0.0) return;
        double shrink = 1.0;
        for (int attempt = 0; attempt < 8; ++attempt) {
            const double scale = eps / n * shrink;
            double measured = 0.0;
            for (std::size_t i = 0; i < x.pixels.size(); ++i) {
                x.pixels[i] = origin.pixels[i] + static_cast<float>(scale * diff[i]);
                const double d = static_cast<double>(x.pixels[i]) - origin.pixels[i];
                measured += d * d;
            }
            if (std::sqrt(measured) <= eps) break;
            shrink *= 1.0 - 1e-7;
        }
    }
}

}  // namespace detail

// x + eps * sign(grad J), clipped to [0,1]; `descend` flips the step.
inline ImageTensor fgsm(ModelOracle& oracle, const ImageTensor& x, int label, double eps,
                        bool descend = false) {
    if (eps < 0.0) throw DomainError("epsilon must be non-negative");
    const ImageTensor g = oracle.loss_gradient(x, label);
    ImageTensor out = x;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
        const float gv = descend ? -g.pixels[i] : g.pixels[i];
        if (gv > 0.0f) out.pixels[i] = detail::ball_upper(x.pixels[i], eps);
        else if (gv < 0.0f) out.pixels[i] = detail::ball_lower(x.pixels[i], eps);
    }
    return clamp01(std::move(out));
}

// Iterated projected ascent on the classification loss. Each step moves along
// the signed (Linf) or L2-normalized gradient, then projects back into the
// epsilon ball and the unit box.
inline ImageTensor pgd(ModelOracle& oracle, const ImageTensor& x, int label,
                       const AttackSpec& spec) {
    spec.validate();
    const double alpha = spec.step_size > 0.0 ? spec.step_size : spec.epsilon / 10.0;
    ImageTensor cur = x;

    if (spec.random_start && spec.epsilon > 0.0) {
        auto rng = make_rng(spec.seed);
        if (spec.norm == NormKind::Linf) {
            std::uniform_real_distribution<double> u(-spec.epsilon, spec.epsilon);
            for (auto& p : cur.pixels) p += static_cast<float>(u(rng));
        } else {
            std::normal_distribution<double> gauss(0.0, 1.0);
            std::vector<double> dir(cur.pixels.size());
            double n2 = 0.0;
            for (auto& d : dir) {
                d = gauss(rng);
                n2 += d * d;
            }
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const double radius =
                spec.epsilon * std::pow(u(rng), 1.0 / static_cast<double>(dir.size()));
            const double scale = n2 > 0.0 ? radius / std::sqrt(n2) : 0.0;
            for (std::size_t i = 0; i < dir.size(); ++i)
                cur.pixels[i] += static_cast<float>(scale * dir[i]);
        }
        detail::project_ball(cur, x, spec.epsilon, spec.norm);
        cur = clamp01(std::move(cur));
    }

    for (int t = 0; t < spec.steps; ++t) {
        const ImageTensor g = oracle.loss_gradient(cur, label);
        if (spec.norm == NormKind::Linf) {
            for (std::size_t i = 0; i < cur.pixels.size(); ++i) {
                if (g.pixels[i] > 0.0f) cur.pixels[i] += static_cast<float>(alpha);
                else if (g.pixels[i] < 0.0f) cur.pixels[i] -= static_cast<float>(alpha);
            }
        } else {
            double n2 = 0.0;
            for (float v : g.pixels) n2 += static_cast<double>(v) * v;
            const double n = std::sqrt(n2);
            if (n == 0.0) break;
            for (std::size_t i = 0; i < cur.pixels.size(); ++i)
                cur.pixels[i] += static_cast<float>(alpha * g.pixels[i] / n);
        }
        detail::project_ball(cur, x, spec.epsilon, spec.norm);
        cur = clamp01(std::move(cur));
    }
    return cur;
}

struct CwResult {
    ImageTensor image;
    bool success = false;
    double l2 = 0.0;
};

namespace detail {

// margin surrogate: positive while the true class still wins
inline double cw_margin(const std::vector<float>& z, int label, double kappa, int* runner) {
    int other = -1;
    for (int c = 0; c < static_cast<int>(z.size()); ++c) {
        if (c == label) continue;
        if (other < 0 || z[c] > z[other]) other = c;
    }
    if (runner) *runner = other;
    return std::max(static_cast<double>(z[label]) - static_cast<double>(z[other]),
                    -kappa);
}

struct CwRun {
    ImageTensor image;
    bool success = false;
    double l2 = 0.0;
};

inline CwRun cw_optimize(ModelOracle& oracle, const ImageTensor& x, int label, double c,
                         const AttackSpec& spec) {
    const std::size_t m = x.pixels.size();
    // change of variables keeps x + rho inside the unit box by construction
    std::vector<double> w(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double t = std::clamp(2.0 * static_cast<double>(x.pixels[i]) - 1.0,
                                    -1.0 + 1e-6, 1.0 - 1e-6);
        w[i] = std::atanh(t);
    }
    std::vector<double> adam_m(m, 0.0), adam_v(m, 0.0);
    const double b1 = 0.9, b2 = 0.999, eps_adam = 1e-8;

    CwRun best;
    best.image = x;
    best.l2 = 0.0;
    bool have_best = false;
    ImageTensor last = x;
    double last_l2 = 0.0;

    ImageTensor cand(x.channels, x.height, x.width);
    for (int t = 1; t <= spec.cw_iters; ++t) {
        std::vector<double> tanh_w(m);
        double l2sq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            tanh_w[i] = std::tanh(w[i]);
            const double xi = (tanh_w[i] + 1.0) / 2.0;
            cand.pixels[i] = static_cast<float>(xi);
            const double d = xi - static_cast<double>(x.pixels[i]);
            l2sq += d * d;
        }
        const auto z = oracle.logits(cand);
        int runner = -1;
        const double margin = cw_margin(z, label, spec.kappa, &runner);
        if (!std::isfinite(margin) || !std::isfinite(l2sq))
            throw Error("non-finite objective during the L2 optimization");

        const bool misclassified = z[runner] > z[label];
        if (misclassified && (!have_best || l2sq < best.l2 * best.l2)) {
            best.image = cand;
            best.l2 = std::sqrt(l2sq);
            best.success = true;
            have_best = true;
        }
        last = cand;
        last_l2 = std::sqrt(l2sq);

        // d(objective)/d(cand), then through the tanh reparameterization
        ImageTensor dcand(x.channels, x.height, x.width);
        for (std::size_t i = 0; i < m; ++i)
            dcand.pixels[i] =
                static_cast<float>(2.0 * (static_cast<double>(cand.pixels[i]) -
                                          static_cast<double>(x.pixels[i])));
        if (margin > -spec.kappa && c > 0.0) {
            std::vector<float> v(z.size(), 0.0f);
            v[label] = static_cast<float>(c);
            v[runner] = static_cast<float>(-c);
            const ImageTensor gm = oracle.logit_vjp(cand, v);
            for (std::size_t i = 0; i < m; ++i) dcand.pixels[i] += gm.pixels[i];
        }

        const double bc1 = 1.0 - std::pow(b1, t);
        const double bc2 = 1.0 - std::pow(b2, t);
        for (std::size_t i = 0; i < m; ++i) {
            const double gw =
                static_cast<double>(dcand.pixels[i]) * (1.0 - tanh_w[i] * tanh_w[i]) / 2.0;
            adam_m[i] = b1 * adam_m[i] + (1.0 - b1) * gw;
            adam_v[i] = b2 * adam_v[i] + (1.0 - b2) * gw * gw;
            w[i] -= spec.cw_lr * (adam_m[i] / bc1) / (std::sqrt(adam_v[i] / bc2) + eps_adam);
        }
    }
    if (!have_best) {
        best.image = last;
        best.l2 = last_l2;
        best.success = false;
    }
    return best;
}

}  // namespace detail

// Minimizes ||rho||_2^2 + c * max(Z_y - max_{j!=y} Z_j, -kappa) over the tanh
// reparameterization. A fixed non-negative spec.c is used as given; a negative
// spec.c triggers a binary search for the smallest working trade-off.
inline CwResult carlini_wagner(ModelOracle& oracle, const ImageTensor& x, int label,
                               const AttackSpec& spec) {
    spec.validate();
    if (spec.norm != NormKind::L2)
        throw DomainError("the Carlini-Wagner attack here is L2 only");

    if (spec.c >= 0.0) {
        const auto run = detail::cw_optimize(oracle, x, label, spec.c, spec);
        return {run.image, run.success, run.l2};
    }

    double lo = 1e-3, hi = 10.0;
    detail::CwRun best;
    bool have = false;
    // first probe at the upper end decides whether the range works at all
    for (int step = 0; step < spec.cw_search_steps; ++step) {
        const double c = step == 0 ? hi : (lo + hi) / 2.0;
        const auto run = detail::cw_optimize(oracle, x, label, c, spec);
        if (run.success) {
            if (!have || run.l2 < best.l2) {
                best = run;
                have = true;
            }
            hi = c;
        } else {
            lo = c;
        }
        if (step == 0 && !run.success) {
            // even the strongest tested trade-off failed; keep its iterate
            best = run;
            break;
        }
    }
    if (!have) {
        const auto run = detail::cw_optimize(oracle, x, label, hi, spec);
        best = run;
    }
    return {best.image, best.success, best.l2};
}

// --- batch plumbing ---------------------------------------------------------

struct AdversarialBatch {
    std::vector<ImageTensor> originals;
    std::vector<ImageTensor> perturbed;
    std::vector<int> labels;
    std::vector<std::uint8_t> success;  // 1 when the oracle misclassifies
    AttackSpec spec;
};

inline AdversarialBatch attack_batch(ModelOracle& oracle, const LabeledDataset& ds,
                                     const AttackSpec& spec) {
    spec.validate();
    AdversarialBatch out;
    out.spec = spec;
    out.labels = ds.labels;
    out.originals = ds.images;
    out.perturbed.reserve(ds.images.size());
    out.success.reserve(ds.images.size());
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        AttackSpec per = spec;
        per.seed = spec.seed + static_cast<std::uint32_t>(i);
        ImageTensor adv;
        switch (spec.kind) {
            case AttackKind::FGSM:
                adv = fgsm(oracle, ds.images[i], ds.labels[i], spec.epsilon, spec.descend);
                break;
            case AttackKind::PGD:
                adv = pgd(oracle, ds.images[i], ds.labels[i], per);
                break;
            case AttackKind::CW:
                adv = carlini_wagner(oracle, ds.images[i], ds.labels[i], per).image;
                break;
        }
        out.success.push_back(oracle.predict(adv) != ds.labels[i] ? 1 : 0);
        out.perturbed.push_back(std::move(adv));
    }
    return out;
}

// Adversarial store: the perturbed set in CIFAR-10 binary layout (labels plus
// byte pixels, which quantizes each pixel to the 1/255 grid) with a JSON
// sidecar recording the spec and per-record success flags.
inline void save_adversarial(const AdversarialBatch& batch, const std::string& stem) {
    LabeledDataset ds;
    ds.images = batch.perturbed;
    ds.labels = batch.labels;
    save_cifar10(ds, stem + ".bin");
    nlohmann::json j;
    j["spec"] = batch.spec.to_json();
    j["count"] = batch.perturbed.size();
    j["success"] = std::vector<int>(batch.success.begin(), batch.success.end());
    j["quantization"] = "pixels rounded to the 1/255 grid on store";
    std::ofstream os(stem + ".json");
    if (!os) throw FormatError("cannot open " + stem + ".json for writing");
    os << j.dump(2) << "\n";
}

struct AdversarialStore {
    LabeledDataset perturbed;
    AttackSpec spec;
    std::vector<std::uint8_t> success;
};

inline AdversarialStore load_adversarial(const std::string& stem) {
    AdversarialStore out;
    out.perturbed = load_cifar10({stem + ".bin"});
    std::ifstream is(stem + ".json");
    if (!is) throw FormatError("cannot open " + stem + ".json");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(stem + ".json is not valid JSON: " + e.what());
    }
    out.spec = AttackSpec::from_json(j.at("spec"));
    const auto succ = j.at("success").get<std::vector<int>>();
    out.success.assign(succ.begin(), succ.end());
    if (out.success.size() != out.perturbed.images.size())
        throw FormatError("success mask length disagrees with the record count");
    return out;
}

}  // namespace unicad

#endif
