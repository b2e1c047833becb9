#ifndef UNICAD_PROTO_HPP
#define UNICAD_PROTO_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unicad/common.hpp"
#include "unicad/feature_cache.hpp"

// Prototype layer: density-peak prototype selection, Cauchy similarity,
// support-weighted class posteriors, and nearest-prototype labeling.

namespace unicad {

// 1 / (1 + ||x-center||^2 / var_norm), in (0,1]
inline double cauchy_similarity(const std::vector<float>& x, const std::vector<float>& center,
                                double var_norm) {
    if (var_norm <= 0.0) throw DomainError("similarity variance must be positive");
    if (x.size() != center.size()) throw DimensionError("similarity vector size mismatch");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(center[i]);
        d2 += d * d;
    }
    return 1.0 / (1.0 + d2 / var_norm);
}

struct Prototype {
    std::vector<float> vector;
    int class_id = 0;
    long long support = 1;
    bool from_new_class = false;
    double local_var = 1.0;  // variance used for the association score
};

struct ProtoConfig {
    double gamma = 0.5;  // acceptance radius = gamma * mean pairwise distance
    double local_var_floor_scale = 1e-6;

    void validate() const {
        if (gamma <= 0.0) throw DomainError("gamma must be positive");
        if (local_var_floor_scale <= 0.0)
            throw DomainError("local variance floor must be positive");
    }
};

struct SimilarityResult {
    double lambda = 0.0;
    int nearest_prototype = -1;
    int label = -1;
    std::vector<double> posterior;
};

struct PrototypeBank {
    std::vector<Prototype> prototypes;
    std::vector<float> global_mean;
    double global_var_norm = 1.0;
    int trained_classes = 0;
    int next_new_class = 0;
    double gamma = 0.5;

    int feature_dim() const { return static_cast<int>(global_mean.size()); }
    int total() const { return static_cast<int>(prototypes.size()); }
    int num_class_slots() const { return std::max(trained_classes, next_new_class); }

    std::vector<long long> per_class_counts() const {
        std::vector<long long> counts(num_class_slots(), 0);
        for (const auto& p : prototypes) ++counts[p.class_id];
        return counts;
    }

    void save(const std::string& stem) const;
    static PrototypeBank load(const std::string& stem);
};

namespace detail {

inline double sq_dist(const float* a, const float* b, int dim) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

}  // namespace detail

// Per class: rank samples by empirical density (sum of Cauchy similarities to
// the rest of the class), then greedily accept density peaks whose distance to
// every accepted peak exceeds gamma times the class mean pairwise distance.
inline PrototypeBank find_prototypes(const FeatureCache& fc, const ProtoConfig& cfg = {}) {
    cfg.validate();
    const int n = fc.count();
    const int dim = fc.feature_dim;
    if (n == 0) throw DomainError("cannot build prototypes from an empty cache");

    int classes = 0;
    for (int lab : fc.labels) {
        if (lab < 0) throw DomainError("negative class label");
        classes = std::max(classes, lab + 1);
    }
    std::vector<std::vector<int>> members(classes);
    for (int i = 0; i < n; ++i) members[fc.labels[i]].push_back(i);
    for (int j = 0; j < classes; ++j)
        if (members[j].empty())
            throw DomainError("class " + std::to_string(j) + " has no training samples");

    PrototypeBank bank;
    bank.trained_classes = classes;
    bank.next_new_class = classes;
    bank.gamma = cfg.gamma;

    // global mean and total variance (mean squared distance to the mean)
    std::vector<double> mean_acc(dim, 0.0);
    for (int i = 0; i < n; ++i) {
        const float* row = fc.row(i);
        for (int d = 0; d < dim; ++d) mean_acc[d] += row[d];
    }
    bank.global_mean.resize(dim);
    for (int d = 0; d < dim; ++d)
        bank.global_mean[d] = static_cast<float>(mean_acc[d] / n);
    double gvar = 0.0;
    for (int i = 0; i < n; ++i)
        gvar += detail::sq_dist(fc.row(i), bank.global_mean.data(), dim);
    bank.global_var_norm = std::max(gvar / n, 1e-12);

    for (int j = 0; j < classes; ++j) {
        const auto& idx = members[j];
        const int nc = static_cast<int>(idx.size());

        std::vector<double> cmean(dim, 0.0);
        for (int i : idx)
            for (int d = 0; d < dim; ++d) cmean[d] += fc.row(i)[d];
        for (auto& v : cmean) v /= nc;
        std::vector<float> cmean_f(cmean.begin(), cmean.end());
        double cvar = 0.0;
        for (int i : idx) cvar += detail::sq_dist(fc.row(i), cmean_f.data(), dim);
        cvar = std::max(cvar / nc, 1e-12 * std::max(1.0, bank.global_var_norm));

        // pairwise distances feed both the density and the acceptance radius
        std::vector<double> density(nc, 0.0);
        double pair_dist_sum = 0.0;
        for (int a = 0; a < nc; ++a) {
            density[a] += 1.0;  // self term
            for (int b = a + 1; b < nc; ++b) {
                const double d2 = detail::sq_dist(fc.row(idx[a]), fc.row(idx[b]), dim);
                const double s = 1.0 / (1.0 + d2 / cvar);
                density[a] += s;
                density[b] += s;
                pair_dist_sum += std::sqrt(d2);
            }
        }
        const double mean_pair_dist =
            nc > 1 ? pair_dist_sum / (static_cast<double>(nc) * (nc - 1) / 2.0) : 0.0;
        const double radius = cfg.gamma * mean_pair_dist;

        std::vector<int> order(nc);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return density[a] > density[b]; });

        std::vector<int> accepted;
        for (int o : order) {
            bool far_enough = true;
            for (int a : accepted) {
                const double d =
                    std::sqrt(detail::sq_dist(fc.row(idx[o]), fc.row(idx[a]), dim));
                if (!(d > radius)) {
                    far_enough = false;
                    break;
                }
            }
            if (far_enough) accepted.push_back(o);
        }

        // associate every class sample to its nearest accepted peak
        std::vector<long long> support(accepted.size(), 0);
        std::vector<double> sqdist_sum(accepted.size(), 0.0);
        for (int a = 0; a < nc; ++a) {
            int best = 0;
            double best_d2 = detail::sq_dist(fc.row(idx[a]), fc.row(idx[accepted[0]]), dim);
            for (std::size_t k = 1; k < accepted.size(); ++k) {
                const double d2 =
                    detail::sq_dist(fc.row(idx[a]), fc.row(idx[accepted[k]]), dim);
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = static_cast<int>(k);
                }
            }
            ++support[best];
            sqdist_sum[best] += best_d2;
        }

        for (std::size_t k = 0; k < accepted.size(); ++k) {
            Prototype p;
            const float* row = fc.row(idx[accepted[k]]);
            p.vector.assign(row, row + dim);
            p.class_id = j;
            p.support = support[k];
            p.from_new_class = false;
            p.local_var =
                std::max(sqdist_sum[k] / support[k],
                         cfg.local_var_floor_scale * bank.global_var_norm);
            bank.prototypes.push_back(std::move(p));
        }
    }
    return bank;
}

// Support-weighted mixture of Cauchy similarities, normalized over classes.
// All prototypes share the bank's global variance here so that supports, not
// per-prototype spreads, set the relative class weights.
inline std::vector<double> class_posterior(const std::vector<float>& x,
                                           const PrototypeBank& bank) {
    if (bank.prototypes.empty()) throw DomainError("empty prototype bank");
    std::vector<double> score(bank.num_class_slots(), 0.0);
    double total = 0.0;
    for (const auto& p : bank.prototypes) {
        const double s = static_cast<double>(p.support) *
                         cauchy_similarity(x, p.vector, bank.global_var_norm);
        score[p.class_id] += s;
        total += s;
    }
    for (auto& v : score) v /= total;
    return score;
}

// Nearest prototype by squared Euclidean distance; ties break to the lowest
// prototype id. The returned lambda uses the winner's local variance.
inline std::pair<int, double> associate(const std::vector<float>& x,
                                        const PrototypeBank& bank) {
    if (bank.prototypes.empty()) throw DomainError("empty prototype bank");
    int best = 0;
    double best_d2 = detail::sq_dist(x.data(), bank.prototypes[0].vector.data(),
                                     bank.feature_dim());
    for (int i = 1; i < bank.total(); ++i) {
        const double d2 = detail::sq_dist(x.data(), bank.prototypes[i].vector.data(),
                                          bank.feature_dim());
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    const double lambda = 1.0 / (1.0 + best_d2 / bank.prototypes[best].local_var);
    return {best, lambda};
}

inline SimilarityResult classify(const std::vector<float>& x, const PrototypeBank& bank) {
    SimilarityResult r;
    const auto [id, lambda] = associate(x, bank);
    r.nearest_prototype = id;
    r.lambda = lambda;
    r.label = bank.prototypes[id].class_id;
    r.posterior = class_posterior(x, bank);
    return r;
}

// --- persistence ------------------------------------------------------------
// <stem>.f32 holds float32 rows: global mean first, then one row per
// prototype. <stem>.json carries everything else.

inline void PrototypeBank::save(const std::string& stem) const {
    {
        std::ofstream os(stem + ".f32", std::ios::binary);
        if (!os) throw FormatError("cannot open " + stem + ".f32 for writing");
        os.write(reinterpret_cast<const char*>(global_mean.data()),
                 static_cast<std::streamsize>(global_mean.size() * sizeof(float)));
        for (const auto& p : prototypes)
            os.write(reinterpret_cast<const char*>(p.vector.data()),
                     static_cast<std::streamsize>(p.vector.size() * sizeof(float)));
        if (!os) throw FormatError("failed writing " + stem + ".f32");
    }
    nlohmann::json j;
    j["feature_dim"] = feature_dim();
    j["count"] = total();
    j["gamma"] = gamma;
    j["global_var_norm"] = global_var_norm;
    j["trained_classes"] = trained_classes;
    j["next_new_class"] = next_new_class;
    auto& arr = j["prototypes"] = nlohmann::json::array();
    for (const auto& p : prototypes)
        arr.push_back({{"class_id", p.class_id},
                       {"support", p.support},
                       {"origin", p.from_new_class ? "new_class" : "trained"},
                       {"local_var", p.local_var}});
    std::ofstream os(stem + ".json");
    if (!os) throw FormatError("cannot open " + stem + ".json for writing");
    os << j.dump(2) << "\n";
}

inline PrototypeBank PrototypeBank::load(const std::string& stem) {
    std::ifstream js(stem + ".json");
    if (!js) throw FormatError("cannot open " + stem + ".json");
    nlohmann::json j;
    try {
        js >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(stem + ".json is not valid JSON: " + e.what());
    }
    PrototypeBank bank;
    const int dim = j.at("feature_dim").get<int>();
    const int count = j.at("count").get<int>();
    bank.gamma = j.at("gamma").get<double>();
    bank.global_var_norm = j.at("global_var_norm").get<double>();
    bank.trained_classes = j.at("trained_classes").get<int>();
    bank.next_new_class = j.at("next_new_class").get<int>();
    if (dim <= 0 || count <= 0) throw FormatError("bank sidecar has empty geometry");
    const auto& arr = j.at("prototypes");
    if (static_cast<int>(arr.size()) != count)
        throw FormatError("bank sidecar count disagrees with prototype list");

    const auto path = stem + ".f32";
    const auto want = static_cast<std::uintmax_t>(count + 1) * dim * sizeof(float);
    std::error_code ec;
    const auto have = std::filesystem::file_size(path, ec);
    if (ec) throw FormatError("cannot stat " + path);
    if (have != want)
        throw FormatError(path + " holds " + std::to_string(have) +
                          " bytes, sidecar implies " + std::to_string(want));
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open " + path);
    bank.global_mean.resize(dim);
    is.read(reinterpret_cast<char*>(bank.global_mean.data()),
            static_cast<std::streamsize>(dim * sizeof(float)));
    for (int i = 0; i < count; ++i) {
        Prototype p;
        p.vector.resize(dim);
        is.read(reinterpret_cast<char*>(p.vector.data()),
                static_cast<std::streamsize>(dim * sizeof(float)));
        const auto& e = arr[i];
        p.class_id = e.at("class_id").get<int>();
        p.support = e.at("support").get<long long>();
        p.from_new_class = e.at("origin").get<std::string>() == "new_class";
        p.local_var = e.at("local_var").get<double>();
        if (p.support < 1) throw FormatError("prototype support below 1 in sidecar");
        bank.prototypes.push_back(std::move(p));
    }
    if (!is) throw FormatError("failed reading " + path);
    return bank;
}

}  // namespace unicad

#endif
