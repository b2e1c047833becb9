#ifndef UNICAD_DECISION_HPP
#define UNICAD_DECISION_HPP

#include <cmath>
#include <fstream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "unicad/common.hpp"
#include "unicad/proto.hpp"

// Global decision layer: streaming mean/deviation of the association score,
// the m-sigma suspect gate, the post-denoise attack/new-class verdict, and
// new-prototype formation.

namespace unicad {

// Welford recurrence; sigma is the population standard deviation, so a batch
// recomputation over the same history reproduces mean and sigma exactly.
struct RunningStats {
    long long i = 0;
    double mean = 0.0;
    double m2 = 0.0;

    double sigma() const { return i > 0 ? std::sqrt(m2 / static_cast<double>(i)) : 0.0; }

    void update(double lambda) {
        ++i;
        const double delta = lambda - mean;
        mean += delta / static_cast<double>(i);
        m2 += delta * (lambda - mean);
    }

    void save(const std::string& path) const {
        nlohmann::json j{{"i", i}, {"mean", mean}, {"m2", m2}};
        std::ofstream os(path);
        if (!os) throw FormatError("cannot open " + path + " for writing");
        os << j.dump(2) << "\n";
    }

    static RunningStats load(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw FormatError("cannot open " + path);
        nlohmann::json j;
        try {
            is >> j;
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(path + " is not valid JSON: " + e.what());
        }
        RunningStats s;
        s.i = j.at("i").get<long long>();
        s.mean = j.at("mean").get<double>();
        s.m2 = j.at("m2").get<double>();
        if (s.i < 0 || s.m2 < 0) throw FormatError("negative running statistics");
        return s;
    }
};

struct MSigmaConfig {
    double m = 3.0;
    long long warmup = 20;

    void validate() const {
        if (m <= 0.0) throw DomainError("m must be positive");
        if (warmup < 2) throw DomainError("warmup must be at least 2");
    }
};

inline double gate_threshold(const RunningStats& stats, const MSigmaConfig& cfg) {
    return stats.mean - cfg.m * stats.sigma();
}

enum class GateResult { Pass, Suspect };

// Suspect iff lambda falls strictly below mean - m*sigma; before warmup the
// gate always passes.
inline GateResult global_gate(double lambda, const RunningStats& stats,
                              const MSigmaConfig& cfg) {
    cfg.validate();
    if (stats.i < cfg.warmup) return GateResult::Pass;
    return lambda < gate_threshold(stats, cfg) ? GateResult::Suspect : GateResult::Pass;
}

enum class AttackVerdict { AttackFlagged, NewClass };

// Applied to the denoised re-entry score of a suspect input: still below the
// threshold means genuinely unfamiliar (new class), recovered means attack.
inline AttackVerdict attack_gate(double lambda_denoised, const RunningStats& stats,
                                 const MSigmaConfig& cfg) {
    cfg.validate();
    return lambda_denoised < gate_threshold(stats, cfg) ? AttackVerdict::NewClass
                                                        : AttackVerdict::AttackFlagged;
}

// Appends a support-1 prototype holding the input's features under a fresh
// synthetic class id (allocated from the trained-class count upward).
inline int form_new_prototype(const std::vector<float>& features, PrototypeBank& bank) {
    if (static_cast<int>(features.size()) != bank.feature_dim())
        throw DimensionError("new prototype feature size mismatch");
    Prototype p;
    p.vector = features;
    p.class_id = bank.next_new_class++;
    p.support = 1;
    p.from_new_class = true;
    p.local_var = 1e-6 * bank.global_var_norm;
    bank.prototypes.push_back(std::move(p));
    return bank.total() - 1;
}

// Replay the training features through the finished bank so evaluation can
// gate from the first test input; every training lambda enters the stats.
inline RunningStats prewarm_stats(const PrototypeBank& bank, const FeatureCache& fc) {
    RunningStats stats;
    std::vector<float> x(fc.feature_dim);
    for (int i = 0; i < fc.count(); ++i) {
        const float* row = fc.row(i);
        x.assign(row, row + fc.feature_dim);
        stats.update(associate(x, bank).second);
    }
    return stats;
}

enum class Verdict { Classified, Suspect, AttackFlagged, NewClass };

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Classified: return "classified";
        case Verdict::Suspect: return "suspect";
        case Verdict::AttackFlagged: return "attack_flagged";
        case Verdict::NewClass: return "new_class";
    }
    return "unknown";
}

struct DecisionOutcome {
    Verdict verdict = Verdict::Classified;
    int label = -1;                     // final label (corrected when attack-flagged)
    double lambda = 0.0;                // association score of the raw input
    std::optional<double> lambda_denoised;
    double threshold = 0.0;
    int new_prototype_id = -1;
};

}  // namespace unicad

#endif
