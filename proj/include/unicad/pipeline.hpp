#ifndef UNICAD_PIPELINE_HPP
#define UNICAD_PIPELINE_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "unicad/common.hpp"
#include "unicad/dataset.hpp"
#include "unicad/decision.hpp"
#include "unicad/image.hpp"
#include "unicad/oracle.hpp"
#include "unicad/proto.hpp"

// Full pipeline orchestration: feature extraction, prototype association, the
// m-sigma gate, denoised re-entry with the attack/new-class verdict, and the
// scenario evaluation loop with its metrics.

namespace unicad {

struct PipelineState {
    ModelOracle* oracle = nullptr;
    PrototypeBank* bank = nullptr;
    RunningStats* stats = nullptr;
    MSigmaConfig gate;
    std::function<ImageTensor(const ImageTensor&)> denoise;

    void validate() const {
        if (!oracle || !bank || !stats) throw DomainError("pipeline components missing");
        if (!denoise) throw DomainError("pipeline denoiser missing");
        gate.validate();
    }
};

namespace detail {

template <class F>
auto run_stage(const char* stage, F&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(std::string(stage) + ": " + e.what());
    }
}

}  // namespace detail

// One input through the layered flow: extract, associate, gate; on Suspect
// denoise, re-extract, re-associate, and take the attack/new-class verdict.
// Stats learn only from passed inputs; a NewClass verdict grows the bank with
// the raw input's features.
inline DecisionOutcome run_unicad(PipelineState& p, const ImageTensor& x) {
    p.validate();
    const auto f =
        detail::run_stage("feature extraction", [&] { return p.oracle->features(x); });
    const auto [proto_id, lambda] =
        detail::run_stage("prototype association", [&] { return associate(f, *p.bank); });

    DecisionOutcome out;
    out.lambda = lambda;
    out.threshold = gate_threshold(*p.stats, p.gate);

    if (global_gate(lambda, *p.stats, p.gate) == GateResult::Pass) {
        p.stats->update(lambda);
        out.verdict = Verdict::Classified;
        out.label = p.bank->prototypes[proto_id].class_id;
        return out;
    }

    const ImageTensor den = detail::run_stage("denoiser", [&] { return p.denoise(x); });
    const auto fd = detail::run_stage("feature extraction (denoised)",
                                      [&] { return p.oracle->features(den); });
    const auto [proto_d, lambda_d] = detail::run_stage(
        "prototype association (denoised)", [&] { return associate(fd, *p.bank); });
    out.lambda_denoised = lambda_d;

    if (attack_gate(lambda_d, *p.stats, p.gate) == AttackVerdict::AttackFlagged) {
        out.verdict = Verdict::AttackFlagged;
        out.label = p.bank->prototypes[proto_d].class_id;
    } else {
        out.verdict = Verdict::NewClass;
        out.new_prototype_id = form_new_prototype(f, *p.bank);
        out.label = p.bank->prototypes[out.new_prototype_id].class_id;
    }
    return out;
}

inline double detection_rate(long long tp, long long fp, long long tn, long long fn) {
    if (tp < 0 || fp < 0 || tn < 0 || fn < 0)
        throw DomainError("detection counts must be non-negative");
    const long long total = tp + fp + tn + fn;
    if (total == 0) throw DomainError("detection rate undefined when every count is zero");
    return 100.0 * static_cast<double>(tp + tn) / static_cast<double>(total);
}

enum class ScenarioKind { Clean, Attacked, Unseen };

inline const char* scenario_kind_name(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::Clean: return "clean";
        case ScenarioKind::Attacked: return "attacked";
        case ScenarioKind::Unseen: return "unseen";
    }
    return "unknown";
}

struct Scenario {
    std::string name;
    ScenarioKind kind = ScenarioKind::Clean;
    LabeledDataset stream;  // labels carry ground truth
};

struct TraceRow {
    std::string scenario;
    int input_id = 0;
    int truth = -1;
    DecisionOutcome outcome;
    long long stats_i = 0;  // stats state after the decision
    double stats_mean = 0.0;
    double stats_sigma = 0.0;
};

struct ScenarioMetrics {
    std::string name;
    ScenarioKind kind = ScenarioKind::Clean;
    int inputs = 0;
    double accuracy = 0.0;  // percent; detection rate for unseen scenarios
    long long tp = 0, fp = 0, tn = 0, fn = 0;
    double det_rate = 0.0;  // percent
    long long n_classified = 0, n_attack_flagged = 0, n_new_class = 0;
    double seconds = 0.0;   // wall time; reported in logs, never in tables
};

struct MetricsReport {
    std::vector<ScenarioMetrics> scenarios;
    std::vector<TraceRow> trace;
    int bank_prototypes = 0;       // trained bank size before any scenario
    double bank_build_seconds = -1.0;  // filled by the caller when known
};

namespace detail {

inline std::set<int> trained_class_ids(const PrototypeBank& bank) {
    std::set<int> ids;
    for (const auto& p : bank.prototypes)
        if (!p.from_new_class) ids.insert(p.class_id);
    return ids;
}

}  // namespace detail

// Streams every scenario through run_unicad. Scenarios are independent: each
// starts from copies of the entry bank and stats, so one stream's prototype
// growth or stats drift never leaks into another.
inline MetricsReport evaluate_scenarios(const PipelineState& p,
                                        const std::vector<Scenario>& scenarios) {
    p.validate();
    if (scenarios.empty()) throw DomainError("scenario list is empty");
    for (const auto& s : scenarios)
        if (s.stream.size() == 0)
            throw DomainError("scenario '" + s.name + "' has an empty evaluation set");

    MetricsReport report;
    report.bank_prototypes = p.bank->total();
    const auto trained = detail::trained_class_ids(*p.bank);

    for (const auto& s : scenarios) {
        PrototypeBank bank = *p.bank;
        RunningStats stats = *p.stats;
        PipelineState local{p.oracle, &bank, &stats, p.gate, p.denoise};

        ScenarioMetrics m;
        m.name = s.name;
        m.kind = s.kind;
        m.inputs = static_cast<int>(s.stream.size());

        long long correct = 0;
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < s.stream.size(); ++i) {
            const int truth = s.stream.labels[i];
            const auto out = run_unicad(local, s.stream.images[i]);

            switch (out.verdict) {
                case Verdict::Classified: ++m.n_classified; break;
                case Verdict::AttackFlagged: ++m.n_attack_flagged; break;
                case Verdict::NewClass: ++m.n_new_class; break;
                case Verdict::Suspect: break;  // never terminal
            }

            const bool flagged = out.verdict != Verdict::Classified;
            switch (s.kind) {
                case ScenarioKind::Clean:
                    flagged ? ++m.fp : ++m.tn;
                    break;
                case ScenarioKind::Attacked:
                    flagged ? ++m.tp : ++m.fn;
                    break;
                case ScenarioKind::Unseen:
                    if (trained.count(truth)) {
                        out.verdict == Verdict::NewClass ? ++m.fp : ++m.tn;
                    } else {
                        out.verdict == Verdict::NewClass ? ++m.tp : ++m.fn;
                    }
                    break;
            }
            if ((out.verdict == Verdict::Classified ||
                 out.verdict == Verdict::AttackFlagged) &&
                out.label == truth)
                ++correct;

            TraceRow row;
            row.scenario = s.name;
            row.input_id = static_cast<int>(i);
            row.truth = truth;
            row.outcome = out;
            row.stats_i = stats.i;
            row.stats_mean = stats.mean;
            row.stats_sigma = stats.sigma();
            report.trace.push_back(std::move(row));
        }
        m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
        m.det_rate = detection_rate(m.tp, m.fp, m.tn, m.fn);
        m.accuracy = s.kind == ScenarioKind::Unseen
                         ? m.det_rate
                         : 100.0 * static_cast<double>(correct) / m.inputs;
        report.scenarios.push_back(std::move(m));
    }
    return report;
}

// Re-derives every reported number and structural invariant from the raw
// trace; returns human-readable violation descriptions, empty when clean.
inline std::vector<std::string> verify_report(const MetricsReport& report) {
    std::vector<std::string> bad;
    for (const auto& m : report.scenarios) {
        long long n = 0, classified = 0, flagged = 0, fresh = 0, denoised = 0;
        for (const auto& row : report.trace) {
            if (row.scenario != m.name) continue;
            ++n;
            switch (row.outcome.verdict) {
                case Verdict::Classified: ++classified; break;
                case Verdict::AttackFlagged: ++flagged; break;
                case Verdict::NewClass: ++fresh; break;
                case Verdict::Suspect:
                    bad.push_back(m.name + ": suspect emitted as a terminal verdict");
                    break;
            }
            const bool has_dn = row.outcome.lambda_denoised.has_value();
            if (has_dn) ++denoised;
            if (row.outcome.verdict == Verdict::Classified && has_dn)
                bad.push_back(m.name + " input " + std::to_string(row.input_id) +
                              ": classified yet the denoiser ran");
            if (row.outcome.verdict != Verdict::Classified && !has_dn)
                bad.push_back(m.name + " input " + std::to_string(row.input_id) +
                              ": attack/new-class verdict without a denoised score");
        }
        if (n != m.inputs)
            bad.push_back(m.name + ": trace rows " + std::to_string(n) +
                          " != inputs " + std::to_string(m.inputs));
        if (classified + flagged + fresh != n)
            bad.push_back(m.name + ": verdict counts do not conserve inputs");
        if (classified != m.n_classified || flagged != m.n_attack_flagged ||
            fresh != m.n_new_class)
            bad.push_back(m.name + ": verdict histogram disagrees with the trace");
        if (denoised != flagged + fresh)
            bad.push_back(m.name + ": denoiser invocations != suspect-resolved inputs");
        switch (m.kind) {
            case ScenarioKind::Clean:
                if (m.tn != classified || m.fp != flagged + fresh || m.tp != 0 || m.fn != 0)
                    bad.push_back(m.name + ": clean counts disagree with the trace");
                break;
            case ScenarioKind::Attacked:
                if (m.tp != flagged + fresh || m.fn != classified || m.fp != 0 || m.tn != 0)
                    bad.push_back(m.name + ": attacked counts disagree with the trace");
                break;
            case ScenarioKind::Unseen:
                if (m.tp + m.fp != fresh || m.tn + m.fn != classified + flagged)
                    bad.push_back(m.name + ": unseen counts disagree with the trace");
                break;
        }
        const double rate = detection_rate(m.tp, m.fp, m.tn, m.fn);
        if (std::abs(rate - m.det_rate) > 1e-9)
            bad.push_back(m.name + ": detection rate differs from its counts");
        if (m.tp + m.fp + m.tn + m.fn != n)
            bad.push_back(m.name + ": detection counts do not cover every input");
        if (m.accuracy < 0.0 || m.accuracy > 100.0)
            bad.push_back(m.name + ": accuracy outside [0,100]");
    }
    return bad;
}

}  // namespace unicad

#endif
