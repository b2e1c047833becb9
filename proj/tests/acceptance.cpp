#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "unicad/attacks.hpp"
#include "unicad/dae.hpp"
#include "unicad/dataset.hpp"
#include "unicad/decision.hpp"
#include "unicad/feature_cache.hpp"
#include "unicad/pipeline.hpp"
#include "unicad/proto.hpp"
#include "unicad/report.hpp"
#include "unicad/small_cnn.hpp"
#include "unicad/synth.hpp"

// Acceptance gates for the desk-scale protocol: a synthetic 5000-train /
// 1000-test dataset with class 9 held out, the small CNN backbone, a
// prototype bank at gamma 1.0 and a 20-epoch denoiser. Eight criteria print
// one pass/fail line each; the exit code is the number of failures.

namespace {

using namespace unicad;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report_line(int idx, const char* name, bool ok, const std::string& detail) {
    std::printf("criterion %d (%s): %s  [%s]\n", idx, name, ok ? "PASS" : "FAIL",
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

// trained-class records only (class 9 stays unseen)
LabeledDataset drop_class(const LabeledDataset& ds, int held) {
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == held) continue;
        out.images.push_back(ds.images[i]);
        out.labels.push_back(ds.labels[i]);
    }
    return out;
}

double linf_d(const ImageTensor& a, const ImageTensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.pixels[i]) - b.pixels[i]));
    return m;
}

double predict_accuracy(ModelOracle& oracle, const std::vector<ImageTensor>& images,
                        const std::vector<int>& labels) {
    long correct = 0;
    for (std::size_t i = 0; i < images.size(); ++i)
        if (oracle.predict(images[i]) == labels[i]) ++correct;
    return 100.0 * static_cast<double>(correct) / static_cast<double>(images.size());
}

// --- criterion 1: streaming stats, association argmin, similarity hand cases

void criterion_1() {
    const auto t0 = Clock::now();

    auto rng = make_rng(101);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<double> seq(5000);
    for (auto& v : seq) v = u01(rng);
    RunningStats stats;
    double stats_err = 0.0;
    for (std::size_t k = 0; k < seq.size(); ++k) {
        stats.update(seq[k]);
        // batch recomputation over the prefix
        double bm = 0.0;
        for (std::size_t i = 0; i <= k; ++i) bm += seq[i];
        bm /= static_cast<double>(k + 1);
        double bv = 0.0;
        for (std::size_t i = 0; i <= k; ++i) bv += (seq[i] - bm) * (seq[i] - bm);
        bv /= static_cast<double>(k + 1);
        stats_err = std::max(stats_err, std::abs(stats.mean - bm));
        stats_err = std::max(stats_err, std::abs(stats.sigma() - std::sqrt(bv)));
    }

    PrototypeBank bank;
    const int dim = 16, protos = 50;
    bank.global_mean.assign(dim, 0.0f);
    bank.global_var_norm = 1.0;
    bank.trained_classes = 5;
    bank.next_new_class = 5;
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    std::uniform_real_distribution<double> uvar(0.5, 2.0);
    for (int i = 0; i < protos; ++i) {
        Prototype p;
        p.vector.resize(dim);
        for (auto& v : p.vector) v = gauss(rng);
        p.class_id = i % 5;
        p.support = 1 + i % 7;
        p.local_var = uvar(rng);
        bank.prototypes.push_back(std::move(p));
    }
    int argmin_matches = 0;
    const int trials = 1000;
    for (int t = 0; t < trials; ++t) {
        std::vector<float> x(dim);
        for (auto& v : x) v = gauss(rng);
        int best = 0;
        double best_d2 = 0.0;
        for (int i = 0; i < protos; ++i) {
            double d2 = 0.0;
            for (int d = 0; d < dim; ++d) {
                const double diff = static_cast<double>(x[d]) -
                                    static_cast<double>(bank.prototypes[i].vector[d]);
                d2 += diff * diff;
            }
            if (i == 0 || d2 < best_d2) {
                best_d2 = d2;
                best = i;
            }
        }
        if (associate(x, bank).first == best) ++argmin_matches;
    }

    // hand-evaluated similarity and posterior
    double hand_err = std::abs(
        cauchy_similarity({1.0f, 2.0f}, {0.5f, 1.0f}, 2.0) - 8.0 / 13.0);
    PrototypeBank hand;
    hand.global_mean = {0.0f, 0.0f};
    hand.global_var_norm = 1.0;
    hand.trained_classes = 2;
    hand.next_new_class = 2;
    Prototype h0;
    h0.vector = {0.0f, 0.0f};
    h0.class_id = 0;
    h0.support = 3;
    h0.local_var = 0.5;
    Prototype h1;
    h1.vector = {1.0f, 0.0f};
    h1.class_id = 1;
    h1.support = 1;
    h1.local_var = 0.5;
    hand.prototypes = {h0, h1};
    const auto post = class_posterior({0.0f, 0.0f}, hand);
    hand_err = std::max(hand_err, std::abs(post[0] - 6.0 / 7.0));
    hand_err = std::max(hand_err, std::abs(post[1] - 1.0 / 7.0));
    const auto [tie_id, tie_lambda] = associate({0.5f, 0.0f}, hand);
    hand_err = std::max(hand_err, std::abs(tie_lambda - 2.0 / 3.0));
    const bool tie_ok = tie_id == 0;  // equidistant, lowest id wins

    const double secs = seconds_since(t0);
    const bool ok = stats_err <= 1e-9 && argmin_matches == trials && hand_err <= 1e-9 &&
                    tie_ok && secs < 60.0;
    report_line(1, "prototype and stats oracles", ok,
                "stats err " + fmt("%.2e", stats_err) + ", argmin " +
                    std::to_string(argmin_matches) + "/1000, hand err " +
                    fmt("%.2e", hand_err) + ", " + fmt("%.1f", secs) + " s");
}

// --- criterion 2: attack norm soundness on 1000 images per attack

void criterion_2(ModelOracle& oracle, const LabeledDataset& pool) {
    const auto t0 = Clock::now();
    LabeledDataset batch;
    batch.num_classes = pool.num_classes;
    for (std::size_t i = 0; i < 1000 && i < pool.size(); ++i) {
        batch.images.push_back(pool.images[i]);
        batch.labels.push_back(pool.labels[i]);
    }

    AttackSpec fgsm_spec;
    fgsm_spec.kind = AttackKind::FGSM;
    fgsm_spec.epsilon = 0.03;
    AttackSpec pgd_linf = fgsm_spec;
    pgd_linf.kind = AttackKind::PGD;
    pgd_linf.steps = 10;
    AttackSpec pgd_l2 = pgd_linf;
    pgd_l2.norm = NormKind::L2;
    pgd_l2.epsilon = 1.0;

    double worst_linf = 0.0, worst_l2 = 0.0;
    float box_lo = 0.0f, box_hi = 1.0f;
    const auto fgsm_batch = attack_batch(oracle, batch, fgsm_spec);
    const auto pgd_batch = attack_batch(oracle, batch, pgd_linf);
    const auto pgd2_batch = attack_batch(oracle, batch, pgd_l2);
    for (std::size_t i = 0; i < batch.images.size(); ++i) {
        worst_linf = std::max({worst_linf,
                               linf_d(batch.images[i], fgsm_batch.perturbed[i]),
                               linf_d(batch.images[i], pgd_batch.perturbed[i])});
        worst_l2 =
            std::max(worst_l2, l2_distance(batch.images[i], pgd2_batch.perturbed[i]));
        for (const auto* adv :
             {&fgsm_batch.perturbed[i], &pgd_batch.perturbed[i], &pgd2_batch.perturbed[i]})
            for (float v : adv->pixels) {
                box_lo = std::min(box_lo, v);
                box_hi = std::max(box_hi, v);
            }
    }

    AttackSpec one_step = pgd_linf;
    one_step.steps = 1;
    one_step.step_size = one_step.epsilon;
    one_step.random_start = false;
    const auto pgd1 = attack_batch(oracle, batch, one_step);
    float pgd1_diff = 0.0f;
    for (std::size_t i = 0; i < batch.images.size(); ++i)
        pgd1_diff = std::max(pgd1_diff,
                             linf_distance(fgsm_batch.perturbed[i], pgd1.perturbed[i]));

    const double secs = seconds_since(t0);
    const bool ok = worst_linf <= 0.03 + 1e-9 && worst_l2 <= 1.0 + 1e-9 &&
                    box_lo >= 0.0f && box_hi <= 1.0f && pgd1_diff <= 1e-6f &&
                    secs < 300.0;
    report_line(2, "attack budget soundness", ok,
                "linf " + fmt("%.12f", worst_linf) + " <= 0.03+1e-9, l2 " +
                    fmt("%.9f", worst_l2) + " <= 1+1e-9, box [" + fmt("%.2f", box_lo) +
                    "," + fmt("%.2f", box_hi) + "], pgd1-fgsm " + fmt("%.2e", pgd1_diff) +
                    ", " + fmt("%.1f", secs) + " s");
}

// --- criterion 3: FGSM efficacy against the undefended backbone

double criterion_3(ModelOracle& oracle, const LabeledDataset& test_trained,
                   std::vector<ImageTensor>& adv_out) {
    const auto t0 = Clock::now();
    const double clean = predict_accuracy(oracle, test_trained.images,
                                          test_trained.labels);
    AttackSpec spec;
    spec.kind = AttackKind::FGSM;
    spec.epsilon = 0.03;
    auto batch = attack_batch(oracle, test_trained, spec);
    const double attacked =
        predict_accuracy(oracle, batch.perturbed, test_trained.labels);
    adv_out = std::move(batch.perturbed);

    const double drop = clean - attacked;
    const double secs = seconds_since(t0);
    const bool ok = drop >= 30.0 && secs < 600.0;
    report_line(3, "attack efficacy", ok,
                "clean " + fmt("%.2f", clean) + "%, fgsm-0.03 " + fmt("%.2f", attacked) +
                    "%, drop " + fmt("%.1f", drop) + " >= 30.0 points, " +
                    fmt("%.1f", secs) + " s");
    return clean;
}

// --- criterion 4: combined-loss gradient vs central finite differences

void criterion_4() {
    const auto t0 = Clock::now();
    auto oracle = LinearOracle::random(3, 6, 3, 8, 8, 11);
    auto rng = make_rng(12);
    std::uniform_real_distribution<float> u(0.05f, 0.95f);
    ImageTensor x(3, 8, 8), xp(3, 8, 8);
    for (auto& v : x.pixels) v = u(rng);
    for (std::size_t i = 0; i < xp.pixels.size(); ++i)
        xp.pixels[i] = std::clamp(x.pixels[i] + 0.05f * u(rng), 0.0f, 1.0f);

    const LossWeights w{1.0, 0.5, 0.1};
    ImageTensor grad(3, 8, 8);
    combined_loss_grad(x, xp, oracle, w, grad);

    double max_rel = 0.0;
    const float h = 1e-3f;
    for (std::size_t i = 0; i < xp.pixels.size(); i += 37) {
        ImageTensor hi = xp, lo = xp;
        hi.pixels[i] += h;
        lo.pixels[i] -= h;
        const double spacing = static_cast<double>(hi.pixels[i]) - lo.pixels[i];
        const double fd = (combined_loss(x, hi, oracle, w).combined -
                           combined_loss(x, lo, oracle, w).combined) /
                          spacing;
        const double a = static_cast<double>(grad.pixels[i]);
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-2});
        max_rel = std::max(max_rel, rel);
    }

    const double secs = seconds_since(t0);
    const bool ok = max_rel <= 1e-3 && secs < 60.0;
    report_line(4, "denoiser loss gradients", ok,
                "max relative err " + fmt("%.2e", max_rel) + " <= 1e-3, " +
                    fmt("%.1f", secs) + " s");
}

// --- criterion 5: 20-epoch denoiser recovery

void criterion_5(ModelOracle& oracle, Dae<float>& dae, double train_secs,
                 const LabeledDataset& test_trained, double clean_acc,
                 const std::vector<ImageTensor>& adv) {
    const auto t0 = Clock::now();
    const auto den_clean = dae.denoise_batch(test_trained.images);
    const double recon_acc = predict_accuracy(oracle, den_clean, test_trained.labels);
    const auto den_adv = dae.denoise_batch(adv);
    const double denoised_acc = predict_accuracy(oracle, den_adv, test_trained.labels);

    const double secs = train_secs + seconds_since(t0);
    const double floor = 0.70 * clean_acc;
    const bool ok = denoised_acc >= floor && std::abs(clean_acc - recon_acc) <= 3.0 &&
                    secs < 1800.0;
    report_line(5, "denoiser recovery", ok,
                "denoised fgsm " + fmt("%.2f", denoised_acc) + "% >= " +
                    fmt("%.2f", floor) + "%, reconstructed clean " +
                    fmt("%.2f", recon_acc) + "% within 3.0 of " + fmt("%.2f", clean_acc) +
                    "%, " + fmt("%.0f", secs) + " s");
}

}  // namespace

int main() {
    const auto t_all = Clock::now();
    std::fprintf(stderr, "building desk datasets...\n");
    const auto train_all = make_synthetic_cifar(500, 1);
    const auto test_all = make_synthetic_cifar(100, 2);
    SplitSpec spec;
    spec.held_out_class = 9;
    const auto split = make_unseen_protocol(train_all, test_all, spec);
    const auto test_trained = drop_class(test_all, 9);

    criterion_1();

    std::fprintf(stderr, "training backbone on %zu images...\n", split.train.size());
    SmallCnn<float>::Config net_cfg;
    SmallCnn<float> net(net_cfg, 1);
    SmallCnn<float>::TrainConfig tc;
    tc.epochs = 10;
    tc.batch = 64;
    tc.seed = 1;
    net.train(split.train, tc);
    SmallCnnOracle oracle(std::move(net));

    criterion_2(oracle, test_all);
    std::vector<ImageTensor> adv;
    const double clean_acc = criterion_3(oracle, test_trained, adv);
    criterion_4();

    std::fprintf(stderr, "training denoiser (20 epochs)...\n");
    DaeConfig dae_cfg;
    dae_cfg.epochs = 20;
    dae_cfg.batch = 32;
    dae_cfg.seed = 5;
    dae_cfg.lr = 2e-3f;
    dae_cfg.widths = {16, 32, 64};
    dae_cfg.weights = LossWeights{1.0, 0.5, 2.0};
    Dae<float> dae(dae_cfg);
    const auto t_dae = Clock::now();
    dae.train(take_per_class(split.train, 300, 5), oracle);
    const double dae_secs = seconds_since(t_dae);
    std::fprintf(stderr, "denoiser trained in %.0f s\n", dae_secs);

    criterion_5(oracle, dae, dae_secs, test_trained, clean_acc, adv);

    // bank, prewarmed stats, and the scenario matrix feed criteria 6-8
    const auto fc = extract_features(oracle, split.train, "train");
    ProtoConfig proto_cfg;
    proto_cfg.gamma = 1.0;
    const auto t_bank = Clock::now();
    auto bank = find_prototypes(fc, proto_cfg);
    const double bank_secs = seconds_since(t_bank);
    RunningStats stats = prewarm_stats(bank, fc);

    PipelineState pipe{&oracle, &bank, &stats, MSigmaConfig{},
                       [&dae](const ImageTensor& x) { return dae.denoise(x); }};

    Scenario clean_s;
    clean_s.name = "clean";
    clean_s.kind = ScenarioKind::Clean;
    clean_s.stream = test_trained;
    Scenario fgsm_s;
    fgsm_s.name = "fgsm-0.03";
    fgsm_s.kind = ScenarioKind::Attacked;
    fgsm_s.stream.num_classes = test_trained.num_classes;
    fgsm_s.stream.images = adv;
    fgsm_s.stream.labels = test_trained.labels;
    Scenario unseen_s;
    unseen_s.name = "unseen";
    unseen_s.kind = ScenarioKind::Unseen;
    unseen_s.stream = split.unseen_eval;

    const auto t6 = Clock::now();
    const auto report = evaluate_scenarios(pipe, {clean_s, fgsm_s, unseen_s});
    const double eval_secs = seconds_since(t6);
    const auto& unseen_row = report.scenarios[2];
    {
        const bool ok = unseen_row.det_rate >= 60.0 && eval_secs < 900.0;
        report_line(6, "unseen class detection", ok,
                    "rate " + fmt("%.2f", unseen_row.det_rate) + "% >= 60.0% on " +
                        std::to_string(unseen_row.inputs) + " held-out images, " +
                        fmt("%.1f", eval_secs) + " s");
    }

    {
        const auto violations = verify_report(report);
        const auto dir = std::filesystem::temp_directory_path() / "unicad-acceptance";
        std::filesystem::remove_all(dir);
        emit_report(report, dir.string());
        const auto rerun = evaluate_scenarios(pipe, {clean_s, fgsm_s, unseen_s});
        const bool deterministic = results_csv(report) == results_csv(rerun) &&
                                   trace_jsonl(report) == trace_jsonl(rerun);
        const bool ok = violations.empty() && deterministic;
        std::string detail = std::to_string(violations.size()) + " violations across " +
                             std::to_string(report.trace.size()) + " trace rows, rerun " +
                             (deterministic ? "byte-identical" : "DIVERGED");
        if (!violations.empty()) detail += "; first: " + violations.front();
        report_line(7, "trace invariants", ok, detail);
    }

    {
        const double pct = 100.0 * bank.total() / fc.count();
        const bool ok = pct <= 2.0;
        report_line(8, "prototype economy", ok,
                    std::to_string(bank.total()) + " prototypes / " +
                        std::to_string(fc.count()) + " samples = " + fmt("%.2f", pct) +
                        "% <= 2%, bank build " + fmt("%.2f", bank_secs) + " s");
    }

    std::printf("acceptance: %d/8 criteria passed in %.0f s\n", 8 - failures,
                seconds_since(t_all));
    return failures;
}
