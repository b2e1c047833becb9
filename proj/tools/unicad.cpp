#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "unicad/attacks.hpp"
#include "unicad/backbone.hpp"
#include "unicad/dae.hpp"
#include "unicad/dataset.hpp"
#include "unicad/decision.hpp"
#include "unicad/feature_cache.hpp"
#include "unicad/pipeline.hpp"
#include "unicad/proto.hpp"
#include "unicad/report.hpp"
#include "unicad/small_cnn.hpp"
#include "unicad/synth.hpp"

// Pipeline driver: dataset synthesis, split manifests, backbone training,
// feature extraction, prototype banks, attack generation, denoiser training
// and the scenario evaluation harness.

namespace {

using namespace unicad;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct ManifestData {
    SplitManifest manifest;
    LabeledDataset train_src;
    LabeledDataset test_src;
};

ManifestData load_manifest_sources(const std::string& path) {
    ManifestData md;
    md.manifest = SplitManifest::load(path);
    md.train_src = load_cifar10(md.manifest.train_files);
    if (!md.manifest.test_files.empty())
        md.test_src = load_cifar10(md.manifest.test_files);
    return md;
}

LabeledDataset manifest_train(const ManifestData& md) {
    return select_records(md.train_src, md.manifest.train_records);
}

LabeledDataset manifest_unseen(const ManifestData& md) {
    LabeledDataset pool = select_records(md.train_src, md.manifest.unseen_train_records);
    const LabeledDataset from_test =
        select_records(md.test_src, md.manifest.unseen_test_records);
    pool.images.insert(pool.images.end(), from_test.images.begin(),
                       from_test.images.end());
    pool.labels.insert(pool.labels.end(), from_test.labels.begin(),
                       from_test.labels.end());
    if (pool.images.empty()) throw DomainError("manifest has no unseen records");
    return pool;
}

// test-source records of the trained classes only
LabeledDataset manifest_test_trained(const ManifestData& md) {
    LabeledDataset out;
    out.num_classes = md.test_src.num_classes;
    for (std::size_t i = 0; i < md.test_src.size(); ++i) {
        if (md.manifest.held_out_class &&
            md.test_src.labels[i] == *md.manifest.held_out_class)
            continue;
        out.images.push_back(md.test_src.images[i]);
        out.labels.push_back(md.test_src.labels[i]);
    }
    if (out.images.empty()) throw DomainError("manifest test source is empty");
    return out;
}

LabeledDataset subset(const LabeledDataset& ds, int per_class, std::uint64_t seed) {
    return per_class > 0 ? take_per_class(ds, per_class, seed) : ds;
}

int cmd_synth(const std::string& dir, int train_per_class, int test_per_class,
              std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    const auto train = make_synthetic_cifar(train_per_class, seed);
    const auto test = make_synthetic_cifar(test_per_class, seed + 1);
    save_cifar10(train, dir + "/train.bin");
    save_cifar10(test, dir + "/test.bin");
    std::printf("wrote %zu train and %zu test records under %s\n", train.size(),
                test.size(), dir.c_str());
    return 0;
}

int cmd_split(const std::vector<std::string>& train_files,
              const std::vector<std::string>& test_files, int hold_out,
              int per_class_cap, std::uint64_t seed, const std::string& out) {
    SplitSpec spec;
    if (hold_out >= 0) spec.held_out_class = hold_out;
    spec.seed = seed;
    const auto train_src = load_cifar10(train_files);
    const auto test_src =
        test_files.empty() ? LabeledDataset{} : load_cifar10(test_files);
    const auto manifest = build_manifest(train_files, test_files, train_src, test_src,
                                         spec, per_class_cap);
    manifest.save(out);
    std::printf("manifest %s: %zu train records, %zu+%zu unseen records\n",
                out.c_str(), manifest.train_records.size(),
                manifest.unseen_train_records.size(),
                manifest.unseen_test_records.size());
    return 0;
}

int cmd_train_backbone(const std::string& manifest_path, const std::string& out,
                       int epochs, int batch, double lr, int feat,
                       std::uint32_t seed) {
    const auto md = load_manifest_sources(manifest_path);
    const auto train = manifest_train(md);

    SmallCnn<float>::Config cfg;
    cfg.feat = feat;
    SmallCnn<float> net(cfg, seed);
    SmallCnn<float>::TrainConfig tc;
    tc.epochs = epochs;
    tc.batch = batch;
    tc.lr = lr;
    tc.seed = seed;

    const auto t0 = Clock::now();
    const auto stats = net.train(train, tc);
    for (std::size_t e = 0; e < stats.epoch_loss.size(); ++e)
        std::printf("epoch %2zu  loss %.4f  accuracy %.2f%%\n", e + 1,
                    stats.epoch_loss[e], stats.epoch_accuracy[e]);
    net.save(out);
    std::printf("trained on %zu images in %.1f s -> %s\n", train.size(),
                seconds_since(t0), out.c_str());
    return 0;
}

int cmd_extract(const std::string& manifest_path, const std::string& backbone,
                const std::string& weights, const std::string& split,
                const std::string& out) {
    const auto md = load_manifest_sources(manifest_path);
    LabeledDataset ds;
    if (split == "train")
        ds = manifest_train(md);
    else if (split == "unseen")
        ds = manifest_unseen(md);
    else if (split == "test")
        ds = manifest_test_trained(md);
    else
        throw DomainError("unknown split '" + split + "' (train, test, unseen)");

    auto oracle = make_backbone(backbone, weights);
    const auto t0 = Clock::now();
    auto fc = extract_features(*oracle, ds, split);
    fc.save(out);
    std::printf("extracted %d x %d features (%s, %s split) in %.1f s -> %s\n",
                fc.count(), fc.feature_dim, oracle->name().c_str(), split.c_str(),
                seconds_since(t0), out.c_str());
    return 0;
}

int cmd_prototypes(const std::string& cache_stem, double gamma,
                   const std::string& out) {
    const auto fc = FeatureCache::load(cache_stem);
    ProtoConfig cfg;
    cfg.gamma = gamma;
    const auto t0 = Clock::now();
    const auto bank = find_prototypes(fc, cfg);
    const double secs = seconds_since(t0);
    bank.save(out);

    std::printf("bank: %d prototypes over %d classes from %d samples (%.2f%%)\n",
                bank.total(), bank.trained_classes, fc.count(),
                100.0 * bank.total() / fc.count());
    const auto counts = bank.per_class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
        std::printf("  class %zu: %lld\n", c, counts[c]);
    std::printf("bank build took %.2f s -> %s\n", secs, out.c_str());
    return 0;
}

int cmd_attack(const std::string& data_file, const std::string& backbone,
               const std::string& weights, const AttackSpec& spec, int count,
               const std::string& out) {
    auto ds = load_cifar10({data_file});
    if (count > 0 && static_cast<std::size_t>(count) < ds.size()) {
        ds.images.resize(count);
        ds.labels.resize(count);
    }
    auto oracle = make_backbone(backbone, weights);
    const auto t0 = Clock::now();
    const auto batch = attack_batch(*oracle, ds, spec);
    long hits = 0;
    for (auto s : batch.success) hits += s;
    save_adversarial(batch, out);
    std::printf("%s eps=%g on %zu images: %ld fooled (%.1f%%) in %.1f s -> %s\n",
                attack_kind_name(spec.kind), spec.epsilon, ds.size(), hits,
                100.0 * hits / ds.size(), seconds_since(t0), out.c_str());
    return 0;
}

int cmd_train_dae(const std::string& manifest_path, const std::string& backbone,
                  const std::string& weights, DaeConfig cfg, int per_class,
                  const std::string& out) {
    const auto md = load_manifest_sources(manifest_path);
    const auto train = subset(manifest_train(md), per_class, cfg.seed);
    auto oracle = make_backbone(backbone, weights);

    Dae<float> dae(cfg);
    const auto t0 = Clock::now();
    const auto epochs = dae.train(train, *oracle);
    for (std::size_t e = 0; e < epochs.size(); ++e)
        std::printf("epoch %2zu  combined %.4f  clean %.4f\n", e + 1,
                    epochs[e].combined, epochs[e].clean);
    dae.save(out);
    std::printf("trained on %zu images in %.1f s -> %s\n", train.size(),
                seconds_since(t0), out.c_str());
    return 0;
}

int cmd_evaluate(const std::string& config_path, bool gate_flag) {
    std::ifstream is(config_path);
    if (!is) throw FormatError("cannot open config " + config_path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(config_path + " is not valid JSON: " + e.what());
    }

    auto oracle = make_backbone(j.value("backbone", std::string("small")),
                                j.at("weights").get<std::string>());
    const auto md = load_manifest_sources(j.at("manifest").get<std::string>());
    auto bank = PrototypeBank::load(j.at("bank").get<std::string>());
    const auto fc = FeatureCache::load(j.at("train_cache").get<std::string>());
    RunningStats stats = prewarm_stats(bank, fc);

    MSigmaConfig gate;
    if (j.contains("gate")) {
        gate.m = j["gate"].value("m", gate.m);
        gate.warmup = j["gate"].value("warmup", gate.warmup);
    }

    std::function<ImageTensor(const ImageTensor&)> denoise =
        [](const ImageTensor& x) { return x; };
    const std::string dae_path = j.value("dae", std::string());
    if (!dae_path.empty()) {
        auto dae = std::make_shared<Dae<float>>(Dae<float>::load(dae_path));
        denoise = [dae](const ImageTensor& x) { return dae->denoise(x); };
    }

    const std::uint64_t seed = j.value("seed", std::uint64_t{0});
    const auto trained_eval = manifest_test_trained(md);
    const auto unseen_pool = manifest_unseen(md);

    std::vector<Scenario> scenarios;
    for (const auto& sj : j.at("scenarios")) {
        Scenario s;
        s.name = sj.at("name").get<std::string>();
        const std::string kind = sj.at("kind").get<std::string>();
        if (kind == "clean") {
            s.kind = ScenarioKind::Clean;
            s.stream = subset(trained_eval, sj.value("per_class", 0), seed);
        } else if (kind == "attacked") {
            s.kind = ScenarioKind::Attacked;
            if (sj.contains("store")) {
                auto store = load_adversarial(sj["store"].get<std::string>());
                s.stream = std::move(store.perturbed);
            } else {
                const auto base = subset(trained_eval, sj.value("per_class", 0), seed);
                const auto spec = AttackSpec::from_json(sj.at("attack"));
                auto batch = attack_batch(*oracle, base, spec);
                s.stream.num_classes = base.num_classes;
                s.stream.images = std::move(batch.perturbed);
                s.stream.labels = std::move(batch.labels);
            }
        } else if (kind == "unseen") {
            s.kind = ScenarioKind::Unseen;
            s.stream = subset(unseen_pool, sj.value("count", 0), seed);
            const int mix = sj.value("mix_per_class", 0);
            if (mix > 0) {
                const auto extra = take_per_class(trained_eval, mix, seed + 1);
                s.stream.images.insert(s.stream.images.end(), extra.images.begin(),
                                       extra.images.end());
                s.stream.labels.insert(s.stream.labels.end(), extra.labels.begin(),
                                       extra.labels.end());
            }
        } else {
            throw FormatError("unknown scenario kind '" + kind + "'");
        }
        scenarios.push_back(std::move(s));
    }

    const PipelineState p{oracle.get(), &bank, &stats, gate, denoise};
    const auto report = evaluate_scenarios(p, scenarios);
    emit_report(report, j.at("out_dir").get<std::string>());

    std::printf("%-18s %5s %9s %9s %6s %6s %6s %6s  verdicts (C/A/N)\n", "scenario",
                "n", "acc%", "detect%", "tp", "fp", "tn", "fn");
    for (const auto& m : report.scenarios)
        std::printf("%-18s %5d %9.2f %9.2f %6lld %6lld %6lld %6lld  %lld/%lld/%lld  (%.1f s)\n",
                    m.name.c_str(), m.inputs, m.accuracy, m.det_rate, m.tp, m.fp,
                    m.tn, m.fn, m.n_classified, m.n_attack_flagged, m.n_new_class,
                    m.seconds);
    std::printf("bank: %d prototypes; stats prewarmed on %lld associations\n",
                report.bank_prototypes, stats.i);

    const auto violations = verify_report(report);
    for (const auto& v : violations) std::fprintf(stderr, "invariant: %s\n", v.c_str());
    if (!violations.empty()) {
        std::fprintf(stderr, "%zu invariant violation(s)\n", violations.size());
        if (gate_flag) return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prototype classification with attack detection and new-class discovery"};
    app.require_subcommand(1);
    int rc = 0;

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset pair");
    std::string synth_dir = "data";
    int synth_train = 500, synth_test = 100;
    std::uint64_t synth_seed = 1;
    synth->add_option("--out-dir", synth_dir, "output directory");
    synth->add_option("--train-per-class", synth_train, "train images per class");
    synth->add_option("--test-per-class", synth_test, "test images per class");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->callback(
        [&] { rc = cmd_synth(synth_dir, synth_train, synth_test, synth_seed); });

    auto* split = app.add_subcommand("split", "build a split manifest");
    std::vector<std::string> split_train, split_test;
    int split_hold = -1, split_cap = 0;
    std::uint64_t split_seed = 0;
    std::string split_out = "manifest.json";
    split->add_option("--train", split_train, "train batch files")->required();
    split->add_option("--test", split_test, "test batch files");
    split->add_option("--hold-out", split_hold, "class id kept unseen (-1 = none)");
    split->add_option("--per-class-cap", split_cap, "cap train records per class");
    split->add_option("--seed", split_seed, "subsampling seed");
    split->add_option("--out", split_out, "manifest path");
    split->callback([&] {
        rc = cmd_split(split_train, split_test, split_hold, split_cap, split_seed,
                       split_out);
    });

    auto* tb = app.add_subcommand("train-backbone", "train the small CNN backbone");
    std::string tb_manifest, tb_out = "backbone.bin";
    int tb_epochs = 10, tb_batch = 64, tb_feat = 64;
    double tb_lr = 1e-3;
    std::uint32_t tb_seed = 1;
    tb->add_option("--manifest", tb_manifest, "split manifest")->required();
    tb->add_option("--out", tb_out, "weights path");
    tb->add_option("--epochs", tb_epochs, "training epochs");
    tb->add_option("--batch", tb_batch, "batch size");
    tb->add_option("--lr", tb_lr, "learning rate");
    tb->add_option("--feat", tb_feat, "feature width");
    tb->add_option("--seed", tb_seed, "init/shuffle seed");
    tb->callback([&] {
        rc = cmd_train_backbone(tb_manifest, tb_out, tb_epochs, tb_batch, tb_lr,
                                tb_feat, tb_seed);
    });

    auto* ex = app.add_subcommand("extract", "extract features into a cache");
    std::string ex_manifest, ex_backbone = "small", ex_weights, ex_split = "train";
    std::string ex_out = "cache";
    ex->add_option("--manifest", ex_manifest, "split manifest")->required();
    ex->add_option("--backbone", ex_backbone, "backbone id");
    ex->add_option("--weights", ex_weights, "backbone weights");
    ex->add_option("--split", ex_split, "train, test or unseen");
    ex->add_option("--out", ex_out, "cache stem");
    ex->callback([&] {
        rc = cmd_extract(ex_manifest, ex_backbone, ex_weights, ex_split, ex_out);
    });

    auto* pr = app.add_subcommand("prototypes", "select prototypes from a cache");
    std::string pr_cache, pr_out = "bank";
    double pr_gamma = 0.5;
    pr->add_option("--cache", pr_cache, "feature cache stem")->required();
    pr->add_option("--gamma", pr_gamma, "acceptance radius factor");
    pr->add_option("--out", pr_out, "bank stem");
    pr->callback([&] { rc = cmd_prototypes(pr_cache, pr_gamma, pr_out); });

    auto* at = app.add_subcommand("attack", "generate adversarial images");
    std::string at_data, at_backbone = "small", at_weights, at_out = "adv";
    std::string at_kind = "fgsm", at_norm = "linf";
    AttackSpec at_spec;
    int at_count = 0;
    at->add_option("--data", at_data, "dataset binary")->required();
    at->add_option("--backbone", at_backbone, "backbone id");
    at->add_option("--weights", at_weights, "backbone weights");
    at->add_option("--kind", at_kind, "fgsm, pgd or cw");
    at->add_option("--eps", at_spec.epsilon, "perturbation budget");
    at->add_option("--norm", at_norm, "linf or l2");
    at->add_option("--steps", at_spec.steps, "pgd iterations");
    at->add_option("--c", at_spec.c, "cw trade-off constant (-1 = search)");
    at->add_option("--count", at_count, "attack only the first N records");
    at->add_option("--seed", at_spec.seed, "attack seed");
    at->add_option("--out", at_out, "output stem");
    at->callback([&] {
        const auto parsed =
            AttackSpec::from_json(nlohmann::json{{"kind", at_kind}, {"norm", at_norm}});
        auto spec = at_spec;
        spec.kind = parsed.kind;
        spec.norm = parsed.norm;
        rc = cmd_attack(at_data, at_backbone, at_weights, spec, at_count, at_out);
    });

    auto* td = app.add_subcommand("train-dae", "train the denoising autoencoder");
    std::string td_manifest, td_backbone = "small", td_weights, td_out = "dae.bin";
    DaeConfig td_cfg;
    std::vector<double> td_weights_v{1.0, 0.5, 0.1};
    int td_per_class = 0;
    td->add_option("--manifest", td_manifest, "split manifest")->required();
    td->add_option("--backbone", td_backbone, "backbone id");
    td->add_option("--weights", td_weights, "backbone weights");
    td->add_option("--epochs", td_cfg.epochs, "training epochs");
    td->add_option("--batch", td_cfg.batch, "batch size");
    td->add_option("--lr", td_cfg.lr, "learning rate");
    td->add_option("--loss-weights", td_weights_v, "mse,ssim,feature weights")
        ->delimiter(',')
        ->expected(3);
    td->add_option("--eps", td_cfg.train_eps, "training attack budgets")
        ->delimiter(',');
    td->add_option("--widths", td_cfg.widths, "three encoder stage widths")
        ->delimiter(',')
        ->expected(3);
    td->add_option("--per-class", td_per_class, "cap train images per class");
    td->add_option("--seed", td_cfg.seed, "init/shuffle seed");
    td->add_option("--out", td_out, "denoiser weights path");
    td->callback([&] {
        td_cfg.weights = LossWeights{td_weights_v[0], td_weights_v[1], td_weights_v[2]};
        rc = cmd_train_dae(td_manifest, td_backbone, td_weights, td_cfg, td_per_class,
                           td_out);
    });

    auto* ev = app.add_subcommand("evaluate", "run the scenario matrix");
    std::string ev_config;
    bool ev_gate = false;
    ev->add_option("--config", ev_config, "experiment config")->required();
    ev->add_flag("--gate", ev_gate, "nonzero exit on invariant violations");
    ev->callback([&] { rc = cmd_evaluate(ev_config, ev_gate); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const unicad::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return rc;
}
