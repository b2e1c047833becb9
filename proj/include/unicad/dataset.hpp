#ifndef UNICAD_DATASET_HPP
#define UNICAD_DATASET_HPP

#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "unicad/common.hpp"
#include "unicad/image.hpp"

namespace unicad {

inline constexpr int kCifarClasses = 10;
inline constexpr int kCifarRecordBytes = 3073;  // 1 label byte + 3*1024 pixel bytes
inline constexpr int kCifarPixelBytes = 3072;

struct LabeledDataset {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return images.size(); }

    std::vector<int> class_counts() const {
        std::vector<int> counts(num_classes, 0);
        for (int l : labels) counts[l]++;
        return counts;
    }
};

// --- CIFAR-10 binary batches ------------------------------------------------
//
// Each record is 3073 bytes: label, then the R, G and B 32x32 planes.
// Pixels are scaled by 1/255 on load; record order is preserved.

inline void append_cifar10_file(const std::string& path, LabeledDataset& out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open CIFAR batch file: " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff len = f.tellg();
    f.seekg(0, std::ios::beg);
    if (len <= 0 || len % kCifarRecordBytes != 0)
        throw FormatError("file length " + std::to_string(len) +
                          " is not a multiple of 3073: " + path);

    const std::size_t records = static_cast<std::size_t>(len) / kCifarRecordBytes;
    std::vector<unsigned char> buf(kCifarRecordBytes);
    for (std::size_t r = 0; r < records; ++r) {
        f.read(reinterpret_cast<char*>(buf.data()), kCifarRecordBytes);
        if (!f) throw FormatError("truncated read in " + path);
        if (buf[0] >= kCifarClasses)
            throw FormatError("corrupt record " + std::to_string(r) + " in " + path +
                              ": label byte " + std::to_string(buf[0]));
        ImageTensor img(3, 32, 32);
        for (int i = 0; i < kCifarPixelBytes; ++i)
            img.pixels[i] = static_cast<float>(buf[i + 1]) / 255.0f;
        out.images.push_back(std::move(img));
        out.labels.push_back(buf[0]);
    }
}

inline LabeledDataset load_cifar10(const std::vector<std::string>& batch_files) {
    LabeledDataset ds;
    ds.num_classes = kCifarClasses;
    for (const auto& p : batch_files) append_cifar10_file(p, ds);
    return ds;
}

inline void save_cifar10(const LabeledDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write CIFAR batch file: " + path);
    std::vector<unsigned char> buf(kCifarRecordBytes);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        buf[0] = static_cast<unsigned char>(ds.labels[r]);
        const ImageTensor& img = ds.images[r];
        if (img.size() != kCifarPixelBytes)
            throw DimensionError("record " + std::to_string(r) + " is not 3x32x32");
        for (int i = 0; i < kCifarPixelBytes; ++i)
            buf[i + 1] = static_cast<unsigned char>(std::lround(img.pixels[i] * 255.0f));
        f.write(reinterpret_cast<const char*>(buf.data()), kCifarRecordBytes);
    }
    if (!f) throw Error("short write to " + path);
}

// --- Splits -----------------------------------------------------------------

struct SplitSpec {
    std::set<int> train_classes;          // empty = every class except held_out
    std::optional<int> held_out_class;
    std::uint64_t seed = 0;

    void validate() const {
        if (held_out_class && train_classes.count(*held_out_class))
            throw DomainError("held-out class also listed in train_classes");
    }
};

struct UnseenSplit {
    LabeledDataset train;
    LabeledDataset unseen_eval;
};

// Single-source split: keeps non-held-out records in `train` and every
// held-out record in `unseen_eval`. Record order is preserved in both.
inline UnseenSplit make_unseen_split(const LabeledDataset& ds, const SplitSpec& spec) {
    spec.validate();
    UnseenSplit out;
    out.train.num_classes = ds.num_classes;
    out.unseen_eval.num_classes = ds.num_classes;
    if (!spec.held_out_class) {
        out.train = ds;
        return out;
    }
    const int held = *spec.held_out_class;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const bool keep_in_train =
            ds.labels[i] != held &&
            (spec.train_classes.empty() || spec.train_classes.count(ds.labels[i]));
        if (ds.labels[i] == held) {
            out.unseen_eval.images.push_back(ds.images[i]);
            out.unseen_eval.labels.push_back(ds.labels[i]);
        } else if (keep_in_train) {
            out.train.images.push_back(ds.images[i]);
            out.train.labels.push_back(ds.labels[i]);
        }
    }
    if (out.unseen_eval.images.empty())
        throw DomainError("held-out class " + std::to_string(held) + " absent from dataset");
    return out;
}

// Paper protocol: train on the train source minus the held-out class, and
// evaluate "unseen" on the held-out class pooled from train and test sources
// (6000 images for CIFAR-10 class 9). pool_test_only restricts the unseen
// pool to the test source for stricter protocols.
inline UnseenSplit make_unseen_protocol(const LabeledDataset& train_src,
                                        const LabeledDataset& test_src,
                                        const SplitSpec& spec,
                                        bool pool_test_only = false) {
    spec.validate();
    if (!spec.held_out_class) throw DomainError("protocol split requires a held-out class");
    UnseenSplit from_train = make_unseen_split(train_src, spec);
    UnseenSplit from_test = make_unseen_split(test_src, spec);
    UnseenSplit out;
    out.train = std::move(from_train.train);
    out.unseen_eval.num_classes = train_src.num_classes;
    if (!pool_test_only) {
        out.unseen_eval = std::move(from_train.unseen_eval);
    } else {
        out.unseen_eval.num_classes = train_src.num_classes;
    }
    for (std::size_t i = 0; i < from_test.unseen_eval.size(); ++i) {
        out.unseen_eval.images.push_back(from_test.unseen_eval.images[i]);
        out.unseen_eval.labels.push_back(from_test.unseen_eval.labels[i]);
    }
    return out;
}

// Deterministic per-class subsample, used for desk-scale runs.
inline LabeledDataset take_per_class(const LabeledDataset& ds, int per_class, std::uint64_t seed) {
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    Rng rng = make_rng(seed);
    std::vector<std::size_t> chosen;
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t take = std::min<std::size_t>(per_class, idx.size());
        chosen.insert(chosen.end(), idx.begin(), idx.begin() + take);
    }
    std::sort(chosen.begin(), chosen.end());
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    for (std::size_t i : chosen) {
        out.images.push_back(ds.images[i]);
        out.labels.push_back(ds.labels[i]);
    }
    return out;
}

inline LabeledDataset select_records(const LabeledDataset& ds, const std::vector<std::size_t>& indices) {
    LabeledDataset out;
    out.num_classes = ds.num_classes;
    for (std::size_t i : indices) {
        if (i >= ds.size()) throw DimensionError("record index out of range: " + std::to_string(i));
        out.images.push_back(ds.images[i]);
        out.labels.push_back(ds.labels[i]);
    }
    return out;
}

// --- Split manifest ---------------------------------------------------------
//
// A manifest pins a split to concrete batch files and record indices so that
// downstream stages (feature extraction, attacks, evaluation) can reproduce
// it exactly.

struct SplitManifest {
    std::vector<std::string> train_files;
    std::vector<std::string> test_files;
    std::optional<int> held_out_class;
    std::uint64_t seed = 0;
    std::vector<std::size_t> train_records;        // indices into concatenated train files
    std::vector<std::size_t> unseen_train_records; // held-out records from the train source
    std::vector<std::size_t> unseen_test_records;  // held-out records from the test source

    void save(const std::string& path) const {
        nlohmann::json j;
        j["train_files"] = train_files;
        j["test_files"] = test_files;
        if (held_out_class) j["held_out_class"] = *held_out_class;
        j["seed"] = seed;
        j["train_records"] = train_records;
        j["unseen_train_records"] = unseen_train_records;
        j["unseen_test_records"] = unseen_test_records;
        std::ofstream f(path);
        if (!f) throw Error("cannot write manifest: " + path);
        f << j.dump(2) << "\n";
    }

    static SplitManifest load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw Error("cannot open manifest: " + path);
        nlohmann::json j;
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("bad manifest " + path + ": " + e.what());
        }
        SplitManifest m;
        m.train_files = j.at("train_files").get<std::vector<std::string>>();
        m.test_files = j.value("test_files", std::vector<std::string>{});
        if (j.contains("held_out_class")) m.held_out_class = j["held_out_class"].get<int>();
        m.seed = j.value("seed", std::uint64_t{0});
        m.train_records = j.at("train_records").get<std::vector<std::size_t>>();
        m.unseen_train_records = j.value("unseen_train_records", std::vector<std::size_t>{});
        m.unseen_test_records = j.value("unseen_test_records", std::vector<std::size_t>{});
        return m;
    }
};

// Builds a manifest from loaded sources. per_class_cap (0 = no cap) subsamples
// the train split deterministically for desk-scale work.
inline SplitManifest build_manifest(const std::vector<std::string>& train_files,
                                    const std::vector<std::string>& test_files,
                                    const LabeledDataset& train_src,
                                    const LabeledDataset& test_src,
                                    const SplitSpec& spec,
                                    int per_class_cap = 0) {
    spec.validate();
    SplitManifest m;
    m.train_files = train_files;
    m.test_files = test_files;
    m.held_out_class = spec.held_out_class;
    m.seed = spec.seed;

    std::vector<std::vector<std::size_t>> by_class(train_src.num_classes);
    for (std::size_t i = 0; i < train_src.size(); ++i) {
        const int l = train_src.labels[i];
        if (spec.held_out_class && l == *spec.held_out_class) {
            m.unseen_train_records.push_back(i);
            continue;
        }
        if (!spec.train_classes.empty() && !spec.train_classes.count(l)) continue;
        by_class[l].push_back(i);
    }
    Rng rng = make_rng(spec.seed);
    for (auto& idx : by_class) {
        if (per_class_cap > 0 && idx.size() > static_cast<std::size_t>(per_class_cap)) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(per_class_cap);
            std::sort(idx.begin(), idx.end());
        }
        m.train_records.insert(m.train_records.end(), idx.begin(), idx.end());
    }
    std::sort(m.train_records.begin(), m.train_records.end());
    if (spec.held_out_class) {
        for (std::size_t i = 0; i < test_src.size(); ++i)
            if (test_src.labels[i] == *spec.held_out_class) m.unseen_test_records.push_back(i);
    }
    return m;
}

}  // namespace unicad

#endif
