#ifndef UNICAD_FEATURE_CACHE_HPP
#define UNICAD_FEATURE_CACHE_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unicad/dataset.hpp"
#include "unicad/oracle.hpp"

// On-disk feature matrix: header-less little-endian float32, row-major, one
// row per image, with a JSON sidecar describing shape and provenance. The
// matrix lives in <stem>.f32 and the sidecar in <stem>.json.

namespace unicad {

struct FeatureCache {
    std::string backbone;
    std::string split_id;
    int feature_dim = 0;
    std::vector<int> labels;
    std::vector<float> data;  // labels.size() x feature_dim

    int count() const { return static_cast<int>(labels.size()); }
    const float* row(int i) const {
        return data.data() + static_cast<std::size_t>(i) * feature_dim;
    }

    void save(const std::string& stem) const {
        {
            std::ofstream os(stem + ".f32", std::ios::binary);
            if (!os) throw FormatError("cannot open " + stem + ".f32 for writing");
            os.write(reinterpret_cast<const char*>(data.data()),
                     static_cast<std::streamsize>(data.size() * sizeof(float)));
            if (!os) throw FormatError("failed writing " + stem + ".f32");
        }
        nlohmann::json j;
        j["backbone"] = backbone;
        j["split_id"] = split_id;
        j["feature_dim"] = feature_dim;
        j["count"] = count();
        j["labels"] = labels;
        std::ofstream os(stem + ".json");
        if (!os) throw FormatError("cannot open " + stem + ".json for writing");
        os << j.dump(2) << "\n";
    }

    static FeatureCache load(const std::string& stem) {
        std::ifstream js(stem + ".json");
        if (!js) throw FormatError("cannot open " + stem + ".json");
        nlohmann::json j;
        try {
            js >> j;
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(stem + ".json is not valid JSON: " + e.what());
        }
        FeatureCache fc;
        fc.backbone = j.at("backbone").get<std::string>();
        fc.split_id = j.at("split_id").get<std::string>();
        fc.feature_dim = j.at("feature_dim").get<int>();
        fc.labels = j.at("labels").get<std::vector<int>>();
        if (fc.feature_dim <= 0) throw FormatError("sidecar feature_dim must be positive");
        if (j.at("count").get<int>() != fc.count())
            throw FormatError("sidecar count disagrees with labels array");

        const auto path = stem + ".f32";
        const auto want = static_cast<std::uintmax_t>(fc.labels.size()) *
                          fc.feature_dim * sizeof(float);
        std::error_code ec;
        const auto have = std::filesystem::file_size(path, ec);
        if (ec) throw FormatError("cannot stat " + path);
        if (have != want)
            throw FormatError(path + " holds " + std::to_string(have) +
                              " bytes, sidecar implies " + std::to_string(want));
        std::ifstream is(path, std::ios::binary);
        if (!is) throw FormatError("cannot open " + path);
        fc.data.resize(fc.labels.size() * static_cast<std::size_t>(fc.feature_dim));
        is.read(reinterpret_cast<char*>(fc.data.data()),
                static_cast<std::streamsize>(fc.data.size() * sizeof(float)));
        if (!is) throw FormatError("failed reading " + path);
        return fc;
    }
};

inline FeatureCache extract_features(ModelOracle& oracle, const LabeledDataset& ds,
                                     const std::string& split_id) {
    if (ds.images.empty()) throw DomainError("cannot extract features from an empty set");
    FeatureCache fc;
    fc.backbone = oracle.name();
    fc.split_id = split_id;
    fc.feature_dim = oracle.feature_dim();
    fc.labels = ds.labels;
    fc.data.resize(ds.images.size() * static_cast<std::size_t>(fc.feature_dim));
    oracle.features_batch(ds.images.data(), static_cast<int>(ds.images.size()),
                          fc.data.data());
    return fc;
}

}  // namespace unicad

#endif
