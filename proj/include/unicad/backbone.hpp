#ifndef UNICAD_BACKBONE_HPP
#define UNICAD_BACKBONE_HPP

#include <memory>
#include <string>
#include <vector>

#include "unicad/oracle.hpp"
#include "unicad/small_cnn.hpp"

namespace unicad {

struct BackboneInfo {
    std::string name;
    int feature_dim;
    bool constructible;
    std::string note;
};

inline const std::vector<BackboneInfo>& backbone_registry() {
    static const std::vector<BackboneInfo> table = {
        {"vgg16", 4096, false,
         "requires pretrained weights that are not bundled with this repository"},
        {"dinov2", 1536, false,
         "requires pretrained weights that are not bundled with this repository"},
        {"small", 64, true, "desk-scale CNN trained locally; weights_path points to a "
                            "file produced by the train-backbone command"},
    };
    return table;
}

inline const BackboneInfo& backbone_info(const std::string& name) {
    for (const auto& e : backbone_registry())
        if (e.name == name) return e;
    std::string known;
    for (const auto& e : backbone_registry()) {
        if (!known.empty()) known += ", ";
        known += e.name;
    }
    throw DomainError("unknown backbone '" + name + "'; known backbones: " + known);
}

inline std::unique_ptr<ModelOracle> make_backbone(const std::string& name,
                                                  const std::string& weights_path) {
    const auto& info = backbone_info(name);
    if (!info.constructible)
        throw DomainError("backbone '" + name + "' (feature_dim " +
                          std::to_string(info.feature_dim) + ") " + info.note +
                          "; use the 'small' backbone instead");
    if (weights_path.empty())
        throw DomainError("backbone 'small' needs a weights file; run train-backbone first");
    return std::make_unique<SmallCnnOracle>(SmallCnnOracle::load(weights_path));
}

}  // namespace unicad

#endif
