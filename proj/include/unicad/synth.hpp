#ifndef UNICAD_SYNTH_HPP
#define UNICAD_SYNTH_HPP

#include <cmath>

#include "unicad/dataset.hpp"

namespace unicad {

// Deterministic 10-class texture dataset packed into the CIFAR-10 shape.
// Classes share a muted palette and differ mainly by oriented texture at one
// of two frequencies; per-image phase, orientation, brightness and pixel
// noise keep the margins thin. Used wherever real CIFAR-10 batches are not
// available (dataset downloads are out of scope).

namespace detail {

inline const float kPalette[10][3] = {
    {0.85f, 0.20f, 0.20f}, {0.20f, 0.70f, 0.25f}, {0.20f, 0.35f, 0.85f},
    {0.85f, 0.75f, 0.20f}, {0.65f, 0.25f, 0.75f}, {0.20f, 0.75f, 0.75f},
    {0.90f, 0.50f, 0.15f}, {0.55f, 0.55f, 0.55f}, {0.35f, 0.20f, 0.10f},
    {0.90f, 0.30f, 0.60f},
};

inline constexpr float kTint = 0.10f;      // class color signal on the grey base
inline constexpr float kContrast = 0.22f;  // texture amplitude between c1 and c2

}  // namespace detail

inline ImageTensor make_synthetic_image(int class_id, Rng& rng) {
    std::uniform_real_distribution<float> uphase(0.0f, 6.2831853f);
    std::uniform_real_distribution<float> ujit(-0.2f, 0.2f);
    std::uniform_real_distribution<float> ubright(0.90f, 1.05f);
    std::uniform_real_distribution<float> ucolor(-0.04f, 0.04f);
    std::normal_distribution<float> noise(0.0f, 0.06f);

    const int pattern = class_id % 5;
    const float freq = (class_id < 5) ? 0.22f : 0.45f;
    const float phase = uphase(rng);
    const float phase2 = uphase(rng);
    const float tilt = ujit(rng);
    const float cx = 15.5f + 8.0f * ujit(rng) * 5.0f;
    const float cy = 15.5f + 8.0f * ujit(rng) * 5.0f;
    const float bright = ubright(rng);

    float c1[3], c2[3];
    for (int ch = 0; ch < 3; ++ch) {
        const float tint = detail::kTint * (detail::kPalette[class_id][ch] - 0.5f);
        c1[ch] = 0.55f + tint + detail::kContrast * 0.5f + ucolor(rng);
        c2[ch] = 0.55f + tint - detail::kContrast * 0.5f + ucolor(rng);
    }

    ImageTensor img(3, 32, 32);
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            float t;
            switch (pattern) {
                case 0: t = std::sin(freq * (y + tilt * x) + phase); break;
                case 1: t = std::sin(freq * (x + tilt * y) + phase); break;
                case 2: t = std::sin(freq * 0.7071f * (x + y) + phase); break;
                case 3: t = std::sin(freq * x + phase) * std::sin(freq * y + phase2); break;
                default: {
                    const float r = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
                    t = std::sin(freq * r + phase);
                }
            }
            t = 0.5f + 0.5f * t;
            for (int ch = 0; ch < 3; ++ch) {
                float v = bright * (t * c1[ch] + (1.0f - t) * c2[ch]) + noise(rng);
                v = std::clamp(v, 0.0f, 1.0f);
                // land on the byte grid so binary round-trips are exact
                img.at(ch, y, x) = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
            }
        }
    }
    return img;
}

inline LabeledDataset make_synthetic_cifar(int per_class, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    LabeledDataset ds;
    ds.num_classes = kCifarClasses;
    // interleave classes so any prefix of the record stream is balanced
    for (int i = 0; i < per_class; ++i) {
        for (int c = 0; c < kCifarClasses; ++c) {
            ds.images.push_back(make_synthetic_image(c, rng));
            ds.labels.push_back(c);
        }
    }
    return ds;
}

}  // namespace unicad

#endif
