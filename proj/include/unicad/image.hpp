#ifndef UNICAD_IMAGE_HPP
#define UNICAD_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "unicad/common.hpp"

namespace unicad {

// Planar CHW image with values in [0,1]. CIFAR-10 images are 3x32x32 with
// channel order R,G,B; the denoiser and the toy test fixtures also use
// smaller shapes.
struct ImageTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;  // channels*height*width, plane-major

    ImageTensor() = default;
    ImageTensor(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w),
          pixels(static_cast<std::size_t>(c) * h * w, fill) {}

    int size() const { return channels * height * width; }

    float& at(int c, int y, int x) {
        return pixels[static_cast<std::size_t>(c) * height * width + static_cast<std::size_t>(y) * width + x];
    }
    float at(int c, int y, int x) const {
        return pixels[static_cast<std::size_t>(c) * height * width + static_cast<std::size_t>(y) * width + x];
    }

    bool same_shape(const ImageTensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

inline ImageTensor clamp01(ImageTensor img) {
    for (float& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

inline float linf_distance(const ImageTensor& a, const ImageTensor& b) {
    float m = 0.0f;
    for (std::size_t i = 0; i < a.pixels.size(); ++i)
        m = std::max(m, std::abs(a.pixels[i] - b.pixels[i]));
    return m;
}

inline double l2_distance(const ImageTensor& a, const ImageTensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace unicad

#endif
