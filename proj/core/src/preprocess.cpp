#include <algorithm>
#include <cmath>
#include <string>

#include "mdb/error.hpp"
#include "mdb/rng.hpp"
#include "mdb/synthgrid.hpp"

namespace mdb {

void PreprocessSpec::validate() const {
    if (target_size < 1) throw ArgumentError("target_size must be >= 1");
    if (!(random_translate_max >= 0.0 && random_translate_max <= 0.5)) {
        throw ArgumentError("random_translate_max must lie in [0, 0.5]");
    }
}

Image resize_bilinear(const Image& in, int out_h, int out_w) {
    if (in.height == out_h && in.width == out_w) return in;
    Image out(in.channels, out_h, out_w);
    const double sy = static_cast<double>(in.height) / out_h;
    const double sx = static_cast<double>(in.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, in.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, in.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < in.channels; ++c) {
                const double top = in.at(c, y0, x0) * (1.0 - wx) + in.at(c, y0, x1) * wx;
                const double bot = in.at(c, y1, x0) * (1.0 - wx) + in.at(c, y1, x1) * wx;
                out.at(c, y, x) = static_cast<float>(std::clamp(top * (1.0 - wy) + bot * wy, 0.0, 1.0));
            }
        }
    }
    return out;
}

Image center_crop_square(const Image& in) {
    const int side = std::min(in.height, in.width);
    if (in.height == in.width) return in;
    const int oy = (in.height - side) / 2;
    const int ox = (in.width - side) / 2;
    Image out(in.channels, side, side);
    for (int c = 0; c < in.channels; ++c)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) out.at(c, y, x) = in.at(c, y + oy, x + ox);
    return out;
}

Image translate(const Image& in, int dx, int dy) {
    if (dx == 0 && dy == 0) return in;
    Image out(in.channels, in.height, in.width, 0.0f);
    for (int c = 0; c < in.channels; ++c) {
        for (int y = 0; y < in.height; ++y) {
            const int sy = y - dy;
            if (sy < 0 || sy >= in.height) continue;
            for (int x = 0; x < in.width; ++x) {
                const int sx = x - dx;
                if (sx < 0 || sx >= in.width) continue;
                out.at(c, y, x) = in.at(c, sy, sx);
            }
        }
    }
    return out;
}

int translation_offset(double u, double translate_max, int size) {
    return static_cast<int>(std::floor(u * translate_max * size));
}

Sample preprocess(const Sample& sample, const PreprocessSpec& spec, PreprocessMode mode,
                  std::uint64_t draw) {
    spec.validate();
    Sample out;
    out.class_id = sample.class_id;
    out.domain_id = sample.domain_id;
    out.uid = sample.uid;
    const Image& src = sample.pixels;
    out.pixels = spec.center_crop ? center_crop_square(src) : src;
    out.pixels = resize_bilinear(out.pixels, spec.target_size, spec.target_size);
    if (mode == PreprocessMode::Train && spec.random_translate_max > 0.0) {
        SplitMix64 rng(stream_key(spec.augment_seed, {tag(StreamTag::Augment), sample.uid, draw}));
        const int dx = translation_offset(rng.uniform_closed(), spec.random_translate_max, spec.target_size);
        const int dy = translation_offset(rng.uniform_closed(), spec.random_translate_max, spec.target_size);
        out.pixels = translate(out.pixels, dx, dy);
    }
    return out;
}

}  // namespace mdb
