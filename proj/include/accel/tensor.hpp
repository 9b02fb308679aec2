#pragma once

#include <cstdint>
#include <vector>

#include "accel/error.hpp"
#include "accel/fixed_point.hpp"

namespace accel {

// Dense feature map. Storage order is x-major, then y, then channel:
// offset(x, y, c) = (x * size_y + y) * channels + c.
struct Tensor3 {
    int size_x = 0;
    int size_y = 0;
    int channels = 0;
    std::vector<fixed8> data;

    Tensor3() = default;
    Tensor3(int sx, int sy, int ch)
        : size_x(sx), size_y(sy), channels(ch),
          data(size_t(sx) * size_t(sy) * size_t(ch), 0) {}

    size_t index(int x, int y, int c) const {
        return (size_t(x) * size_y + y) * channels + c;
    }
    fixed8 at(int x, int y, int c) const { return data[index(x, y, c)]; }
    fixed8& at(int x, int y, int c) { return data[index(x, y, c)]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor3& o) const {
        return size_x == o.size_x && size_y == o.size_y && channels == o.channels;
    }
};

// 4-D kernel bank. Storage order: kernel x, kernel y, input channel, output
// channel: offset(kx, ky, g, f) = ((kx * k_y + ky) * in_channels + g) * out_channels + f.
struct Tensor4 {
    int k_x = 0;
    int k_y = 0;
    int in_channels = 0;
    int out_channels = 0;
    std::vector<fixed8> data;

    Tensor4() = default;
    Tensor4(int kx, int ky, int in_ch, int out_ch)
        : k_x(kx), k_y(ky), in_channels(in_ch), out_channels(out_ch),
          data(size_t(kx) * size_t(ky) * size_t(in_ch) * size_t(out_ch), 0) {}

    size_t index(int kx, int ky, int g, int f) const {
        return ((size_t(kx) * k_y + ky) * in_channels + g) * out_channels + f;
    }
    fixed8 at(int kx, int ky, int g, int f) const { return data[index(kx, ky, g, f)]; }
    fixed8& at(int kx, int ky, int g, int f) { return data[index(kx, ky, g, f)]; }

    size_t size() const { return data.size(); }
    bool same_shape(const Tensor4& o) const {
        return k_x == o.k_x && k_y == o.k_y && in_channels == o.in_channels &&
               out_channels == o.out_channels;
    }
};

// Per-output-channel bias, stored in the weight format.
using BiasVector = std::vector<fixed8>;

// Zero-pad a square feature map on all sides.
inline Tensor3 pad_tensor(const Tensor3& in, int pad) {
    if (pad < 0) throw ShapeError("negative padding");
    if (pad == 0) return in;
    Tensor3 out(in.size_x + 2 * pad, in.size_y + 2 * pad, in.channels);
    for (int x = 0; x < in.size_x; ++x)
        for (int y = 0; y < in.size_y; ++y)
            for (int c = 0; c < in.channels; ++c)
                out.at(x + pad, y + pad, c) = in.at(x, y, c);
    return out;
}

} // namespace accel
