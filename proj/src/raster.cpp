#include "reorm/raster.hpp"

#include "reorm/error.hpp"
#include "reorm/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace reorm {

Image::Image(int width, int height) : width_(width), height_(height) {
    if (width < 1 || height < 1)
        raise(Errc::invalid_argument, "image dimensions must be at least 1x1");
    data_.assign(std::size_t(width) * height * 3, 0);
}

Image::Image(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1)
        raise(Errc::invalid_argument, "image dimensions must be at least 1x1");
    if (data_.size() != std::size_t(width) * height * 3)
        raise(Errc::invalid_argument, "image buffer size does not match dimensions");
}

void Image::fill(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (std::size_t i = 0; i + 2 < data_.size(); i += 3) {
        data_[i] = r;
        data_[i + 1] = g;
        data_[i + 2] = b;
    }
}

std::string Image::digest() const {
    std::vector<std::uint8_t> buf;
    buf.reserve(8 + data_.size());
    for (int v : {width_, height_}) {
        for (int i = 0; i < 4; ++i) buf.push_back(std::uint8_t(std::uint32_t(v) >> (8 * i)));
    }
    buf.insert(buf.end(), data_.begin(), data_.end());
    return sha256_hex(buf);
}

Mask::Mask(int width, int height) : width_(width), height_(height) {
    if (width < 1 || height < 1)
        raise(Errc::invalid_argument, "mask dimensions must be at least 1x1");
    data_.assign(std::size_t(width) * height, 0);
}

Mask::Mask(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1)
        raise(Errc::invalid_argument, "mask dimensions must be at least 1x1");
    if (data_.size() != std::size_t(width) * height)
        raise(Errc::invalid_argument, "mask buffer size does not match dimensions");
    for (std::uint8_t v : data_) {
        if (v > 1) raise(Errc::invalid_argument, "mask samples must be 0 or 1");
    }
}

std::string Mask::digest() const {
    std::vector<std::uint8_t> buf;
    buf.reserve(8 + data_.size());
    for (int v : {width_, height_}) {
        for (int i = 0; i < 4; ++i) buf.push_back(std::uint8_t(std::uint32_t(v) >> (8 * i)));
    }
    buf.insert(buf.end(), data_.begin(), data_.end());
    return sha256_hex(buf);
}

std::size_t Mask::count_set() const {
    std::size_t n = 0;
    for (std::uint8_t v : data_) n += v;
    return n;
}

Mask mask_union(std::span<const Mask> masks, int width, int height) {
    Mask out(width, height);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const Mask& m = masks[i];
        if (m.width() != width || m.height() != height)
            raise(Errc::dimension_mismatch,
                  "mask_union: mask at index " + std::to_string(i) + " is " +
                      std::to_string(m.width()) + "x" + std::to_string(m.height()) +
                      ", expected " + std::to_string(width) + "x" + std::to_string(height));
        for (std::size_t k = 0; k < out.data().size(); ++k)
            out.data()[k] |= m.data()[k];
    }
    return out;
}

Mask mask_dilate(const Mask& mask, int radius) {
    if (radius < 0) raise(Errc::invalid_argument, "mask_dilate: radius must be nonnegative");
    if (radius == 0) return mask;
    const int w = mask.width(), h = mask.height();
    // Separable: horizontal run-max, then vertical.
    Mask tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
            for (int k = x0; k <= x1 && !v; ++k) v = mask.at(k, y);
            tmp.set(x, y, v);
        }
    }
    Mask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
            for (int k = y0; k <= y1 && !v; ++k) v = tmp.at(x, k);
            out.set(x, y, v);
        }
    }
    return out;
}

double mask_iou(const Mask& a, const Mask& b) {
    if (!a.same_size(b))
        raise(Errc::dimension_mismatch, "mask_iou: dimension mismatch");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        inter += a.data()[i] & b.data()[i];
        uni += a.data()[i] | b.data()[i];
    }
    if (uni == 0) return 1.0; // both empty: they agree nothing is removed
    return double(inter) / double(uni);
}

bool mask_subset(const Mask& inner, const Mask& outer) {
    if (!inner.same_size(outer))
        raise(Errc::dimension_mismatch, "mask_subset: dimension mismatch");
    for (std::size_t i = 0; i < inner.data().size(); ++i) {
        if (inner.data()[i] && !outer.data()[i]) return false;
    }
    return true;
}

Mask mask_intersect(const Mask& a, const Mask& b) {
    if (!a.same_size(b))
        raise(Errc::dimension_mismatch, "mask_intersect: dimension mismatch");
    Mask out(a.width(), a.height());
    for (std::size_t i = 0; i < a.data().size(); ++i)
        out.data()[i] = a.data()[i] & b.data()[i];
    return out;
}

Image resize_bilinear(const Image& src, int new_width, int new_height) {
    if (new_width < 1 || new_height < 1)
        raise(Errc::invalid_argument, "resize: target dimensions must be at least 1x1");
    if (new_width == src.width() && new_height == src.height()) return src;
    Image out(new_width, new_height);
    const double sx = double(src.width()) / new_width;
    const double sy = double(src.height()) / new_height;
    for (int y = 0; y < new_height; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        int y0 = int(std::floor(fy));
        double wy = fy - y0;
        int y1 = std::min(y0 + 1, src.height() - 1);
        y0 = std::clamp(y0, 0, src.height() - 1);
        for (int x = 0; x < new_width; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            int x0 = int(std::floor(fx));
            double wx = fx - x0;
            int x1 = std::min(x0 + 1, src.width() - 1);
            x0 = std::clamp(x0, 0, src.width() - 1);
            const std::uint8_t* p00 = src.pixel(x0, y0);
            const std::uint8_t* p10 = src.pixel(x1, y0);
            const std::uint8_t* p01 = src.pixel(x0, y1);
            const std::uint8_t* p11 = src.pixel(x1, y1);
            std::uint8_t* q = out.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                double top = p00[c] * (1.0 - wx) + p10[c] * wx;
                double bot = p01[c] * (1.0 - wx) + p11[c] * wx;
                double v = top * (1.0 - wy) + bot * wy;
                q[c] = std::uint8_t(std::clamp(int(std::lround(v)), 0, 255));
            }
        }
    }
    return out;
}

Image downscale_longest_side(const Image& src, int limit) {
    if (limit < 1) raise(Errc::invalid_argument, "downscale: limit must be positive");
    int longest = std::max(src.width(), src.height());
    if (longest <= limit) return src;
    double scale = double(limit) / longest;
    int nw = std::max(1, int(std::lround(src.width() * scale)));
    int nh = std::max(1, int(std::lround(src.height() * scale)));
    return resize_bilinear(src, nw, nh);
}

} // namespace reorm
