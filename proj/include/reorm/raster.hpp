#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace reorm {

// 8-bit RGB raster, row-major, 3 samples per pixel. Immutable by
// convention once constructed; operations return new values.
class Image {
public:
    Image() = default;
    Image(int width, int height);
    Image(int width, int height, std::vector<std::uint8_t> data);

    int width() const { return width_; }
    int height() const { return height_; }
    static constexpr int channels = 3;

    const std::vector<std::uint8_t>& data() const { return data_; }
    std::vector<std::uint8_t>& data() { return data_; }

    std::uint8_t* pixel(int x, int y) { return data_.data() + 3 * (std::size_t(y) * width_ + x); }
    const std::uint8_t* pixel(int x, int y) const {
        return data_.data() + 3 * (std::size_t(y) * width_ + x);
    }

    void fill(std::uint8_t r, std::uint8_t g, std::uint8_t b);

    bool same_size(const Image& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }
    bool operator==(const Image& other) const = default;

    // Digest of dimensions plus raw samples; stable across platforms.
    std::string digest() const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

// Binary raster, one byte per pixel, values restricted to {0,1}.
// 0 = keep, 1 = remove.
class Mask {
public:
    Mask() = default;
    Mask(int width, int height);
    Mask(int width, int height, std::vector<std::uint8_t> data);

    int width() const { return width_; }
    int height() const { return height_; }

    const std::vector<std::uint8_t>& data() const { return data_; }
    std::vector<std::uint8_t>& data() { return data_; }

    std::uint8_t at(int x, int y) const { return data_[std::size_t(y) * width_ + x]; }
    void set(int x, int y, std::uint8_t v) { data_[std::size_t(y) * width_ + x] = v; }

    std::size_t count_set() const;
    bool empty_mask() const { return count_set() == 0; }

    bool same_size(const Mask& other) const {
        return width_ == other.width_ && height_ == other.height_;
    }
    bool operator==(const Mask& other) const = default;

    std::string digest() const;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

// Pixel is set iff set in any input. The reference dimensions allow an
// empty list; every mask must match them.
Mask mask_union(std::span<const Mask> masks, int width, int height);

// Dilation with a square structuring element of side 2*radius+1.
Mask mask_dilate(const Mask& mask, int radius);

// |a∩b| / |a∪b|; 1.0 when both masks are empty.
double mask_iou(const Mask& a, const Mask& b);

// True iff every set pixel of `inner` is set in `outer`.
bool mask_subset(const Mask& inner, const Mask& outer);

Mask mask_intersect(const Mask& a, const Mask& b);

// Bilinear resample. Used to honor reasoner input size limits; masks are
// always produced at the original resolution.
Image resize_bilinear(const Image& src, int new_width, int new_height);

// Downscale so the longest side is at most `limit`, preserving aspect
// ratio. Returns the input unchanged when it already fits.
Image downscale_longest_side(const Image& src, int limit);

} // namespace reorm
