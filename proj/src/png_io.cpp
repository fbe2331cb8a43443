#include "reorm/png_io.hpp"

#include "reorm/error.hpp"
#include "reorm/util.hpp"

#include <zlib.h>

#include <cstring>

namespace reorm {

namespace {

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::uint8_t* data, std::size_t len) {
    put_u32(out, std::uint32_t(len));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data, data + len);
    std::uint32_t crc = std::uint32_t(
        crc32(0, out.data() + crc_start, uInt(out.size() - crc_start)));
    put_u32(out, crc);
}

std::vector<std::uint8_t> zlib_compress(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<std::uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        raise(Errc::internal_error, "png: deflate failed");
    out.resize(bound);
    return out;
}

std::vector<std::uint8_t> zlib_decompress(const std::vector<std::uint8_t>& comp,
                                          std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf len = uLongf(expected);
    int rc = uncompress(out.data(), &len, comp.data(), uLong(comp.size()));
    if (rc != Z_OK || len != expected)
        raise(Errc::format_error, "png: corrupt compressed data");
    return out;
}

std::vector<std::uint8_t> encode(int width, int height, int channels,
                                 const std::uint8_t* samples) {
    std::size_t stride = std::size_t(width) * channels;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * height);
    for (int y = 0; y < height; ++y) {
        raw.push_back(0); // filter: none
        raw.insert(raw.end(), samples + y * stride, samples + (y + 1) * stride);
    }
    std::vector<std::uint8_t> idat = zlib_compress(raw);

    std::vector<std::uint8_t> out(kSignature, kSignature + 8);
    std::uint8_t ihdr[13];
    ihdr[0] = std::uint8_t(std::uint32_t(width) >> 24);
    ihdr[1] = std::uint8_t(std::uint32_t(width) >> 16);
    ihdr[2] = std::uint8_t(std::uint32_t(width) >> 8);
    ihdr[3] = std::uint8_t(width);
    ihdr[4] = std::uint8_t(std::uint32_t(height) >> 24);
    ihdr[5] = std::uint8_t(std::uint32_t(height) >> 16);
    ihdr[6] = std::uint8_t(std::uint32_t(height) >> 8);
    ihdr[7] = std::uint8_t(height);
    ihdr[8] = 8;                                   // bit depth
    ihdr[9] = std::uint8_t(channels == 3 ? 2 : 0); // color type
    ihdr[10] = 0;                                  // compression
    ihdr[11] = 0;                                  // filter method
    ihdr[12] = 0;                                  // no interlace
    append_chunk(out, "IHDR", ihdr, sizeof(ihdr));
    append_chunk(out, "IDAT", idat.data(), idat.size());
    append_chunk(out, "IEND", nullptr, 0);
    return out;
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

struct Decoded {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> samples;
};

Decoded decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        raise(Errc::format_error, "png: bad signature");

    Decoded d;
    int bit_depth = 0, color_type = -1;
    std::vector<std::uint8_t> idat;
    bool saw_ihdr = false, saw_iend = false;
    std::size_t pos = 8;
    while (pos + 8 <= bytes.size() && !saw_iend) {
        std::uint32_t len = get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size())
            raise(Errc::format_error, "png: truncated chunk");
        const std::uint8_t* type = bytes.data() + pos + 4;
        const std::uint8_t* data = bytes.data() + pos + 8;
        std::uint32_t stored_crc = get_u32(data + len);
        std::uint32_t actual_crc = std::uint32_t(crc32(0, type, uInt(4 + len)));
        if (stored_crc != actual_crc) raise(Errc::format_error, "png: chunk crc mismatch");

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) raise(Errc::format_error, "png: bad IHDR");
            d.width = int(get_u32(data));
            d.height = int(get_u32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0)
                raise(Errc::format_error, "png: interlaced files are not supported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        // ancillary chunks are skipped
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend) raise(Errc::format_error, "png: missing IHDR or IEND");
    if (d.width < 1 || d.height < 1) raise(Errc::format_error, "png: bad dimensions");
    if (bit_depth == 16) raise(Errc::format_error, "png: 16-bit samples are rejected");
    if (bit_depth != 8) raise(Errc::format_error, "png: only 8-bit samples are supported");
    if (color_type == 4 || color_type == 6)
        raise(Errc::format_error, "png: alpha channels are rejected");
    if (color_type == 3) raise(Errc::format_error, "png: palette images are rejected");
    if (color_type != 0 && color_type != 2)
        raise(Errc::format_error, "png: unsupported color type");
    d.channels = color_type == 2 ? 3 : 1;

    std::size_t stride = std::size_t(d.width) * d.channels;
    std::vector<std::uint8_t> raw =
        zlib_decompress(idat, (stride + 1) * std::size_t(d.height));

    d.samples.assign(stride * d.height, 0);
    const int bpp = d.channels;
    for (int y = 0; y < d.height; ++y) {
        const std::uint8_t* in = raw.data() + std::size_t(y) * (stride + 1);
        std::uint8_t filter = in[0];
        ++in;
        std::uint8_t* cur = d.samples.data() + std::size_t(y) * stride;
        const std::uint8_t* prev = y > 0 ? cur - stride : nullptr;
        for (std::size_t x = 0; x < stride; ++x) {
            int a = x >= std::size_t(bpp) ? cur[x - bpp] : 0;
            int b = prev ? prev[x] : 0;
            int c = (prev && x >= std::size_t(bpp)) ? prev[x - bpp] : 0;
            int v = in[x];
            switch (filter) {
            case 0: break;
            case 1: v += a; break;
            case 2: v += b; break;
            case 3: v += (a + b) / 2; break;
            case 4: v += paeth(a, b, c); break;
            default: raise(Errc::format_error, "png: unknown filter type");
            }
            cur[x] = std::uint8_t(v);
        }
    }
    return d;
}

} // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
    return encode(image.width(), image.height(), 3, image.data().data());
}

std::vector<std::uint8_t> encode_png(const Mask& mask) {
    std::vector<std::uint8_t> gray(mask.data().size());
    for (std::size_t i = 0; i < gray.size(); ++i)
        gray[i] = mask.data()[i] ? 255 : 0;
    return encode(mask.width(), mask.height(), 1, gray.data());
}

Image decode_image_png(std::span<const std::uint8_t> bytes) {
    Decoded d = decode(bytes);
    if (d.channels != 3)
        raise(Errc::format_error, "png: expected an RGB image, got grayscale");
    return Image(d.width, d.height, std::move(d.samples));
}

Mask decode_mask_png(std::span<const std::uint8_t> bytes) {
    Decoded d = decode(bytes);
    if (d.channels != 1)
        raise(Errc::format_error, "png: expected a grayscale mask, got RGB");
    for (auto& v : d.samples) {
        if (v != 0 && v != 255)
            raise(Errc::format_error, "png: mask samples must be 0 or 255");
        v = v ? 1 : 0;
    }
    return Mask(d.width, d.height, std::move(d.samples));
}

Image load_image_png(const std::string& path) {
    auto bytes = read_file_bytes(path);
    try {
        return decode_image_png(bytes);
    } catch (const Error& e) {
        raise(e.code(), path + ": " + e.what());
    }
}

Mask load_mask_png(const std::string& path) {
    auto bytes = read_file_bytes(path);
    try {
        return decode_mask_png(bytes);
    } catch (const Error& e) {
        raise(e.code(), path + ": " + e.what());
    }
}

void save_png(const std::string& path, const Image& image) {
    auto bytes = encode_png(image);
    write_file_bytes(path, bytes);
}

void save_png(const std::string& path, const Mask& mask) {
    auto bytes = encode_png(mask);
    write_file_bytes(path, bytes);
}

} // namespace reorm
