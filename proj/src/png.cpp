#include "cpat/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

// Minimal PNG container handling; zlib does the compression. Chunk layout,
// scanline filters and the RGB/RGBA color types are implemented here so
// that error reporting stays precise.

namespace cpat {

namespace {

constexpr uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

uint32_t be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) |
           uint32_t(p[3]);
}

void put_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    const size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uint32_t crc = crc32(crc32(0, out.data() + type_at, 4),
                               payload.data(), static_cast<uInt>(payload.size()));
    put_be32(out, crc);
}

std::vector<uint8_t> zlib_inflate(const std::vector<uint8_t>& in, size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf out_len = static_cast<uLongf>(expected);
    const int rc = uncompress(out.data(), &out_len, in.data(), static_cast<uLong>(in.size()));
    if (rc != Z_OK) throw DataError(cat("png: IDAT stream failed to inflate (zlib rc ", rc, ")"));
    if (out_len != expected)
        throw DataError(cat("png: decompressed ", out_len, " bytes, expected ", expected));
    return out;
}

std::vector<uint8_t> zlib_deflate(const std::vector<uint8_t>& in) {
    uLongf bound = compressBound(static_cast<uLong>(in.size()));
    std::vector<uint8_t> out(bound);
    const int rc = compress2(out.data(), &bound, in.data(), static_cast<uLong>(in.size()), 6);
    if (rc != Z_OK) throw DataError(cat("png: deflate failed (zlib rc ", rc, ")"));
    out.resize(bound);
    return out;
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

} // namespace

ImageRGB decode_png(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw DataError("png: bad signature at offset 0");

    int64_t width = 0, height = 0;
    int bit_depth = 0, color_type = 0;
    bool saw_ihdr = false, saw_iend = false;
    std::vector<uint8_t> idat;

    size_t pos = 8;
    while (pos < bytes.size()) {
        if (pos + 8 > bytes.size())
            throw DataError(cat("png: truncated chunk header at offset ", pos));
        const uint32_t len = be32(&bytes[pos]);
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        if (pos + 12 + static_cast<size_t>(len) > bytes.size())
            throw DataError(cat("png: truncated chunk body at offset ", pos + 8));
        const uint8_t* data = &bytes[pos + 8];

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError(cat("png: IHDR length ", len, " at offset ", pos));
            width = be32(data);
            height = be32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            if (width <= 0 || height <= 0)
                throw DataError(cat("png: bad dimensions ", width, "x", height));
            if (bit_depth != 8)
                throw DataError(cat("png: unsupported bit depth ", bit_depth, " (only 8)"));
            if (color_type != 2 && color_type != 6)
                throw DataError(cat("png: unsupported color type ", color_type,
                                    " (only RGB/RGBA)"));
            if (data[12] != 0) throw DataError("png: interlaced images are not supported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            if (!saw_ihdr) throw DataError(cat("png: IDAT before IHDR at offset ", pos));
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
            break;
        }
        // ancillary chunks are skipped
        pos += 12 + len;
    }
    if (!saw_ihdr) throw DataError("png: missing IHDR chunk");
    if (!saw_iend) throw DataError(cat("png: missing IEND chunk (file ends at ", bytes.size(), ")"));
    if (idat.empty()) throw DataError("png: no IDAT data");

    const int64_t bpp = color_type == 6 ? 4 : 3;
    const size_t stride = static_cast<size_t>(width) * bpp;
    std::vector<uint8_t> raw = zlib_inflate(idat, (stride + 1) * static_cast<size_t>(height));

    // undo per-row filters in place
    std::vector<uint8_t> prev(stride, 0);
    ImageRGB img;
    img.width = width;
    img.height = height;
    img.pixels.resize(static_cast<size_t>(width * height * 3));
    std::vector<uint8_t> row(stride);
    for (int64_t y = 0; y < height; ++y) {
        const uint8_t* src = &raw[static_cast<size_t>(y) * (stride + 1)];
        const uint8_t filter = src[0];
        const uint8_t* s = src + 1;
        switch (filter) {
            case 0:
                std::memcpy(row.data(), s, stride);
                break;
            case 1:
                for (size_t i = 0; i < stride; ++i)
                    row[i] = uint8_t(s[i] + (i >= size_t(bpp) ? row[i - bpp] : 0));
                break;
            case 2:
                for (size_t i = 0; i < stride; ++i) row[i] = uint8_t(s[i] + prev[i]);
                break;
            case 3:
                for (size_t i = 0; i < stride; ++i) {
                    const int left = i >= size_t(bpp) ? row[i - bpp] : 0;
                    row[i] = uint8_t(s[i] + ((left + prev[i]) >> 1));
                }
                break;
            case 4:
                for (size_t i = 0; i < stride; ++i) {
                    const int left = i >= size_t(bpp) ? row[i - bpp] : 0;
                    const int upleft = i >= size_t(bpp) ? prev[i - bpp] : 0;
                    row[i] = uint8_t(s[i] + paeth(left, prev[i], upleft));
                }
                break;
            default:
                throw DataError(cat("png: unknown filter ", int(filter), " in row ", y));
        }
        for (int64_t x = 0; x < width; ++x)
            for (int64_t c = 0; c < 3; ++c)
                img.pixels[static_cast<size_t>((y * width + x) * 3 + c)] =
                    row[static_cast<size_t>(x * bpp + c)];
        prev = row;
    }
    return img;
}

std::vector<uint8_t> encode_png(const ImageRGB& img) {
    if (!img.valid()) throw DataError("png: image buffer does not match its dimensions");
    const size_t stride = static_cast<size_t>(img.width) * 3;

    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * static_cast<size_t>(img.height));
    for (int64_t y = 0; y < img.height; ++y) {
        raw.push_back(0); // filter: none
        const uint8_t* row = &img.pixels[static_cast<size_t>(y) * stride];
        raw.insert(raw.end(), row, row + stride);
    }

    std::vector<uint8_t> out(kSignature, kSignature + 8);
    std::vector<uint8_t> ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.width));
    put_be32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // truecolor
    ihdr.push_back(0); // compression
    ihdr.push_back(0); // filter
    ihdr.push_back(0); // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", zlib_deflate(raw));
    append_chunk(out, "IEND", {});
    return out;
}

ImageRGB load_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(cat("cannot open '", path, "'"));
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    try {
        return decode_png(bytes);
    } catch (const DataError& e) {
        throw DataError(cat(path, ": ", e.what()));
    }
}

void save_png(const ImageRGB& img, const std::string& path) {
    const std::vector<uint8_t> bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError(cat("cannot open '", path, "' for writing"));
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError(cat("write failed for '", path, "'"));
}

} // namespace cpat
