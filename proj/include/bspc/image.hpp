#ifndef BSPC_IMAGE_HPP
#define BSPC_IMAGE_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bspc {

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    bool operator==(const GrayImage& o) const {
        return width == o.width && height == o.height && pixels == o.pixels;
    }
};

struct TileRect {
    int x0 = 0;
    int y0 = 0;
    int w = 0;
    int h = 0;
};

// Non-owning window into an image; pixel access is in tile-local coordinates.
struct TileView {
    const GrayImage* image = nullptr;
    TileRect rect;

    TileView() = default;
    TileView(const GrayImage& img, TileRect r) : image(&img), rect(r) {}
    explicit TileView(const GrayImage& img) : image(&img), rect{0, 0, img.width, img.height} {}

    int width() const { return rect.w; }
    int height() const { return rect.h; }
    std::uint8_t at(int x, int y) const { return image->at(rect.x0 + x, rect.y0 + y); }
    bool in_bounds(int x, int y) const { return x >= 0 && x < rect.w && y >= 0 && y < rect.h; }
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline int pnm_read_token(std::istream& in) {
    // skips whitespace and '#' comments, then parses a nonnegative integer
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) throw IoError("malformed PGM header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1 << 30) throw IoError("PGM header value out of range");
        c = in.get();
    }
    return value;
}

inline std::uint16_t rd_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t rd_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline GrayImage load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open input file: " + path);
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5')
        throw IoError("unsupported image format (want binary PGM P5): " + path);
    int w = detail::pnm_read_token(in);
    int h = detail::pnm_read_token(in);
    int maxval = detail::pnm_read_token(in);
    if (w <= 0 || h <= 0 || w > 1 << 15 || h > 1 << 15)
        throw IoError("bad PGM dimensions in " + path);
    if (maxval != 255) throw IoError("unsupported bit depth (maxval must be 255): " + path);
    // the token reader consumed the single whitespace byte after maxval
    GrayImage img(w, h);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw IoError("truncated PGM data in " + path);
    return img;
}

inline void save_pgm(const GrayImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open output file: " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
    if (!out) throw IoError("failed writing " + path);
}

// 8-bit paletted uncompressed BMP, read-only. Palette entries are mapped to
// gray via their own luminance (identity for grayscale palettes).
inline GrayImage load_bmp8(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open input file: " + path);
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() < 54 || raw[0] != 'B' || raw[1] != 'M') throw IoError("not a BMP file: " + path);
    const std::uint32_t data_off = detail::rd_u32le(&raw[10]);
    const std::uint32_t hdr_size = detail::rd_u32le(&raw[14]);
    if (hdr_size < 40) throw IoError("unsupported BMP header: " + path);
    const std::int32_t w = static_cast<std::int32_t>(detail::rd_u32le(&raw[18]));
    const std::int32_t h_raw = static_cast<std::int32_t>(detail::rd_u32le(&raw[22]));
    const std::uint16_t bpp = detail::rd_u16le(&raw[28]);
    const std::uint32_t compression = detail::rd_u32le(&raw[30]);
    if (bpp != 8 || compression != 0)
        throw IoError("unsupported BMP variant (need uncompressed 8-bit): " + path);
    const bool bottom_up = h_raw > 0;
    const int h = bottom_up ? h_raw : -h_raw;
    if (w <= 0 || h <= 0 || w > 1 << 15 || h > 1 << 15) throw IoError("bad BMP dimensions in " + path);

    std::uint32_t colors = detail::rd_u32le(&raw[46]);
    if (colors == 0) colors = 256;
    const std::size_t pal_off = 14 + hdr_size;
    if (pal_off + colors * 4ull > raw.size()) throw IoError("truncated BMP palette in " + path);
    std::vector<std::uint8_t> pal(256, 0);
    for (std::uint32_t i = 0; i < colors && i < 256; ++i) {
        const std::uint8_t b = raw[pal_off + i * 4 + 0];
        const std::uint8_t g = raw[pal_off + i * 4 + 1];
        const std::uint8_t r = raw[pal_off + i * 4 + 2];
        const double luma = 0.299 * r + 0.587 * g + 0.114 * b;
        pal[i] = static_cast<std::uint8_t>(luma + 0.5);
    }

    const std::size_t stride = (static_cast<std::size_t>(w) + 3) & ~std::size_t{3};
    if (data_off + stride * h > raw.size()) throw IoError("truncated BMP data in " + path);
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y) {
        const int src_y = bottom_up ? (h - 1 - y) : y;
        const std::uint8_t* row = &raw[data_off + stride * src_y];
        for (int x = 0; x < w; ++x) img.at(x, y) = pal[row[x]];
    }
    return img;
}

// Dispatch on content magic, falling back to the extension.
inline GrayImage load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open input file: " + path);
    char magic[2] = {0, 0};
    probe.read(magic, 2);
    probe.close();
    if (magic[0] == 'P' && magic[1] == '5') return load_pgm(path);
    if (magic[0] == 'B' && magic[1] == 'M') return load_bmp8(path);
    throw IoError("unsupported image format (want PGM P5 or 8-bit BMP): " + path);
}

}  // namespace bspc

#endif  // BSPC_IMAGE_HPP
