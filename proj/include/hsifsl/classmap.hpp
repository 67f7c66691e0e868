#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "hsifsl/tensor.hpp"

namespace hsifsl {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

/// Deterministic palette: class 0 (background) is black, the rest cycle
/// through a fixed set of well-separated colors.
inline std::vector<Rgb> default_palette(std::size_t classes) {
    static constexpr std::array<Rgb, 20> base{{
        {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
        {245, 130, 48}, {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
        {210, 245, 60}, {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
        {170, 110, 40}, {255, 250, 200}, {128, 0, 0},    {170, 255, 195},
        {128, 128, 0},  {255, 215, 180}, {0, 0, 128},    {128, 128, 128},
    }};
    std::vector<Rgb> pal(classes);
    for (std::size_t c = 1; c < classes; ++c) pal[c] = base[(c - 1) % base.size()];
    return pal;
}

inline nlohmann::json palette_to_json(const std::vector<Rgb>& palette) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t c = 0; c < palette.size(); ++c)
        j[std::to_string(c)] = {palette[c].r, palette[c].g, palette[c].b};
    return j;
}

inline std::vector<Rgb> palette_from_json(const nlohmann::json& j) {
    std::size_t max_id = 0;
    for (const auto& [key, value] : j.items())
        max_id = std::max(max_id, static_cast<std::size_t>(std::stoul(key)));
    std::vector<Rgb> pal(max_id + 1);
    for (const auto& [key, value] : j.items()) {
        if (!value.is_array() || value.size() != 3)
            throw std::runtime_error("palette: entry " + key + " is not [r, g, b]");
        Rgb& c = pal[std::stoul(key)];
        c.r = value[0].get<std::uint8_t>();
        c.g = value[1].get<std::uint8_t>();
        c.b = value[2].get<std::uint8_t>();
    }
    return pal;
}

// ---------------------------------------------------------------------------
// Minimal paletted PNG codec (8-bit indexed, no interlace, filter 0 only)
// ---------------------------------------------------------------------------

namespace png {

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
                      const std::vector<std::uint8_t>& payload) {
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    std::vector<std::uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    const auto crc = ::crc32(0L, body.data(), static_cast<uInt>(body.size()));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

inline std::vector<std::uint8_t> deflate_all(const std::vector<std::uint8_t>& raw) {
    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> out(bound);
    if (::compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                    Z_BEST_SPEED) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    out.resize(bound);
    return out;
}

inline std::vector<std::uint8_t> inflate_all(const std::vector<std::uint8_t>& z,
                                             std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf len = static_cast<uLongf>(expected);
    if (::uncompress(out.data(), &len, z.data(), static_cast<uLong>(z.size())) != Z_OK ||
        len != expected)
        throw std::runtime_error("png: inflate failed or size mismatch");
    return out;
}

constexpr std::array<std::uint8_t, 8> signature{137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace detail

/// Writes `indices` (H x W class ids) as an 8-bit indexed-color PNG.
inline void write_indexed(const std::filesystem::path& path,
                          const Tensor<std::uint16_t>& indices,
                          const std::vector<Rgb>& palette) {
    if (indices.rank() != 2) throw std::invalid_argument("png: indices must be H x W");
    const std::size_t h = indices.dim(0), w = indices.dim(1);
    if (h == 0 || w == 0) throw std::invalid_argument("png: empty image");
    if (palette.empty() || palette.size() > 256)
        throw std::invalid_argument("png: palette must have 1..256 entries");
    for (std::size_t i = 0; i < indices.size(); ++i)
        if (indices[i] >= palette.size())
            throw std::invalid_argument("png: class id outside palette");

    std::vector<std::uint8_t> ihdr;
    detail::put_u32(ihdr, static_cast<std::uint32_t>(w));
    detail::put_u32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(3);  // indexed color
    ihdr.push_back(0);  // deflate
    ihdr.push_back(0);  // adaptive filtering
    ihdr.push_back(0);  // no interlace

    std::vector<std::uint8_t> plte;
    for (const Rgb& c : palette) {
        plte.push_back(c.r);
        plte.push_back(c.g);
        plte.push_back(c.b);
    }

    std::vector<std::uint8_t> raw;
    raw.reserve(h * (w + 1));
    for (std::size_t r = 0; r < h; ++r) {
        raw.push_back(0);  // filter: none
        for (std::size_t c = 0; c < w; ++c)
            raw.push_back(static_cast<std::uint8_t>(indices.at(r, c)));
    }

    std::vector<std::uint8_t> file(detail::signature.begin(), detail::signature.end());
    detail::put_chunk(file, "IHDR", ihdr);
    detail::put_chunk(file, "PLTE", plte);
    detail::put_chunk(file, "IDAT", detail::deflate_all(raw));
    detail::put_chunk(file, "IEND", {});

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(file.data()),
              static_cast<std::streamsize>(file.size()));
    if (!out) throw std::runtime_error("png: cannot write " + path.string());
}

struct IndexedImage {
    Tensor<std::uint16_t> indices;  // H x W
    std::vector<Rgb> palette;
};

/// Reads files produced by write_indexed (and any 8-bit indexed, non-interlaced
/// PNG whose scanlines use filter type 0).
inline IndexedImage read_indexed(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("png: cannot open " + path.string());
    std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (file.size() < 8 ||
        !std::equal(detail::signature.begin(), detail::signature.end(), file.begin()))
        throw std::runtime_error("png: bad signature");

    std::size_t w = 0, h = 0;
    IndexedImage img;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    while (pos + 8 <= file.size()) {
        const std::uint32_t len = detail::get_u32(file.data() + pos);
        if (pos + 12 + len > file.size()) throw std::runtime_error("png: truncated chunk");
        const std::string type(reinterpret_cast<const char*>(file.data() + pos + 4), 4);
        const std::uint8_t* payload = file.data() + pos + 8;
        if (type == "IHDR") {
            w = detail::get_u32(payload);
            h = detail::get_u32(payload + 4);
            if (payload[8] != 8 || payload[9] != 3 || payload[12] != 0)
                throw std::runtime_error(
                    "png: unsupported format (need 8-bit indexed, no interlace)");
        } else if (type == "PLTE") {
            for (std::uint32_t i = 0; i + 2 < len; i += 3)
                img.palette.push_back({payload[i], payload[i + 1], payload[i + 2]});
        } else if (type == "IDAT") {
            idat.insert(idat.end(), payload, payload + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (w == 0 || h == 0) throw std::runtime_error("png: missing IHDR");

    const std::vector<std::uint8_t> raw = detail::inflate_all(idat, h * (w + 1));
    img.indices.resize({h, w});
    for (std::size_t r = 0; r < h; ++r) {
        if (raw[r * (w + 1)] != 0)
            throw std::runtime_error("png: unsupported scanline filter");
        const std::uint8_t* row = raw.data() + r * (w + 1) + 1;
        for (std::size_t c = 0; c < w; ++c) img.indices.at(r, c) = row[c];
    }
    return img;
}

}  // namespace png

/// Writes the prediction map PNG plus its palette JSON alongside.
inline void write_class_map(const std::filesystem::path& png_path,
                            const Tensor<std::uint16_t>& predictions,
                            const std::vector<Rgb>& palette) {
    png::write_indexed(png_path, predictions, palette);
    std::filesystem::path pal_path = png_path;
    pal_path.replace_extension(".palette.json");
    std::ofstream out(pal_path);
    out << palette_to_json(palette).dump(2) << "\n";
    if (!out) throw std::runtime_error("palette: cannot write " + pal_path.string());
}

}  // namespace hsifsl
