#include "gaf/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace gaf {

std::uint8_t quantize_channel(double x)
{
    const double v = std::floor(x * 255.0 + 0.5);
    if (!(v > 0.0)) return 0;  // also maps NaN to 0
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(v);
}

std::vector<std::uint8_t> encode_ppm(const Image& img)
{
    const std::string header =
        "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + img.data.size());
    for (double v : img.data) out.push_back(quantize_channel(v));
    return out;
}

namespace {

struct HeaderReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void skip_space_and_comments()
    {
        while (pos < bytes.size()) {
            const char c = static_cast<char>(bytes[pos]);
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos;
            } else {
                break;
            }
        }
    }

    int read_int()
    {
        skip_space_and_comments();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw ImageError("ppm: malformed header");
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > (1 << 24)) throw ImageError("ppm: header value out of range");
            ++pos;
        }
        return static_cast<int>(v);
    }
};

}  // namespace

Image decode_ppm(const std::vector<std::uint8_t>& bytes)
{
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw ImageError("ppm: not a P6 file");
    HeaderReader r{bytes, 2};
    const int w = r.read_int();
    const int h = r.read_int();
    const int maxval = r.read_int();
    if (maxval != 255) throw ImageError("ppm: only maxval 255 is supported");
    if (w <= 0 || h <= 0) throw ImageError("ppm: empty image");
    if (r.pos >= bytes.size() || !std::isspace(bytes[r.pos])) throw ImageError("ppm: malformed header");
    ++r.pos;  // single whitespace before raster
    const std::size_t n = std::size_t(w) * h * 3;
    if (bytes.size() - r.pos < n) throw ImageError("ppm: truncated raster");
    Image img(w, h);
    for (std::size_t i = 0; i < n; ++i) img.data[i] = bytes[r.pos + i] / 255.0;
    return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img)
{
    const auto bytes = encode_ppm(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ImageError("ppm: cannot open " + path.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ImageError("ppm: write failed for " + path.string());
}

Image read_ppm(const std::filesystem::path& path)
{
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ImageError("ppm: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_ppm(bytes);
}

}  // namespace gaf
