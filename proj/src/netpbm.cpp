#include "fdl/netpbm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fdl/errors.hpp"
#include "fdl/io_util.hpp"

namespace fdl {

namespace {

struct Cursor {
    const std::string& bytes;
    std::size_t off = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError("netpbm: " + what + " at offset " + std::to_string(off));
    }

    bool eof() const { return off >= bytes.size(); }
    unsigned char peek() const { return static_cast<unsigned char>(bytes[off]); }

    // whitespace and '#' comments separate header tokens
    void skip_space_and_comments() {
        while (!eof()) {
            const unsigned char c = peek();
            if (c == '#') {
                while (!eof() && peek() != '\n') ++off;
            } else if (std::isspace(c)) {
                ++off;
            } else {
                break;
            }
        }
    }

    std::size_t parse_uint(const char* name) {
        skip_space_and_comments();
        if (eof() || !std::isdigit(peek())) {
            fail(std::string("expected ") + name);
        }
        std::size_t v = 0;
        while (!eof() && std::isdigit(peek())) {
            v = v * 10 + (peek() - '0');
            ++off;
        }
        return v;
    }
};

}  // namespace

Tensor load_image_gray(const std::filesystem::path& path) {
    const std::string bytes = read_bytes(path);
    Cursor cur{bytes};
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        cur.fail("unsupported magic (want P5 or P6)");
    }
    const bool color = bytes[1] == '6';
    cur.off = 2;
    const std::size_t w = cur.parse_uint("width");
    const std::size_t h = cur.parse_uint("height");
    const std::size_t maxval = cur.parse_uint("maxval");
    if (maxval != 255) {
        cur.fail("maxval " + std::to_string(maxval) + " unsupported (want 255)");
    }
    if (cur.eof() || !std::isspace(cur.peek())) {
        cur.fail("expected single whitespace before payload");
    }
    ++cur.off;
    if (w == 0 || h == 0) cur.fail("zero image dimensions");
    const std::size_t need = (color ? 3 : 1) * w * h;
    if (bytes.size() - cur.off < need) {
        throw FormatError("netpbm: truncated payload at offset " +
                          std::to_string(bytes.size()) + ", expected " +
                          std::to_string(cur.off + need) + " bytes");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + cur.off;
    Tensor img({h, w});
    if (color) {
        for (std::size_t i = 0; i < w * h; ++i) {
            const double r = p[3 * i], g = p[3 * i + 1], b = p[3 * i + 2];
            img.data[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
        }
    } else {
        for (std::size_t i = 0; i < w * h; ++i) img.data[i] = p[i] / 255.0;
    }
    return img;
}

namespace {

unsigned char to_byte(double v) {
    const double scaled = std::clamp(v, 0.0, 1.0) * 255.0;
    return static_cast<unsigned char>(std::lround(scaled));
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.shape[0] != 3) {
        throw DimensionError("write_ppm: expected [3,H,W], got " + shape_str(rgb.shape));
    }
    const std::size_t h = rgb.shape[1], w = rgb.shape[2];
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + 3 * w * h);
    const std::size_t plane = h * w;
    for (std::size_t i = 0; i < plane; ++i) {
        out.push_back(static_cast<char>(to_byte(rgb.data[i])));
        out.push_back(static_cast<char>(to_byte(rgb.data[plane + i])));
        out.push_back(static_cast<char>(to_byte(rgb.data[2 * plane + i])));
    }
    atomic_write_bytes(path, out);
}

void write_pgm(const std::filesystem::path& path, const Tensor& gray) {
    if (gray.rank() != 2) {
        throw DimensionError("write_pgm: expected [H,W], got " + shape_str(gray.shape));
    }
    const std::size_t h = gray.shape[0], w = gray.shape[1];
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + w * h);
    for (double v : gray.data) out.push_back(static_cast<char>(to_byte(v)));
    atomic_write_bytes(path, out);
}

}  // namespace fdl
