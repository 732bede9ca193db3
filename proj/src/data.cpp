#include "dagan/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace dagan {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        fail(path + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v >> 24), (unsigned char)(v >> 16),
                          (unsigned char)(v >> 8), (unsigned char)v};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

float byte_to_float(unsigned char b) { return (float)b * (2.0f / 255.0f) - 1.0f; }

unsigned char float_to_byte(float v) {
    float s = (v + 1.0f) * (255.0f / 2.0f);
    int i = (int)std::lround(s);
    return (unsigned char)std::clamp(i, 0, 255);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) fail(images_path + ": cannot open");
    std::uint32_t magic = read_be32(imgs, images_path);
    if (magic != 0x803u && magic != 0x804u)
        fail(images_path + ": bad magic " + hex32(magic) +
             " (want 0x00000803 or 0x00000804)");

    Dataset d;
    d.n = (int)read_be32(imgs, images_path);
    if (magic == 0x804u) {
        d.channels = (int)read_be32(imgs, images_path);
    } else {
        d.channels = 1;
    }
    d.h = (int)read_be32(imgs, images_path);
    d.w = (int)read_be32(imgs, images_path);
    if (d.n <= 0 || d.channels <= 0 || d.h <= 0 || d.w <= 0)
        fail(images_path + ": non-positive dimension in header");

    std::size_t want = (std::size_t)d.n * d.image_size();
    std::vector<unsigned char> raw(want);
    imgs.read(reinterpret_cast<char*>(raw.data()), (std::streamsize)want);
    if ((std::size_t)imgs.gcount() != want)
        fail(images_path + ": truncated pixel data (want " + std::to_string(want) +
             " bytes, got " + std::to_string(imgs.gcount()) + ")");

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) fail(labels_path + ": cannot open");
    std::uint32_t lmagic = read_be32(labs, labels_path);
    if (lmagic != 0x801u)
        fail(labels_path + ": bad magic " + hex32(lmagic) + " (want 0x00000801)");
    int ln = (int)read_be32(labs, labels_path);
    if (ln != d.n)
        fail("label count mismatch: " + std::to_string(d.n) + " images vs " +
             std::to_string(ln) + " labels");
    std::vector<unsigned char> lraw(d.n);
    labs.read(reinterpret_cast<char*>(lraw.data()), d.n);
    if ((std::size_t)labs.gcount() != (std::size_t)d.n)
        fail(labels_path + ": truncated label data");

    d.pixels.resize(want);
    for (std::size_t i = 0; i < want; ++i) d.pixels[i] = byte_to_float(raw[i]);
    d.labels.resize(d.n);
    int max_label = 0;
    for (int i = 0; i < d.n; ++i) {
        d.labels[i] = lraw[i];
        max_label = std::max(max_label, d.labels[i]);
    }
    d.classes = max_label + 1;
    return d;
}

void write_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path) {
    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) fail(images_path + ": cannot open for writing");
    if (d.channels == 1) {
        write_be32(imgs, 0x803u);
        write_be32(imgs, (std::uint32_t)d.n);
    } else {
        write_be32(imgs, 0x804u);
        write_be32(imgs, (std::uint32_t)d.n);
        write_be32(imgs, (std::uint32_t)d.channels);
    }
    write_be32(imgs, (std::uint32_t)d.h);
    write_be32(imgs, (std::uint32_t)d.w);
    std::vector<unsigned char> raw(d.pixels.size());
    for (std::size_t i = 0; i < d.pixels.size(); ++i) raw[i] = float_to_byte(d.pixels[i]);
    imgs.write(reinterpret_cast<const char*>(raw.data()), (std::streamsize)raw.size());
    if (!imgs) fail(images_path + ": write failed");

    std::ofstream labs(labels_path, std::ios::binary);
    if (!labs) fail(labels_path + ": cannot open for writing");
    write_be32(labs, 0x801u);
    write_be32(labs, (std::uint32_t)d.n);
    std::vector<unsigned char> lraw(d.n);
    for (int i = 0; i < d.n; ++i) lraw[i] = (unsigned char)d.labels[i];
    labs.write(reinterpret_cast<const char*>(lraw.data()), d.n);
    if (!labs) fail(labels_path + ": write failed");
}

// ---------------------------------------------------------------------------
// shapes8
// ---------------------------------------------------------------------------

void Shapes8Spec::validate() const {
    if (resolution < 8) fail("shapes8: resolution must be at least 8");
    if (ring_radius <= 0 || glyph_half <= 0)
        fail("shapes8: ring_radius and glyph_half must be positive");
    if (sigma_pos < 0 || sigma_color < 0) fail("shapes8: negative jitter sigma");

    // Worst-case footprint of one rendered glyph around its mode center: the
    // glyph core (corner distance for squares), the 0.5 px antialiasing halo,
    // and center jitter clamped at 3 sigma.
    double core = glyph_half + 0.5;
    if (glyph == Glyph::square) core *= std::sqrt(2.0);
    double footprint = core + 3.0 * sigma_pos;

    double min_dist = 2.0 * ring_radius * std::sin(3.14159265358979323846 / 8.0);
    if (min_dist < 2.0 * footprint)
        fail("shapes8: overlapping modes (adjacent centers " + std::to_string(min_dist) +
             " px apart, glyph footprint " + std::to_string(footprint) + " px)");

    double cx = resolution / 2.0;
    if (cx - ring_radius - footprint < 0 || cx + ring_radius + footprint > resolution - 1)
        fail("shapes8: ring does not fit inside the image");
}

namespace {

// 8 saturated base colors, one per mode (RGB in [0,1])
std::array<double, 3> mode_color(int mode) {
    double hue = mode / 8.0 * 6.0;  // sector in [0,6)
    int s = (int)hue;
    double f = hue - s;
    double r = 0, g = 0, b = 0;
    switch (s) {
        case 0: r = 1; g = f; break;
        case 1: r = 1 - f; g = 1; break;
        case 2: g = 1; b = f; break;
        case 3: g = 1 - f; b = 1; break;
        case 4: r = f; b = 1; break;
        default: r = 1; b = 1 - f; break;
    }
    return {0.15 + 0.85 * r, 0.15 + 0.85 * g, 0.15 + 0.85 * b};
}

double clamp3s(double v, double sigma) { return std::clamp(v, -3.0 * sigma, 3.0 * sigma); }

}  // namespace

Dataset gen_shapes8(const Shapes8Spec& spec, int n, std::uint64_t seed) {
    spec.validate();
    if (n <= 0) fail("shapes8: sample count must be positive");

    Dataset d;
    d.n = n;
    d.channels = 3;
    d.h = d.w = spec.resolution;
    d.classes = 8;
    d.pixels.assign((std::size_t)n * d.image_size(), -1.0f);
    d.labels.resize(n);

    Rng rng(derive_seed(seed, "shapes8"));
    double c0 = spec.resolution / 2.0;
    for (int i = 0; i < n; ++i) {
        int mode = i % 8;  // stratified: every consecutive block of 8 covers all modes
        d.labels[i] = mode;
        double ang = 2.0 * 3.14159265358979323846 * mode / 8.0;
        double cx = c0 + spec.ring_radius * std::cos(ang) + clamp3s(rng.normal(0, spec.sigma_pos), spec.sigma_pos);
        double cy = c0 + spec.ring_radius * std::sin(ang) + clamp3s(rng.normal(0, spec.sigma_pos), spec.sigma_pos);

        auto base = mode_color(mode);
        std::array<double, 3> col;
        for (int c = 0; c < 3; ++c)
            col[c] = std::clamp(base[c] + rng.normal(0, spec.sigma_color), 0.0, 1.0);

        float* img = d.pixels.data() + (std::size_t)i * d.image_size();
        std::size_t plane = (std::size_t)d.h * d.w;
        for (int y = 0; y < d.h; ++y) {
            for (int x = 0; x < d.w; ++x) {
                double dx = x - cx, dy = y - cy;
                double dist = spec.glyph == Shapes8Spec::Glyph::square
                                  ? std::max(std::fabs(dx), std::fabs(dy))
                                  : std::sqrt(dx * dx + dy * dy);
                double cov = std::clamp(spec.glyph_half + 0.5 - dist, 0.0, 1.0);
                if (cov <= 0) continue;
                for (int c = 0; c < 3; ++c) {
                    float glyph_v = (float)(2.0 * col[c] - 1.0);
                    float& px = img[c * plane + y * d.w + x];
                    px = (float)((1.0 - cov) * px + cov * glyph_v);
                }
            }
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// digits
// ---------------------------------------------------------------------------

namespace {

// classic 5x7 font, one row per byte (bit 4 = leftmost column)
constexpr unsigned char kFont[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

double font_sample(int digit, double fx, double fy) {
    // bilinear sample of the 5x7 bitmap; outside is background
    auto texel = [&](int x, int y) -> double {
        if (x < 0 || x >= 5 || y < 0 || y >= 7) return 0.0;
        return (kFont[digit][y] >> (4 - x)) & 1 ? 1.0 : 0.0;
    };
    int x0 = (int)std::floor(fx), y0 = (int)std::floor(fy);
    double ax = fx - x0, ay = fy - y0;
    return (1 - ax) * (1 - ay) * texel(x0, y0) + ax * (1 - ay) * texel(x0 + 1, y0) +
           (1 - ax) * ay * texel(x0, y0 + 1) + ax * ay * texel(x0 + 1, y0 + 1);
}

}  // namespace

Dataset gen_digits(int resolution, int n, std::uint64_t seed) {
    if (resolution < 12) fail("digits: resolution must be at least 12");
    if (n <= 0) fail("digits: sample count must be positive");

    Dataset d;
    d.n = n;
    d.channels = 1;
    d.h = d.w = resolution;
    d.classes = 10;
    d.pixels.assign((std::size_t)n * d.image_size(), -1.0f);
    d.labels.resize(n);

    Rng rng(derive_seed(seed, "digits"));
    for (int i = 0; i < n; ++i) {
        int digit = i % 10;  // stratified
        d.labels[i] = digit;
        double scale = (resolution / 10.0) * rng.uniform(0.9, 1.1);  // font px -> image px
        double jx = rng.normal(0, 0.5), jy = rng.normal(0, 0.5);
        jx = std::clamp(jx, -1.5, 1.5);
        jy = std::clamp(jy, -1.5, 1.5);
        double ox = resolution / 2.0 + jx - 2.5 * scale;  // top-left of the glyph box
        double oy = resolution / 2.0 + jy - 3.5 * scale;

        float* img = d.pixels.data() + (std::size_t)i * d.image_size();
        for (int y = 0; y < resolution; ++y) {
            for (int x = 0; x < resolution; ++x) {
                double fx = (x - ox) / scale - 0.5;
                double fy = (y - oy) / scale - 0.5;
                double v = font_sample(digit, fx, fy);
                if (v > 0) img[y * resolution + x] = (float)(2.0 * v - 1.0);
            }
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// transforms
// ---------------------------------------------------------------------------

Transform transform_from_name(const std::string& name) {
    if (name == "rotate90") return Transform::rotate90;
    if (name == "invert") return Transform::invert;
    if (name == "colorize") return Transform::colorize;
    fail("unknown transform '" + name + "' (want rotate90, invert, or colorize)");
}

const char* transform_name(Transform t) {
    switch (t) {
        case Transform::rotate90: return "rotate90";
        case Transform::invert: return "invert";
        case Transform::colorize: return "colorize";
    }
    return "?";
}

Dataset transform_domain(const Dataset& d, Transform t, double hue_degrees) {
    Dataset out = d;
    std::size_t plane = (std::size_t)d.h * d.w;

    switch (t) {
        case Transform::invert:
            for (auto& v : out.pixels) v = -v;
            return out;

        case Transform::rotate90: {
            if (d.h != d.w) fail("rotate90: image must be square, got " +
                                 std::to_string(d.h) + "x" + std::to_string(d.w));
            int s = d.h;
            for (int i = 0; i < d.n; ++i) {
                const float* src = d.image(i);
                float* dst = out.pixels.data() + (std::size_t)i * d.image_size();
                for (int c = 0; c < d.channels; ++c)
                    for (int y = 0; y < s; ++y)
                        for (int x = 0; x < s; ++x)
                            // 90 degrees clockwise
                            dst[c * plane + y * (std::size_t)s + x] =
                                src[c * plane + (s - 1 - x) * (std::size_t)s + y];
            }
            return out;
        }

        case Transform::colorize: {
            // expand 1-channel input to 3 replicated channels first
            if (d.channels == 1) {
                out.channels = 3;
                out.pixels.resize((std::size_t)d.n * out.image_size());
                for (int i = 0; i < d.n; ++i) {
                    const float* src = d.image(i);
                    float* dst = out.pixels.data() + (std::size_t)i * out.image_size();
                    for (int c = 0; c < 3; ++c)
                        std::copy(src, src + plane, dst + c * plane);
                }
            } else if (d.channels != 3) {
                fail("colorize: need 1 or 3 channels, got " + std::to_string(d.channels));
            }

            // hue rotation in YIQ: Y (luminance) is untouched, (I,Q) rotates
            double th = hue_degrees * 3.14159265358979323846 / 180.0;
            double cs = std::cos(th), sn = std::sin(th);
            for (int i = 0; i < out.n; ++i) {
                float* img = out.pixels.data() + (std::size_t)i * out.image_size();
                for (std::size_t p = 0; p < plane; ++p) {
                    double r = img[p], g = img[plane + p], b = img[2 * plane + p];
                    double Y = 0.299 * r + 0.587 * g + 0.114 * b;
                    double I = 0.595716 * r - 0.274453 * g - 0.321263 * b;
                    double Q = 0.211456 * r - 0.522591 * g + 0.311135 * b;
                    double I2 = cs * I - sn * Q, Q2 = sn * I + cs * Q;
                    double r2 = Y + 0.9563 * I2 + 0.6210 * Q2;
                    double g2 = Y - 0.2721 * I2 - 0.6474 * Q2;
                    double b2 = Y - 1.1070 * I2 + 1.7046 * Q2;
                    img[p] = (float)std::clamp(r2, -1.0, 1.0);
                    img[plane + p] = (float)std::clamp(g2, -1.0, 1.0);
                    img[2 * plane + p] = (float)std::clamp(b2, -1.0, 1.0);
                }
            }
            return out;
        }
    }
    fail("transform_domain: unreachable");
}

// ---------------------------------------------------------------------------
// BatchIter
// ---------------------------------------------------------------------------

BatchIter::BatchIter(int n, int batch_size, std::uint64_t seed)
    : n_(n), batch_(batch_size), rng_(derive_seed(seed, "batch_iter")) {
    if (n <= 0) fail("batch_iter: empty dataset");
    if (batch_size <= 0 || batch_size > n)
        fail("batch_iter: batch size " + std::to_string(batch_size) +
             " out of range for dataset of " + std::to_string(n));
}

void BatchIter::reshuffle() {
    epoch_state_ = rng_.state();
    perm_ = rng_.perm(n_);
    cursor_ = 0;
}

std::vector<int> BatchIter::next() {
    if (!started_) {
        reshuffle();
        started_ = true;
    } else if (cursor_ + batch_ > n_) {  // drop the final short batch
        ++epoch_;
        reshuffle();
    }
    std::vector<int> idx(perm_.begin() + cursor_, perm_.begin() + cursor_ + batch_);
    cursor_ += batch_;
    return idx;
}

void BatchIter::restore(std::uint64_t epoch_rng_state, int cursor, std::uint64_t epoch) {
    if (cursor < 0 || cursor > n_) fail("batch_iter: bad cursor in restore");
    rng_.set_state(epoch_rng_state);
    reshuffle();
    cursor_ = cursor;
    epoch_ = epoch;
    started_ = true;
}

// ---------------------------------------------------------------------------

TensorPtr<float> gather_images(const Dataset& d, const std::vector<int>& idx) {
    if (idx.empty()) fail("gather_images: empty batch");
    auto t = make_tensor<float>({(int)idx.size(), d.channels, d.h, d.w});
    std::size_t sz = d.image_size();
    for (std::size_t b = 0; b < idx.size(); ++b) {
        if (idx[b] < 0 || idx[b] >= d.n) fail("gather_images: index out of range");
        std::copy(d.image(idx[b]), d.image(idx[b]) + sz, t->data.begin() + b * sz);
    }
    return t;
}

TensorPtr<float> gather_labels(const Dataset& d, const std::vector<int>& idx) {
    auto t = make_tensor<float>({(int)idx.size()});
    for (std::size_t b = 0; b < idx.size(); ++b) {
        if (idx[b] < 0 || idx[b] >= d.n) fail("gather_labels: index out of range");
        t->data[b] = (float)d.labels[idx[b]];
    }
    return t;
}

}  // namespace dagan
