#include "kmod/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "kmod/container.hpp"
#include "kmod/io_util.hpp"

namespace kmod {

DomainParams source_regime() {
    DomainParams p;
    p.disk_weight = 1.0;
    p.rect_weight = 0.0;
    p.ring_weight = 0.0;
    p.freq_lo = 0.5;
    p.freq_hi = 0.9;
    p.stripe_contrast = 0.6;
    p.radius_lo = 0.18;
    p.radius_hi = 0.32;
    p.shapes_lo = 1.0;
    p.shapes_hi = 2.0;
    p.palette = {Rgb{0.95, 0.35, 0.20}, Rgb{0.95, 0.75, 0.20}, Rgb{0.85, 0.30, 0.55}};
    p.color_jitter = 0.05;
    p.background_a = {0.05, 0.05, 0.20};
    p.background_b = {0.15, 0.10, 0.35};
    return p;
}

DomainParams target_regime() {
    DomainParams p;
    p.disk_weight = 0.0;
    p.rect_weight = 0.5;
    p.ring_weight = 0.5;
    p.freq_lo = 1.4;
    p.freq_hi = 2.2;
    p.stripe_contrast = 0.8;
    p.radius_lo = 0.12;
    p.radius_hi = 0.22;
    p.shapes_lo = 2.0;
    p.shapes_hi = 3.0;
    p.palette = {Rgb{0.20, 0.80, 0.45}, Rgb{0.15, 0.55, 0.90}, Rgb{0.55, 0.90, 0.85}};
    p.color_jitter = 0.05;
    p.background_a = {0.90, 0.88, 0.75};
    p.background_b = {0.65, 0.70, 0.80};
    return p;
}

namespace {

double lerp(double a, double b, double t) { return a + (b - a) * t; }
Rgb lerp(const Rgb& a, const Rgb& b, double t) { return {lerp(a.r, b.r, t), lerp(a.g, b.g, t), lerp(a.b, b.b, t)}; }

std::vector<double> flatten(const DomainParams& p) {
    std::vector<double> v{p.disk_weight, p.rect_weight,     p.ring_weight, p.freq_lo,   p.freq_hi,
                          p.stripe_contrast, p.radius_lo,  p.radius_hi,   p.shapes_lo, p.shapes_hi,
                          p.color_jitter};
    for (const auto& c : p.palette) v.insert(v.end(), {c.r, c.g, c.b});
    for (const auto& c : {p.background_a, p.background_b}) v.insert(v.end(), {c.r, c.g, c.b});
    return v;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void render_image(const DomainParams& p, std::size_t s, std::mt19937_64& rng, double* out) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;
    const double size = static_cast<double>(s);
    const std::size_t plane = s * s;

    const double bg_angle = u01(rng) * two_pi;
    const double half_diag = size / std::sqrt(2.0);
    for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - size / 2, dy = static_cast<double>(y) + 0.5 - size / 2;
            const double t = clamp01(0.5 + 0.5 * (dx * std::cos(bg_angle) + dy * std::sin(bg_angle)) / half_diag);
            const Rgb c = lerp(p.background_a, p.background_b, t);
            out[y * s + x] = c.r;
            out[plane + y * s + x] = c.g;
            out[2 * plane + y * s + x] = c.b;
        }
    }

    const long lo = std::lround(p.shapes_lo), hi = std::max(lo, std::lround(p.shapes_hi));
    const long count = lo + static_cast<long>(u01(rng) * static_cast<double>(hi - lo + 1) * 0.999999);
    const double total_w = p.disk_weight + p.rect_weight + p.ring_weight;
    for (long k = 0; k < count; ++k) {
        // Every shape consumes the same number of draws so nearby regimes stay comparable.
        const double family_u = u01(rng) * total_w;
        const double cx = (0.2 + 0.6 * u01(rng)) * size;
        const double cy = (0.2 + 0.6 * u01(rng)) * size;
        const double radius = lerp(p.radius_lo, p.radius_hi, u01(rng)) * size;
        const double aspect = 0.5 + 0.5 * u01(rng);
        const auto& anchor = p.palette[std::min<std::size_t>(2, static_cast<std::size_t>(u01(rng) * 3.0))];
        std::normal_distribution<double> jitter(0.0, p.color_jitter > 0 ? p.color_jitter : 1e-12);
        const Rgb color{clamp01(anchor.r + jitter(rng)), clamp01(anchor.g + jitter(rng)), clamp01(anchor.b + jitter(rng))};
        const double freq = lerp(p.freq_lo, p.freq_hi, u01(rng));
        const double stripe_angle = u01(rng) * two_pi;
        const double phase = u01(rng) * two_pi;

        int family = 0;
        if (family_u >= p.disk_weight) family = family_u < p.disk_weight + p.rect_weight ? 1 : 2;

        for (std::size_t y = 0; y < s; ++y) {
            for (std::size_t x = 0; x < s; ++x) {
                const double dx = static_cast<double>(x) + 0.5 - cx, dy = static_cast<double>(y) + 0.5 - cy;
                const double dist = std::sqrt(dx * dx + dy * dy);
                bool inside = false;
                switch (family) {
                    case 0: inside = dist <= radius; break;
                    case 1: inside = std::abs(dx) <= radius && std::abs(dy) <= radius * aspect; break;
                    default: inside = dist <= radius && dist >= 0.6 * radius; break;
                }
                if (!inside) continue;
                const double wave = 0.5 + 0.5 * std::sin(freq * (dx * std::cos(stripe_angle) + dy * std::sin(stripe_angle)) + phase);
                const double shade = 1.0 - p.stripe_contrast * wave;
                out[y * s + x] = color.r * shade;
                out[plane + y * s + x] = color.g * shade;
                out[2 * plane + y * s + x] = color.b * shade;
            }
        }
    }
    for (std::size_t i = 0; i < 3 * plane; ++i) out[i] = 2.0 * clamp01(out[i]) - 1.0;
}

}  // namespace

DomainParams blend(const DomainParams& a, const DomainParams& b, double delta) {
    if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("proximity knob must lie in [0, 1]");
    if (delta == 0.0) return a;
    DomainParams p;
    p.disk_weight = lerp(a.disk_weight, b.disk_weight, delta);
    p.rect_weight = lerp(a.rect_weight, b.rect_weight, delta);
    p.ring_weight = lerp(a.ring_weight, b.ring_weight, delta);
    p.freq_lo = lerp(a.freq_lo, b.freq_lo, delta);
    p.freq_hi = lerp(a.freq_hi, b.freq_hi, delta);
    p.stripe_contrast = lerp(a.stripe_contrast, b.stripe_contrast, delta);
    p.radius_lo = lerp(a.radius_lo, b.radius_lo, delta);
    p.radius_hi = lerp(a.radius_hi, b.radius_hi, delta);
    p.shapes_lo = lerp(a.shapes_lo, b.shapes_lo, delta);
    p.shapes_hi = lerp(a.shapes_hi, b.shapes_hi, delta);
    for (std::size_t i = 0; i < 3; ++i) p.palette[i] = lerp(a.palette[i], b.palette[i], delta);
    p.color_jitter = lerp(a.color_jitter, b.color_jitter, delta);
    p.background_a = lerp(a.background_a, b.background_a, delta);
    p.background_b = lerp(a.background_b, b.background_b, delta);
    return p;
}

DomainParams ToyDomainSpec::params() const { return blend(source_regime(), target_regime(), delta); }

std::string ToyDomainSpec::hash() const {
    std::string text = std::to_string(image_size);
    for (double v : flatten(params())) text += "," + format_double(v);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(text)));
    return buf;
}

Tensor Dataset::gather(const std::vector<std::size_t>& indices) const { return take_rows(images, indices); }

Tensor take_rows(const Tensor& images, const std::vector<std::size_t>& indices) {
    const std::size_t n = images.size(0);
    const std::size_t per = images.numel() / n;
    Shape shape = images.shape();
    shape[0] = indices.size();
    Tensor out(shape);
    auto src = images.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= n) throw std::out_of_range("image index " + std::to_string(indices[i]) + " out of range");
        std::copy_n(src.begin() + indices[i] * per, per, dst.begin() + i * per);
    }
    return out;
}

Tensor concat_images(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_images: nothing to concatenate");
    Shape shape = parts.front().shape();
    std::size_t n = 0;
    for (const auto& p : parts) {
        Shape tail(p.shape().begin() + 1, p.shape().end());
        if (tail != Shape(shape.begin() + 1, shape.end())) throw std::invalid_argument("concat_images: shape mismatch");
        n += p.size(0);
    }
    shape[0] = n;
    std::vector<double> data;
    data.reserve(numel(shape));
    for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
    return Tensor(shape, std::move(data));
}

Dataset synthesize_domain(const ToyDomainSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("synthesize_domain: n must be >= 1");
    const auto params = spec.params();
    const std::size_t s = spec.image_size;
    Dataset ds;
    ds.images = Tensor(Shape{n, 3, s, s});
    auto data = ds.images.data();
    for (std::size_t i = 0; i < n; ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(spec.base_seed), static_cast<std::uint32_t>(spec.base_seed >> 32),
                          static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
        std::mt19937_64 rng(seq);
        render_image(params, s, rng, data.data() + i * 3 * s * s);
    }
    ds.manifest.spec_hash = spec.hash();
    ds.manifest.base_seed = spec.base_seed;
    ds.manifest.delta = spec.delta;
    ds.manifest.seed = seed;
    ds.manifest.count = n;
    ds.manifest.image_size = s;
    return ds;
}

Dataset fewshot_sample(const Dataset& ds, std::size_t k, std::uint64_t seed) {
    if (k == 0) throw std::invalid_argument("fewshot_sample: k must be >= 1");
    if (k > ds.size()) {
        throw std::invalid_argument("fewshot_sample: k = " + std::to_string(k) + " exceeds dataset size " +
                                    std::to_string(ds.size()));
    }
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates with explicit draws keeps the result independent of std::shuffle's implementation.
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    Dataset out;
    out.images = ds.gather(idx);
    out.manifest = ds.manifest;
    out.manifest.seed = seed;
    out.manifest.count = k;
    out.manifest.source_indices = idx;
    return out;
}

Tensor quantize_8bit(const Tensor& images) {
    Tensor out = images.clone();
    for (auto& v : out.data()) {
        const double level = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
        v = level / 127.5 - 1.0;
    }
    return out;
}

std::vector<std::uint8_t> to_bytes(const Tensor& images) {
    std::vector<std::uint8_t> out(images.numel());
    auto d = images.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        out[i] = static_cast<std::uint8_t>(std::lround((std::clamp(d[i], -1.0, 1.0) + 1.0) * 127.5));
    }
    return out;
}

std::string manifest_to_json(const DatasetManifest& m) {
    nlohmann::json j{{"spec_hash", m.spec_hash}, {"base_seed", m.base_seed}, {"delta", m.delta},
                     {"seed", m.seed},           {"count", m.count},         {"image_size", m.image_size},
                     {"source_indices", m.source_indices}};
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const std::string& source_name) {
    try {
        const auto j = nlohmann::json::parse(text);
        DatasetManifest m;
        m.spec_hash = j.at("spec_hash").get<std::string>();
        m.base_seed = j.at("base_seed").get<std::uint64_t>();
        m.delta = j.at("delta").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.count = j.at("count").get<std::size_t>();
        m.image_size = j.at("image_size").get<std::size_t>();
        m.source_indices = j.value("source_indices", std::vector<std::size_t>{});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(source_name + ": malformed manifest: " + e.what());
    }
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_container(dir / "images.bin", "ADAMDSET", nlohmann::json{{"count", ds.size()}}, {{"images", ds.images}});
    write_file_atomic(dir / "manifest.json", manifest_to_json(ds.manifest));
}

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    Dataset ds;
    ds.manifest = manifest_from_json(read_file(manifest_path), manifest_path.string());
    auto contents = read_container(dir / "images.bin", "ADAMDSET");
    auto it = contents.tensors.find("images");
    if (it == contents.tensors.end()) throw std::runtime_error((dir / "images.bin").string() + ": no images tensor");
    ds.images = it->second;
    if (ds.size() != ds.manifest.count) {
        throw std::runtime_error(dir.string() + ": manifest count " + std::to_string(ds.manifest.count) +
                                 " does not match " + std::to_string(ds.size()) + " stored images");
    }
    return ds;
}

Image8 make_grid(const Tensor& images, std::size_t columns, std::size_t separator) {
    if (images.rank() != 4 || images.size(1) != 3) {
        throw std::invalid_argument("make_grid expects [n, 3, h, w] images, got " + to_string(images.shape()));
    }
    const std::size_t n = images.size(0), h = images.size(2), w = images.size(3);
    const std::size_t cols = std::min(columns, n);
    const std::size_t rows = (n + columns - 1) / columns;
    Image8 img;
    img.width = cols * w + (cols - 1) * separator;
    img.height = rows * h + (rows - 1) * separator;
    img.rgb.assign(img.width * img.height * 3, 255);
    const auto bytes = to_bytes(images);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ox = (i % columns) * (w + separator), oy = (i / columns) * (h + separator);
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    img.rgb[((oy + y) * img.width + ox + x) * 3 + c] = bytes[((i * 3 + c) * h + y) * w + x];
                }
            }
        }
    }
    return img;
}

void save_png(const Image8& image, const std::filesystem::path& path) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.rgb.data(), 0, nullptr)) {
        throw std::runtime_error(path.string() + ": PNG encode failed: " + png.message);
    }
    std::string buf(size, '\0');
    if (!png_image_write_to_memory(&png, buf.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
        throw std::runtime_error(path.string() + ": PNG encode failed: " + png.message);
    }
    buf.resize(size);
    write_file_atomic(path, buf);
}

Image8 load_png(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw std::runtime_error(path.string() + ": not a readable PNG: " + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    Image8 img;
    img.width = png.width;
    img.height = png.height;
    img.rgb.resize(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, img.rgb.data(), 0, nullptr)) {
        throw std::runtime_error(path.string() + ": PNG decode failed: " + png.message);
    }
    return img;
}

}  // namespace kmod
