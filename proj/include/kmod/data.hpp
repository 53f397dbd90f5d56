#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kmod/tensor.hpp"

namespace kmod {

struct Rgb {
    double r = 0.0, g = 0.0, b = 0.0;
};

// Distribution parameters of a procedural domain. Every field is a number so
// that two regimes can be blended linearly.
struct DomainParams {
    double disk_weight = 0.0;  // shape family mix (normalized at render time)
    double rect_weight = 0.0;
    double ring_weight = 0.0;
    double freq_lo = 0.0;  // stripe angular frequency, radians per pixel
    double freq_hi = 0.0;
    double stripe_contrast = 0.0;
    double radius_lo = 0.0;  // fraction of image size
    double radius_hi = 0.0;
    double shapes_lo = 1.0;  // shape count range, inclusive after rounding
    double shapes_hi = 1.0;
    std::array<Rgb, 3> palette{};
    double color_jitter = 0.0;
    Rgb background_a;
    Rgb background_b;
};

// "Striped disks": warm palette on a dark gradient.
DomainParams source_regime();
// Rings and rectangles with fine stripes, cool palette on a light gradient.
DomainParams target_regime();
DomainParams blend(const DomainParams& a, const DomainParams& b, double delta);

struct ToyDomainSpec {
    std::uint64_t base_seed = 0;
    double delta = 0.0;  // 0 = source distribution, 1 = target regime
    std::size_t image_size = 32;

    DomainParams params() const;
    // FNV-1a over the resolved parameters, hex.
    std::string hash() const;
};

struct DatasetManifest {
    std::string spec_hash;
    std::uint64_t base_seed = 0;
    double delta = 0.0;
    std::uint64_t seed = 0;
    std::size_t count = 0;
    std::size_t image_size = 0;
    // Indices into the parent dataset when this set was subsampled.
    std::vector<std::size_t> source_indices;
    bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
    Tensor images;  // [n, 3, s, s], values in [-1, 1]
    DatasetManifest manifest;

    std::size_t size() const { return images.defined() ? images.size(0) : 0; }
    Tensor gather(const std::vector<std::size_t>& indices) const;
};

// Pure and deterministic in (spec, n, seed); image i only depends on (spec, seed, i).
Dataset synthesize_domain(const ToyDomainSpec& spec, std::size_t n, std::uint64_t seed);

// k images without replacement.
Dataset fewshot_sample(const Dataset& ds, std::size_t k, std::uint64_t seed);

// Concatenates along the batch axis.
Tensor concat_images(const std::vector<Tensor>& parts);
// Rows `indices` of an [n, ...] tensor.
Tensor take_rows(const Tensor& images, const std::vector<std::size_t>& indices);

// Rounds pixel values to the 256 levels of the 8-bit encoding.
Tensor quantize_8bit(const Tensor& images);
std::vector<std::uint8_t> to_bytes(const Tensor& images);

// Directory with manifest.json and images.bin (float32 container).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text, const std::string& source_name);

struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

// Tiles up to columns x rows images with `separator` white pixels between tiles.
Image8 make_grid(const Tensor& images, std::size_t columns = 8, std::size_t separator = 2);
void save_png(const Image8& image, const std::filesystem::path& path);
Image8 load_png(const std::filesystem::path& path);

}  // namespace kmod
