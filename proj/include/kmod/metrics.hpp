#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kmod/tensor.hpp"

namespace kmod {

// Untrained, seeded convolutional projection used in place of a pretrained
// backbone: three stride-2 conv + leaky-ReLU blocks, then global average
// pooling to a 64-dim vector. Immutable after construction.
class FeatureExtractor {
public:
    static constexpr std::uint64_t kDefaultSeed = 20220601;

    explicit FeatureExtractor(std::uint64_t seed = kDefaultSeed);

    // images [n, 3, h, w] -> [n, dim()]
    Tensor features(const Tensor& images) const;
    std::size_t dim() const { return 64; }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

struct DistributionStats {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> mean;
    std::vector<double> cov;  // dim x dim, row-major, unbiased
};

// features [n, d], n >= 2.
DistributionStats compute_stats(const Tensor& features);
DistributionStats extract_stats(const Tensor& images, const FeatureExtractor& extractor);

struct SymmetricEigen {
    std::vector<double> values;   // ascending
    std::vector<double> vectors;  // column i is the eigenvector of values[i], row-major dim x dim
};

// Cyclic Jacobi rotations. Throws std::runtime_error if it fails to converge.
SymmetricEigen jacobi_eigen(const std::vector<double>& matrix, std::size_t dim);
// Principal square root of a symmetric PSD matrix; negative eigenvalues clamp to 0.
std::vector<double> sqrtm_psd(const std::vector<double>& matrix, std::size_t dim);

struct FrechetResult {
    double fid = 0.0;
    double mean_component = 0.0;
    double trace_component = 0.0;
};

FrechetResult frechet_distance(const DistributionStats& a, const DistributionStats& b);

struct DiversityResult {
    std::vector<std::size_t> assignment;     // nearest reference per generated sample
    std::vector<std::size_t> cluster_sizes;
    std::vector<double> cluster_means;       // mean pairwise distance, 0 when size < 2
    std::vector<bool> degenerate;            // empty or singleton cluster
    double overall = 0.0;                    // mean over non-empty clusters
    double std_over_clusters = 0.0;
};

// Generated and reference feature matrices [n, d] and [k, d].
DiversityResult intra_cluster_diversity(const Tensor& generated_features, const Tensor& reference_features);
DiversityResult intra_cluster_diversity(const Tensor& generated, const Tensor& references,
                                        const FeatureExtractor& extractor);

// Mean L2 distance over all (a_i, b_j) pairs of two feature matrices.
double mean_cross_distance(const Tensor& a_features, const Tensor& b_features);

struct ProximityRow {
    std::size_t sample_size = 0;
    std::vector<FrechetResult> repeats;
    double fid_mean = 0.0, fid_std = 0.0, fid_median = 0.0;
    double mean_component_mean = 0.0, mean_component_std = 0.0;
    double trace_component_mean = 0.0, trace_component_std = 0.0;
};

struct ProximityReport {
    std::vector<ProximityRow> rows;
    double cross_distance = 0.0;  // LPIPS-style mean pairwise feature distance
    std::uint64_t seed = 0;
};

// Fréchet distance of seeded target subsamples of each size against the full
// source statistics, `repeats` draws per size.
ProximityReport proximity_report(const Tensor& source_images, const Tensor& target_images,
                                 const FeatureExtractor& extractor, const std::vector<std::size_t>& sample_sizes,
                                 std::size_t repeats = 20, std::uint64_t seed = 0);
ProximityReport proximity_report_from_features(const Tensor& source_features, const Tensor& target_features,
                                               const std::vector<std::size_t>& sample_sizes, std::size_t repeats,
                                               std::uint64_t seed);

double median(std::vector<double> values);

}  // namespace kmod
