#include "kmod/metrics.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "kmod/autograd.hpp"
#include "kmod/data.hpp"

namespace kmod {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

constexpr std::size_t kFeatureBatch = 64;

}  // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed) : seed_(seed) {
    std::mt19937_64 rng(seed);
    const std::size_t channels[] = {3, 16, 32, 64};
    for (std::size_t i = 0; i < 3; ++i) {
        const double fan_in = static_cast<double>(channels[i] * 16);
        weights_.push_back(Tensor::randn(Shape{channels[i + 1], channels[i], 4, 4}, rng, std::sqrt(2.0 / fan_in)));
        biases_.push_back(Tensor::randn(Shape{channels[i + 1]}, rng, 0.1));
    }
}

Tensor FeatureExtractor::features(const Tensor& images) const {
    if (images.rank() != 4 || images.size(1) != 3) {
        throw std::invalid_argument("feature extractor expects [n, 3, h, w] images, got " + to_string(images.shape()));
    }
    const std::size_t n = images.size(0);
    Tensor out(Shape{n, dim()});
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < n; start += kFeatureBatch) {
        const std::size_t b = std::min(kFeatureBatch, n - start);
        idx.resize(b);
        std::iota(idx.begin(), idx.end(), start);
        auto tape = Tape::no_grad();
        Tensor x = take_rows(images, idx);
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            x = op::leaky_relu(tape, op::conv2d(tape, x, weights_[l], biases_[l], 2, 1), 0.2);
        }
        const std::size_t c = x.size(1), hw = x.size(2) * x.size(3);
        auto xd = x.data();
        auto od = out.data();
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (std::size_t p = 0; p < hw; ++p) s += xd[(i * c + ch) * hw + p];
                od[(start + i) * c + ch] = s / static_cast<double>(hw);
            }
        }
    }
    return out;
}

DistributionStats compute_stats(const Tensor& features) {
    if (features.rank() != 2) throw std::invalid_argument("compute_stats expects [n, d] features");
    const std::size_t n = features.size(0), d = features.size(1);
    if (n < 2) throw std::invalid_argument("compute_stats needs at least 2 samples, got " + std::to_string(n));
    DistributionStats s;
    s.n = n;
    s.dim = d;
    s.mean.assign(d, 0.0);
    auto f = features.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += f[i * d + j];
    }
    for (auto& m : s.mean) m /= static_cast<double>(n);
    RowMat centered(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) centered(i, j) = f[i * d + j] - s.mean[j];
    }
    s.cov.assign(d * d, 0.0);
    MapMat cov(s.cov.data(), d, d);
    cov.noalias() = centered.transpose() * centered / static_cast<double>(n - 1);
    // Exact symmetry.
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) cov(j, i) = cov(i, j);
    }
    return s;
}

DistributionStats extract_stats(const Tensor& images, const FeatureExtractor& extractor) {
    if (images.rank() != 4 || images.size(0) < 2) {
        throw std::invalid_argument("extract_stats needs at least 2 images");
    }
    return compute_stats(extractor.features(images));
}

SymmetricEigen jacobi_eigen(const std::vector<double>& matrix, std::size_t dim) {
    if (matrix.size() != dim * dim) throw std::invalid_argument("jacobi_eigen: matrix size does not match dim");
    std::vector<double> a = matrix;
    std::vector<double> v(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) v[i * dim + i] = 1.0;
    auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * dim + j]; };

    double total = 0.0;
    for (double x : a) total += x * x;
    const double tol = 1e-30 * std::max(total, 1e-300);
    constexpr int kMaxSweeps = 100;
    bool converged = false;
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = i + 1; j < dim; ++j) off += at(i, j) * at(i, j);
        }
        if (off <= tol) {
            converged = true;
            break;
        }
        for (std::size_t p = 0; p < dim; ++p) {
            for (std::size_t q = p + 1; q < dim; ++q) {
                const double apq = at(p, q);
                if (apq == 0.0) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < dim; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < dim; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < dim; ++k) {
                    const double vkp = v[k * dim + p], vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged) throw std::runtime_error("jacobi_eigen: no convergence");

    std::vector<std::size_t> order(dim);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return at(x, x) < at(y, y); });
    SymmetricEigen out;
    out.values.resize(dim);
    out.vectors.resize(dim * dim);
    for (std::size_t c = 0; c < dim; ++c) {
        out.values[c] = at(order[c], order[c]);
        for (std::size_t r = 0; r < dim; ++r) out.vectors[r * dim + c] = v[r * dim + order[c]];
    }
    return out;
}

std::vector<double> sqrtm_psd(const std::vector<double>& matrix, std::size_t dim) {
    const auto eig = jacobi_eigen(matrix, dim);
    ConstMapMat vecs(eig.vectors.data(), dim, dim);
    Eigen::VectorXd roots(dim);
    for (std::size_t i = 0; i < dim; ++i) roots[i] = std::sqrt(std::max(eig.values[i], 0.0));
    std::vector<double> out(dim * dim);
    MapMat(out.data(), dim, dim).noalias() = vecs * roots.asDiagonal() * vecs.transpose();
    return out;
}

FrechetResult frechet_distance(const DistributionStats& a, const DistributionStats& b) {
    if (a.dim != b.dim || a.mean.size() != b.mean.size()) {
        throw std::invalid_argument("frechet_distance: dimension mismatch " + std::to_string(a.dim) + " vs " +
                                    std::to_string(b.dim));
    }
    const std::size_t d = a.dim;
    FrechetResult r;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a.mean[i] - b.mean[i];
        r.mean_component += diff * diff;
    }
    const auto root_a = sqrtm_psd(a.cov, d);
    std::vector<double> inner(d * d);
    MapMat m(inner.data(), d, d);
    m.noalias() = ConstMapMat(root_a.data(), d, d) * ConstMapMat(b.cov.data(), d, d) * ConstMapMat(root_a.data(), d, d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            const double avg = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = avg;
            m(j, i) = avg;
        }
    }
    const auto eig = jacobi_eigen(inner, d);
    double tr_sqrt = 0.0;
    for (double lambda : eig.values) tr_sqrt += std::sqrt(std::max(lambda, 0.0));
    double tr_a = 0.0, tr_b = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        tr_a += a.cov[i * d + i];
        tr_b += b.cov[i * d + i];
    }
    r.trace_component = std::max(0.0, tr_a + tr_b - 2.0 * tr_sqrt);
    r.fid = r.mean_component + r.trace_component;
    return r;
}

namespace {

double feature_distance(std::span<const double> f, std::size_t d, std::size_t i, std::span<const double> g,
                        std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = f[i * d + k] - g[j * d + k];
        s += diff * diff;
    }
    return std::sqrt(s);
}

}  // namespace

DiversityResult intra_cluster_diversity(const Tensor& generated_features, const Tensor& reference_features) {
    if (generated_features.rank() != 2 || reference_features.rank() != 2) {
        throw std::invalid_argument("intra_cluster_diversity expects [n, d] feature matrices");
    }
    const std::size_t n = generated_features.size(0), k = reference_features.size(0), d = generated_features.size(1);
    if (reference_features.size(1) != d) throw std::invalid_argument("intra_cluster_diversity: feature dims differ");
    auto g = generated_features.data();
    auto r = reference_features.data();
    DiversityResult out;
    out.assignment.resize(n);
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        double best_d = feature_distance(g, d, i, r, 0);
        for (std::size_t j = 1; j < k; ++j) {
            const double dist = feature_distance(g, d, i, r, j);
            if (dist < best_d) {
                best_d = dist;
                best = j;
            }
        }
        out.assignment[i] = best;
        members[best].push_back(i);
    }
    std::vector<double> nonempty;
    for (std::size_t c = 0; c < k; ++c) {
        const auto& m = members[c];
        out.cluster_sizes.push_back(m.size());
        out.degenerate.push_back(m.size() < 2);
        double mean = 0.0;
        if (m.size() >= 2) {
            double sum = 0.0;
            std::size_t pairs = 0;
            for (std::size_t a = 0; a < m.size(); ++a) {
                for (std::size_t b = a + 1; b < m.size(); ++b) {
                    sum += feature_distance(g, d, m[a], g, m[b]);
                    ++pairs;
                }
            }
            mean = sum / static_cast<double>(pairs);
        }
        out.cluster_means.push_back(mean);
        if (!m.empty()) nonempty.push_back(mean);
    }
    const double cnt = static_cast<double>(nonempty.size());
    out.overall = std::accumulate(nonempty.begin(), nonempty.end(), 0.0) / cnt;
    double var = 0.0;
    for (double v : nonempty) var += (v - out.overall) * (v - out.overall);
    out.std_over_clusters = std::sqrt(var / cnt);
    return out;
}

DiversityResult intra_cluster_diversity(const Tensor& generated, const Tensor& references,
                                        const FeatureExtractor& extractor) {
    if (generated.rank() != 4 || generated.size(0) == 0) throw std::invalid_argument("no generated images");
    if (references.rank() != 4 || references.size(0) == 0) throw std::invalid_argument("no reference images");
    return intra_cluster_diversity(extractor.features(generated), extractor.features(references));
}

double mean_cross_distance(const Tensor& a_features, const Tensor& b_features) {
    const std::size_t na = a_features.size(0), nb = b_features.size(0), d = a_features.size(1);
    if (b_features.size(1) != d) throw std::invalid_argument("mean_cross_distance: feature dims differ");
    double sum = 0.0;
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) sum += feature_distance(a_features.data(), d, i, b_features.data(), j);
    }
    return sum / static_cast<double>(na * nb);
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

ProximityReport proximity_report_from_features(const Tensor& source_features, const Tensor& target_features,
                                               const std::vector<std::size_t>& sample_sizes, std::size_t repeats,
                                               std::uint64_t seed) {
    const std::size_t n_target = target_features.size(0);
    for (auto s : sample_sizes) {
        if (s > n_target) {
            throw std::invalid_argument("sample size " + std::to_string(s) + " exceeds target set of " +
                                        std::to_string(n_target));
        }
        if (s < 2) throw std::invalid_argument("sample sizes must be >= 2");
    }
    if (repeats == 0) throw std::invalid_argument("repeats must be >= 1");
    ProximityReport report;
    report.seed = seed;
    const auto source_stats = compute_stats(source_features);
    for (auto s : sample_sizes) {
        ProximityRow row;
        row.sample_size = s;
        std::vector<double> fids, means, traces;
        for (std::size_t r = 0; r < repeats; ++r) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(r)};
            std::mt19937_64 rng(seq);
            std::vector<std::size_t> idx(n_target);
            std::iota(idx.begin(), idx.end(), 0);
            for (std::size_t i = 0; i < s; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, n_target - 1);
                std::swap(idx[i], idx[pick(rng)]);
            }
            idx.resize(s);
            const auto res = frechet_distance(source_stats, compute_stats(take_rows(target_features, idx)));
            row.repeats.push_back(res);
            fids.push_back(res.fid);
            means.push_back(res.mean_component);
            traces.push_back(res.trace_component);
        }
        auto mean_std = [](const std::vector<double>& v) {
            const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - m) * (x - m);
            return std::pair{m, std::sqrt(var / static_cast<double>(v.size()))};
        };
        std::tie(row.fid_mean, row.fid_std) = mean_std(fids);
        std::tie(row.mean_component_mean, row.mean_component_std) = mean_std(means);
        std::tie(row.trace_component_mean, row.trace_component_std) = mean_std(traces);
        row.fid_median = median(fids);
        report.rows.push_back(std::move(row));
    }
    report.cross_distance = mean_cross_distance(source_features, target_features);
    return report;
}

ProximityReport proximity_report(const Tensor& source_images, const Tensor& target_images,
                                 const FeatureExtractor& extractor, const std::vector<std::size_t>& sample_sizes,
                                 std::size_t repeats, std::uint64_t seed) {
    return proximity_report_from_features(extractor.features(source_images), extractor.features(target_images),
                                          sample_sizes, repeats, seed);
}

}  // namespace kmod
