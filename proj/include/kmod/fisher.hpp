#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kmod/modulation.hpp"

namespace kmod {

// Proxy vectors of one layer after a backward pass.
struct ProxyGrads {
    std::string layer;
    Tensor m1;
    Tensor m2;
};

// Running mean of squared gradients of every registered layer's m1 and m2.
class FisherAccumulator {
public:
    void register_layer(const std::string& layer, std::size_t d_out, std::size_t m2_length);

    // One call per backward pass. Every registered layer must be present and
    // carry gradients on both proxy vectors.
    void accumulate(std::span<const ProxyGrads> grads);

    std::size_t sample_count() const { return samples_; }
    const std::vector<std::string>& layers() const { return order_; }
    bool has_layer(const std::string& layer) const { return sums_.count(layer) != 0; }

    std::vector<double> fi_m1(const std::string& layer) const;
    std::vector<double> fi_m2(const std::string& layer) const;

private:
    struct Sums {
        std::vector<double> m1;
        std::vector<double> m2;
    };
    const Sums& sums(const std::string& layer) const;

    std::map<std::string, Sums> sums_;
    std::vector<std::string> order_;
    std::size_t samples_ = 0;
};

// Per-kernel estimate fi(m1[i]) + mean_j fi(m2[j]).
std::vector<double> kernel_importance(const FisherAccumulator& acc, const std::string& layer);
std::vector<double> kernel_importance(std::span<const double> fi_m1, std::span<const double> fi_m2);

// Single-sample expansion of the per-kernel modulation-matrix Fisher
// information in terms of the proxy vectors, with F(x) = g_x^2:
//
//   F(M_i) = F(m1_i) * sum_j 1/(4 m2_j^2) + 1/(4 m1_i^2) * sum_j F(m2_j)
//          + g1_i / (2 m1_i) * sum_j g2_j / m2_j
//
// Diagnostic only; every entry of m1 and m2 must be nonzero.
std::vector<double> full_importance_oracle(std::span<const double> m1, std::span<const double> m2,
                                           std::span<const double> grad_m1, std::span<const double> grad_m2);

// Spearman correlation with average ranks for ties.
double rank_correlation(std::span<const double> a, std::span<const double> b);

enum class NetworkRole { Generator, Discriminator };
const char* role_name(NetworkRole role);
NetworkRole parse_role(const std::string& name);

struct KernelRecord {
    NetworkRole network = NetworkRole::Generator;
    std::string layer;
    std::size_t kernel = 0;
    double fi = 0.0;
    bool important = false;
};

struct ImportanceReport {
    double t_generator = 75.0;
    double t_discriminator = 75.0;
    // Ordered by network, then layer order, then kernel index.
    std::vector<KernelRecord> records;

    std::size_t kernel_count(NetworkRole role) const;
    std::size_t important_count(NetworkRole role) const;
    // Important kernel indices of one layer, ascending.
    std::vector<std::size_t> important_rows(NetworkRole role, const std::string& layer) const;
    std::vector<std::string> layers(NetworkRole role) const;
};

// ceil((1 - t/100) * n)
std::size_t important_quota(std::size_t n, double t);

// Marks, per network independently, the top ceil((1 - t/100) n) kernels by fi.
// Ties keep input order, which is (layer order, kernel index).
ImportanceReport select_important(std::vector<KernelRecord> records, double t_generator, double t_discriminator);
inline ImportanceReport select_important(std::vector<KernelRecord> records, double t) {
    return select_important(std::move(records), t, t);
}

std::string format_report(const ImportanceReport& report);
ImportanceReport parse_report(const std::string& text, const std::string& source_name = "<report>");
void save_report(const ImportanceReport& report, const std::filesystem::path& path);
ImportanceReport load_report(const std::filesystem::path& path);

}  // namespace kmod
