#include "kmod/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "kmod/io_util.hpp"

namespace kmod {

void FisherAccumulator::register_layer(const std::string& layer, std::size_t d_out, std::size_t m2_length) {
    if (sums_.count(layer)) throw std::invalid_argument("layer '" + layer + "' registered twice");
    sums_[layer] = Sums{std::vector<double>(d_out, 0.0), std::vector<double>(m2_length, 0.0)};
    order_.push_back(layer);
}

void FisherAccumulator::accumulate(std::span<const ProxyGrads> grads) {
    std::map<std::string, const ProxyGrads*> by_layer;
    for (const auto& g : grads) {
        if (!sums_.count(g.layer)) throw std::invalid_argument("unregistered layer '" + g.layer + "'");
        by_layer[g.layer] = &g;
    }
    // Validate everything before mutating so a failed call leaves no partial update.
    for (const auto& name : order_) {
        auto it = by_layer.find(name);
        if (it == by_layer.end()) throw std::invalid_argument("missing proxy gradients for layer '" + name + "'");
        const auto& s = sums_.at(name);
        const auto& g = *it->second;
        if (!g.m1.has_grad() || !g.m2.has_grad()) {
            throw std::invalid_argument("missing gradient on proxy vectors of layer '" + name + "'");
        }
        if (g.m1.numel() != s.m1.size() || g.m2.numel() != s.m2.size()) {
            throw std::invalid_argument("proxy vector length changed for layer '" + name + "'");
        }
    }
    for (const auto& name : order_) {
        auto& s = sums_.at(name);
        const auto& g = *by_layer.at(name);
        auto g1 = g.m1.grad();
        auto g2 = g.m2.grad();
        for (std::size_t i = 0; i < s.m1.size(); ++i) s.m1[i] += g1[i] * g1[i];
        for (std::size_t j = 0; j < s.m2.size(); ++j) s.m2[j] += g2[j] * g2[j];
    }
    ++samples_;
}

const FisherAccumulator::Sums& FisherAccumulator::sums(const std::string& layer) const {
    auto it = sums_.find(layer);
    if (it == sums_.end()) throw std::invalid_argument("unknown layer '" + layer + "'");
    if (samples_ == 0) throw std::logic_error("Fisher information requested before any sample was accumulated");
    return it->second;
}

std::vector<double> FisherAccumulator::fi_m1(const std::string& layer) const {
    auto v = sums(layer).m1;
    for (auto& x : v) x /= static_cast<double>(samples_);
    return v;
}

std::vector<double> FisherAccumulator::fi_m2(const std::string& layer) const {
    auto v = sums(layer).m2;
    for (auto& x : v) x /= static_cast<double>(samples_);
    return v;
}

std::vector<double> kernel_importance(std::span<const double> fi_m1, std::span<const double> fi_m2) {
    if (fi_m2.empty()) throw std::invalid_argument("kernel_importance: empty m2");
    double shared = 0.0;
    for (double v : fi_m2) shared += v;
    shared /= static_cast<double>(fi_m2.size());
    std::vector<double> out(fi_m1.size());
    for (std::size_t i = 0; i < fi_m1.size(); ++i) out[i] = fi_m1[i] + shared;
    return out;
}

std::vector<double> kernel_importance(const FisherAccumulator& acc, const std::string& layer) {
    if (acc.sample_count() == 0) throw std::logic_error("kernel_importance: no probing samples accumulated");
    const auto f1 = acc.fi_m1(layer);
    const auto f2 = acc.fi_m2(layer);
    return kernel_importance(f1, f2);
}

std::vector<double> full_importance_oracle(std::span<const double> m1, std::span<const double> m2,
                                           std::span<const double> grad_m1, std::span<const double> grad_m2) {
    if (m1.size() != grad_m1.size() || m2.size() != grad_m2.size()) {
        throw std::invalid_argument("full_importance_oracle: gradient lengths do not match proxy vectors");
    }
    for (double v : m1) {
        if (v == 0.0) throw std::domain_error("full_importance_oracle: zero entry in m1");
    }
    double inv_sq_m2 = 0.0, fi_m2_sum = 0.0, cross = 0.0;
    for (std::size_t j = 0; j < m2.size(); ++j) {
        if (m2[j] == 0.0) throw std::domain_error("full_importance_oracle: zero entry in m2");
        inv_sq_m2 += 1.0 / (4.0 * m2[j] * m2[j]);
        fi_m2_sum += grad_m2[j] * grad_m2[j];
        cross += grad_m2[j] / m2[j];
    }
    std::vector<double> out(m1.size());
    for (std::size_t i = 0; i < m1.size(); ++i) {
        const double fi_m1 = grad_m1[i] * grad_m1[i];
        out[i] = fi_m1 * inv_sq_m2 + fi_m2_sum / (4.0 * m1[i] * m1[i]) + grad_m1[i] / (2.0 * m1[i]) * cross;
    }
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j);
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double rank_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw std::invalid_argument("rank_correlation needs two equal-length inputs of size >= 2");
    }
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

const char* role_name(NetworkRole role) {
    return role == NetworkRole::Generator ? "generator" : "discriminator";
}

NetworkRole parse_role(const std::string& name) {
    if (name == "generator") return NetworkRole::Generator;
    if (name == "discriminator") return NetworkRole::Discriminator;
    throw std::invalid_argument("unknown network '" + name + "'");
}

std::size_t ImportanceReport::kernel_count(NetworkRole role) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](const auto& r) { return r.network == role; }));
}

std::size_t ImportanceReport::important_count(NetworkRole role) const {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(), [&](const auto& r) { return r.network == role && r.important; }));
}

std::vector<std::size_t> ImportanceReport::important_rows(NetworkRole role, const std::string& layer) const {
    std::vector<std::size_t> rows;
    for (const auto& r : records) {
        if (r.network == role && r.layer == layer && r.important) rows.push_back(r.kernel);
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

std::vector<std::string> ImportanceReport::layers(NetworkRole role) const {
    std::vector<std::string> out;
    for (const auto& r : records) {
        if (r.network == role && (out.empty() || out.back() != r.layer)) out.push_back(r.layer);
    }
    return out;
}

std::size_t important_quota(std::size_t n, double t) {
    if (!(t > 0.0 && t < 100.0)) throw std::invalid_argument("quantile t must lie in (0, 100), got " + format_double(t));
    // Round the fraction first so that e.g. 0.25 * 8 is not nudged above 2 by 1 - 0.75.
    const double exact = (100.0 - t) * static_cast<double>(n) / 100.0;
    const double nearest = std::round(exact);
    const double count = std::abs(exact - nearest) < 1e-9 ? nearest : std::ceil(exact);
    return static_cast<std::size_t>(count);
}

ImportanceReport select_important(std::vector<KernelRecord> records, double t_generator, double t_discriminator) {
    ImportanceReport report;
    report.t_generator = t_generator;
    report.t_discriminator = t_discriminator;
    for (auto role : {NetworkRole::Generator, NetworkRole::Discriminator}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].network == role) idx.push_back(i);
        }
        if (idx.empty()) {
            throw std::invalid_argument(std::string("select_important: no kernels for ") + role_name(role));
        }
        for (auto i : idx) {
            if (!(records[i].fi >= 0.0)) throw std::invalid_argument("select_important: negative or NaN fi");
            records[i].important = false;
        }
        const double t = role == NetworkRole::Generator ? t_generator : t_discriminator;
        const auto quota = important_quota(idx.size(), t);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return records[a].fi > records[b].fi; });
        for (std::size_t k = 0; k < quota; ++k) records[idx[k]].important = true;
    }
    std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return static_cast<int>(a.network) < static_cast<int>(b.network);
    });
    report.records = std::move(records);
    return report;
}

std::string format_report(const ImportanceReport& report) {
    std::ostringstream os;
    os << "# kmod-importance v1\n";
    os << "# t_generator=" << format_double(report.t_generator) << "\n";
    os << "# t_discriminator=" << format_double(report.t_discriminator) << "\n";
    for (auto role : {NetworkRole::Generator, NetworkRole::Discriminator}) {
        os << "# " << role_name(role) << ": kernels=" << report.kernel_count(role)
           << " important=" << report.important_count(role) << "\n";
    }
    os << "network,layer,kernel,fi,important\n";
    for (const auto& r : report.records) {
        os << role_name(r.network) << ',' << r.layer << ',' << r.kernel << ',' << format_double(r.fi) << ','
           << (r.important ? 1 : 0) << '\n';
    }
    return os.str();
}

ImportanceReport parse_report(const std::string& text, const std::string& source_name) {
    ImportanceReport report;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool seen_magic = false, seen_columns = false;
    std::map<std::string, std::pair<std::size_t, std::size_t>> declared;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error(source_name + ":" + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const auto sv = trim(line);
        if (sv.empty()) continue;
        if (!seen_magic) {
            if (sv != "# kmod-importance v1") fail("not an importance report (bad header)");
            seen_magic = true;
            continue;
        }
        if (sv.front() == '#') {
            const std::string body(trim(sv.substr(1)));
            try {
                if (body.rfind("t_generator=", 0) == 0) {
                    report.t_generator = parse_double(body.substr(12));
                } else if (body.rfind("t_discriminator=", 0) == 0) {
                    report.t_discriminator = parse_double(body.substr(16));
                } else {
                    const auto colon = body.find(':');
                    if (colon == std::string::npos) fail("unrecognized header line");
                    std::size_t kernels = 0, important = 0;
                    if (std::sscanf(body.c_str() + colon + 1, " kernels=%zu important=%zu", &kernels, &important) != 2) {
                        fail("malformed count line");
                    }
                    declared[body.substr(0, colon)] = {kernels, important};
                }
            } catch (const std::invalid_argument& e) {
                fail(e.what());
            }
            continue;
        }
        if (!seen_columns) {
            if (sv != "network,layer,kernel,fi,important") fail("missing column header");
            seen_columns = true;
            continue;
        }
        std::vector<std::string> fields;
        std::string cur;
        for (char c : sv) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        fields.push_back(cur);
        if (fields.size() != 5) fail("expected 5 fields, got " + std::to_string(fields.size()));
        KernelRecord r;
        try {
            r.network = parse_role(fields[0]);
            r.layer = fields[1];
            r.kernel = static_cast<std::size_t>(parse_int(fields[2]));
            r.fi = parse_double(fields[3]);
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
        if (fields[4] != "0" && fields[4] != "1") fail("important flag must be 0 or 1");
        r.important = fields[4] == "1";
        report.records.push_back(std::move(r));
    }
    if (!seen_magic) throw std::runtime_error(source_name + ": empty importance report");
    for (auto role : {NetworkRole::Generator, NetworkRole::Discriminator}) {
        auto it = declared.find(role_name(role));
        if (it == declared.end()) continue;
        if (it->second.first != report.kernel_count(role) || it->second.second != report.important_count(role)) {
            throw std::runtime_error(source_name + ": summary counts for " + role_name(role) +
                                     " do not match records");
        }
    }
    return report;
}

void save_report(const ImportanceReport& report, const std::filesystem::path& path) {
    write_file_atomic(path, format_report(report));
}

ImportanceReport load_report(const std::filesystem::path& path) { return parse_report(read_file(path), path.string()); }

}  // namespace kmod
