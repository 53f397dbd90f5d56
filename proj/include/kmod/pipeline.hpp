#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmod/config.hpp"
#include "kmod/data.hpp"
#include "kmod/metrics.hpp"

namespace kmod {

// A pipeline stage ran before the stage it depends on.
class MissingPrerequisite : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Session {
    RunConfig config;
    std::filesystem::path out = "runs";
    bool quiet = false;

    std::filesystem::path checkpoint_path(const std::string& name) const;
    std::filesystem::path report_path() const;
    void log(const std::string& line) const;
};

Dataset source_dataset(const RunConfig& cfg);
Dataset target_dataset(const RunConfig& cfg, double delta);
Dataset fewshot_set(const RunConfig& cfg, const Dataset& target);

struct EvalSummary {
    FrechetResult fid;
    DiversityResult diversity;
};

// Toy-FID of `generator` against the full target set plus diversity over the
// few-shot references.
EvalSummary evaluate_generator(const Network& generator, const Dataset& target, const Dataset& references,
                               const MetricsConfig& metrics);

struct BenchRow {
    Method method = Method::Adam;
    std::string domain;  // "near" or "far"
    double delta = 0.0;
    std::vector<double> fids;        // one per seed
    std::vector<double> diversities;
    std::vector<double> source_fids;  // unadapted generator, same target
    double fid_median = 0.0;
    double diversity_median = 0.0;
    double source_fid_median = 0.0;
};

std::filesystem::path cmd_pretrain(const Session& s);
std::filesystem::path cmd_probe(const Session& s, const std::optional<std::filesystem::path>& checkpoint = {});
std::filesystem::path cmd_adapt(const Session& s, const std::optional<std::filesystem::path>& checkpoint = {},
                                const std::optional<std::filesystem::path>& report = {});
EvalSummary cmd_eval(const Session& s, const std::optional<std::filesystem::path>& checkpoint = {},
                     const std::optional<std::filesystem::path>& dataset = {});
ProximityReport cmd_proximity(const Session& s);
std::vector<BenchRow> cmd_bench(const Session& s);

std::string format_bench_csv(const std::vector<BenchRow>& rows);

}  // namespace kmod
