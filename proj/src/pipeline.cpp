#include "kmod/pipeline.hpp"

#include <iostream>
#include <sstream>

#include <json.hpp>

#include "kmod/io_util.hpp"

namespace kmod {

namespace fs = std::filesystem;

namespace {

void write_snapshot(const Session& s, const std::string& command) {
    write_file_atomic(s.out / "reports" / (command + "_config.ini"), format_config(s.config));
}

void write_grid(const Tensor& images, const fs::path& path) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < std::min<std::size_t>(64, images.size(0)); ++i) idx.push_back(i);
    save_png(make_grid(take_rows(images, idx)), path);
}

Checkpoint load_prerequisite(const fs::path& path, const std::string& stage, const std::string& producer) {
    if (!fs::exists(path)) {
        throw MissingPrerequisite(stage + ": checkpoint " + path.string() + " not found; run `kmod " + producer +
                                  "` first");
    }
    return load_checkpoint(path);
}

std::string csv_row(const std::string& metric, double value, double std, std::size_t size, std::uint64_t seed) {
    return metric + "," + format_double(value) + "," + format_double(std) + "," + std::to_string(size) + "," +
           std::to_string(seed) + "\n";
}

RunConfig with_delta(RunConfig cfg, double delta) {
    cfg.data.target_delta = delta;
    return cfg;
}

}  // namespace

fs::path Session::checkpoint_path(const std::string& name) const { return out / "checkpoints" / (name + ".ckpt"); }

fs::path Session::report_path() const { return out / "reports" / "importance.txt"; }

void Session::log(const std::string& line) const {
    if (!quiet) std::cerr << line << "\n";
}

Dataset source_dataset(const RunConfig& cfg) {
    return synthesize_domain({cfg.data.base_seed, 0.0, cfg.data.image_size}, cfg.data.n_source, cfg.data.source_seed);
}

Dataset target_dataset(const RunConfig& cfg, double delta) {
    return synthesize_domain({cfg.data.base_seed, delta, cfg.data.image_size}, cfg.data.n_target, cfg.data.target_seed);
}

Dataset fewshot_set(const RunConfig& cfg, const Dataset& target) {
    return fewshot_sample(target, cfg.train.k_shot, cfg.train.seed);
}

EvalSummary evaluate_generator(const Network& generator, const Dataset& target, const Dataset& references,
                               const MetricsConfig& metrics) {
    FeatureExtractor extractor(metrics.extractor_seed);
    const Tensor generated =
        generate(generator, sample_latents(metrics.n_generated, generator.spec().latent_dim, metrics.latent_seed));
    const Tensor gen_features = extractor.features(generated);
    EvalSummary out;
    out.fid = frechet_distance(compute_stats(gen_features), extract_stats(target.images, extractor));
    out.diversity = intra_cluster_diversity(gen_features, extractor.features(references.images));
    return out;
}

fs::path cmd_pretrain(const Session& s) {
    s.config.validate();
    write_snapshot(s, "pretrain");
    const Dataset source = source_dataset(s.config);
    s.log("pretrain: " + std::to_string(s.config.train.iter_pretrain) + " iterations on " +
          std::to_string(source.size()) + " source images");
    const auto result = pretrain_source(initial_checkpoint(s.config.train), source, s.config.train);
    const fs::path path = s.checkpoint_path("source");
    save_checkpoint(result.checkpoint, path);
    save_loss_log(result.log, s.out / "metrics" / "pretrain_loss.csv");
    write_grid(generate(result.checkpoint.generator,
                        sample_latents(64, result.checkpoint.generator.spec().latent_dim, s.config.metrics.latent_seed)),
               s.out / "samples" / "source.png");
    s.log("pretrain: wrote " + path.string() + " (" + format_double(result.seconds) + " s)");
    return path;
}

fs::path cmd_probe(const Session& s, const std::optional<fs::path>& checkpoint) {
    s.config.validate();
    const Checkpoint ckpt = load_prerequisite(checkpoint.value_or(s.checkpoint_path("source")), "probe", "pretrain");
    write_snapshot(s, "probe");
    const Dataset fewshot = fewshot_set(s.config, target_dataset(s.config, s.config.data.target_delta));
    s.log("probe: " + std::to_string(s.config.train.iter_probe) + " iterations");
    const auto result = probe(ckpt, fewshot, s.config.train);
    save_report(result.report, s.report_path());
    save_loss_log(result.log, s.out / "metrics" / "probe_loss.csv");
    const nlohmann::json summary = {{"seconds", result.seconds},
                                    {"trainable_params", result.trainable_params},
                                    {"full_params", result.full_params},
                                    {"rank_correlation_generator", result.rank_correlation_generator},
                                    {"rank_correlation_discriminator", result.rank_correlation_discriminator}};
    write_file_atomic(s.out / "metrics" / "probe.json", summary.dump(2) + "\n");
    s.log("probe: wrote " + s.report_path().string());
    return s.report_path();
}

fs::path cmd_adapt(const Session& s, const std::optional<fs::path>& checkpoint, const std::optional<fs::path>& report) {
    s.config.validate();
    const Method method = s.config.train.method;
    const Checkpoint ckpt = load_prerequisite(checkpoint.value_or(s.checkpoint_path("source")), "adapt", "pretrain");
    std::optional<ImportanceReport> importance;
    if (method == Method::Adam || method == Method::FreezeImportant) {
        const fs::path rp = report.value_or(s.report_path());
        if (!fs::exists(rp)) {
            throw MissingPrerequisite(std::string("adapt: probe report required for method ") + method_name(method) +
                                      " (" + rp.string() + " not found); run `kmod probe` first");
        }
        importance = load_report(rp);
    }
    write_snapshot(s, "adapt");
    const Dataset target = target_dataset(s.config, s.config.data.target_delta);
    const Dataset fewshot = fewshot_set(s.config, target);
    s.log(std::string("adapt: ") + method_name(method) + ", " + std::to_string(s.config.train.iter_adapt) +
          " iterations");
    auto result = adapt_baseline(ckpt, fewshot, s.config.train, importance ? &*importance : nullptr);
    if (importance) result.checkpoint.report_path = report.value_or(s.report_path()).string();
    const std::string name = std::string("adapt_") + method_name(method);
    const fs::path path = s.checkpoint_path(name);
    save_checkpoint(result.checkpoint, path);
    save_loss_log(result.log, s.out / "metrics" / (name + "_loss.csv"));
    s.log("adapt: wrote " + path.string() + " (" + format_double(result.seconds) + " s)");
    return path;
}

EvalSummary cmd_eval(const Session& s, const std::optional<fs::path>& checkpoint, const std::optional<fs::path>& dataset) {
    s.config.validate();
    const fs::path ckpt_path =
        checkpoint.value_or(s.checkpoint_path(std::string("adapt_") + method_name(s.config.train.method)));
    const Checkpoint ckpt = load_prerequisite(ckpt_path, "eval", "adapt");
    write_snapshot(s, "eval");
    const Dataset target = dataset ? load_dataset(*dataset) : target_dataset(s.config, s.config.data.target_delta);
    const Dataset fewshot = fewshot_set(s.config, target);
    const EvalSummary summary = evaluate_generator(ckpt.generator, target, fewshot, s.config.metrics);

    const std::string name = "eval_" + ckpt_path.stem().string();
    const std::size_t n = s.config.metrics.n_generated;
    const std::uint64_t seed = s.config.metrics.latent_seed;
    std::size_t degenerate = 0;
    for (bool d : summary.diversity.degenerate) degenerate += d;
    std::string csv = "metric,value,std,sample_size,seed\n";
    csv += csv_row("fid", summary.fid.fid, 0.0, n, seed);
    csv += csv_row("fid_mean_component", summary.fid.mean_component, 0.0, n, seed);
    csv += csv_row("fid_trace_component", summary.fid.trace_component, 0.0, n, seed);
    csv += csv_row("intra_cluster_diversity", summary.diversity.overall, summary.diversity.std_over_clusters, n, seed);
    csv += csv_row("degenerate_clusters", static_cast<double>(degenerate), 0.0, n, seed);
    write_file_atomic(s.out / "metrics" / (name + ".csv"), csv);

    const nlohmann::json j = {{"checkpoint", ckpt_path.string()},
                              {"target_size", target.size()},
                              {"n_generated", n},
                              {"latent_seed", seed},
                              {"fid", summary.fid.fid},
                              {"fid_mean_component", summary.fid.mean_component},
                              {"fid_trace_component", summary.fid.trace_component},
                              {"diversity", summary.diversity.overall},
                              {"diversity_std", summary.diversity.std_over_clusters},
                              {"cluster_sizes", summary.diversity.cluster_sizes},
                              {"cluster_means", summary.diversity.cluster_means}};
    write_file_atomic(s.out / "metrics" / (name + ".json"), j.dump(2) + "\n");
    write_grid(generate(ckpt.generator, sample_latents(64, ckpt.generator.spec().latent_dim, seed)),
               s.out / "samples" / (name + ".png"));
    s.log("eval: fid " + format_double(summary.fid.fid) + ", diversity " + format_double(summary.diversity.overall));
    return summary;
}

ProximityReport cmd_proximity(const Session& s) {
    s.config.validate();
    write_snapshot(s, "proximity");
    const Dataset source = source_dataset(s.config);
    const Dataset target = target_dataset(s.config, s.config.data.target_delta);
    FeatureExtractor extractor(s.config.metrics.extractor_seed);
    const auto report = proximity_report(source.images, target.images, extractor, s.config.metrics.sample_sizes,
                                         s.config.metrics.repeats, s.config.train.seed);
    std::string csv = "metric,value,std,sample_size,seed\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
        csv += csv_row("fid", row.fid_mean, row.fid_std, row.sample_size, report.seed);
        csv += csv_row("fid_median", row.fid_median, 0.0, row.sample_size, report.seed);
        csv += csv_row("fid_mean_component", row.mean_component_mean, row.mean_component_std, row.sample_size,
                       report.seed);
        csv += csv_row("fid_trace_component", row.trace_component_mean, row.trace_component_std, row.sample_size,
                       report.seed);
        rows.push_back({{"sample_size", row.sample_size},
                        {"fid_mean", row.fid_mean},
                        {"fid_std", row.fid_std},
                        {"fid_median", row.fid_median},
                        {"mean_component", row.mean_component_mean},
                        {"trace_component", row.trace_component_mean}});
    }
    csv += csv_row("cross_distance", report.cross_distance, 0.0, target.size(), report.seed);
    write_file_atomic(s.out / "metrics" / "proximity.csv", csv);
    const nlohmann::json j = {{"target_delta", s.config.data.target_delta},
                              {"repeats", s.config.metrics.repeats},
                              {"seed", report.seed},
                              {"cross_distance", report.cross_distance},
                              {"rows", rows}};
    write_file_atomic(s.out / "metrics" / "proximity.json", j.dump(2) + "\n");
    return report;
}

std::string format_bench_csv(const std::vector<BenchRow>& rows) {
    std::string csv = "method,domain,delta,fid_median,diversity_median,source_fid_median,seeds\n";
    for (const auto& r : rows) {
        csv += std::string(method_name(r.method)) + "," + r.domain + "," + format_double(r.delta) + "," +
               format_double(r.fid_median) + "," + format_double(r.diversity_median) + "," +
               format_double(r.source_fid_median) + "," + std::to_string(r.fids.size()) + "\n";
    }
    return csv;
}

std::vector<BenchRow> cmd_bench(const Session& s) {
    s.config.validate();
    if (s.config.metrics.bench_seeds.empty()) throw ConfigError("metrics.bench_seeds must not be empty");
    write_snapshot(s, "bench");
    const Dataset source = source_dataset(s.config);
    s.log("bench: pretraining source generator");
    const Checkpoint pretrained =
        pretrain_source(initial_checkpoint(s.config.train), source, s.config.train).checkpoint;
    save_checkpoint(pretrained, s.checkpoint_path("bench_source"));

    const std::pair<const char*, double> domains[] = {{"near", s.config.data.near_delta},
                                                       {"far", s.config.data.far_delta}};
    std::vector<BenchRow> rows;
    for (const auto& [domain, delta] : domains) {
        for (Method m : kAllMethods) {
            BenchRow row;
            row.method = m;
            row.domain = domain;
            row.delta = delta;
            rows.push_back(row);
        }
    }
    nlohmann::json runs = nlohmann::json::array();
    std::size_t row_base = 0;
    for (const auto& [domain, delta] : domains) {
        const Dataset target = target_dataset(s.config, delta);
        for (std::uint64_t seed : s.config.metrics.bench_seeds) {
            RunConfig cfg = with_delta(s.config, delta);
            cfg.train.seed = seed;
            const Dataset fewshot = fewshot_set(cfg, target);
            const double source_fid = evaluate_generator(pretrained.generator, target, fewshot, cfg.metrics).fid.fid;
            s.log(std::string("bench: ") + domain + " seed " + std::to_string(seed) + " probing");
            const ImportanceReport report = probe(pretrained, fewshot, cfg.train).report;
            for (std::size_t mi = 0; mi < std::size(kAllMethods); ++mi) {
                cfg.train.method = kAllMethods[mi];
                const auto result = adapt_baseline(pretrained, fewshot, cfg.train, &report);
                const auto eval = evaluate_generator(result.checkpoint.generator, target, fewshot, cfg.metrics);
                BenchRow& row = rows[row_base + mi];
                row.fids.push_back(eval.fid.fid);
                row.diversities.push_back(eval.diversity.overall);
                row.source_fids.push_back(source_fid);
                runs.push_back({{"method", method_name(kAllMethods[mi])},
                                {"domain", domain},
                                {"seed", seed},
                                {"fid", eval.fid.fid},
                                {"fid_mean_component", eval.fid.mean_component},
                                {"fid_trace_component", eval.fid.trace_component},
                                {"diversity", eval.diversity.overall},
                                {"source_fid", source_fid},
                                {"seconds", result.seconds}});
                s.log(std::string("bench: ") + domain + " seed " + std::to_string(seed) + " " +
                      method_name(kAllMethods[mi]) + " fid " + format_double(eval.fid.fid));
                if (seed == s.config.metrics.bench_seeds.front()) {
                    write_grid(generate(result.checkpoint.generator,
                                        sample_latents(64, result.checkpoint.generator.spec().latent_dim,
                                                       cfg.metrics.latent_seed)),
                               s.out / "samples" / ("bench_" + std::string(domain) + "_" +
                                                    method_name(kAllMethods[mi]) + ".png"));
                }
            }
        }
        row_base += std::size(kAllMethods);
    }
    for (auto& row : rows) {
        row.fid_median = median(row.fids);
        row.diversity_median = median(row.diversities);
        row.source_fid_median = median(row.source_fids);
    }
    write_file_atomic(s.out / "metrics" / "bench.csv", format_bench_csv(rows));
    write_file_atomic(s.out / "metrics" / "bench_runs.json", runs.dump(2) + "\n");
    return rows;
}

}  // namespace kmod
