// kmod: few-shot GAN adaptation with kernel modulation, end to end on toy domains.
#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "kmod/io_util.hpp"
#include "kmod/pipeline.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;

std::string keys_help() {
    std::string out = "Config keys (section.key), settable in --config files or with --set:\n";
    for (const auto& k : kmod::config_keys()) out += "  " + k.section + "." + k.key + "  " + k.help + "\n";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptation-aware kernel modulation for few-shot GAN adaptation (toy scale)", "kmod"};
    app.footer(keys_help());
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "runs";
    bool quiet = false;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "INI config file with [train], [data], [metrics] sections");
    app.add_option("--seed", seed, "run seed (overrides train.seed)");
    app.add_option("--out", out, "output directory")->capture_default_str();
    app.add_flag("--quiet", quiet, "suppress progress output");
    app.add_option("--set", overrides, "override a config key, e.g. --set train.iter_adapt=200");

    auto* pretrain = app.add_subcommand("pretrain", "train the source GAN");
    auto* probe = app.add_subcommand("probe", "estimate kernel importance on the few-shot target set");
    auto* adapt = app.add_subcommand("adapt", "adapt the source GAN to the few-shot target set");
    auto* eval = app.add_subcommand("eval", "toy-FID and diversity of an adapted generator");
    auto* proximity = app.add_subcommand("proximity", "source/target proximity with sample-size study");
    auto* bench = app.add_subcommand("bench", "all methods on near and far targets");
    (void)pretrain;
    (void)proximity;
    (void)bench;

    std::optional<std::string> checkpoint, report, method, dataset;
    std::optional<double> delta;
    for (auto* sub : {probe, adapt, eval}) {
        sub->add_option("--checkpoint", checkpoint, "input checkpoint (default: the previous stage's output)");
        sub->add_option("--delta", delta, "target proximity knob (overrides data.target_delta)");
    }
    adapt->add_option("--report", report, "importance report (default: reports/importance.txt)");
    adapt->add_option("--method", method, "adam, tgan, freezed, modulate_all or freeze_important");
    eval->add_option("--method", method, "selects checkpoints/adapt_<method>.ckpt when --checkpoint is absent");
    eval->add_option("--dataset", dataset, "evaluate against a saved dataset directory");
    proximity->add_option("--delta", delta, "target proximity knob (overrides data.target_delta)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    kmod::Session session;
    session.out = out;
    session.quiet = quiet;
    try {
        if (!config_path.empty()) kmod::apply_config_file(session.config, config_path);
        for (const auto& o : overrides) kmod::apply_override(session.config, o);
        if (seed) session.config.train.seed = *seed;
        if (delta) session.config.data.target_delta = *delta;
        if (method) kmod::set_config_value(session.config, "train", "method", *method, "--method");
        session.config.validate();
    } catch (const kmod::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    auto path_arg = [](const std::optional<std::string>& p) -> std::optional<std::filesystem::path> {
        if (p) return std::filesystem::path(*p);
        return std::nullopt;
    };

    try {
        if (app.got_subcommand("pretrain")) {
            kmod::cmd_pretrain(session);
        } else if (app.got_subcommand("probe")) {
            kmod::cmd_probe(session, path_arg(checkpoint));
        } else if (app.got_subcommand("adapt")) {
            kmod::cmd_adapt(session, path_arg(checkpoint), path_arg(report));
        } else if (app.got_subcommand("eval")) {
            const auto summary = kmod::cmd_eval(session, path_arg(checkpoint), path_arg(dataset));
            std::cout << "fid " << kmod::format_double(summary.fid.fid) << " (mean "
                      << kmod::format_double(summary.fid.mean_component) << ", trace "
                      << kmod::format_double(summary.fid.trace_component) << ")\n"
                      << "diversity " << kmod::format_double(summary.diversity.overall) << "\n";
        } else if (app.got_subcommand("proximity")) {
            const auto report_out = kmod::cmd_proximity(session);
            std::cout << "size,fid_mean,fid_std,mean_component,trace_component\n";
            for (const auto& row : report_out.rows) {
                std::cout << row.sample_size << "," << kmod::format_double(row.fid_mean) << ","
                          << kmod::format_double(row.fid_std) << "," << kmod::format_double(row.mean_component_mean)
                          << "," << kmod::format_double(row.trace_component_mean) << "\n";
            }
            std::cout << "cross_distance " << kmod::format_double(report_out.cross_distance) << "\n";
        } else if (app.got_subcommand("bench")) {
            std::cout << kmod::format_bench_csv(kmod::cmd_bench(session));
        }
    } catch (const kmod::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const kmod::MissingPrerequisite& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissing;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
