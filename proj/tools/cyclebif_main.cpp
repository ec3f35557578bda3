#include <CLI11.hpp>
#include <iostream>

#include "cyclebif/pipeline.hpp"
#include "cyclebif/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Forced limit-cycle bifurcation analysis"};
    app.set_version_flag("--version", std::string(cyclebif::kVersion));
    app.require_subcommand(1);

    cyclebif::RunOptions opts;
    std::string config_path;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", config_path, "analysis config file (JSON)")->required();
        sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
        sub->add_option("--threads", opts.threads, "worker threads for grid evaluation and multistart")
            ->capture_default_str();
        sub->add_option("--seed", opts.seed, "multistart grid jitter seed (0 = no jitter)")
            ->capture_default_str();
    };

    CLI::App* analyze = app.add_subcommand(
        "analyze", "full pipeline: cycle, adjoint, M(theta), predictions, sweep verification");
    add_common(analyze);
    CLI::App* malkin =
        app.add_subcommand("malkin", "pipeline through M(theta) and zero classification only");
    add_common(malkin);
    app.add_subcommand("list-systems", "print builtin systems and their parameter schemas");

    CLI11_PARSE(app, argc, argv);

    if (app.got_subcommand("analyze")) return cyclebif::cmd_analyze(config_path, opts);
    if (app.got_subcommand("malkin")) return cyclebif::cmd_malkin(config_path, opts);
    return cyclebif::cmd_list_systems(std::cout);
}
