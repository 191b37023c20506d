// parmis: run, compare, select and evaluate DRM policy searches.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "parmis/cli.hpp"

int main(int argc, char** argv) {
    using namespace parmis::cli;
    CLI::App app{"Multi-objective DRM policy search on a simulated big.LITTLE SoC"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run the configured strategy for every seed");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    auto* seed_opt = run->add_option("--seed", seed, "Run only this seed");
    auto* out_opt = run->add_option("--out", out_dir, "Output directory (overrides the config)");

    CompareOptions cmp;
    std::string cmp_out;
    auto* compare = app.add_subcommand("compare", "Normalized PHV across run directories");
    compare->add_option("dirs", cmp.dirs, "Run directories (or parents of seed_* directories)")->required();
    compare->add_option("--ref", cmp.reference, "Reference point: auto or comma-separated values")
        ->capture_default_str();
    auto* cmp_out_opt = compare->add_option("--out", cmp_out, "Also write the table to this CSV file");

    SelectOptions sel;
    std::string weights, lex, sel_out;
    auto* select = app.add_subcommand("select", "Pick a front member by preference");
    select->add_option("--front", sel.front_path, "front.csv of a run")->required();
    auto* w_opt = select->add_option("--weights", weights, "Comma-separated weights, e.g. 0.7,0.3");
    auto* l_opt = select->add_option("--lex", lex, "Lexicographic objective order, e.g. energy,time");
    w_opt->excludes(l_opt);
    auto* sel_out_opt = select->add_option("--out", sel_out, "Write the chosen policy file here");

    EvalOptions ev;
    std::string apps = "all", objectives = "time,energy", trace;
    auto* eval = app.add_subcommand("eval", "Evaluate a stored policy or a governor");
    eval->add_option("--policy", ev.policy, "Policy file or governor name")->required();
    eval->add_option("--apps", apps, "Comma-separated workload names or files, or 'all'")->capture_default_str();
    eval->add_option("--objectives", objectives, "Comma-separated objectives")->capture_default_str();
    auto* trace_opt = eval->add_option("--trace", trace, "Write per-epoch records (JSON lines) here");

    std::string export_dir = "data/workloads";
    auto* exp = app.add_subcommand("export-workloads", "Write the built-in workload suite as JSON");
    exp->add_option("--out", export_dir, "Destination directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (*run) {
        RunOptions opts{config_path, std::nullopt, std::nullopt};
        if (*seed_opt) opts.seed = seed;
        if (*out_opt) opts.out = out_dir;
        return cmd_run(opts, std::cout, std::cerr);
    }
    if (*compare) {
        if (*cmp_out_opt) cmp.out_csv = cmp_out;
        return cmd_compare(cmp, std::cout, std::cerr);
    }
    if (*select) {
        try {
            for (const auto& w : split(weights)) sel.weights.push_back(std::stod(w));
        } catch (const std::exception&) {
            std::cerr << "select: bad --weights '" << weights << "'\n";
            return kExitConfig;
        }
        sel.lex = split(lex);
        if (*sel_out_opt) sel.out = sel_out;
        return cmd_select(sel, std::cout, std::cerr);
    }
    if (*eval) {
        ev.apps = split(apps);
        ev.objectives = split(objectives);
        if (*trace_opt) ev.trace_path = trace;
        return cmd_eval(ev, std::cout, std::cerr);
    }
    return cmd_export_workloads(export_dir, std::cout, std::cerr);
}
