#include <iostream>

#include <CLI11.hpp>

#include "rithermo/pipeline.hpp"

using namespace rithermo;

int main(int argc, char **argv) {
    CLI::App app{"ritherm: repeated-interaction thermodynamics at strong coupling"};
    app.require_subcommand(1);

    pipeline::RunManifest m;
    std::string kind = "average";
    auto *run = app.add_subcommand("run", "run a pipeline on a preset or config file");
    run->add_option("scenario", m.scenario, "preset name or path to a JSON config")->required();
    run->add_option("--pipeline", kind, "average | branches | sample | markov-sweep | twobath")
        ->check(CLI::IsMember({"average", "branches", "sample", "markov-sweep", "twobath"}));
    run->add_option("--grid", m.grid, "number of time samples")->check(CLI::Range(1, 100000));
    run->add_option("--seed", m.seed, "RNG seed (sample pipeline, tomography checks)");
    run->add_option("--samples", m.samples, "records drawn by the sample pipeline")->check(CLI::Range(1, 100000000));
    run->add_option("--out", m.out, "output directory");
    run->add_option("--tol-scale", m.tol_scale, "multiplies every tolerance");

    std::string target;
    bool dump = false;
    auto *val = app.add_subcommand("validate", "check a preset or config without running dynamics");
    val->add_option("scenario", target, "preset name or path to a JSON config")->required();
    val->add_flag("--dump", dump, "print the scenario as a JSON config");

    auto *list = app.add_subcommand("list-presets", "list built-in presets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (*list) {
        for (const auto &e : presets::registry())
            std::cout << e.name << "\t" << e.description << "\n";
        return 0;
    }
    if (*val) {
        auto issues = pipeline::validate_config(target);
        for (const auto &i : issues)
            std::cout << i.field << ": " << i.message << "\n";
        if (issues.empty()) {
            std::cout << "ok\n";
            if (dump)
                std::cout << config::to_json(config::resolve(target)).dump(2) << "\n";
            return 0;
        }
        return 2;
    }
    m.pipeline = pipeline::parse_kind(kind);
    auto r = pipeline::run(m, std::cout, std::cerr);
    if (r.exit_code == 0 || r.exit_code == 1) {
        std::cout << "manifest " << r.hash << "\n";
        for (const auto &a : r.artifacts)
            std::cout << "wrote " << a << "\n";
    }
    return r.exit_code;
}
