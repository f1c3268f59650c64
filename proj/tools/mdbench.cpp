#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mdb/diversity.hpp"
#include "mdb/error.hpp"
#include "mdb/harness.hpp"
#include "mdb/synthgrid.hpp"

namespace {

int cmd_gen(const mdb::GridConfig& grid, const std::string& out) {
    const mdb::DatasetGrid g = mdb::build_grid(grid);
    const auto manifest = mdb::save_manifest(g, out);
    std::cout << "wrote " << manifest.string() << " (" << g.total(mdb::Pool::Train) + g.total(mdb::Pool::Val) +
                                                           g.total(mdb::Pool::Test) + g.total(mdb::Pool::Reserve)
              << " samples)\n";
    return 0;
}

int cmd_plan(const std::string& config_path, int index, bool list) {
    const mdb::ExperimentConfig config = mdb::load_config(config_path);
    const mdb::ResolvedDataset data = mdb::resolve_dataset(config.dataset);
    const auto specs =
        mdb::expand(config, data.n_classes, data.n_domains, static_cast<int>(data.variants.size()));
    const std::string setup = mdb::setup_digest(config);
    if (list) {
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            std::cout << i << " " << s.id(setup) << " variant=" << s.variant << " kind=" << s.kind.str()
                      << " amount=" << s.amount_label() << " cell=" << s.ood.cell.class_id << ","
                      << s.ood.cell.domain_id << " level=" << s.ood.level_pct << " seed=" << s.seed << "\n";
        }
        return 0;
    }
    if (index < 0 || index >= static_cast<int>(specs.size())) {
        std::cerr << "spec index " << index << " out of range [0, " << specs.size() << ")\n";
        return 2;
    }
    const auto& spec = specs[index];
    std::cout << mdb::to_json(mdb::build_plan(config, spec, data.variants.at(spec.variant)));
    return 0;
}

int cmd_run(const std::string& config_path, int workers, bool resume, bool quiet) {
    const mdb::ExperimentConfig config = mdb::load_config(config_path);
    mdb::RunOptions options;
    options.workers = workers;
    options.resume = resume;
    if (!quiet) options.log = [](const std::string& line) { std::cerr << line << "\n"; };
    const mdb::RunStats stats = mdb::run_sweep(config, options);
    std::cout << "experiments: " << stats.total << ", ran " << stats.ran << " (" << stats.cache_hits
              << " from cache), skipped " << stats.skipped << ", failed " << stats.failed << "\n"
              << "output: " << mdb::effective_output_dir(config).string() << "\n";
    return stats.failed > 0 ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-domain vs specialized classifier benchmark"};
    app.require_subcommand(1);

    mdb::GridConfig grid;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen", "Synthesize a grid and export it as PNG + manifest");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--classes", grid.n_classes, "Number of classes")->capture_default_str();
    gen->add_option("--domains", grid.n_domains, "Number of domains")->capture_default_str();
    gen->add_option("--size", grid.image_size, "Image side in pixels")->capture_default_str();
    gen->add_option("--train", grid.pool_sizes[0], "Train pool per cell")->capture_default_str();
    gen->add_option("--val", grid.pool_sizes[1], "Val pool per cell")->capture_default_str();
    gen->add_option("--test", grid.pool_sizes[2], "Test pool per cell")->capture_default_str();
    gen->add_option("--reserve", grid.pool_sizes[3], "Reserve pool per cell")->capture_default_str();
    gen->add_option("--seed", grid.seed, "Grid seed")->capture_default_str();

    std::string config_path;
    int index = 0;
    bool list = false;
    auto* plan = app.add_subcommand("plan", "Emit the split plan of one expanded experiment as JSON");
    plan->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    plan->add_option("--index", index, "Position in the expanded experiment list")->capture_default_str();
    plan->add_flag("--list", list, "List the expanded experiments instead");

    int workers = 1;
    bool resume = false, quiet = false;
    auto* run = app.add_subcommand("run", "Execute a sweep");
    run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--workers", workers, "Concurrent experiments")->capture_default_str()->check(CLI::PositiveNumber);
    run->add_flag("--resume", resume, "Skip experiments already recorded in the ledger");
    run->add_flag("--quiet", quiet, "No per-experiment progress lines");

    std::string dir;
    auto* summarize = app.add_subcommand("summarize", "Write summary.csv, auc.csv, diff.csv from records");
    summarize->add_option("--dir", dir, "Sweep output directory")->required()->check(CLI::ExistingDirectory);
    auto* crosseval = app.add_subcommand("crosseval", "Evaluate specialized models on the other domains");
    crosseval->add_option("--dir", dir, "Sweep output directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen(grid, gen_out);
        if (*plan) return cmd_plan(config_path, index, list);
        if (*run) return cmd_run(config_path, workers, resume, quiet);
        if (*summarize) {
            mdb::summarize(dir);
            std::cout << "wrote summary.csv, auc.csv, diff.csv, missing.csv in " << dir << "\n";
            return 0;
        }
        if (*crosseval) {
            const int n = mdb::cross_domain_eval(dir);
            std::cout << "wrote " << n << " cross-domain records\n";
            return 0;
        }
    } catch (const mdb::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
