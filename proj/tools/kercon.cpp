// kercon: train and evaluate kernel-weighted contrastive regression losses on
// synthetic multi-site data.
//
//   kercon run <config>        single run
//   kercon ablate <grid>       kernel x loss x seed grid
//   kercon compare <cfgs...>   methods on a shared dataset, first is reference
//   kercon gen-data <cfg>      write a synthetic dataset as CSV + manifest

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kercon/datagen.hpp"
#include "kercon/experiment.hpp"

namespace fs = std::filesystem;
using kercon::json;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
};

kercon::RunConfig load_config(const fs::path& path, const Overrides& o) {
    auto config = kercon::run_config_from_json(kercon::read_json_file(path));
    if (config.csv_path && fs::path(*config.csv_path).is_relative()) {
        config.csv_path = (path.parent_path() / *config.csv_path).string();
    }
    if (o.seed) config.train.seed = *o.seed;
    if (o.epochs) config.train.epochs = *o.epochs;
    return config;
}

void print_result(const kercon::RunRecord& rec) {
    std::cout << "run " << rec.hash << (rec.resumed ? " (resumed)" : "") << '\n'
              << "  int_mae " << kercon::fixed2(rec.result.mae_internal) << '\n'
              << "  ext_mae " << kercon::fixed2(rec.result.mae_external) << '\n'
              << "  bacc    " << kercon::fixed2(100.0 * rec.result.site_bacc) << " %\n"
              << "  score   " << kercon::fixed2(rec.result.challenge_score) << '\n'
              << "  dir     " << rec.run_dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernel-weighted contrastive regression experiments"};
    app.require_subcommand(1);

    Overrides overrides;
    std::string out_dir = "results";
    int jobs = 1;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", overrides.seed, "Override the training seed");
        cmd->add_option("--epochs", overrides.epochs, "Override the number of epochs");
        cmd->add_option("--out-dir", out_dir, "Results directory")->capture_default_str();
        cmd->add_option("--jobs", jobs, "Parallel runs")->capture_default_str()->check(CLI::PositiveNumber);
    };

    std::string config_path;
    auto* run = app.add_subcommand("run", "Train and evaluate one config");
    run->add_option("config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    add_common(run);

    std::string grid_path;
    std::vector<std::uint64_t> grid_seeds;
    auto* ablate = app.add_subcommand("ablate", "Run the kernel x loss ablation grid");
    ablate->add_option("grid", grid_path, "Grid config (JSON)")->required()->check(CLI::ExistingFile);
    ablate->add_option("--seeds", grid_seeds, "Override the grid seeds");
    add_common(ablate);

    std::vector<std::string> compare_paths;
    std::vector<std::uint64_t> compare_seeds{0};
    auto* compare = app.add_subcommand("compare", "Compare methods on a shared dataset");
    compare->add_option("configs", compare_paths, "Run configs; the first is the reference")
        ->required()
        ->check(CLI::ExistingFile);
    compare->add_option("--seeds", compare_seeds, "Training seeds")->capture_default_str();
    add_common(compare);

    std::string data_config_path;
    std::string data_out = "dataset.csv";
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
    gen->add_option("config", data_config_path, "Synthetic data config or run config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    gen->add_option("--out", data_out, "Output CSV file name, relative to --out-dir")->capture_default_str();
    gen->add_option("--seed", overrides.seed, "Override the data seed");
    gen->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();

    std::string command = "kercon";
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run) {
            command = "run";
            const auto config = load_config(config_path, overrides);
            print_result(kercon::run_single(config, out_dir));
        } else if (*ablate) {
            command = "ablate";
            const fs::path path(grid_path);
            auto grid = kercon::ablation_grid_from_json(kercon::read_json_file(path), path.parent_path());
            if (!grid_seeds.empty()) grid.seeds = grid_seeds;
            if (overrides.seed) grid.seeds = {*overrides.seed};
            if (overrides.epochs) grid.base.train.epochs = *overrides.epochs;
            const auto out = kercon::run_ablation(grid, out_dir, jobs);
            std::cout << out.table << '\n'
                      << out.rows.size() << " cells, " << out.resumed << " resumed, " << out.failures
                      << " failed; rows in " << (fs::path(out_dir) / "ablation.csv").string() << '\n';
            if (out.failures > 0) return 2;
        } else if (*compare) {
            command = "compare";
            Overrides per_config = overrides;
            per_config.seed.reset();
            std::vector<kercon::RunConfig> configs;
            for (const auto& p : compare_paths) configs.push_back(load_config(p, per_config));
            const auto seeds = overrides.seed ? std::vector<std::uint64_t>{*overrides.seed} : compare_seeds;
            const auto out = kercon::run_comparison(configs, seeds, out_dir, jobs);
            std::cout << kercon::comparison_table(out) << '\n' << out.csv;
            for (const auto& v : out.verdicts) {
                std::cout << v.method << " vs " << v.reference << ": lower ext MAE in " << v.lower_ext_mae << '/'
                          << v.seeds << ", lower BAcc in " << v.lower_bacc << '/' << v.seeds
                          << ", median score " << kercon::fixed2(v.method_median_score) << " vs "
                          << kercon::fixed2(v.reference_median_score) << '\n';
            }
        } else if (*gen) {
            command = "gen-data";
            const auto j = kercon::read_json_file(data_config_path);
            kercon::SyntheticConfig cfg;
            if (j.contains("data")) {
                cfg = kercon::run_config_from_json(j).synthetic.value_or(kercon::SyntheticConfig{});
            } else {
                cfg = j.get<kercon::SyntheticConfig>();
            }
            if (overrides.seed) cfg.seed = *overrides.seed;
            const auto data = kercon::generate(cfg);
            const auto target = fs::path(out_dir) / data_out;
            fs::create_directories(target.parent_path());
            kercon::write_dataset_with_manifest(data, cfg, target);
            std::cout << "wrote " << data.size() << " rows to " << target.string() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << json{{"error", e.what()}, {"command", command}}.dump() << '\n';
        return 1;
    }
    return 0;
}
