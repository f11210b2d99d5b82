#include <catch2/catch_amalgamated.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "kercon/experiment.hpp"

using namespace kercon;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("kercon_test_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json small_config(const std::string& loss = "exp") {
    return json::parse(R"({
        "loss": ")" + loss + R"(",
        "kernel": "rbf", "bandwidth": 2.0,
        "train": {"epochs": 3, "hidden_sizes": [16], "embedding_dim": 4},
        "data": {"synthetic": {"n_train": 100, "n_internal_test": 40, "n_external_test": 40,
                               "n_sites_train": 4, "n_sites_external": 2, "feature_dim": 8, "seed": 5}}
    })");
}

}  // namespace

TEST_CASE("config parsing", "[experiment]") {
    const auto c = run_config_from_json(small_config());
    CHECK(c.train.loss == LossKind::Exp);
    CHECK(c.train.epochs == 3);
    CHECK(c.train.hidden_sizes == std::vector<int>{16});
    CHECK(c.method() == "exp");

    CHECK(run_config_from_json(json::object()).train.epochs == kDeskScaleEpochs);
    CHECK(run_config_from_json(small_config("l1")).train.mode == TrainMode::Baseline);
    CHECK(run_config_from_json(small_config("l1")).method() == "l1");

    CHECK_THROWS_WITH(run_config_from_json(small_config("foo")),
                      "unknown loss 'foo' (valid: yaware, thr, exp, supcon, l1)");
    auto extra = small_config();
    extra["lossy"] = 1;
    CHECK_THROWS_WITH(run_config_from_json(extra), Catch::Matchers::ContainsSubstring("unknown config key 'lossy'"));
    auto version = small_config();
    version["schema_version"] = 2;
    CHECK_THROWS_WITH(run_config_from_json(version), Catch::Matchers::ContainsSubstring("schema_version"));
}

TEST_CASE("expanded config round-trips and hashes stably", "[experiment]") {
    const auto c = run_config_from_json(small_config());
    const auto expanded = to_json(c);
    CHECK(to_json(run_config_from_json(expanded)) == expanded);
    CHECK(config_hash(expanded) == config_hash(to_json(run_config_from_json(expanded))));
    CHECK(config_hash(expanded).size() == 16);

    auto other = c;
    other.train.seed = 1;
    CHECK(config_hash(to_json(other)) != config_hash(expanded));
}

TEST_CASE("run_single persists and resumes", "[experiment]") {
    TempDir tmp;
    const auto c = run_config_from_json(small_config());
    const auto first = run_single(c, tmp.path);
    CHECK_FALSE(first.resumed);
    for (const char* f : {"config.json", "trace.csv", "checkpoint.json", "result.json"}) {
        CHECK(fs::exists(first.run_dir / f));
    }
    CHECK(read_json_file(first.run_dir / "config.json") == first.config);
    // the stored config alone reproduces the run
    CHECK(config_hash(to_json(run_config_from_json(read_json_file(first.run_dir / "config.json")))) == first.hash);

    const auto trace = slurp(first.trace_path);
    CHECK(trace.rfind("epoch,mean_loss,lr\n", 0) == 0);
    CHECK(std::count(trace.begin(), trace.end(), '\n') == 1 + 3);

    const auto second = run_single(c, tmp.path);
    CHECK(second.resumed);
    CHECK(second.result.mae_external == first.result.mae_external);
    CHECK(second.result.challenge_score == first.result.challenge_score);

    // a fresh directory reproduces the result bit for bit
    TempDir fresh;
    const auto third = run_single(c, fresh.path);
    CHECK_FALSE(third.resumed);
    CHECK(result_from_json(read_json_file(third.run_dir / "result.json").at("result")).challenge_score ==
          first.result.challenge_score);
    CHECK(third.result.mae_internal == first.result.mae_internal);
    CHECK(third.result.site_bacc == first.result.site_bacc);
    CHECK(slurp(third.trace_path) == trace);
}

TEST_CASE("smoke config finishes quickly", "[experiment]") {
    TempDir tmp;
    const auto c = run_config_from_json(read_json_file(fs::path(KERCON_SOURCE_DIR) / "configs" / "smoke.json"));
    const auto start = std::chrono::steady_clock::now();
    const auto rec = run_single(c, tmp.path);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 60.0);
    CHECK(std::isfinite(rec.result.challenge_score));
}

TEST_CASE("aggregation helpers", "[experiment]") {
    const auto same = mean_std({1.25, 1.25, 1.25});
    CHECK(same.std == 0.0);
    CHECK(mean_std_cell(same) == "1.25 ± 0.00");
    CHECK(mean_std({2.0}).std == 0.0);
    CHECK(mean_std({1.0, 3.0}).std == Catch::Approx(std::sqrt(2.0)));
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
    CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    CHECK(fixed2(2.345678) == "2.35");
}

TEST_CASE("small ablation grid", "[experiment]") {
    TempDir tmp;
    auto j = json::object();
    j["base"] = small_config();
    j["kernels"] = json::array({{{"kernel", "cauchy"}, {"bandwidth", 1.0}}, {{"kernel", "rbf"}, {"bandwidth", 2.0}}});
    j["losses"] = {"thr", "exp"};
    j["seeds"] = {1, 2};
    const auto grid = ablation_grid_from_json(j);
    CHECK(grid.cell_count() == 8);

    const auto out = run_ablation(grid, tmp.path, 2);
    CHECK(out.failures == 0);
    CHECK(out.rows.size() == 8);
    const auto csv = slurp(tmp.path / "ablation.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 8);
    CHECK(csv.rfind("loss,kernel,bandwidth,seed,int_mae,ext_mae,bacc,score\n", 0) == 0);
    CHECK(fs::exists(tmp.path / "ablation_table.md"));
    CHECK_FALSE(fs::exists(tmp.path / "ablation_failures.csv"));

    SECTION("rerun resumes every cell") {
        const auto again = run_ablation(grid, tmp.path, 1);
        CHECK(again.resumed == 8);
        CHECK(again.csv == csv);
    }
    SECTION("fresh directory is bit-identical") {
        TempDir fresh;
        const auto again = run_ablation(grid, fresh.path, 3);
        CHECK(again.resumed == 0);
        CHECK(again.csv == csv);
        CHECK(again.table == out.table);
    }
}

TEST_CASE("ablation with identical seeds reports zero spread", "[experiment]") {
    TempDir tmp;
    auto j = json::object();
    j["base"] = small_config();
    j["kernels"] = json::array({{{"kernel", "rbf"}, {"bandwidth", 2.0}}});
    j["losses"] = {"exp"};
    j["seeds"] = {4, 4};
    const auto out = run_ablation(ablation_grid_from_json(j), tmp.path);
    CHECK(out.table.find("± 0.00") != std::string::npos);
}

TEST_CASE("comparison outputs", "[experiment]") {
    TempDir tmp;
    const auto a = run_config_from_json(small_config("exp"));
    const auto b = run_config_from_json(small_config("l1"));
    const auto out = run_comparison({b, a}, {0, 1}, tmp.path);
    const auto csv = slurp(tmp.path / "comparison.csv");
    CHECK(csv.substr(0, csv.find('\n')) == "method,int_mae,bacc,ext_mae,score");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    REQUIRE(out.verdicts.size() == 1);
    CHECK(out.verdicts[0].reference == "l1");
    CHECK(out.verdicts[0].method == "exp");
    CHECK(out.verdicts[0].seeds == 2);
    CHECK(fs::exists(tmp.path / "comparison_verdict.json"));
    CHECK(comparison_table(out).find("l1") != std::string::npos);

    SECTION("identical configs give identical rows") {
        auto a2 = a;
        a2.name = "exp_again";
        TempDir other;
        const auto same = run_comparison({a, a2}, {3}, other.path);
        REQUIRE(same.summary.size() == 2);
        CHECK(same.summary[0].second.mae_external == same.summary[1].second.mae_external);
        CHECK(same.summary[0].second.site_bacc == same.summary[1].second.site_bacc);
        CHECK(same.summary[0].second.challenge_score == same.summary[1].second.challenge_score);
    }
    SECTION("mismatched datasets are rejected") {
        auto c = a;
        c.synthetic->seed = 99;
        CHECK_THROWS_WITH(run_comparison({a, c}, {0}, tmp.path),
                          Catch::Matchers::ContainsSubstring("mismatched dataset seeds"));
    }
}

TEST_CASE("write_file_atomic leaves no temporaries", "[experiment]") {
    TempDir tmp;
    const auto target = tmp.path / "nested" / "out.txt";
    write_file_atomic(target, "first");
    write_file_atomic(target, "second");
    CHECK(slurp(target) == "second");
    int entries = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(target.parent_path())) ++entries;
    CHECK(entries == 1);
}
