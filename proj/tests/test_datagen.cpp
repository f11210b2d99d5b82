#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "kercon/datagen.hpp"
#include "kercon/metrics.hpp"

using namespace kercon;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

SyntheticConfig small_config(std::uint64_t seed) {
    SyntheticConfig c;
    c.n_train = 400;
    c.n_internal_test = 200;
    c.n_external_test = 200;
    c.n_sites_train = 6;
    c.n_sites_external = 3;
    c.feature_dim = 8;
    c.seed = seed;
    return c;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

struct RawProbe {
    double mae_internal, mae_external, site_bacc;
};

RawProbe probe_raw_features(const Dataset& d) {
    const auto r = evaluate_representation([](const Eigen::MatrixXd& x) { return x; }, d, EvalConfig{});
    return {r.mae_internal, r.mae_external, r.site_bacc};
}

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("kercon_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("generate is deterministic per seed", "[datagen]") {
    const auto a = generate(small_config(3));
    const auto b = generate(small_config(3));
    CHECK(to_csv(a) == to_csv(b));
    CHECK(a == b);
    CHECK(to_csv(generate(small_config(4))) != to_csv(a));
}

TEST_CASE("generated splits have the requested shape", "[datagen]") {
    const auto cfg = small_config(5);
    const auto d = generate(cfg);
    CHECK(d.size() == 800);
    CHECK(d.feature_dim() == 8);
    CHECK(d.features.allFinite());
    CHECK(d.subset(Split::Train).size() == 400);
    CHECK(d.subset(Split::Internal).size() == 200);
    CHECK(d.subset(Split::External).size() == 200);

    std::set<int> train_sites, internal_sites, external_sites;
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(d.ages[i] >= cfg.age_min);
        CHECK(d.ages[i] < cfg.age_max);
        auto& bucket = d.splits[i] == Split::Train ? train_sites
                       : d.splits[i] == Split::Internal ? internal_sites : external_sites;
        bucket.insert(d.sites[i]);
    }
    CHECK(train_sites.size() == 6);
    CHECK(external_sites.size() == 3);
    CHECK(std::includes(train_sites.begin(), train_sites.end(), internal_sites.begin(), internal_sites.end()));
    for (int s : external_sites) CHECK_FALSE(train_sites.contains(s));
}

TEST_CASE("generator config validation", "[datagen]") {
    auto cfg = small_config(0);
    cfg.n_sites_external = 0;
    CHECK_THROWS_WITH(generate(cfg), Catch::Matchers::ContainsSubstring("n_sites_external = 0"));
    cfg.n_external_test = 0;
    CHECK_NOTHROW(generate(cfg));
    cfg = small_config(0);
    cfg.age_min = 50;
    cfg.age_max = 50;
    CHECK_THROWS(generate(cfg));
    cfg = small_config(0);
    cfg.site_effect_strength = -1.0;
    CHECK_THROWS(generate(cfg));
}

TEST_CASE("synthetic config JSON round-trip", "[datagen]") {
    auto cfg = small_config(17);
    cfg.site_effect_strength = 2.5;
    cfg.age_min = 10;
    cfg.age_max = 70;
    const nlohmann::json j = cfg;
    CHECK(j.at("age_range") == nlohmann::json::array({10.0, 70.0}));
    const auto back = j.get<SyntheticConfig>();
    CHECK(to_csv(generate(back)) == to_csv(generate(cfg)));
}

TEST_CASE("CSV round-trip", "[datagen][csv]") {
    const auto d = generate(small_config(6));
    CHECK(parse_csv(to_csv(d)) == d);

    const auto dir = temp_dir("csv");
    write_dataset_with_manifest(d, small_config(6), dir / "data.csv");
    CHECK(load_csv(dir / "data.csv") == d);
    const auto manifest = nlohmann::json::parse(std::ifstream(dir / "data.json"));
    CHECK(manifest.at("rows") == 800);
    CHECK(manifest.at("synthetic").get<SyntheticConfig>().seed == 6);
    fs::remove_all(dir);
}

TEST_CASE("CSV columns are matched by name", "[datagen][csv]") {
    const std::string text =
        "split,f1,age,f0,site\n"
        "train,0.5,30,1.5,0\n"
        "train,0.25,40,2.5,1\n"
        "external,0.125,50,3.5,2\n";
    const auto d = parse_csv(text);
    CHECK(d.size() == 3);
    CHECK(d.features(0, 0) == 1.5);
    CHECK(d.features(0, 1) == 0.5);
    CHECK(d.ages[2] == 50.0);
    CHECK(d.splits[2] == Split::External);
}

TEST_CASE("CSV errors", "[datagen][csv]") {
    CHECK_THROWS_WITH(parse_csv("site,f0,split\n0,1.0,train\n"), "missing column 'age'");
    CHECK_THROWS_WITH(parse_csv("site,age,split\n0,1.0,train\n"), "missing column 'f0'");
    CHECK_THROWS_WITH(parse_csv("site,age,f0,split\n0,30,1.0,train\n1,abc,2.0,train\n"),
                      Catch::Matchers::StartsWith("line 3:") && Catch::Matchers::ContainsSubstring("'abc'"));
    CHECK_THROWS_WITH(parse_csv("site,age,f0,split\n0,30,1.0\n"), Catch::Matchers::StartsWith("line 2:"));
    CHECK_THROWS_WITH(parse_csv("site,age,f0,split\n0,30,1.0,validation\n"), Catch::Matchers::StartsWith("line 2:"));
    CHECK_THROWS_WITH(parse_csv("site,age,f0,split\n0,30,1.0,train\n0,40,2.0,external\n"),
                      "external split leaks training sites (site 0)");
    CHECK_THROWS(load_csv("/nonexistent/kercon.csv"));
}

TEST_CASE("age marginals match across splits", "[datagen][property]") {
    const auto d = generate(SyntheticConfig{});
    const auto train = d.subset(Split::Train).ages;
    // two-sample KS critical value at alpha = 0.001 for 2000 vs 500 samples is about 0.098
    CHECK(ks_statistic(train, d.subset(Split::Internal).ages) < 0.1);
    CHECK(ks_statistic(train, d.subset(Split::External).ages) < 0.1);
}

TEST_CASE("site effect strength controls site identifiability", "[datagen][property]") {
    double previous = -1.0;
    for (double strength : {0.0, 1.0, 3.0}) {
        auto cfg = small_config(7);
        cfg.site_effect_strength = strength;
        const double bacc = probe_raw_features(generate(cfg)).site_bacc;
        CAPTURE(strength, bacc);
        CHECK(bacc > previous);
        previous = bacc;
    }
}

TEST_CASE("without site effects the external split is not harder", "[datagen][property]") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        SyntheticConfig cfg;
        cfg.site_effect_strength = 0.0;
        cfg.seed = seed;
        const auto r = probe_raw_features(generate(cfg));
        CAPTURE(seed, r.mae_internal, r.mae_external);
        CHECK(std::abs(r.mae_external - r.mae_internal) < 0.1 * r.mae_internal);
    }
}

TEST_CASE("noise-free, site-free features determine age linearly", "[datagen][property]") {
    SyntheticConfig cfg;
    cfg.site_effect_strength = 0.0;
    cfg.noise_std = 0.0;
    const auto r = probe_raw_features(generate(cfg));
    CHECK(r.mae_internal < 0.5);
    CHECK(r.mae_external < 0.5);
}
