#pragma once

// Run orchestration: JSON run configs, content-addressed run directories
// (runs/<hash>/{config.json,result.json,trace.csv,checkpoint.json}), the
// kernel x loss ablation grid and the baseline comparison.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "kercon/datagen.hpp"
#include "kercon/kernels.hpp"
#include "kercon/losses.hpp"
#include "kercon/metrics.hpp"
#include "kercon/train.hpp"

namespace kercon {

inline constexpr int kConfigSchemaVersion = 1;

// Config files that omit train.epochs get the desk-scale length, not TrainConfig's 300.
inline constexpr int kDeskScaleEpochs = 100;

using json = nlohmann::json;

struct RunConfig {
    std::string name;  // method label in comparison tables; defaults to the loss name
    TrainConfig train;
    EvalConfig eval;
    std::optional<SyntheticConfig> synthetic;
    std::optional<std::string> csv_path;

    std::string method() const {
        if (!name.empty()) return name;
        return train.mode == TrainMode::Baseline ? "l1" : std::string(loss_name(train.loss));
    }
};

inline std::string valid_loss_names() { return "yaware, thr, exp, supcon, l1"; }

inline json data_json(const RunConfig& c) {
    if (c.csv_path) return json{{"csv", *c.csv_path}};
    return json{{"synthetic", c.synthetic.value_or(SyntheticConfig{})}};
}

/// Fully expanded config; it alone reproduces a run.
inline json to_json(const RunConfig& c) {
    const auto& t = c.train;
    json j{{"schema_version", kConfigSchemaVersion},
           {"loss", t.mode == TrainMode::Baseline ? std::string("l1") : std::string(loss_name(t.loss))},
           {"kernel", std::string(kernel_name(t.kernel.kind))},
           {"bandwidth", t.kernel.bandwidth},
           {"thr_normalization",
            t.loss_options.threshold_normalization == ThresholdNormalization::Count ? "count" : "weight_sum"},
           {"temperature", t.temperature},
           {"train",
            {{"learning_rate", t.learning_rate},
             {"lr_decay", t.lr_decay},
             {"decay_every_epochs", t.decay_every_epochs},
             {"weight_decay", t.weight_decay},
             {"batch_size", t.batch_size},
             {"epochs", t.epochs},
             {"seed", t.seed},
             {"hidden_sizes", t.hidden_sizes},
             {"embedding_dim", t.embedding_dim},
             {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"epsilon", t.adam.epsilon}}}}},
           {"eval",
            {{"ridge_lambda", c.eval.ridge_lambda},
             {"logistic_epochs", c.eval.logistic_epochs},
             {"logistic_lr", c.eval.logistic_lr}}},
           {"data", data_json(c)}};
    if (!c.name.empty()) j["name"] = c.name;
    return j;
}

inline RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    static const std::vector<std::string> known{"schema_version", "name", "loss", "kernel", "bandwidth",
                                                "thr_normalization", "temperature", "train", "eval", "data"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw std::invalid_argument("unknown config key '" + key + "'");
        }
    }
    const int version = j.value("schema_version", kConfigSchemaVersion);
    if (version != kConfigSchemaVersion) {
        throw std::invalid_argument("unsupported config schema_version " + std::to_string(version));
    }

    RunConfig c;
    c.name = j.value("name", std::string());
    auto& t = c.train;
    t.epochs = kDeskScaleEpochs;
    const auto loss = j.value("loss", std::string("exp"));
    if (loss == "l1") {
        t.mode = TrainMode::Baseline;
    } else {
        try {
            t.loss = parse_loss_kind(loss);
        } catch (const std::invalid_argument&) {
            throw std::invalid_argument("unknown loss '" + loss + "' (valid: " + valid_loss_names() + ")");
        }
    }
    t.kernel.kind = parse_kernel_kind(j.value("kernel", std::string("rbf")));
    t.kernel.bandwidth = j.value("bandwidth", 2.0);
    const auto norm = j.value("thr_normalization", std::string("weight_sum"));
    if (norm == "weight_sum") {
        t.loss_options.threshold_normalization = ThresholdNormalization::WeightSum;
    } else if (norm == "count") {
        t.loss_options.threshold_normalization = ThresholdNormalization::Count;
    } else {
        throw std::invalid_argument("unknown thr_normalization '" + norm + "' (valid: weight_sum, count)");
    }
    t.temperature = j.value("temperature", t.temperature);

    if (j.contains("train")) {
        const auto& tr = j["train"];
        t.learning_rate = tr.value("learning_rate", t.learning_rate);
        t.lr_decay = tr.value("lr_decay", t.lr_decay);
        t.decay_every_epochs = tr.value("decay_every_epochs", t.decay_every_epochs);
        t.weight_decay = tr.value("weight_decay", t.weight_decay);
        t.batch_size = tr.value("batch_size", t.batch_size);
        t.epochs = tr.value("epochs", t.epochs);
        t.seed = tr.value("seed", t.seed);
        t.hidden_sizes = tr.value("hidden_sizes", t.hidden_sizes);
        t.embedding_dim = tr.value("embedding_dim", t.embedding_dim);
        if (tr.contains("adam")) {
            t.adam.beta1 = tr["adam"].value("beta1", t.adam.beta1);
            t.adam.beta2 = tr["adam"].value("beta2", t.adam.beta2);
            t.adam.epsilon = tr["adam"].value("epsilon", t.adam.epsilon);
        }
    }
    if (j.contains("eval")) {
        const auto& ev = j["eval"];
        c.eval.ridge_lambda = ev.value("ridge_lambda", c.eval.ridge_lambda);
        c.eval.logistic_epochs = ev.value("logistic_epochs", c.eval.logistic_epochs);
        c.eval.logistic_lr = ev.value("logistic_lr", c.eval.logistic_lr);
    }
    if (j.contains("data")) {
        const auto& d = j["data"];
        if (d.contains("csv")) {
            c.csv_path = d["csv"].get<std::string>();
        } else {
            c.synthetic = d.value("synthetic", json::object()).get<SyntheticConfig>();
        }
    } else {
        c.synthetic = SyntheticConfig{};
    }
    t.validate();
    if (c.synthetic) c.synthetic->validate();
    return c;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
}

/// FNV-1a over the canonical (sorted-key) dump of the config.
inline std::string config_hash(const json& canonical) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : canonical.dump()) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

/// Write-temp-then-rename so readers never observe partial files.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ostringstream suffix;
    suffix << ".tmp." << std::this_thread::get_id();
    auto tmp = path;
    tmp += suffix.str();
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Single runs
// ---------------------------------------------------------------------------

struct RunRecord {
    json config;
    std::string hash;
    ProbeResult result;
    double wall_time_s = 0.0;
    std::filesystem::path run_dir;
    std::filesystem::path trace_path;
    bool resumed = false;
};

inline json result_json(const ProbeResult& r) {
    return json{{"int_mae", r.mae_internal}, {"ext_mae", r.mae_external}, {"bacc", r.site_bacc},
                {"score", r.challenge_score}};
}

inline ProbeResult result_from_json(const json& j) {
    return {j.at("int_mae").get<double>(), j.at("ext_mae").get<double>(), j.at("bacc").get<double>(),
            j.at("score").get<double>()};
}

inline Dataset load_run_data(const RunConfig& config) {
    if (config.csv_path) return load_csv(*config.csv_path);
    return generate(config.synthetic.value_or(SyntheticConfig{}));
}

/// Trains and evaluates `config` on `data`, persisting under
/// out_dir/runs/<hash>/. A run directory that already holds result.json is
/// reused without retraining.
inline RunRecord run_single(const RunConfig& config, const Dataset& data, const std::filesystem::path& out_dir) {
    RunRecord rec;
    rec.config = to_json(config);
    rec.hash = config_hash(rec.config);
    rec.run_dir = out_dir / "runs" / rec.hash;
    rec.trace_path = rec.run_dir / "trace.csv";
    const auto result_path = rec.run_dir / "result.json";

    if (std::filesystem::exists(result_path)) {
        const auto stored = read_json_file(result_path);
        rec.result = result_from_json(stored.at("result"));
        rec.wall_time_s = stored.value("wall_time_s", 0.0);
        rec.resumed = true;
        return rec;
    }

    const auto start = std::chrono::steady_clock::now();
    const auto model = train(data.subset(Split::Train), config.train);
    rec.result = evaluate(model, data, config.eval);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    write_file_atomic(rec.run_dir / "config.json", rec.config.dump(2) + "\n");
    write_file_atomic(rec.trace_path, trace_to_csv(model.trace));
    write_file_atomic(rec.run_dir / "checkpoint.json", checkpoint_json(model).dump() + "\n");
    const json stored{{"config_hash", rec.hash},
                      {"method", config.method()},
                      {"result", result_json(rec.result)},
                      {"wall_time_s", rec.wall_time_s},
                      {"trace", "trace.csv"}};
    write_file_atomic(result_path, stored.dump(2) + "\n");
    return rec;
}

inline RunRecord run_single(const RunConfig& config, const std::filesystem::path& out_dir) {
    return run_single(config, load_run_data(config), out_dir);
}

// ---------------------------------------------------------------------------
// Aggregation helpers
// ---------------------------------------------------------------------------

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd out;
    if (v.empty()) return out;
    for (double x : v) out.mean += x;
    out.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - out.mean) * (x - out.mean);
        out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return out;
}

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string mean_std_cell(const MeanStd& m) { return fixed2(m.mean) + " ± " + fixed2(m.std); }

/// Runs fn(i) for i in [0, count) on `jobs` threads. Exceptions inside fn are
/// the caller's responsibility.
template <class Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

struct AblationGrid {
    RunConfig base;
    std::vector<LabelKernel> kernels{LabelKernel::cauchy(1.0), LabelKernel::cauchy(2.0), LabelKernel::gaussian(1.0),
                                     LabelKernel::gaussian(2.0)};
    std::vector<LossKind> losses{LossKind::YAware, LossKind::Threshold, LossKind::Exp};
    std::vector<std::uint64_t> seeds{1, 2, 3};

    std::size_t cell_count() const { return kernels.size() * losses.size() * seeds.size(); }

    void validate() const {
        if (kernels.empty() || losses.empty() || seeds.empty()) {
            throw std::invalid_argument("ablation grid axes must be non-empty");
        }
    }
};

inline AblationGrid ablation_grid_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
    AblationGrid grid;
    if (j.contains("base")) {
        const auto& b = j["base"];
        grid.base = b.is_string() ? run_config_from_json(read_json_file(base_dir / b.get<std::string>()))
                                  : run_config_from_json(b);
    } else {
        grid.base = run_config_from_json(json::object());
    }
    if (j.contains("kernels")) {
        grid.kernels.clear();
        for (const auto& k : j["kernels"]) {
            grid.kernels.push_back(LabelKernel::make(parse_kernel_kind(k.at("kernel").get<std::string>()),
                                                     k.value("bandwidth", 1.0)));
        }
    }
    if (j.contains("losses")) {
        grid.losses.clear();
        for (const auto& l : j["losses"]) grid.losses.push_back(parse_loss_kind(l.get<std::string>()));
    }
    if (j.contains("seeds")) grid.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    grid.validate();
    return grid;
}

struct AblationRow {
    LossKind loss{};
    LabelKernel kernel{};
    std::uint64_t seed = 0;
    std::optional<ProbeResult> result;
    std::string error;
    bool resumed = false;
};

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os << "loss,kernel,bandwidth,seed,int_mae,ext_mae,bacc,score\n";
    for (const auto& r : rows) {
        if (!r.result) continue;
        os << loss_name(r.loss) << ',' << kernel_name(r.kernel.kind) << ',' << format_double(r.kernel.bandwidth) << ','
           << r.seed << ',' << format_double(r.result->mae_internal) << ',' << format_double(r.result->mae_external)
           << ',' << format_double(r.result->site_bacc) << ',' << format_double(r.result->challenge_score) << '\n';
    }
    return os.str();
}

/// Kernel rows x loss columns of challenge score mean ± std, plus one
/// block per loss with every metric (BAcc in percent).
inline std::string ablation_table(const AblationGrid& grid, const std::vector<AblationRow>& rows) {
    auto collect = [&](const LabelKernel& k, LossKind l, auto metric) {
        std::vector<double> v;
        for (const auto& r : rows) {
            if (r.result && r.kernel == k && r.loss == l) v.push_back(metric(*r.result));
        }
        return mean_std(v);
    };
    auto score = [](const ProbeResult& p) { return p.challenge_score; };

    std::ostringstream os;
    os << "| Kernel | σ / γ |";
    for (auto l : grid.losses) os << ' ' << loss_name(l) << " |";
    os << "\n|---|---|";
    for (std::size_t i = 0; i < grid.losses.size(); ++i) os << "---|";
    os << '\n';
    for (const auto& k : grid.kernels) {
        os << "| " << kernel_name(k.kind) << " | " << format_double(k.bandwidth) << " |";
        for (auto l : grid.losses) os << ' ' << mean_std_cell(collect(k, l, score)) << " |";
        os << '\n';
    }

    os << "\n| Loss | Kernel | σ / γ | Int. MAE | BAcc (%) | Ext. MAE | Score |\n|---|---|---|---|---|---|---|\n";
    for (auto l : grid.losses) {
        for (const auto& k : grid.kernels) {
            os << "| " << loss_name(l) << " | " << kernel_name(k.kind) << " | " << format_double(k.bandwidth) << " | "
               << mean_std_cell(collect(k, l, [](const ProbeResult& p) { return p.mae_internal; })) << " | "
               << mean_std_cell(collect(k, l, [](const ProbeResult& p) { return 100.0 * p.site_bacc; })) << " | "
               << mean_std_cell(collect(k, l, [](const ProbeResult& p) { return p.mae_external; })) << " | "
               << mean_std_cell(collect(k, l, score)) << " |\n";
        }
    }
    return os.str();
}

struct AblationOutcome {
    std::vector<AblationRow> rows;  // grid order: kernel, loss, seed
    std::string csv;
    std::string table;
    std::size_t failures = 0;
    std::size_t resumed = 0;
};

/// Runs every (kernel, loss, seed) cell, skipping cells whose run directory is
/// already complete. Failed cells are recorded and the grid continues.
inline AblationOutcome run_ablation(const AblationGrid& grid, const std::filesystem::path& out_dir, int jobs = 1) {
    grid.validate();
    const Dataset data = load_run_data(grid.base);

    AblationOutcome out;
    for (const auto& k : grid.kernels) {
        for (auto l : grid.losses) {
            for (auto s : grid.seeds) out.rows.push_back({l, k, s, std::nullopt, {}, false});
        }
    }
    parallel_for(out.rows.size(), jobs, [&](std::size_t i) {
        auto& row = out.rows[i];
        RunConfig cfg = grid.base;
        cfg.name.clear();
        cfg.train.mode = TrainMode::Contrastive;
        cfg.train.loss = row.loss;
        cfg.train.kernel = row.kernel;
        cfg.train.seed = row.seed;
        try {
            const auto rec = run_single(cfg, data, out_dir);
            row.result = rec.result;
            row.resumed = rec.resumed;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });

    std::ostringstream failures;
    failures << "loss,kernel,bandwidth,seed,error\n";
    for (const auto& r : out.rows) {
        if (r.resumed) ++out.resumed;
        if (!r.result) {
            ++out.failures;
            failures << loss_name(r.loss) << ',' << kernel_name(r.kernel.kind) << ','
                     << format_double(r.kernel.bandwidth) << ',' << r.seed << ",\"" << r.error << "\"\n";
        }
    }
    out.csv = ablation_csv(out.rows);
    out.table = ablation_table(grid, out.rows);
    write_file_atomic(out_dir / "ablation.csv", out.csv);
    write_file_atomic(out_dir / "ablation_table.md", out.table);
    if (out.failures > 0) write_file_atomic(out_dir / "ablation_failures.csv", failures.str());
    return out;
}

// ---------------------------------------------------------------------------
// Method comparison
// ---------------------------------------------------------------------------

struct ComparisonRow {
    std::string method;
    std::uint64_t seed = 0;
    ProbeResult result;
};

struct ComparisonVerdict {
    std::string reference;
    std::string method;
    int seeds = 0;
    int lower_ext_mae = 0;
    int lower_bacc = 0;
    int lower_score = 0;
    double reference_median_score = 0.0;
    double method_median_score = 0.0;
};

struct ComparisonOutcome {
    std::vector<ComparisonRow> runs;  // per method, per seed
    std::vector<std::pair<std::string, ProbeResult>> summary;  // seed means
    std::vector<ComparisonVerdict> verdicts;  // every method against the first
    std::string csv;
    std::string runs_csv;
};

inline std::string comparison_csv(const std::vector<std::pair<std::string, ProbeResult>>& summary) {
    std::ostringstream os;
    os << "method,int_mae,bacc,ext_mae,score\n";
    for (const auto& [m, r] : summary) {
        os << m << ',' << format_double(r.mae_internal) << ',' << format_double(r.site_bacc) << ','
           << format_double(r.mae_external) << ',' << format_double(r.challenge_score) << '\n';
    }
    return os.str();
}

inline json verdict_json(const ComparisonVerdict& v) {
    return json{{"reference", v.reference},
                {"method", v.method},
                {"seeds", v.seeds},
                {"lower_ext_mae", v.lower_ext_mae},
                {"lower_bacc", v.lower_bacc},
                {"lower_score", v.lower_score},
                {"reference_median_score", v.reference_median_score},
                {"method_median_score", v.method_median_score}};
}

/// Trains every config for every seed on one shared dataset. The first
/// config is the reference for the directional verdicts.
inline ComparisonOutcome run_comparison(const std::vector<RunConfig>& configs, const std::vector<std::uint64_t>& seeds,
                                        const std::filesystem::path& out_dir, int jobs = 1) {
    if (configs.size() < 1) throw std::invalid_argument("compare needs at least one config");
    if (seeds.empty()) throw std::invalid_argument("compare needs at least one seed");
    const auto data_spec = data_json(configs.front());
    for (const auto& c : configs) {
        if (data_json(c) != data_spec) {
            throw std::invalid_argument("mismatched dataset seeds: compared configs must share the same data section");
        }
    }
    const Dataset data = load_run_data(configs.front());

    ComparisonOutcome out;
    for (const auto& c : configs) {
        for (auto s : seeds) out.runs.push_back({c.method(), s, {}});
    }
    std::vector<std::string> errors(out.runs.size());
    parallel_for(out.runs.size(), jobs, [&](std::size_t i) {
        RunConfig cfg = configs[i / seeds.size()];
        cfg.train.seed = out.runs[i].seed;
        try {
            out.runs[i].result = run_single(cfg, data, out_dir).result;
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty()) {
            throw std::runtime_error("compare: " + out.runs[i].method + " seed " + std::to_string(out.runs[i].seed) +
                                     " failed: " + errors[i]);
        }
    }

    const auto n_seeds = seeds.size();
    for (std::size_t m = 0; m < configs.size(); ++m) {
        std::vector<double> im, ba, em, sc;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            const auto& r = out.runs[m * n_seeds + s].result;
            im.push_back(r.mae_internal);
            ba.push_back(r.site_bacc);
            em.push_back(r.mae_external);
            sc.push_back(r.challenge_score);
        }
        out.summary.emplace_back(configs[m].method(), ProbeResult{mean_std(im).mean, mean_std(em).mean,
                                                                  mean_std(ba).mean, mean_std(sc).mean});
    }
    for (std::size_t m = 1; m < configs.size(); ++m) {
        ComparisonVerdict v;
        v.reference = configs[0].method();
        v.method = configs[m].method();
        v.seeds = static_cast<int>(n_seeds);
        std::vector<double> ref_scores, scores;
        for (std::size_t s = 0; s < n_seeds; ++s) {
            const auto& ref = out.runs[s].result;
            const auto& r = out.runs[m * n_seeds + s].result;
            v.lower_ext_mae += r.mae_external < ref.mae_external;
            v.lower_bacc += r.site_bacc < ref.site_bacc;
            v.lower_score += r.challenge_score < ref.challenge_score;
            ref_scores.push_back(ref.challenge_score);
            scores.push_back(r.challenge_score);
        }
        v.reference_median_score = median(ref_scores);
        v.method_median_score = median(scores);
        out.verdicts.push_back(v);
    }

    out.csv = comparison_csv(out.summary);
    std::ostringstream runs;
    runs << "method,seed,int_mae,bacc,ext_mae,score\n";
    for (const auto& r : out.runs) {
        runs << r.method << ',' << r.seed << ',' << format_double(r.result.mae_internal) << ','
             << format_double(r.result.site_bacc) << ',' << format_double(r.result.mae_external) << ','
             << format_double(r.result.challenge_score) << '\n';
    }
    out.runs_csv = runs.str();

    json verdicts = json::array();
    for (const auto& v : out.verdicts) verdicts.push_back(verdict_json(v));
    write_file_atomic(out_dir / "comparison.csv", out.csv);
    write_file_atomic(out_dir / "comparison_runs.csv", out.runs_csv);
    write_file_atomic(out_dir / "comparison_verdict.json", verdicts.dump(2) + "\n");
    return out;
}

/// Markdown rendering of a comparison (BAcc in percent).
inline std::string comparison_table(const ComparisonOutcome& out) {
    std::map<std::string, std::vector<ProbeResult>> per_method;
    std::vector<std::string> order;
    for (const auto& r : out.runs) {
        if (!per_method.contains(r.method)) order.push_back(r.method);
        per_method[r.method].push_back(r.result);
    }
    std::ostringstream os;
    os << "| Method | Int. MAE | BAcc (%) | Ext. MAE | Score |\n|---|---|---|---|---|\n";
    for (const auto& m : order) {
        std::vector<double> im, ba, em, sc;
        for (const auto& r : per_method[m]) {
            im.push_back(r.mae_internal);
            ba.push_back(100.0 * r.site_bacc);
            em.push_back(r.mae_external);
            sc.push_back(r.challenge_score);
        }
        os << "| " << m << " | " << mean_std_cell(mean_std(im)) << " | " << mean_std_cell(mean_std(ba)) << " | "
           << mean_std_cell(mean_std(em)) << " | " << mean_std_cell(mean_std(sc)) << " |\n";
    }
    return os.str();
}

}  // namespace kercon
