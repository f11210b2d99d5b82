#pragma once

// Synthetic multi-site regression data: an age-driven signal block, a
// nuisance block carrying per-site offset and gain, and isotropic noise.
// Train and internal-test samples come from the training sites; the external
// test set comes from sites never seen in training.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kercon/rng.hpp"

namespace kercon {

enum class Split { Train, Internal, External };

inline std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Internal: return "internal";
        case Split::External: return "external";
    }
    return "?";
}

inline Split parse_split(std::string_view name) {
    if (name == "train") return Split::Train;
    if (name == "internal") return Split::Internal;
    if (name == "external") return Split::External;
    throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

struct Dataset {
    Eigen::MatrixXd features;  // M x feature_dim
    std::vector<double> ages;
    std::vector<int> sites;
    std::vector<Split> splits;

    std::size_t size() const { return ages.size(); }
    int feature_dim() const { return static_cast<int>(features.cols()); }

    Dataset subset(Split which) const {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < size(); ++i) {
            if (splits[i] == which) rows.push_back(static_cast<Eigen::Index>(i));
        }
        Dataset out;
        out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.features.row(static_cast<Eigen::Index>(r)) = features.row(rows[r]);
            out.ages.push_back(ages[rows[r]]);
            out.sites.push_back(sites[rows[r]]);
            out.splits.push_back(which);
        }
        return out;
    }

    Eigen::VectorXd age_vector() const {
        return Eigen::Map<const Eigen::VectorXd>(ages.data(), static_cast<Eigen::Index>(ages.size()));
    }

    void validate() const {
        const auto m = static_cast<Eigen::Index>(ages.size());
        if (features.rows() != m || static_cast<Eigen::Index>(sites.size()) != m ||
            static_cast<Eigen::Index>(splits.size()) != m) {
            throw std::invalid_argument("dataset columns have inconsistent lengths");
        }
        if (!features.allFinite()) throw std::invalid_argument("dataset contains non-finite features");
        for (double a : ages) {
            if (!std::isfinite(a)) throw std::invalid_argument("dataset contains non-finite ages");
        }
        std::set<int> train_sites;
        for (std::size_t i = 0; i < size(); ++i) {
            if (splits[i] == Split::Train) train_sites.insert(sites[i]);
        }
        for (std::size_t i = 0; i < size(); ++i) {
            if (splits[i] == Split::External && train_sites.contains(sites[i])) {
                throw std::invalid_argument("external split leaks training sites (site " +
                                            std::to_string(sites[i]) + ")");
            }
        }
    }

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
               a.features == b.features && a.ages == b.ages && a.sites == b.sites && a.splits == b.splits;
    }
};

struct SyntheticConfig {
    int n_train = 2000;
    int n_internal_test = 500;
    int n_external_test = 500;
    int n_sites_train = 20;
    int n_sites_external = 5;
    int feature_dim = 32;
    double age_min = 6.0;
    double age_max = 86.0;
    double site_effect_strength = 3.0;
    double noise_std = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_train < 0 || n_internal_test < 0 || n_external_test < 0) {
            throw std::invalid_argument("sample counts must be non-negative");
        }
        if (n_sites_train < 1) throw std::invalid_argument("need at least one training site");
        if (n_sites_external < 0) throw std::invalid_argument("n_sites_external must be non-negative");
        if (n_sites_external == 0 && n_external_test > 0) {
            throw std::invalid_argument("external test samples requested but n_sites_external = 0");
        }
        if (feature_dim < 2) throw std::invalid_argument("feature_dim must be at least 2");
        if (!(age_min < age_max)) throw std::invalid_argument("age_range min must be below max");
        if (!(site_effect_strength >= 0.0)) throw std::invalid_argument("site_effect_strength must be >= 0");
        if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be >= 0");
    }

    // The first half of the features carries age, the rest is the per-site nuisance block.
    int signal_dim() const { return std::max(1, feature_dim / 2); }
    int nuisance_dim() const { return feature_dim - signal_dim(); }
};

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
    j = nlohmann::json{{"n_train", c.n_train},
                       {"n_internal_test", c.n_internal_test},
                       {"n_external_test", c.n_external_test},
                       {"n_sites_train", c.n_sites_train},
                       {"n_sites_external", c.n_sites_external},
                       {"feature_dim", c.feature_dim},
                       {"age_range", {c.age_min, c.age_max}},
                       {"site_effect_strength", c.site_effect_strength},
                       {"noise_std", c.noise_std},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
    c = SyntheticConfig{};
    c.n_train = j.value("n_train", c.n_train);
    c.n_internal_test = j.value("n_internal_test", c.n_internal_test);
    c.n_external_test = j.value("n_external_test", c.n_external_test);
    c.n_sites_train = j.value("n_sites_train", c.n_sites_train);
    c.n_sites_external = j.value("n_sites_external", c.n_sites_external);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    if (j.contains("age_range")) {
        const auto& r = j.at("age_range");
        if (!r.is_array() || r.size() != 2) throw std::invalid_argument("age_range must be [min, max]");
        c.age_min = r[0].get<double>();
        c.age_max = r[1].get<double>();
    }
    c.site_effect_strength = j.value("site_effect_strength", c.site_effect_strength);
    c.noise_std = j.value("noise_std", c.noise_std);
    c.seed = j.value("seed", c.seed);
}

namespace detail {

inline constexpr int kAgeBasisSize = 3;

/// Cubic polynomial age features on a normalized age a in [-1, 1].
inline Eigen::Matrix<double, kAgeBasisSize, 1> age_basis(double a) {
    Eigen::Matrix<double, kAgeBasisSize, 1> phi;
    phi << a, a * a - 1.0 / 3.0, a * a * a;
    return phi;
}

struct SiteEffect {
    Eigen::VectorXd offset;
    double log_gain = 0.0;
};

}  // namespace detail

inline Dataset generate(const SyntheticConfig& config) {
    config.validate();
    const int signal_dim = config.signal_dim();
    const int nuisance_dim = config.nuisance_dim();

    // Structural parameters (mixing matrix, site effects) come from their own stream.
    Rng structure(derive_seed(config.seed, 0));
    Eigen::MatrixXd mixing(signal_dim, detail::kAgeBasisSize);
    for (Eigen::Index j = 0; j < mixing.cols(); ++j) {
        for (Eigen::Index i = 0; i < mixing.rows(); ++i) mixing(i, j) = structure.normal();
    }
    mixing /= std::sqrt(static_cast<double>(detail::kAgeBasisSize));

    const int total_sites = config.n_sites_train + config.n_sites_external;
    std::vector<detail::SiteEffect> site_effects(static_cast<std::size_t>(total_sites));
    for (auto& e : site_effects) {
        e.offset.resize(nuisance_dim);
        for (Eigen::Index j = 0; j < nuisance_dim; ++j) e.offset(j) = structure.normal();
        e.log_gain = structure.normal(0.0, 0.5);
    }

    Dataset out;
    const int total = config.n_train + config.n_internal_test + config.n_external_test;
    out.features.resize(total, config.feature_dim);
    out.ages.reserve(total);
    out.sites.reserve(total);
    out.splits.reserve(total);

    const double span = config.age_max - config.age_min;
    const double strength = config.site_effect_strength;
    Eigen::Index row = 0;
    auto emit = [&](Split split, int count, int first_site, int n_sites, std::uint64_t stream) {
        Rng rng(derive_seed(config.seed, stream));
        for (int n = 0; n < count; ++n, ++row) {
            const double age = config.age_min + span * rng.uniform();
            const int site = first_site + static_cast<int>(rng.index(static_cast<std::uint64_t>(n_sites)));
            const double a = 2.0 * (age - config.age_min) / span - 1.0;

            out.features.row(row).head(signal_dim) = (mixing * detail::age_basis(a)).transpose();
            const auto& effect = site_effects[static_cast<std::size_t>(site)];
            const double gain = std::exp(strength * effect.log_gain);
            for (int j = 0; j < nuisance_dim; ++j) {
                out.features(row, signal_dim + j) = gain * rng.normal() + strength * effect.offset(j);
            }
            for (int j = 0; j < config.feature_dim; ++j) out.features(row, j) += config.noise_std * rng.normal();

            out.ages.push_back(age);
            out.sites.push_back(site);
            out.splits.push_back(split);
        }
    };
    emit(Split::Train, config.n_train, 0, config.n_sites_train, 1);
    emit(Split::Internal, config.n_internal_test, 0, config.n_sites_train, 2);
    if (config.n_external_test > 0) {
        emit(Split::External, config.n_external_test, config.n_sites_train, config.n_sites_external, 3);
    }
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// CSV: header "site,age,f0,...,f{d-1},split"; columns are matched by name.
// ---------------------------------------------------------------------------

inline std::string to_csv(const Dataset& data) {
    std::ostringstream os;
    os.precision(17);
    os << "site,age";
    for (int j = 0; j < data.feature_dim(); ++j) os << ",f" << j;
    os << ",split\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        os << data.sites[i] << ',' << data.ages[i];
        for (int j = 0; j < data.feature_dim(); ++j) os << ',' << data.features(r, j);
        os << ',' << split_name(data.splits[i]) << '\n';
    }
    return os.str();
}

inline void save_csv(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << to_csv(data);
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

template <class T>
T parse_number(std::string_view field, std::size_t line_no, std::string_view column) {
    T value{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw std::invalid_argument("line " + std::to_string(line_no) + ": malformed value '" +
                                    std::string(field) + "' in column '" + std::string(column) + "'");
    }
    return value;
}

}  // namespace detail

inline Dataset parse_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto pos = text.find('\n', start);
        if (pos == std::string_view::npos) pos = text.size();
        auto line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = pos + 1;
    }
    if (lines.empty()) throw std::invalid_argument("empty CSV");

    const auto header = detail::split_fields(lines[0]);
    std::map<std::string, std::size_t, std::less<>> column;
    for (std::size_t c = 0; c < header.size(); ++c) column.emplace(std::string(header[c]), c);
    auto require = [&](const std::string& name) {
        const auto it = column.find(name);
        if (it == column.end()) throw std::invalid_argument("missing column '" + name + "'");
        return it->second;
    };
    const auto site_col = require("site");
    const auto age_col = require("age");
    const auto split_col = require("split");
    std::vector<std::size_t> feature_cols;
    for (int j = 0;; ++j) {
        const auto it = column.find("f" + std::to_string(j));
        if (it == column.end()) break;
        feature_cols.push_back(it->second);
    }
    if (feature_cols.empty()) throw std::invalid_argument("missing column 'f0'");

    std::vector<std::vector<double>> rows;
    Dataset out;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const std::size_t line_no = ln + 1;
        const auto fields = detail::split_fields(lines[ln]);
        if (fields.size() != header.size()) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(header.size()) + " fields, found " +
                                        std::to_string(fields.size()));
        }
        out.sites.push_back(detail::parse_number<int>(fields[site_col], line_no, "site"));
        out.ages.push_back(detail::parse_number<double>(fields[age_col], line_no, "age"));
        try {
            out.splits.push_back(parse_split(fields[split_col]));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
        }
        std::vector<double> f;
        f.reserve(feature_cols.size());
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            f.push_back(detail::parse_number<double>(fields[feature_cols[j]], line_no, "f" + std::to_string(j)));
        }
        rows.push_back(std::move(f));
    }
    out.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    out.validate();
    return out;
}

inline Dataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

/// Writes <stem>.csv and <stem>.json (manifest holding the generator config).
inline void write_dataset_with_manifest(const Dataset& data, const SyntheticConfig& config,
                                        const std::filesystem::path& csv_path) {
    save_csv(data, csv_path);
    auto manifest_path = csv_path;
    manifest_path.replace_extension(".json");
    nlohmann::json manifest{{"schema_version", 1},
                            {"csv", csv_path.filename().string()},
                            {"rows", data.size()},
                            {"synthetic", config}};
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot open " + manifest_path.string() + " for writing");
    out << manifest.dump(2) << '\n';
}

}  // namespace kercon
