#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace fedcyte {

/// Row-major feature matrix with integer labels.
class LabeledDataset {
public:
    LabeledDataset() = default;

    LabeledDataset(std::size_t dim, std::vector<double> features, std::vector<std::uint32_t> labels,
                   std::vector<std::string> class_names)
        : dim_(dim), features_(std::move(features)), labels_(std::move(labels)),
          class_names_(std::move(class_names)) {
        if (dim_ == 0) throw DimensionError("LabeledDataset: zero feature dimension");
        if (features_.size() != dim_ * labels_.size())
            throw DimensionError("LabeledDataset: feature matrix does not match label count");
        if (class_names_.empty()) throw DataError("LabeledDataset: no classes");
        for (auto y : labels_)
            if (y >= class_names_.size()) throw DataError("LabeledDataset: label out of range");
        for (double v : features_)
            if (!std::isfinite(v)) throw DataError("LabeledDataset: non-finite feature");
    }

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t num_classes() const noexcept { return class_names_.size(); }

    std::span<const double> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
    std::uint32_t label(std::size_t i) const { return labels_[i]; }

    const std::vector<double>& features() const noexcept { return features_; }
    const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }
    const std::vector<std::string>& class_names() const noexcept { return class_names_; }

    std::vector<std::int64_t> class_counts() const {
        std::vector<std::int64_t> counts(num_classes(), 0);
        for (auto y : labels_) ++counts[y];
        return counts;
    }

    LabeledDataset subset(std::span<const std::size_t> indices) const {
        std::vector<double> f;
        f.reserve(indices.size() * dim_);
        std::vector<std::uint32_t> l;
        l.reserve(indices.size());
        for (auto i : indices) {
            auto r = row(i);
            f.insert(f.end(), r.begin(), r.end());
            l.push_back(labels_[i]);
        }
        return LabeledDataset(dim_, std::move(f), std::move(l), class_names_);
    }

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> features_;
    std::vector<std::uint32_t> labels_;
    std::vector<std::string> class_names_;
};

/// Concatenates datasets in order. All parts must share dimension and class list.
inline LabeledDataset concat(std::span<const LabeledDataset> parts) {
    if (parts.empty()) throw DataError("concat: nothing to concatenate");
    std::vector<double> f;
    std::vector<std::uint32_t> l;
    for (const auto& p : parts) {
        if (p.dim() != parts[0].dim() || p.class_names() != parts[0].class_names())
            throw DimensionError("concat: datasets disagree on dimension or classes");
        f.insert(f.end(), p.features().begin(), p.features().end());
        l.insert(l.end(), p.labels().begin(), p.labels().end());
    }
    return LabeledDataset(parts[0].dim(), std::move(f), std::move(l), parts[0].class_names());
}

// ---------------------------------------------------------------------------
// Client profiles

/// Per-client affine feature shift x -> R (scale * x) + offset.
/// R is the orthonormal factor of (I + rotation_strength * G), G Gaussian from
/// rotation_seed; strength 0 gives the identity.
struct FeatureShift {
    std::vector<double> scale;
    std::vector<double> offset;
    std::uint64_t rotation_seed = 0;
    double rotation_strength = 0.0;

    static FeatureShift identity(std::size_t d) { return {std::vector<double>(d, 1.0), std::vector<double>(d, 0.0), 0, 0.0}; }
};

struct ClientProfile {
    std::string name;
    std::vector<std::int64_t> class_counts;
    FeatureShift shift;

    std::int64_t total() const { return std::accumulate(class_counts.begin(), class_counts.end(), std::int64_t{0}); }
};

inline const std::vector<std::string>& table1_class_names() {
    static const std::vector<std::string> names = {
        "Band neutrophil", "Basophil",      "Eosinophil", "Lymphocyte",   "Lymphocyte atypical",
        "Metamyelocyte",   "Monocyte",      "Myelocyte",  "Promyelocyte", "Segmented neutrophil",
        "Smudged cell"};
    return names;
}

inline const std::vector<std::string>& builtin_profile_names() {
    static const std::vector<std::string> names = {"client1", "client2", "client3-holdout"};
    return names;
}

/// Per-class counts of the built-in profiles, in table1_class_names() order.
inline std::vector<std::int64_t> builtin_counts(std::string_view name) {
    if (name == "client1") return {164, 42, 86, 2705, 350, 61, 1030, 138, 529, 1911, 2267};
    if (name == "client2") return {66, 47, 254, 2362, 7, 9, 1074, 25, 42, 5090, 9};
    // Holdout institution: client2 counts on the nine classes it shares, none of
    // the atypical lymphocytes or smudged cells.
    if (name == "client3-holdout") return {66, 47, 254, 2362, 0, 9, 1074, 25, 42, 5090, 0};
    throw ConfigError("unknown built-in profile '" + std::string(name) + "'");
}

/// Scales counts by `factor`, rounding to nearest and keeping every present class.
inline std::vector<std::int64_t> scale_counts(std::span<const std::int64_t> counts, double factor) {
    if (!(factor > 0.0)) throw ConfigError("count scale must be positive");
    std::vector<std::int64_t> out;
    for (auto c : counts) {
        if (c <= 0) {
            out.push_back(0);
            continue;
        }
        out.push_back(std::max<std::int64_t>(1, std::llround(static_cast<double>(c) * factor)));
    }
    return out;
}

struct BuiltinShiftParams {
    double scale_jitter;
    double offset_sigma;
    double rotation_strength;
};

inline BuiltinShiftParams builtin_shift_params(std::string_view name) {
    if (name == "client1") return {0.1, 0.4, 0.15};
    if (name == "client2") return {0.1, 0.4, 0.15};
    if (name == "client3-holdout") return {0.1, 0.4, 0.15};
    throw ConfigError("unknown built-in profile '" + std::string(name) + "'");
}

/// Built-in shift for `name` at dimension d, drawn from a name-derived stream.
inline FeatureShift builtin_shift(std::string_view name, std::size_t d) {
    const auto p = builtin_shift_params(name);
    Rng rng(derive_seed(0x5eedf00dULL, name));
    FeatureShift s;
    for (std::size_t j = 0; j < d; ++j) s.scale.push_back(1.0 + p.scale_jitter * rng.uniform(-1.0, 1.0));
    for (std::size_t j = 0; j < d; ++j) s.offset.push_back(p.offset_sigma * rng.normal());
    s.rotation_seed = rng.next_u64();
    s.rotation_strength = p.rotation_strength;
    return s;
}

inline ClientProfile builtin_profile(std::string_view name, std::size_t d, double count_scale = 1.0) {
    return {std::string(name), scale_counts(builtin_counts(name), count_scale), builtin_shift(name, d)};
}

// ---------------------------------------------------------------------------
// Synthetic generation

namespace detail {

/// d x d row-major orthonormal matrix, modified Gram-Schmidt over columns of I + strength * G.
inline std::vector<double> seeded_rotation(std::size_t d, std::uint64_t seed, double strength) {
    std::vector<double> m(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) m[i * d + i] = 1.0;
    if (strength == 0.0) return m;
    Rng rng(seed);
    for (auto& v : m) v += strength * rng.normal();
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double dot = 0.0;
            for (std::size_t r = 0; r < d; ++r) dot += m[r * d + c] * m[r * d + p];
            for (std::size_t r = 0; r < d; ++r) m[r * d + c] -= dot * m[r * d + p];
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < d; ++r) norm += m[r * d + c] * m[r * d + c];
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < d; ++r) m[r * d + c] /= norm;
    }
    return m;
}

inline std::vector<std::string> default_class_names(std::size_t c) {
    if (c == table1_class_names().size()) return table1_class_names();
    std::vector<std::string> names;
    for (std::size_t i = 0; i < c; ++i) names.push_back("class" + std::to_string(i));
    return names;
}

} // namespace detail

/**
 * Gaussian class prototypes shared by all clients, unit covariance, then one
 * affine shift per client. Prototypes are random directions scaled so that
 * two prototypes sit about `class_sep` apart.
 *
 * Each client draws from its own name-derived stream, so a client's data does
 * not depend on which other profiles are generated alongside it.
 */
inline std::vector<LabeledDataset> generate_synthetic(std::span<const ClientProfile> profiles, std::size_t d,
                                                      double class_sep, std::uint64_t seed,
                                                      std::vector<std::string> class_names = {}) {
    if (d < 2) throw DimensionError("generate_synthetic: dimension must be >= 2");
    if (!(class_sep > 0.0)) throw ConfigError("generate_synthetic: class_sep must be positive");
    if (profiles.empty()) return {};
    const std::size_t c = profiles[0].class_counts.size();
    if (c == 0) throw DataError("generate_synthetic: profile has no classes");
    if (class_names.empty()) class_names = detail::default_class_names(c);
    if (class_names.size() != c) throw DimensionError("generate_synthetic: class name count mismatch");

    std::vector<double> prototypes(c * d);
    {
        Rng rng(derive_seed(seed, "prototypes"));
        for (std::size_t k = 0; k < c; ++k) {
            double norm = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                prototypes[k * d + j] = rng.normal();
                norm += prototypes[k * d + j] * prototypes[k * d + j];
            }
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < d; ++j) prototypes[k * d + j] *= class_sep / (std::numbers::sqrt2 * norm);
        }
    }

    std::vector<LabeledDataset> out;
    for (const auto& p : profiles) {
        if (p.class_counts.size() != c) throw DimensionError("generate_synthetic: profiles disagree on class count");
        if (p.shift.scale.size() != d || p.shift.offset.size() != d)
            throw DimensionError("generate_synthetic: shift of '" + p.name + "' does not match dimension");
        bool any = false;
        for (auto n : p.class_counts) {
            if (n < 0) throw DataError("generate_synthetic: negative count in '" + p.name + "'");
            any = any || n > 0;
        }
        if (!any) throw DataError("generate_synthetic: profile '" + p.name + "' has no samples");

        const auto rot = detail::seeded_rotation(d, p.shift.rotation_seed, p.shift.rotation_strength);
        Rng rng(derive_seed(seed, "client:" + p.name));
        const auto n = static_cast<std::size_t>(p.total());
        std::vector<std::uint32_t> labels;
        labels.reserve(n);
        for (std::size_t k = 0; k < c; ++k)
            labels.insert(labels.end(), static_cast<std::size_t>(p.class_counts[k]), static_cast<std::uint32_t>(k));
        rng.shuffle(labels.begin(), labels.end());

        std::vector<double> features(n * d);
        std::vector<double> x(d);
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = labels[i];
            for (std::size_t j = 0; j < d; ++j) x[j] = p.shift.scale[j] * (prototypes[k * d + j] + rng.normal());
            for (std::size_t r = 0; r < d; ++r) {
                double acc = p.shift.offset[r];
                for (std::size_t j = 0; j < d; ++j) acc += rot[r * d + j] * x[j];
                features[i * d + r] = acc;
            }
        }
        out.emplace_back(d, std::move(features), std::move(labels), class_names);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV
//
//   #classes:name1,name2,...
//   label,f1,...,fd
//   labelname,v1,...,vd

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace detail

inline LabeledDataset parse_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        auto pos = text.find('\n', start);
        if (pos == std::string_view::npos) pos = text.size();
        lines.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    constexpr std::string_view kPrefix = "#classes:";
    if (lines.empty() || !lines[0].starts_with(kPrefix)) throw ParseError("missing '#classes:' metadata row", 1);
    std::vector<std::string> classes;
    for (auto name : detail::split_commas(lines[0].substr(kPrefix.size()))) {
        if (name.empty()) throw ParseError("empty class name", 1);
        classes.emplace_back(name);
    }
    if (lines.size() < 2) throw ParseError("missing header row", 2);
    const auto header = detail::split_commas(lines[1]);
    if (header.size() < 2 || header[0] != "label") throw ParseError("header must be 'label,f1,...,fd'", 2);
    const std::size_t d = header.size() - 1;

    std::vector<double> features;
    std::vector<std::uint32_t> labels;
    for (std::size_t li = 2; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        const auto cells = detail::split_commas(lines[li]);
        if (cells.size() != d + 1)
            throw ParseError("expected " + std::to_string(d + 1) + " fields, got " + std::to_string(cells.size()),
                             line_no);
        auto it = std::find(classes.begin(), classes.end(), cells[0]);
        if (it == classes.end()) throw ParseError("unknown label '" + std::string(cells[0]) + "'", line_no);
        labels.push_back(static_cast<std::uint32_t>(it - classes.begin()));
        for (std::size_t j = 1; j <= d; ++j) {
            double v = 0.0;
            const auto cell = cells[j];
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
                throw ParseError("non-numeric feature '" + std::string(cell) + "'", line_no);
            features.push_back(v);
        }
    }
    if (labels.empty()) throw ParseError("no samples");
    return LabeledDataset(d, std::move(features), std::move(labels), std::move(classes));
}

inline LabeledDataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_csv(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), e.line());
    }
}

/// Shortest round-trip decimal formatting, so load(to_csv(ds)) == ds.
inline std::string to_csv(const LabeledDataset& ds) {
    std::string out = "#classes:";
    for (std::size_t k = 0; k < ds.num_classes(); ++k) {
        if (k) out += ',';
        out += ds.class_names()[k];
    }
    out += "\nlabel";
    for (std::size_t j = 1; j <= ds.dim(); ++j) out += ",f" + std::to_string(j);
    out += '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out += ds.class_names()[ds.label(i)];
        for (double v : ds.row(i)) {
            out += ',';
            out += detail::format_double(v);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSet {
    LabeledDataset train;
    LabeledDataset validation;
    LabeledDataset local_test;
    LabeledDataset global_test;
};

/// Index form of a split, in bucket order train / validation / local test / global test.
struct SplitIndices {
    std::vector<std::size_t> train, validation, local_test, global_test;
};

/// Size of each of the three held-out buckets: floor(4n/30).
constexpr std::size_t heldout_bucket_size(std::size_t n) { return (4 * n) / 30; }

/**
 * Stratified four-way split with exact sizes (n - 3v, v, v, v), v = floor(4n/30).
 *
 * Every sample gets a position key in [0,1): within a class of at least four
 * samples the shuffled ranks are spread evenly, (rank + 0.5) / count; samples
 * of smaller classes are pooled and keyed uniformly at random. Sorting by key
 * and cutting at v, 2v and 3v gives each bucket a proportional share of every
 * stratified class.
 */
inline SplitIndices split_indices(const LabeledDataset& ds, std::uint64_t seed) {
    const std::size_t n = ds.size();
    if (n < 8) throw DataError("split: need at least 8 samples, got " + std::to_string(n));
    Rng rng(derive_seed(seed, "split"));

    std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
    for (std::size_t i = 0; i < n; ++i) by_class[ds.label(i)].push_back(i);

    struct Keyed {
        double key;
        std::uint64_t tie;
        std::size_t index;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(n);
    for (auto& members : by_class) {
        rng.shuffle(members.begin(), members.end());
        const bool stratified = members.size() >= 4;
        for (std::size_t r = 0; r < members.size(); ++r) {
            const double key = stratified ? (static_cast<double>(r) + 0.5) / static_cast<double>(members.size())
                                          : rng.uniform();
            keyed.push_back({key, rng.next_u64(), members[r]});
        }
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        if (a.key != b.key) return a.key < b.key;
        if (a.tie != b.tie) return a.tie < b.tie;
        return a.index < b.index;
    });

    const std::size_t v = heldout_bucket_size(n);
    SplitIndices out;
    for (std::size_t p = 0; p < n; ++p) {
        const auto idx = keyed[p].index;
        if (p < v) out.validation.push_back(idx);
        else if (p < 2 * v) out.local_test.push_back(idx);
        else if (p < 3 * v) out.global_test.push_back(idx);
        else out.train.push_back(idx);
    }
    for (auto* b : {&out.train, &out.validation, &out.local_test, &out.global_test}) std::sort(b->begin(), b->end());
    return out;
}

inline SplitSet split(const LabeledDataset& ds, std::uint64_t seed) {
    const auto idx = split_indices(ds, seed);
    return {ds.subset(idx.train), ds.subset(idx.validation), ds.subset(idx.local_test), ds.subset(idx.global_test)};
}

// ---------------------------------------------------------------------------
// Sampling

/**
 * Draws indices with replacement, P(j) proportional to 1 / count(label_j).
 * Every present class carries equal total mass, so a draw picks a present
 * class uniformly and then a member of it uniformly.
 */
class WeightedSampler {
public:
    WeightedSampler(const LabeledDataset& ds, std::uint64_t seed) : rng_(seed) {
        if (ds.empty()) throw DataError("WeightedSampler: empty dataset");
        std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
        for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.label(i)].push_back(i);
        for (auto& m : by_class)
            if (!m.empty()) members_.push_back(std::move(m));
    }

    std::size_t next() {
        const auto& m = members_[rng_.below(members_.size())];
        return m[rng_.below(m.size())];
    }

private:
    Rng rng_;
    std::vector<std::vector<std::size_t>> members_;
};

} // namespace fedcyte
