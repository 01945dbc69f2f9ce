#include "fcmi/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "binary_io.hpp"
#include "fcmi/error.hpp"

namespace fcmi {

namespace {

using Record = std::vector<std::string>;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot read {}", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// RFC 4180-style records: comma separated, optional double quotes with "" escapes.
std::vector<Record> parse_csv(const std::string& text, const std::filesystem::path& path) {
    std::vector<Record> records;
    Record current;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    std::size_t line = 1;
    auto end_field = [&] {
        current.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        const bool blank = current.size() == 1 && current.front().empty();
        if (!blank) records.push_back(std::move(current));
        current.clear();
    };
    std::size_t start = text.starts_with("\xEF\xBB\xBF") ? 3 : 0;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char ch = text[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line;
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                if (field_started && !field.empty()) {
                    throw FormatError(fmt::format("{}:{}: stray quote inside unquoted field", path.string(), line));
                }
                quoted = true;
                field_started = true;
                break;
            case ',': end_field(); break;
            case '\r': break;
            case '\n':
                end_record();
                ++line;
                break;
            default:
                field.push_back(ch);
                field_started = true;
        }
    }
    if (quoted) throw FormatError(fmt::format("{}: unterminated quoted field", path.string()));
    if (field_started || !field.empty() || !current.empty()) end_record();
    return records;
}

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return std::string(s.substr(first, last - first + 1));
}

std::optional<double> parse_real(const std::string& cell) {
    const std::string t = trim(cell);
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    const char* begin = t.data();
    if (*begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::size_t column_index(const Record& header, const std::string& name, const std::filesystem::path& path) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(fmt::format("{}: no column named '{}'", path.string(), name));
    return static_cast<std::size_t>(it - header.begin());
}

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

}  // namespace

void Dataset::validate() const {
    const std::size_t n = features.rows();
    if (n == 0) throw std::invalid_argument("dataset has no samples");
    if (groups.size() != n) throw ShapeError(fmt::format("{} group ids for {} samples", groups.size(), n));
    if (labels && labels->size() != n) throw ShapeError(fmt::format("{} labels for {} samples", labels->size(), n));
    if (group_count == 0) throw std::invalid_argument("dataset declares zero groups");
    std::vector<std::size_t> members(group_count, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (groups[i] < 0 || static_cast<std::size_t>(groups[i]) >= group_count) {
            throw std::invalid_argument(fmt::format("group id {} at row {} outside [0, {})", groups[i], i, group_count));
        }
        ++members[static_cast<std::size_t>(groups[i])];
    }
    for (std::size_t t = 0; t < group_count; ++t)
        if (members[t] == 0) throw std::invalid_argument(fmt::format("group {} has no members", t));
    if (labels) {
        for (int l : *labels)
            if (l < 0) throw std::invalid_argument("negative class label");
    }
    if (!features.all_finite()) throw NonFiniteError("dataset features contain non-finite values");
}

std::size_t CsvTable::column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(fmt::format("no column named '{}'", name));
    return static_cast<std::size_t>(it - header.begin());
}

CsvTable read_csv_table(const std::filesystem::path& path) {
    auto records = parse_csv(read_file(path), path);
    if (records.empty()) throw FormatError(fmt::format("{}: empty file", path.string()));
    CsvTable table;
    std::set<std::string> seen;
    for (const auto& h : records.front()) {
        std::string name = trim(h);
        if (name.empty()) throw FormatError(fmt::format("{}: empty column name in header", path.string()));
        if (!seen.insert(name).second) throw FormatError(fmt::format("{}: duplicate column name '{}'", path.string(), name));
        table.header.push_back(std::move(name));
    }
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != table.header.size()) {
            throw FormatError(fmt::format("{}: record {} has {} fields, expected {}", path.string(), r + 1,
                                          records[r].size(), table.header.size()));
        }
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
    const CsvTable table = read_csv_table(path);
    const auto& header = table.header;
    if (table.rows.empty()) throw FormatError(fmt::format("{}: header but no data rows", path.string()));

    const std::size_t group_col = column_index(header, options.group_column, path);
    std::optional<std::size_t> label_col;
    if (options.label_column) {
        label_col = column_index(header, *options.label_column, path);
        if (*label_col == group_col) throw FormatError("group and label columns must differ");
    }
    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (c != group_col && (!label_col || c != *label_col)) feature_cols.push_back(c);
    if (feature_cols.empty()) throw FormatError(fmt::format("{}: no feature columns", path.string()));

    const std::size_t n = table.rows.size();
    Dataset ds;
    ds.features = Array(n, feature_cols.size());
    for (std::size_t c : feature_cols) ds.feature_names.push_back(header[c]);
    std::map<std::string, int> group_ids;
    std::map<std::string, int> label_ids;
    if (label_col) ds.labels.emplace();
    for (std::size_t r = 0; r < n; ++r) {
        const Record& rec = table.rows[r];
        const std::size_t line = r + 2;
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            const auto v = parse_real(rec[feature_cols[j]]);
            if (!v) {
                throw FormatError(fmt::format("{}:{}: column '{}' holds non-numeric value '{}'", path.string(), line,
                                              header[feature_cols[j]], rec[feature_cols[j]]));
            }
            ds.features(r, j) = *v;
        }
        const std::string g = trim(rec[group_col]);
        if (g.empty()) throw FormatError(fmt::format("{}:{}: missing group value", path.string(), line));
        auto [git, fresh] = group_ids.emplace(g, static_cast<int>(group_ids.size()));
        if (fresh) ds.group_names.push_back(g);
        ds.groups.push_back(git->second);
        if (label_col) {
            const std::string l = trim(rec[*label_col]);
            if (l.empty()) throw FormatError(fmt::format("{}:{}: missing label value", path.string(), line));
            auto lit = label_ids.emplace(l, static_cast<int>(label_ids.size())).first;
            ds.labels->push_back(lit->second);
        }
    }
    ds.group_count = group_ids.size();
    if (options.standardize) standardize(ds.features);
    ds.validate();
    return ds;
}

void write_csv(const Dataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot open {} for writing", path.string()));
    std::vector<std::string> names = dataset.feature_names;
    if (names.size() != dataset.dim()) {
        names.clear();
        for (std::size_t j = 0; j < dataset.dim(); ++j) names.push_back(fmt::format("f{}", j));
    }
    for (const auto& name : names) out << quote_if_needed(name) << ',';
    out << "group";
    if (dataset.labels) out << ",label";
    out << '\n';
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (std::size_t j = 0; j < dataset.dim(); ++j) out << format_real(dataset.features(i, j)) << ',';
        const auto g = static_cast<std::size_t>(dataset.groups[i]);
        out << (g < dataset.group_names.size() ? quote_if_needed(dataset.group_names[g]) : std::to_string(g));
        if (dataset.labels) out << ',' << (*dataset.labels)[i];
        out << '\n';
    }
    out.flush();
    if (!out) throw FormatError(fmt::format("write to {} failed", path.string()));
}

void standardize(Array& features) {
    const std::size_t n = features.rows();
    if (n == 0) return;
    for (std::size_t j = 0; j < features.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += features(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (features(i, j) - mean) * (features(i, j) - mean);
        var /= static_cast<double>(n);
        const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
        for (std::size_t i = 0; i < n; ++i) features(i, j) = (features(i, j) - mean) / sd;
    }
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 1 || spec.groups < 1 || spec.per_cell_count < 1 || spec.dim < 1) {
        throw std::invalid_argument("synthetic spec counts must be positive");
    }
    if (!(spec.class_sep > 0.0) || !std::isfinite(spec.class_sep)) throw std::invalid_argument("class_sep must be positive");
    if (!(spec.noise_sd >= 0.0) || !std::isfinite(spec.noise_sd)) throw std::invalid_argument("noise_sd must be non-negative");
    if (!std::isfinite(spec.group_shift)) throw std::invalid_argument("group_shift must be finite");
    if (spec.dim <= spec.classes) {
        throw std::invalid_argument(fmt::format(
            "dim {} leaves no direction orthogonal to {} class means; need dim > classes", spec.dim, spec.classes));
    }
    const std::size_t k = spec.classes;
    // Scaled standard basis vectors are pairwise class_sep apart; center them.
    const double leg = spec.class_sep / std::sqrt(2.0);
    Array means(k, spec.dim);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t j = 0; j < k; ++j) means(c, j) = (c == j ? leg : 0.0) - leg / static_cast<double>(k);
    const std::size_t nuisance_axis = k;

    const std::size_t n = k * spec.groups * spec.per_cell_count;
    Dataset ds;
    ds.features = Array(n, spec.dim);
    ds.labels.emplace();
    ds.group_count = spec.groups;
    for (std::size_t j = 0; j < spec.dim; ++j) ds.feature_names.push_back(fmt::format("f{}", j));
    for (std::size_t t = 0; t < spec.groups; ++t) ds.group_names.push_back(std::to_string(t));

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t t = 0; t < spec.groups; ++t) {
            for (std::size_t s = 0; s < spec.per_cell_count; ++s, ++row) {
                for (std::size_t j = 0; j < spec.dim; ++j) ds.features(row, j) = means(c, j) + spec.noise_sd * noise(rng);
                ds.features(row, nuisance_axis) += static_cast<double>(t) * spec.group_shift;
                ds.groups.push_back(static_cast<int>(t));
                ds.labels->push_back(static_cast<int>(c));
            }
        }
    }
    ds.validate();
    return ds;
}

std::vector<std::vector<std::size_t>> minibatches(std::size_t n, std::size_t batch_size, std::uint64_t epoch_seed) {
    if (batch_size < 1 || batch_size > n) {
        throw std::invalid_argument(fmt::format("batch size {} must lie in [1, {}]", batch_size, n));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(epoch_seed);
    // Fisher-Yates with an explicit draw so the order does not depend on the
    // standard library's shuffle.
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
}

void save_dataset_binary(const Dataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    detail::BinaryWriter w(path);
    w.header(detail::kKindDataset);
    w.put(static_cast<std::uint64_t>(dataset.size()));
    w.put(static_cast<std::uint64_t>(dataset.dim()));
    w.put(static_cast<std::uint32_t>(dataset.group_count));
    w.put(static_cast<std::uint8_t>(dataset.labels ? 1 : 0));
    w.put_doubles(dataset.features.data());
    for (int g : dataset.groups) w.put(static_cast<std::int32_t>(g));
    if (dataset.labels)
        for (int l : *dataset.labels) w.put(static_cast<std::int32_t>(l));
    w.finish();
}

Dataset load_dataset_binary(const std::filesystem::path& path) {
    detail::BinaryReader r(path);
    r.expect_header(detail::kKindDataset);
    const auto n = r.get<std::uint64_t>();
    const auto d = r.get<std::uint64_t>();
    const auto t = r.get<std::uint32_t>();
    const auto has_labels = r.get<std::uint8_t>();
    if (n == 0 || d == 0 || n > (1ull << 32) || d > (1ull << 24) || n * d > (1ull << 34)) {
        throw FormatError(fmt::format("{}: implausible dataset shape {}x{}", path.string(), n, d));
    }
    if (has_labels > 1) throw FormatError(fmt::format("{}: bad label flag", path.string()));
    Dataset ds;
    ds.features = Array(n, d);
    r.get_doubles(ds.features.data());
    ds.groups.resize(n);
    for (auto& g : ds.groups) g = r.get<std::int32_t>();
    if (has_labels) {
        ds.labels.emplace(n);
        for (auto& l : *ds.labels) l = r.get<std::int32_t>();
    }
    r.expect_end();
    ds.group_count = t;
    for (std::uint32_t i = 0; i < t; ++i) ds.group_names.push_back(std::to_string(i));
    for (std::uint64_t j = 0; j < d; ++j) ds.feature_names.push_back(fmt::format("f{}", j));
    ds.validate();
    return ds;
}

}  // namespace fcmi
