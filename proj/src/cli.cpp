#include "fcmi/cli.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "fcmi/data_io.hpp"
#include "fcmi/error.hpp"
#include "fcmi/metrics.hpp"
#include "fcmi/model.hpp"
#include "fcmi/trainer.hpp"
#include "json.hpp"

namespace fcmi::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct DataFlags {
    std::string path;
    std::string group_col = "group";
    std::string label_col;
    bool no_standardize = false;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
    cmd->add_option("--data", f.path, "Dataset (CSV, or binary FCMI container)")->required();
    cmd->add_option("--group-col", f.group_col, "Sensitive-attribute column")->capture_default_str();
    cmd->add_option("--label-col", f.label_col, "Ground-truth column (default: 'label' when present)");
    cmd->add_flag("--no-standardize", f.no_standardize, "Keep raw feature scales");
}

bool has_container_magic(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::array<char, 4> magic{};
    in.read(magic.data(), magic.size());
    return in && magic == std::array<char, 4>{'F', 'C', 'M', 'I'};
}

Dataset load_data(const DataFlags& f) {
    const fs::path path(f.path);
    if (!fs::exists(path)) throw FormatError(fmt::format("cannot read {}: no such file", path.string()));
    if (has_container_magic(path)) {
        Dataset ds = load_dataset_binary(path);
        if (!f.no_standardize) standardize(ds.features);
        return ds;
    }
    CsvOptions opts;
    opts.group_column = f.group_col;
    opts.standardize = !f.no_standardize;
    if (!f.label_col.empty()) {
        opts.label_column = f.label_col;
    } else {
        const auto header = read_csv_table(path).header;
        if (std::find(header.begin(), header.end(), "label") != header.end()) opts.label_column = "label";
    }
    return load_csv(path, opts);
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot read {}", path.string()));
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot open {} for writing", path.string()));
    out << text;
    out.flush();
    if (!out) throw FormatError(fmt::format("write to {} failed", path.string()));
}

SyntheticSpec load_synth_spec(const std::string& path) {
    SyntheticSpec spec;
    if (path.empty()) return spec;
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot read spec {}", path));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(fmt::format("{}: not valid JSON: {}", path, e.what()));
    }
    if (!doc.is_object()) throw FormatError(fmt::format("{}: spec must be a JSON object", path));
    auto count = [&](const json& v, const std::string& key) {
        if (!v.is_number_integer() || v.get<long long>() < 0) {
            throw std::invalid_argument(fmt::format("spec key '{}' must be a non-negative integer", key));
        }
        return v.get<std::uint64_t>();
    };
    auto real = [&](const json& v, const std::string& key) {
        if (!v.is_number()) throw std::invalid_argument(fmt::format("spec key '{}' must be a number", key));
        return v.get<double>();
    };
    for (const auto& [key, value] : doc.items()) {
        if (key == "classes") spec.classes = count(value, key);
        else if (key == "groups") spec.groups = count(value, key);
        else if (key == "per_cell_count") spec.per_cell_count = count(value, key);
        else if (key == "class_sep") spec.class_sep = real(value, key);
        else if (key == "group_shift") spec.group_shift = real(value, key);
        else if (key == "dim") spec.dim = count(value, key);
        else if (key == "noise_sd") spec.noise_sd = real(value, key);
        else if (key == "seed") spec.seed = count(value, key);
        else throw std::invalid_argument(fmt::format("unknown spec key '{}'", key));
    }
    return spec;
}

// Dense ids by first appearance.
std::vector<int> dense_ids(const CsvTable& table, std::size_t col, std::size_t& distinct) {
    std::map<std::string, int> ids;
    std::vector<int> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const std::string& cell = table.rows[r][col];
        if (cell.empty()) {
            throw FormatError(fmt::format("row {}: empty value in column '{}'", r + 2, table.header[col]));
        }
        out.push_back(ids.emplace(cell, static_cast<int>(ids.size())).first->second);
    }
    distinct = ids.size();
    return out;
}

void ensure_logger() {
    if (!spdlog::get("fcmi")) {
        auto logger = spdlog::stderr_color_mt("fcmi");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
    }
}

int cmd_synth(const std::string& spec_path, const std::string& out, const std::string& format) {
    const SyntheticSpec spec = load_synth_spec(spec_path);
    const Dataset ds = generate_synthetic(spec);
    if (format == "bin") save_dataset_binary(ds, out);
    else write_csv(ds, out);
    spdlog::info("wrote {} samples ({} classes x {} groups, dim {}) to {}", ds.size(), spec.classes, spec.groups,
                 spec.dim, out);
    return kExitOk;
}

int cmd_train(const DataFlags& data, const std::string& config_path, const std::string& out_dir,
              std::size_t checkpoint_every) {
    const TrainConfig config = TrainConfig::load(config_path);
    const Dataset ds = load_data(data);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    FitOptions options;
    options.checkpoint_every = checkpoint_every;
    options.checkpoint_dir = dir;
    options.hooks.on_epoch = [&](const EpochLog& log) {
        if (log.epoch % 10 == 0 || log.epoch + 1 == config.max_epochs) {
            spdlog::info("epoch {:4d}  l_total {:.6f}  l_rec {:.6f}  I(G;C) {:.6f}  I(X;C|G) {:.6f}", log.epoch,
                         log.l_total, log.l_rec, log.mi_gc, log.cmi_xcg);
        }
    };
    const FitResult result = fit(config, ds, options);

    const fs::path checkpoint = dir / "model.fcmi";
    const fs::path log_csv = dir / "train_log.csv";
    const fs::path manifest = dir / "manifest.json";
    save_checkpoint(result.params, checkpoint);
    write_log_csv(result.logs, log_csv);
    json doc = {{"tool_version", kToolVersion},
                {"seed", config.seed},
                {"config", json::parse(config.to_json())},
                {"dataset", {{"path", data.path}, {"sha256", sha256_file(data.path)}}},
                {"artifacts", {{"checkpoint", checkpoint.string()}, {"log_csv", log_csv.string()}, {"manifest", manifest.string()}}}};
    write_text(manifest, doc.dump(2) + "\n");
    spdlog::info("wrote {}, {} and {}", checkpoint.string(), log_csv.string(), manifest.string());
    return kExitOk;
}

int cmd_eval(const DataFlags& data, const std::string& checkpoint, const std::string& config_path,
             const std::string& report) {
    const TrainConfig config = TrainConfig::load(config_path);
    const ModelParams params = load_checkpoint(checkpoint);
    const Dataset ds = load_data(data);
    write_text(report, to_json(evaluate(params, ds, config)));
    return kExitOk;
}

int cmd_metrics(const std::string& pred_path, const std::string& pred_col, const std::string& groups_col,
                const std::string& truth_col, double beta, const std::string& report) {
    if (!fs::exists(pred_path)) throw FormatError(fmt::format("cannot read {}: no such file", pred_path));
    const CsvTable table = read_csv_table(pred_path);
    if (table.rows.empty()) throw FormatError(fmt::format("{}: no data rows", pred_path));
    std::size_t k = 0, t = 0, classes = 0;
    HardPartition pred;
    pred.labels = dense_ids(table, table.column(pred_col), k);
    pred.k = k;
    const std::vector<int> groups = dense_ids(table, table.column(groups_col), t);
    std::optional<std::vector<int>> truth;
    if (!truth_col.empty()) truth = dense_ids(table, table.column(truth_col), classes);
    std::optional<std::span<const int>> truth_view;
    if (truth) truth_view = std::span<const int>(*truth);
    write_text(report, to_json(full_report(pred, truth_view, groups, beta)));
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& argv) {
    ensure_logger();
    CLI::App app{"Fair deep clustering by mutual-information objectives", "fcmi"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string spec_path, synth_out, synth_format = "csv";
    auto* synth = app.add_subcommand("synth", "Generate a synthetic group-confounded dataset");
    synth->add_option("--spec", spec_path, "JSON synthetic spec (defaults when omitted)");
    synth->add_option("--out", synth_out, "Output dataset path")->required();
    synth->add_option("--format", synth_format, "csv or bin")->check(CLI::IsMember({"csv", "bin"}))->capture_default_str();

    DataFlags train_data;
    std::string train_config, out_dir;
    std::size_t checkpoint_every = 0;
    auto* train = app.add_subcommand("train", "Train the clustering model");
    add_data_flags(train, train_data);
    train->add_option("--config", train_config, "JSON training config")->required();
    train->add_option("--out-dir", out_dir, "Directory for checkpoint, log and manifest")->required();
    train->add_option("--checkpoint-every", checkpoint_every, "Extra checkpoint every N epochs (0 = off)");

    DataFlags eval_data;
    std::string eval_checkpoint, eval_config, eval_report;
    auto* eval = app.add_subcommand("eval", "Cluster a dataset with a trained model and score it");
    add_data_flags(eval, eval_data);
    eval->add_option("--checkpoint", eval_checkpoint, "Model checkpoint")->required();
    eval->add_option("--config", eval_config, "JSON training config")->required();
    eval->add_option("--report", eval_report, "Output report JSON")->required();

    std::string pred_path, pred_col = "pred", groups_col, truth_col, metrics_report;
    double beta = 1.0;
    auto* metrics = app.add_subcommand("metrics", "Score an externally produced clustering");
    metrics->add_option("--pred", pred_path, "CSV with predicted cluster labels")->required();
    metrics->add_option("--pred-col", pred_col, "Prediction column")->capture_default_str();
    metrics->add_option("--groups-col", groups_col, "Sensitive-attribute column")->required();
    metrics->add_option("--truth-col", truth_col, "Ground-truth column");
    metrics->add_option("--beta", beta, "F_beta weight")->required();
    metrics->add_option("--report", metrics_report, "Output report JSON")->required();

    std::vector<const char*> raw;
    raw.reserve(argv.size());
    for (const auto& a : argv) raw.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(raw.size()), raw.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        return kExitUsage;
    }

    try {
        if (*synth) return cmd_synth(spec_path, synth_out, synth_format);
        if (*train) return cmd_train(train_data, train_config, out_dir, checkpoint_every);
        if (*eval) return cmd_eval(eval_data, eval_checkpoint, eval_config, eval_report);
        if (*metrics) return cmd_metrics(pred_path, pred_col, groups_col, truth_col, beta, metrics_report);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace fcmi::cli
