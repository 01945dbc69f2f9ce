#include "fcmi/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fcmi/error.hpp"
#include "fcmi/objectives.hpp"
#include "json.hpp"

namespace fcmi {

namespace {

using nlohmann::json;

constexpr std::uint64_t kStreamInit = 0x696e6974ULL;
constexpr std::uint64_t kStreamBatches = 0x62617463ULL;
constexpr std::uint64_t kStreamCenters = 0x6b6d6e73ULL;
constexpr std::uint64_t kStreamEval = 0x6576616cULL;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    return splitmix(splitmix(splitmix(seed) ^ stream) ^ index);
}

std::string fixed6(double v) {
    std::string s = fmt::format("{:.6f}", v);
    if (s == "-0.000000") s = "0.000000";
    return s;
}

std::string fixed6(const std::optional<double>& v) { return v ? fixed6(*v) : std::string(); }

template <typename T>
T get_unsigned(const json& value, const std::string& key) {
    if (!value.is_number_integer() || value.get<long long>() < 0) {
        throw std::invalid_argument(fmt::format("config key '{}' must be a non-negative integer", key));
    }
    return static_cast<T>(value.get<unsigned long long>());
}

double get_real(const json& value, const std::string& key) {
    if (!value.is_number()) throw std::invalid_argument(fmt::format("config key '{}' must be a number", key));
    return value.get<double>();
}

}  // namespace

void TrainConfig::validate() const {
    auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
    if (!(alpha >= 0.0) || !(beta_fair >= 0.0) || !std::isfinite(alpha) || !std::isfinite(beta_fair)) {
        throw std::invalid_argument("alpha and beta_fair must be finite and non-negative");
    }
    if (!positive(tau)) throw std::invalid_argument("tau must be positive");
    if (k < 2) throw std::invalid_argument("k must be at least 2");
    if (latent_dim < 1) throw std::invalid_argument("latent_dim must be positive");
    if (!layer_dims.empty()) {
        if (layer_dims.size() < 2) throw std::invalid_argument("layer_dims needs at least input and latent widths");
        for (std::size_t d : layer_dims)
            if (d == 0) throw std::invalid_argument("layer_dims entries must be positive");
        if (layer_dims.back() != latent_dim) {
            throw std::invalid_argument(
                fmt::format("layer_dims ends at {} but latent_dim is {}", layer_dims.back(), latent_dim));
        }
    }
    if (warmup_epochs > max_epochs) throw std::invalid_argument("warmup_epochs exceeds max_epochs");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
    if (!positive(learning_rate) || !positive(adam_eps)) throw std::invalid_argument("rates must be positive");
    if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
        throw std::invalid_argument("Adam decay rates must lie in (0, 1)");
    }
    if (!(f_beta_weight >= 0.0) || !std::isfinite(f_beta_weight)) throw std::invalid_argument("f_beta_weight must be >= 0");
}

std::vector<std::size_t> TrainConfig::resolved_layer_dims(std::size_t input_dim) const {
    if (layer_dims.empty()) return {input_dim, 256, 64, latent_dim};
    if (layer_dims.front() != input_dim) {
        throw ShapeError(fmt::format("layer_dims starts at {} but the data has {} features", layer_dims.front(), input_dim));
    }
    return layer_dims;
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(fmt::format("config is not valid JSON: {}", e.what()));
    }
    if (!doc.is_object()) throw FormatError("config must be a JSON object");
    TrainConfig c;
    bool have_k = false;
    for (const auto& [key, value] : doc.items()) {
        if (key == "alpha") c.alpha = get_real(value, key);
        else if (key == "beta_fair") c.beta_fair = get_real(value, key);
        else if (key == "tau") c.tau = get_real(value, key);
        else if (key == "k") {
            c.k = get_unsigned<std::size_t>(value, key);
            have_k = true;
        } else if (key == "latent_dim") c.latent_dim = get_unsigned<std::size_t>(value, key);
        else if (key == "layer_dims") {
            if (!value.is_array()) throw std::invalid_argument("config key 'layer_dims' must be an array");
            c.layer_dims.clear();
            for (const auto& d : value) c.layer_dims.push_back(get_unsigned<std::size_t>(d, key));
        } else if (key == "warmup_epochs") c.warmup_epochs = get_unsigned<std::size_t>(value, key);
        else if (key == "max_epochs") c.max_epochs = get_unsigned<std::size_t>(value, key);
        else if (key == "batch_size") c.batch_size = get_unsigned<std::size_t>(value, key);
        else if (key == "learning_rate") c.learning_rate = get_real(value, key);
        else if (key == "adam_beta1") c.adam_beta1 = get_real(value, key);
        else if (key == "adam_beta2") c.adam_beta2 = get_real(value, key);
        else if (key == "adam_eps") c.adam_eps = get_real(value, key);
        else if (key == "seed") c.seed = get_unsigned<std::uint64_t>(value, key);
        else if (key == "f_beta_weight") c.f_beta_weight = get_real(value, key);
        else throw std::invalid_argument(fmt::format("unknown config key '{}'", key));
    }
    if (!have_k) throw std::invalid_argument("config must set 'k' (number of clusters)");
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(fmt::format("cannot read config {}", path.string()));
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

std::string TrainConfig::to_json() const {
    json doc = {{"alpha", alpha},
                {"beta_fair", beta_fair},
                {"tau", tau},
                {"k", k},
                {"latent_dim", latent_dim},
                {"layer_dims", layer_dims},
                {"warmup_epochs", warmup_epochs},
                {"max_epochs", max_epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"adam_beta1", adam_beta1},
                {"adam_beta2", adam_beta2},
                {"adam_eps", adam_eps},
                {"seed", seed},
                {"f_beta_weight", f_beta_weight}};
    return doc.dump(2);
}

void adam_step(TrainState& state, const ModelParams& grads, const AdamSettings& settings, std::size_t t) {
    if (t < 1) throw std::invalid_argument("Adam step index starts at 1");
    const double c1 = 1.0 - std::pow(settings.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(settings.beta2, static_cast<double>(t));
    std::vector<const Array*> g;
    for_each_param(grads, [&](const std::string& name, const Array& a) {
        if (!a.all_finite()) throw NonFiniteError(fmt::format("non-finite gradient for {}", name));
        g.push_back(&a);
    });
    std::vector<Array*> m, v;
    for_each_param(state.moments.first, [&](const std::string&, Array& a) { m.push_back(&a); });
    for_each_param(state.moments.second, [&](const std::string&, Array& a) { v.push_back(&a); });
    std::size_t idx = 0;
    for_each_param(state.params, [&](const std::string& name, Array& p) {
        if (idx >= g.size() || !g[idx]->same_shape(p) || !m[idx]->same_shape(p) || !v[idx]->same_shape(p)) {
            throw ShapeError(fmt::format("gradient or moment for {} is not shaped like the parameter", name));
        }
        const Array& gi = *g[idx];
        Array& mi = *m[idx];
        Array& vi = *v[idx];
        for (std::size_t e = 0; e < p.size(); ++e) {
            mi[e] = settings.beta1 * mi[e] + (1.0 - settings.beta1) * gi[e];
            vi[e] = settings.beta2 * vi[e] + (1.0 - settings.beta2) * gi[e] * gi[e];
            const double m_hat = mi[e] / c1;
            const double v_hat = vi[e] / c2;
            p[e] -= settings.learning_rate * m_hat / (std::sqrt(v_hat) + settings.eps);
        }
        ++idx;
    });
    if (idx != g.size()) throw ShapeError("gradient has more arrays than the model");
}

namespace {

struct Measurement {
    double mi_gc = 0.0;
    double cmi_xcg = 0.0;
    std::optional<double> acc, nmi, bal, mnce, f_beta;
};

Measurement measure(const Array& h, const ClusterCenters& centers, const Dataset& ds, const TrainConfig& cfg) {
    const SoftAssignment soft = soft_assign(h, centers, cfg.tau);
    Measurement m;
    m.mi_gc = loss_fair(soft.c, ds.groups, ds.group_count);
    m.cmi_xcg = estimate_cmi(soft.c, ds.groups, ds.group_count);
    if (ds.labels) {
        const HardPartition pred = harden(soft.c);
        m.acc = accuracy(pred, *ds.labels);
        m.nmi = nmi(pred, *ds.labels);
        if (ds.group_count >= 2) {
            m.bal = balance(pred, ds.groups);
            m.mnce = mnce(pred, ds.groups);
            m.f_beta = f_beta(*m.nmi, *m.mnce, cfg.f_beta_weight);
        }
    }
    return m;
}

ClusterCenters refresh_centers(const Array& h, const TrainConfig& cfg, std::uint64_t seed, std::size_t epoch) {
    try {
        return kmeans(h, cfg.k, seed).centers;
    } catch (const DegenerateError& e) {
        throw DegenerateError(fmt::format("epoch {}: k-means on latent features failed: {}", epoch, e.what()));
    }
}

}  // namespace

FitResult fit(const TrainConfig& config, const Dataset& dataset, const FitOptions& options) {
    config.validate();
    dataset.validate();
    const std::vector<std::size_t> dims = config.resolved_layer_dims(dataset.dim());
    if (dataset.size() < config.k) {
        throw std::invalid_argument(fmt::format("{} samples cannot form {} clusters", dataset.size(), config.k));
    }
    // Labels stay on the Dataset; the optimization below only touches this view.
    const TrainingView data = dataset.training_view();
    const std::size_t n = data.features.rows();
    const std::size_t batch_size = std::min(config.batch_size, n);
    const AdamSettings adam{config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps};

    TrainState state;
    state.seed = config.seed;
    state.params = init_params(dims, data.group_count, derive_seed(config.seed, kStreamInit));
    state.moments = {zeros_like(state.params), zeros_like(state.params)};

    FitResult result;
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        state.epoch = epoch;
        const bool warm = epoch < config.warmup_epochs;
        if (!warm) {
            state.centers = refresh_centers(encode(state.params, data.features).h, config,
                                            derive_seed(config.seed, kStreamCenters, epoch), epoch);
            if (options.hooks.on_centers_refreshed) options.hooks.on_centers_refreshed(epoch);
        }

        EpochLog log;
        log.epoch = epoch;
        const auto batches = minibatches(n, batch_size, derive_seed(config.seed, kStreamBatches, epoch));
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& rows = batches[b];
            std::vector<int> groups;
            groups.reserve(rows.size());
            for (std::size_t r : rows) groups.push_back(data.groups[r]);

            ad::Graph tape;
            ModelGraph model(tape, state.params);
            ad::Var x = tape.input("x", rows.size(), data.features.cols());
            ad::Var h = model.encode(x);
            ad::Var rec = graph::loss_rec(x, model.decode(h, groups));
            ad::Var total = rec;
            std::optional<ad::Var> clu, fair;
            if (!warm) {
                ad::Var c = soft_assign(h, *state.centers, config.tau);
                clu = graph::loss_clu(c);
                fair = graph::loss_fair(c, groups, data.group_count);
                total = rec + ad::scale(*clu, config.alpha) + ad::scale(*fair, config.beta_fair);
            }
            if (options.hooks.on_batch) options.hooks.on_batch(epoch, b, !warm);

            auto bindings = ModelGraph::bindings(state.params);
            bindings.emplace("x", select_rows(data.features, rows));
            ModelParams grads;
            try {
                tape.forward(total, bindings);
                grads = ModelGraph::gradients(state.params, tape.backward(total));
                adam_step(state, grads, adam, ++state.step);
            } catch (const NonFiniteError& e) {
                throw NonFiniteError(fmt::format("epoch {} batch {}: {}", epoch, b, e.what()));
            }
            log.l_rec += rec.value().item();
            if (!warm) {
                log.l_clu += clu->value().item();
                log.l_fair += fair->value().item();
            }
        }
        const auto nb = static_cast<double>(batches.size());
        log.l_rec /= nb;
        log.l_clu /= nb;
        log.l_fair /= nb;
        log.l_total = total_loss(log.l_rec, log.l_clu, log.l_fair, config.alpha, config.beta_fair);

        const Array h_all = encode(state.params, data.features).h;
        const ClusterCenters centers =
            warm ? refresh_centers(h_all, config, derive_seed(config.seed, kStreamCenters, epoch), epoch) : *state.centers;
        const Measurement m = measure(h_all, centers, dataset, config);
        log.mi_gc = m.mi_gc;
        log.cmi_xcg = m.cmi_xcg;
        log.acc = m.acc;
        log.nmi = m.nmi;
        log.bal = m.bal;
        log.mnce = m.mnce;
        log.f_beta = m.f_beta;
        if (!std::isfinite(log.l_total)) throw NonFiniteError(fmt::format("epoch {}: non-finite loss", epoch));
        if (options.hooks.on_epoch) options.hooks.on_epoch(log);
        result.logs.push_back(log);

        if (options.checkpoint_every > 0 && (epoch + 1) % options.checkpoint_every == 0) {
            save_checkpoint(state.params, options.checkpoint_dir / fmt::format("checkpoint_epoch{:04d}.fcmi", epoch + 1));
        }
    }
    result.params = std::move(state.params);
    result.centers = std::move(state.centers);
    return result;
}

MetricsReport evaluate(const ModelParams& params, const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    dataset.validate();
    if (params.input_dim() != dataset.dim()) {
        throw ShapeError(fmt::format("model expects {} features, data has {}", params.input_dim(), dataset.dim()));
    }
    if (params.group_count() != dataset.group_count) {
        throw std::invalid_argument(fmt::format("model has {} decoder branches, data has {} groups",
                                                params.group_count(), dataset.group_count));
    }
    const Array h = encode(params, dataset.features).h;
    HardPartition pred;
    try {
        const KMeansResult km = kmeans(h, config.k, derive_seed(config.seed, kStreamEval));
        pred = harden(soft_assign(h, km.centers, config.tau).c);
    } catch (const DegenerateError& e) {
        spdlog::warn("evaluate: {}; reporting a single-cluster partition", e.what());
        pred = HardPartition{std::vector<int>(dataset.size(), 0), config.k};
    }
    std::optional<std::span<const int>> truth;
    if (dataset.labels) truth = std::span<const int>(*dataset.labels);
    return full_report(pred, truth, dataset.groups, config.f_beta_weight);
}

void write_log_csv(const std::vector<EpochLog>& logs, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(fmt::format("cannot open {} for writing", path.string()));
    out << "epoch,l_rec,l_clu,l_fair,l_total,mi_gc,cmi_xcg,acc,nmi,bal,mnce,f_beta\n";
    for (const auto& l : logs) {
        out << l.epoch << ',' << fixed6(l.l_rec) << ',' << fixed6(l.l_clu) << ',' << fixed6(l.l_fair) << ','
            << fixed6(l.l_total) << ',' << fixed6(l.mi_gc) << ',' << fixed6(l.cmi_xcg) << ',' << fixed6(l.acc) << ','
            << fixed6(l.nmi) << ',' << fixed6(l.bal) << ',' << fixed6(l.mnce) << ',' << fixed6(l.f_beta) << '\n';
    }
    out.flush();
    if (!out) throw FormatError(fmt::format("write to {} failed", path.string()));
}

}  // namespace fcmi
