#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "flame/error.hpp"
#include "flame/experiment.hpp"

namespace flame::experiment {

namespace {

using nlohmann::json;

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

    const json* find(const std::string& name) {
        seen_.insert(name);
        auto it = node_.find(name);
        return it == node_.end() ? nullptr : &*it;
    }

    template <class T>
    void get(const std::string& name, T& out) {
        const json* v = find(name);
        if (!v) return;
        out = convert<T>(*v, key(name));
    }

    template <class T>
    void get(const std::string& name, std::optional<T>& out) {
        const json* v = find(name);
        if (!v || v->is_null()) return;
        out = convert<T>(*v, key(name));
    }

    std::optional<Section> child(const std::string& name) {
        const json* v = find(name);
        if (!v) return std::nullopt;
        return Section(*v, key(name));
    }

    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(key(it.key()), "unknown key");
        }
    }

    template <class T>
    static T convert(const json& v, const std::string& key) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ConfigError(key, "expected a number");
            return v.get<double>();
        } else if constexpr (std::is_integral_v<T>) {
            if (v.is_number_float()) {
                const double d = v.get<double>();
                if (d != std::floor(d)) throw ConfigError(key, "expected an integer");
            } else if (!v.is_number()) {
                throw ConfigError(key, "expected an integer");
            }
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
                    throw ConfigError(key, "must be non-negative");
                }
                if (v.is_number_float() && v.get<double>() < 0) throw ConfigError(key, "must be non-negative");
            }
            return v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(key, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
            if (!v.is_string()) throw ConfigError(key, "expected a path string");
            return std::filesystem::path(v.get<std::string>());
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& message) {
    if (!ok) throw ConfigError(key, message);
}

void read_quadratic(Section& s, QuadraticSection& q) {
    s.get("dim", q.problem.dim);
    s.get("aps", q.problem.aps);
    s.get("examples_per_ap", q.problem.examples_per_ap);
    s.get("noise_scale", q.problem.noise_scale);
    s.get("hetero_scale", q.problem.hetero_scale);
    s.get("mu", q.problem.mu);
    s.get("L", q.problem.L);
    s.get("modalities", q.problem.modalities);
    s.get("init_distance", q.problem.init_distance);
    s.get("problem_seed", q.problem_seed);
    s.get("local_steps", q.local_steps);
    s.get("batch_size", q.batch_size);
    s.get("eta", q.eta);
    s.get("rounds", q.rounds);
    s.get("seeds", q.seeds);
    s.get("seed", q.seed);
    s.finish();
}

ExperimentConfig from_json(const json& root) {
    ExperimentConfig cfg;
    Section top(root, "");
    if (auto s = top.child("dataset")) {
        auto& d = cfg.dataset;
        s->get("transmitters", d.transmitters);
        s->get("per_tx_count", d.per_tx_count);
        s->get("length", d.length);
        s->get("snr_db", d.snr_db);
        s->get("seed", d.seed);
        s->get("path", d.path);
        s->get("test_fraction", d.test_fraction);
        std::string symbols = "preamble";
        s->get("symbols", symbols);
        if (symbols == "preamble") {
            d.symbols = rf::SymbolSource::Preamble;
        } else if (symbols == "random") {
            d.symbols = rf::SymbolSource::Random;
        } else {
            throw ConfigError("dataset.symbols", "expected \"preamble\" or \"random\"");
        }
        s->finish();
    }
    if (auto s = top.child("partition")) {
        auto& p = cfg.partition;
        std::string mode = "noniid";
        s->get("mode", mode);
        if (mode == "iid") {
            p.mode = PartitionMode::Iid;
        } else if (mode == "noniid") {
            p.mode = PartitionMode::NonIid;
        } else {
            throw ConfigError("partition.mode", "expected \"iid\" or \"noniid\", got \"" + mode + "\"");
        }
        s->get("aps", p.aps);
        s->get("labels_per_ap", p.labels_per_ap);
        s->get("overlap_pairs", p.overlap_pairs);
        s->finish();
    }
    if (auto s = top.child("model")) {
        auto& m = cfg.model;
        if (const json* v = s->find("kind")) {
            const auto kind = Section::convert<std::string>(*v, "model.kind");
            try {
                m.kind = learner::parse_kind(kind);
            } catch (const InvalidArgument&) {
                throw ConfigError("model.kind", "expected \"softmax_linear\" or \"mini_resnet\", got \"" + kind + "\"");
            }
        }
        s->get("block1_width", m.widths.block1);
        s->get("block2_width", m.widths.block2);
        s->get("trunk_width", m.widths.trunk);
        s->get("hidden_width", m.widths.hidden);
        s->get("kernel", m.widths.kernel);
        s->get("l2_coeff", m.l2_coeff);
        s->finish();
    }
    if (auto s = top.child("training")) {
        auto& t = cfg.training;
        s->get("rounds", t.rounds);
        s->get("local_steps", t.local_steps);
        s->get("batch_size", t.batch_size);
        s->get("eta", t.eta);
        s->get("eval_stride", t.eval_stride);
        if (const json* v = s->find("modalities")) {
            require(v->is_array(), "training.modalities", "expected a list of modality names");
            std::vector<modality::Modality> items;
            for (const auto& e : *v) {
                const auto name = Section::convert<std::string>(e, "training.modalities");
                try {
                    items.push_back(modality::parse_modality(name));
                } catch (const InvalidArgument&) {
                    throw ConfigError("training.modalities", "unknown modality \"" + name + "\"");
                }
            }
            try {
                t.modalities = modality::ModalitySet(std::move(items));
            } catch (const InvalidArgument& e) {
                throw ConfigError("training.modalities", e.what());
            }
        }
        if (const json* v = s->find("seeds")) {
            require(v->is_array() && !v->empty(), "training.seeds", "expected a non-empty list of integers");
            t.seeds.clear();
            for (const auto& e : *v) t.seeds.push_back(Section::convert<std::uint64_t>(e, "training.seeds"));
        }
        s->finish();
    }
    if (auto s = top.child("analysis")) {
        s->get("bound_trace", cfg.analysis.bound_trace);
        if (auto q = s->child("quadratic")) {
            QuadraticSection section;
            read_quadratic(*q, section);
            cfg.analysis.quadratic = section;
        }
        s->finish();
    }
    if (auto s = top.child("personalization")) {
        s->get("enabled", cfg.personalization.enabled);
        s->get("fine_tune_steps", cfg.personalization.fine_tune_steps);
        s->finish();
    }
    top.get("output_dir", cfg.output_dir);
    top.finish();
    cfg.validate();
    return cfg;
}

}  // namespace

rf::GenerationParams DatasetSection::generation() const {
    rf::GenerationParams g;
    g.transmitter_count = transmitters;
    g.per_tx_count = per_tx_count;
    g.window_length = length;
    g.snr_db = snr_db;
    g.master_seed = seed;
    g.symbols = symbols;
    return g;
}

std::size_t ExperimentConfig::overlap_pairs() const {
    if (partition.overlap_pairs) return *partition.overlap_pairs;
    const auto slots = partition.aps * partition.labels_per_ap;
    const auto labels = static_cast<std::size_t>(dataset.transmitters);
    return slots > labels ? slots - labels : 0;
}

void ExperimentConfig::validate() const {
    const auto& d = dataset;
    require(d.transmitters >= 2, "dataset.transmitters", "must be at least 2");
    require(d.transmitters <= 65535, "dataset.transmitters", "must fit a 16-bit label");
    require(d.per_tx_count >= 1, "dataset.per_tx_count", "must be at least 1");
    require(d.length >= 2, "dataset.length", "must be at least 2");
    require(!std::isnan(d.snr_db), "dataset.snr_db", "must be a number");
    require(d.test_fraction >= 0.0 && d.test_fraction < 1.0, "dataset.test_fraction", "must be in [0, 1)");

    const auto& p = partition;
    require(p.aps >= 1, "partition.aps", "must be at least 1");
    if (p.mode == PartitionMode::NonIid) {
        require(p.labels_per_ap >= 1, "partition.labels_per_ap", "must be at least 1");
        require(p.labels_per_ap <= static_cast<std::size_t>(d.transmitters), "partition.labels_per_ap",
                "cannot exceed dataset.transmitters");
        require(p.aps * p.labels_per_ap >= static_cast<std::size_t>(d.transmitters), "partition.labels_per_ap",
                "aps * labels_per_ap must cover every transmitter");
        if (p.overlap_pairs) {
            require(*p.overlap_pairs == p.aps * p.labels_per_ap - static_cast<std::size_t>(d.transmitters),
                    "partition.overlap_pairs", "must equal aps * labels_per_ap - transmitters");
        }
    }

    const auto& m = model;
    require(m.l2_coeff >= 0.0 && std::isfinite(m.l2_coeff), "model.l2_coeff", "must be finite and non-negative");
    if (m.kind == learner::ModelKind::MiniResnet) {
        require(m.widths.block1 >= 1, "model.block1_width", "must be at least 1");
        require(m.widths.block2 >= 1, "model.block2_width", "must be at least 1");
        require(m.widths.trunk >= 1, "model.trunk_width", "must be at least 1");
        require(m.widths.hidden >= 1, "model.hidden_width", "must be at least 1");
        require(m.widths.kernel % 2 == 1, "model.kernel", "must be odd");
        require(d.length % 4 == 0, "dataset.length", "mini_resnet needs a multiple of 4");
    }

    const auto& t = training;
    require(t.rounds >= 1, "training.rounds", "must be at least 1");
    require(t.local_steps >= 1, "training.local_steps", "must be at least 1");
    require(t.batch_size >= 1, "training.batch_size", "must be at least 1");
    require(t.eta >= 0.0 && std::isfinite(t.eta), "training.eta", "must be finite and non-negative");
    require(t.eval_stride >= 1, "training.eval_stride", "must be at least 1");
    require(!t.seeds.empty(), "training.seeds", "must not be empty");

    if (analysis.quadratic) {
        const auto& q = *analysis.quadratic;
        const std::string k = "analysis.quadratic.";
        require(q.problem.dim >= 1, k + "dim", "must be at least 1");
        require(q.problem.aps >= 1, k + "aps", "must be at least 1");
        require(q.problem.examples_per_ap >= 1, k + "examples_per_ap", "must be at least 1");
        require(q.problem.noise_scale >= 0.0, k + "noise_scale", "must be non-negative");
        require(q.problem.hetero_scale >= 0.0, k + "hetero_scale", "must be non-negative");
        require(q.problem.mu > 0.0, k + "mu", "must be positive");
        require(q.problem.L >= q.problem.mu && std::isfinite(q.problem.L), k + "L", "must be finite and >= mu");
        require(q.problem.modalities >= 1 && q.problem.modalities <= 3, k + "modalities", "must be 1, 2 or 3");
        require(q.problem.init_distance >= 0.0, k + "init_distance", "must be non-negative");
        require(q.local_steps >= 1, k + "local_steps", "must be at least 1");
        require(q.batch_size >= 1, k + "batch_size", "must be at least 1");
        require(q.eta >= 0.0 && std::isfinite(q.eta), k + "eta", "must be finite and non-negative");
        require(q.rounds >= 1, k + "rounds", "must be at least 1");
        require(q.seeds >= 1, k + "seeds", "must be at least 1");
    }
}

federation::TrainingConfig ExperimentConfig::training_config(std::uint64_t seed, std::size_t threads) const {
    federation::TrainingConfig t;
    t.rounds = training.rounds;
    t.local_steps = training.local_steps;
    t.batch_size = training.batch_size;
    t.eta = training.eta;
    t.eval_stride = training.eval_stride;
    t.seed = seed;
    t.threads = threads;
    return t;
}

ExperimentConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("malformed config: ") + e.what());
    }
    return from_json(root);
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    const auto& d = cfg.dataset;
    j["dataset"] = {{"transmitters", d.transmitters}, {"per_tx_count", d.per_tx_count}, {"length", d.length},
                    {"snr_db", d.snr_db},           {"seed", d.seed},                 {"test_fraction", d.test_fraction}};
    j["dataset"]["symbols"] = d.symbols == rf::SymbolSource::Preamble ? "preamble" : "random";
    j["dataset"]["path"] = d.path ? json(d.path->string()) : json(nullptr);
    const auto& p = cfg.partition;
    j["partition"] = {{"mode", p.mode == PartitionMode::Iid ? "iid" : "noniid"},
                      {"aps", p.aps},
                      {"labels_per_ap", p.labels_per_ap},
                      {"overlap_pairs", cfg.overlap_pairs()}};
    const auto& m = cfg.model;
    j["model"] = {{"kind", std::string(learner::kind_name(m.kind))},
                  {"block1_width", m.widths.block1},
                  {"block2_width", m.widths.block2},
                  {"trunk_width", m.widths.trunk},
                  {"hidden_width", m.widths.hidden},
                  {"kernel", m.widths.kernel},
                  {"l2_coeff", m.l2_coeff}};
    const auto& t = cfg.training;
    json mods = json::array();
    for (auto mod : t.modalities.items()) mods.push_back(std::string(modality::name(mod)));
    j["training"] = {{"rounds", t.rounds},     {"local_steps", t.local_steps}, {"batch_size", t.batch_size},
                     {"eta", t.eta},           {"modalities", mods},           {"eval_stride", t.eval_stride},
                     {"seeds", t.seeds}};
    j["analysis"] = {{"bound_trace", cfg.analysis.bound_trace}};
    if (cfg.analysis.quadratic) {
        const auto& q = *cfg.analysis.quadratic;
        j["analysis"]["quadratic"] = {{"dim", q.problem.dim},
                                      {"aps", q.problem.aps},
                                      {"examples_per_ap", q.problem.examples_per_ap},
                                      {"noise_scale", q.problem.noise_scale},
                                      {"hetero_scale", q.problem.hetero_scale},
                                      {"mu", q.problem.mu},
                                      {"L", q.problem.L},
                                      {"modalities", q.problem.modalities},
                                      {"init_distance", q.problem.init_distance},
                                      {"problem_seed", q.problem_seed},
                                      {"local_steps", q.local_steps},
                                      {"batch_size", q.batch_size},
                                      {"eta", q.eta},
                                      {"rounds", q.rounds},
                                      {"seeds", q.seeds},
                                      {"seed", q.seed}};
    }
    j["personalization"] = {{"enabled", cfg.personalization.enabled}};
    j["personalization"]["fine_tune_steps"] =
        cfg.personalization.fine_tune_steps ? json(*cfg.personalization.fine_tune_steps) : json(nullptr);
    j["output_dir"] = cfg.output_dir.string();
    return j.dump(2);
}

}  // namespace flame::experiment
