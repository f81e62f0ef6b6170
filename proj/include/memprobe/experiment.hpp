#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "memprobe/corpus.hpp"
#include "memprobe/error.hpp"
#include "memprobe/evaluate.hpp"
#include "memprobe/probe.hpp"
#include "memprobe/split.hpp"
#include "memprobe/synth.hpp"

namespace memprobe {

// Exit codes shared by the CLI and StageError.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, numerical = 3 };

inline ExitCode exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e) != nullptr) {
        return ExitCode::usage;
    }
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) {
        return ExitCode::numerical;
    }
    return ExitCode::data;
}

// An error annotated with the pipeline stage (and repetition) it came from.
class StageError : public Error {
public:
    StageError(std::string stage, std::optional<std::size_t> repetition, const std::exception& cause)
        : Error(describe(stage, repetition, cause.what())),
          stage_(std::move(stage)),
          repetition_(repetition),
          code_(exit_code_for(cause)) {}

    const std::string& stage() const { return stage_; }
    std::optional<std::size_t> repetition() const { return repetition_; }
    ExitCode code() const { return code_; }

private:
    static std::string describe(const std::string& stage, std::optional<std::size_t> rep, const char* what) {
        std::string out = "stage '" + stage + "'";
        if (rep) {
            out += " (repetition " + std::to_string(*rep) + ")";
        }
        return out + ": " + what;
    }

    std::string stage_;
    std::optional<std::size_t> repetition_;
    ExitCode code_;
};

struct ExperimentConfig {
    // Corpus inputs; ignored when `synth` is set.
    std::string train_path;
    std::string tuning_path; // empty: take the first tuning_sentences of train
    std::string test_path;
    RepresentationMode representation = RepresentationMode::contextual;
    std::string train_vectors_path;
    std::string tuning_vectors_path;
    std::string test_vectors_path;
    std::string embeddings_path; // static mode
    std::optional<SynthConfig> synth;

    ProbeKind classifier = ProbeKind::linear;
    std::optional<std::size_t> train_sentences;
    std::size_t tuning_sentences = 500;
    std::size_t repetitions = 10;
    Seed base_seed = 0;
    bool restrict_to_test_vocab = true;
    TrainConfig train;

    std::string output;    // path prefix; writes <output>.json and <output>.tsv
    std::string model_dir; // optional; saves model_<r>.json per repetition

    void validate() const {
        if (repetitions == 0) {
            throw UsageError("repetitions must be positive");
        }
        if (tuning_sentences == 0) {
            throw UsageError("tuning_sentences must be positive");
        }
        if (train_sentences && *train_sentences == 0) {
            throw UsageError("train_sentences must be positive");
        }
        train.validate();
        if (synth) {
            synth->validate();
            return;
        }
        if (train_path.empty() || test_path.empty()) {
            throw UsageError("config needs 'train' and 'test' corpora or a 'synth' section");
        }
        if (representation == RepresentationMode::static_type) {
            if (embeddings_path.empty()) {
                throw UsageError("static representation needs 'embeddings'");
            }
        } else if (train_vectors_path.empty() || test_vectors_path.empty() ||
                   (!tuning_path.empty() && tuning_vectors_path.empty())) {
            throw UsageError("contextual representation needs vector files for every corpus");
        }
    }

    std::string representation_name() const {
        return synth ? "synthetic" : std::string(to_string(representation));
    }
};

namespace detail {

inline void set_dotted(nlohmann::json& root, const std::string& key, const nlohmann::json& value) {
    nlohmann::json* node = &root;
    std::size_t start = 0;
    while (true) {
        std::size_t dot = key.find('.', start);
        std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            throw UsageError("invalid override key '" + key + "'");
        }
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) {
            (*node)[part] = nlohmann::json::object();
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

inline std::string resolve(const std::filesystem::path& base, const std::string& path) {
    if (path.empty()) {
        return path;
    }
    std::filesystem::path p(path);
    return p.is_absolute() ? path : (base / p).lexically_normal().string();
}

} // namespace detail

// Applies "KEY=VALUE" overrides (dotted keys reach into sections). VALUE is
// parsed as JSON when possible and taken as a string otherwise.
inline void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides) {
    for (const auto& item : overrides) {
        auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw UsageError("override '" + item + "' is not KEY=VALUE");
        }
        std::string key = item.substr(0, eq);
        std::string raw = item.substr(eq + 1);
        nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
        if (value.is_discarded()) {
            value = raw;
        }
        detail::set_dotted(doc, key, value);
    }
}

// Relative paths are resolved against `base_dir`.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                                    const std::filesystem::path& base_dir = {}) {
    ExperimentConfig c;
    try {
        auto str = [&](const char* key) {
            return j.contains(key) && !j.at(key).is_null() ? detail::resolve(base_dir, j.at(key).get<std::string>())
                                                           : std::string();
        };
        c.train_path = str("train");
        c.tuning_path = str("tuning");
        c.test_path = str("test");
        c.train_vectors_path = str("train_vectors");
        c.tuning_vectors_path = str("tuning_vectors");
        c.test_vectors_path = str("test_vectors");
        c.embeddings_path = str("embeddings");
        c.output = str("output");
        c.model_dir = str("model_dir");
        if (j.contains("representation")) {
            auto r = j.at("representation").get<std::string>();
            if (r == "contextual") {
                c.representation = RepresentationMode::contextual;
            } else if (r == "static") {
                c.representation = RepresentationMode::static_type;
            } else {
                throw UsageError("unknown representation '" + r + "' (expected contextual or static)");
            }
        }
        if (j.contains("synth") && !j.at("synth").is_null()) {
            c.synth = j.at("synth").get<SynthConfig>();
        }
        if (j.contains("classifier")) {
            c.classifier = parse_probe_kind(j.at("classifier").get<std::string>());
        }
        if (j.contains("train_sentences") && !j.at("train_sentences").is_null()) {
            c.train_sentences = j.at("train_sentences").get<std::size_t>();
        }
        auto read = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                j.at(key).get_to(field);
            }
        };
        read("tuning_sentences", c.tuning_sentences);
        read("repetitions", c.repetitions);
        read("base_seed", c.base_seed);
        read("restrict_to_test_vocab", c.restrict_to_test_vocab);
        read("learning_rate", c.train.learning_rate);
        read("batch_size", c.train.batch_size);
        read("max_epochs", c.train.max_epochs);
        read("patience", c.train.patience);
        read("hidden_dim", c.train.hidden_dim);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("invalid config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open config file '" + path + "'");
    }
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw UsageError("config file '" + path + "' is not a JSON object");
    }
    apply_overrides(doc, overrides);
    return experiment_config_from_json(doc, std::filesystem::path(path).parent_path());
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    if (c.synth) {
        j["synth"] = *c.synth;
    } else {
        j["train"] = c.train_path;
        j["tuning"] = c.tuning_path;
        j["test"] = c.test_path;
        j["representation"] = std::string(to_string(c.representation));
        if (c.representation == RepresentationMode::static_type) {
            j["embeddings"] = c.embeddings_path;
        } else {
            j["train_vectors"] = c.train_vectors_path;
            j["tuning_vectors"] = c.tuning_vectors_path;
            j["test_vectors"] = c.test_vectors_path;
        }
    }
    j["classifier"] = std::string(to_string(c.classifier));
    j["train_sentences"] = c.train_sentences ? nlohmann::json(*c.train_sentences) : nlohmann::json(nullptr);
    j["tuning_sentences"] = c.tuning_sentences;
    j["repetitions"] = c.repetitions;
    j["base_seed"] = c.base_seed;
    j["restrict_to_test_vocab"] = c.restrict_to_test_vocab;
    j["learning_rate"] = c.train.learning_rate;
    j["batch_size"] = c.train.batch_size;
    j["max_epochs"] = c.train.max_epochs;
    j["patience"] = c.train.patience;
    j["hidden_dim"] = c.train.hidden_dim;
    return j;
}

// Loaded corpora and representations, labels aligned to one inventory.
struct ExperimentData {
    LabeledCorpus train; // the pool that repetitions subsample and split
    LabeledCorpus tuning;
    LabeledCorpus test;
    RepresentationStore train_store;
    RepresentationStore tuning_store;
    RepresentationStore test_store;
};

namespace detail {

inline std::ifstream open_input(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        throw DataError(std::string("cannot open ") + what + " file '" + path + "'");
    }
    return in;
}

inline LabeledCorpus read_corpus(const std::string& path, const char* what) {
    auto in = open_input(path, what);
    try {
        return parse_conllu(in);
    } catch (const ParseError& e) {
        throw DataError(std::string(what) + " '" + path + "' " + e.what());
    }
}

inline RepresentationStore read_token_vectors(const std::string& path, const LabeledCorpus& corpus, const char* what) {
    auto in = open_input(path, what);
    return load_token_vectors(in, corpus);
}

inline RepresentationStore read_type_embeddings(const std::string& path, const LabeledCorpus& corpus) {
    auto in = open_input(path, "embeddings");
    return load_type_embeddings(in, corpus);
}

inline std::vector<std::string> merged_inventory(const LabeledCorpus& a, const LabeledCorpus& b,
                                                 const LabeledCorpus& c) {
    LabeledCorpus merged(a.label_inventory());
    for (const auto* corpus : {&b, &c}) {
        for (const auto& label : corpus->label_inventory()) {
            merged.intern_label(label);
        }
    }
    return merged.label_inventory();
}

} // namespace detail

inline ExperimentData load_experiment_data(const ExperimentConfig& config) {
    ExperimentData data;
    if (config.synth) {
        SynthData synth = generate(*config.synth);
        data.train = std::move(synth.train);
        data.tuning = std::move(synth.tuning);
        data.test = std::move(synth.test);
        data.train_store = std::move(synth.train_store);
        data.tuning_store = std::move(synth.tuning_store);
        data.test_store = std::move(synth.test_store);
        return data;
    }

    LabeledCorpus train_file = detail::read_corpus(config.train_path, "train corpus");
    LabeledCorpus test = detail::read_corpus(config.test_path, "test corpus");
    bool split_tuning = config.tuning_path.empty();
    LabeledCorpus tuning = split_tuning ? LabeledCorpus{} : detail::read_corpus(config.tuning_path, "tuning corpus");

    RepresentationStore train_file_store;
    if (config.representation == RepresentationMode::static_type) {
        train_file_store = detail::read_type_embeddings(config.embeddings_path, train_file);
        data.test_store = detail::read_type_embeddings(config.embeddings_path, test);
        if (!split_tuning) {
            data.tuning_store = detail::read_type_embeddings(config.embeddings_path, tuning);
        }
    } else {
        train_file_store = detail::read_token_vectors(config.train_vectors_path, train_file, "train vectors");
        data.test_store = detail::read_token_vectors(config.test_vectors_path, test, "test vectors");
        if (!split_tuning) {
            data.tuning_store = detail::read_token_vectors(config.tuning_vectors_path, tuning, "tuning vectors");
        }
    }

    LabeledCorpus pool = std::move(train_file);
    RepresentationStore pool_store = std::move(train_file_store);
    if (split_tuning) {
        if (pool.size() <= config.tuning_sentences) {
            throw DataError("train corpus has " + std::to_string(pool.size()) +
                            " sentences; cannot reserve " + std::to_string(config.tuning_sentences) +
                            " for tuning and keep any for training");
        }
        std::vector<SentenceId> head(config.tuning_sentences), rest(pool.size() - config.tuning_sentences);
        std::iota(head.begin(), head.end(), SentenceId{0});
        std::iota(rest.begin(), rest.end(), SentenceId{config.tuning_sentences});
        tuning = select_sentences(pool, head);
        data.tuning_store = pool_store.select(head);
        LabeledCorpus remaining = select_sentences(pool, rest);
        RepresentationStore remaining_store = pool_store.select(rest);
        pool = std::move(remaining);
        pool_store = std::move(remaining_store);
    }

    if (pool_store.dimension() != data.test_store.dimension() ||
        pool_store.dimension() != data.tuning_store.dimension()) {
        throw DataError("train, tuning and test representations differ in dimension");
    }

    auto inventory = detail::merged_inventory(pool, tuning, test);
    data.train = align_labels(pool, inventory);
    data.tuning = align_labels(tuning, inventory);
    data.test = align_labels(test, inventory);
    data.train_store = std::move(pool_store);
    return data;
}

// splitmix64 finaliser; gives independent streams from one repetition seed.
inline Seed derive_seed(Seed seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t subsample_stream = 1;
inline constexpr std::uint64_t training_stream = 2;

// Training sentences and split for one repetition.
struct Repetition {
    Seed seed = 0;
    LabeledCorpus train;
    RepresentationStore train_store;
    std::vector<SentenceId> source_ids; // pool index of each train sentence
    SplitPlan plan;
};

// Uniform draw of `count` pool sentences without replacement, kept in pool
// order.
inline std::vector<SentenceId> subsample_ids(std::size_t pool_size, std::size_t count, Seed seed) {
    if (count > pool_size) {
        throw DataError("requested " + std::to_string(count) + " training sentences but only " +
                        std::to_string(pool_size) + " are available");
    }
    std::mt19937_64 engine(derive_seed(seed, subsample_stream));
    auto order = detail::shuffled_ids(pool_size, engine);
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

inline Repetition prepare_repetition(const ExperimentData& data, const ExperimentConfig& config, Seed seed,
                                     std::optional<std::size_t> rep_index = std::nullopt) {
    Repetition rep;
    rep.seed = seed;
    try {
        if (config.train_sentences) {
            rep.source_ids = subsample_ids(data.train.size(), *config.train_sentences, seed);
        } else {
            rep.source_ids.resize(data.train.size());
            std::iota(rep.source_ids.begin(), rep.source_ids.end(), SentenceId{0});
        }
        rep.train = select_sentences(data.train, rep.source_ids);
        rep.train_store = data.train_store.select(rep.source_ids);
    } catch (const Error& e) {
        throw StageError("subsample", rep_index, e);
    }
    try {
        rep.plan = sample_split(rep.train, data.tuning, data.test, seed, config.restrict_to_test_vocab);
    } catch (const Error& e) {
        throw StageError("split", rep_index, e);
    }
    return rep;
}

struct ExperimentResult {
    std::vector<RunResult> runs;
    AggregateReport report;
    std::size_t train_sentences = 0;
    nlohmann::json json;
    std::string tsv;
};

inline ExperimentResult run_experiment_on(const ExperimentData& data, const ExperimentConfig& config) {
    ExperimentResult result;
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t r = 0; r < config.repetitions; ++r) {
        const Seed seed = config.base_seed + r;
        Repetition rep = prepare_repetition(data, config, seed, r);
        result.train_sentences = rep.train.size();

        TrainConfig tc = config.train;
        tc.seed = derive_seed(seed, training_stream);
        TrainOutcome trained;
        try {
            trained = train_probe_logged(rep.train_store, rep.train, rep.plan.seen_sentence_ids, data.tuning,
                                         data.tuning_store, config.classifier, tc);
        } catch (const Error& e) {
            throw StageError("train", r, e);
        }
        if (!config.model_dir.empty()) {
            try {
                std::filesystem::create_directories(config.model_dir);
                std::ofstream out(std::filesystem::path(config.model_dir) / ("model_" + std::to_string(r) + ".json"));
                out << to_json(trained.model, data.train.label_inventory()).dump(2) << '\n';
                if (!out) {
                    throw DataError("cannot write model file");
                }
            } catch (const std::exception& e) {
                throw StageError("write", r, e);
            }
        }
        RunResult run;
        try {
            run = evaluate_run(trained.model, data.test, data.test_store, rep.plan);
        } catch (const Error& e) {
            throw StageError("evaluate", r, e);
        }
        result.runs.push_back(run);

        nlohmann::json rj = to_json(run);
        rj["seed"] = seed;
        rj["train_sentences"] = rep.train.size();
        rj["seen_words"] = rep.plan.seen_words.size();
        rj["unseen_words"] = rep.plan.unseen_words.size();
        rj["epochs_run"] = trained.log.epochs_run;
        rj["best_epoch"] = trained.log.best_epoch;
        rj["best_tuning_accuracy"] = trained.log.best_tuning_accuracy;
        runs.push_back(std::move(rj));
    }
    result.report = aggregate(result.runs);

    ReportRowInfo info{std::to_string(result.train_sentences), config.representation_name(),
                       std::string(to_string(config.classifier))};
    result.tsv = tsv_header() + "\n" + tsv_row(info, result.report) + "\n";

    result.json = nlohmann::json{
        {"config", to_json(config)},
        {"report", to_json(result.report)},
        {"runs", std::move(runs)},
    };
    if (!config.synth && config.representation == RepresentationMode::static_type) {
        result.json["missing_embeddings"] = {
            {"train_tokens", data.train_store.excluded_token_count()},
            {"tuning_tokens", data.tuning_store.excluded_token_count()},
            {"test_tokens", data.test_store.excluded_token_count()},
            {"test_surfaces", data.test_store.missing_surfaces()},
        };
    }
    return result;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::filesystem::create_directories(parent);
    }
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw DataError("cannot write '" + path + "'");
    }
}

// Loads data, runs all repetitions and writes <output>.json / <output>.tsv
// when an output prefix is configured.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    ExperimentData data;
    try {
        data = load_experiment_data(config);
    } catch (const Error& e) {
        throw StageError("load", std::nullopt, e);
    }
    ExperimentResult result = run_experiment_on(data, config);
    if (!config.output.empty()) {
        try {
            write_text_file(config.output + ".json", result.json.dump(2) + "\n");
            write_text_file(config.output + ".tsv", result.tsv);
        } catch (const std::exception& e) {
            throw StageError("write", std::nullopt, e);
        }
    }
    return result;
}

// Rows "k<TAB>exact<TAB>approx" for k = 1..max_count.
inline std::string probability_table(std::size_t max_count, std::size_t total_sentences) {
    if (max_count < 1 || total_sentences < 1 || max_count > total_sentences) {
        throw DomainError("prob-table requires 1 <= max <= total");
    }
    std::string out;
    char buf[128];
    for (std::size_t k = 1; k <= max_count; ++k) {
        std::snprintf(buf, sizeof(buf), "%zu\t%g\t%g\n", k, selection_probability(total_sentences, k),
                      selection_probability_approx(k));
        out += buf;
    }
    return out;
}

// Writes the corpora and vector files of a synthetic dataset to `dir`, plus
// a run config pointing at them.
inline void write_synth_dataset(const SynthData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, auto&& fn) {
        std::ofstream out(dir / name, std::ios::binary);
        fn(out);
        if (!out) {
            throw DataError(std::string("cannot write '") + (dir / name).string() + "'");
        }
    };
    write("train.conllu", [&](std::ostream& o) { write_conllu(data.train, o); });
    write("tuning.conllu", [&](std::ostream& o) { write_conllu(data.tuning, o); });
    write("test.conllu", [&](std::ostream& o) { write_conllu(data.test, o); });
    write("train.vec", [&](std::ostream& o) { write_token_vectors(data.train, data.train_store, o); });
    write("tuning.vec", [&](std::ostream& o) { write_token_vectors(data.tuning, data.tuning_store, o); });
    write("test.vec", [&](std::ostream& o) { write_token_vectors(data.test, data.test_store, o); });
    nlohmann::json cfg{
        {"train", "train.conllu"},        {"tuning", "tuning.conllu"},     {"test", "test.conllu"},
        {"representation", "contextual"}, {"train_vectors", "train.vec"},  {"tuning_vectors", "tuning.vec"},
        {"test_vectors", "test.vec"},     {"classifier", "linear"},        {"repetitions", 10},
        {"base_seed", 0},                 {"output", "report"},
    };
    write("run.json", [&](std::ostream& o) { o << cfg.dump(2) << '\n'; });
}

} // namespace memprobe
