#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "memprobe/corpus.hpp"
#include "memprobe/error.hpp"
#include "memprobe/split.hpp"

namespace memprobe {

// Synthetic corpus whose representations mix a per-label prototype with a
// per-word identity vector. abstraction_weight = 1 gives pure label signal,
// 0 gives pure word identity.
struct SynthConfig {
    std::size_t n_train_sentences = 500;
    std::size_t n_tuning_sentences = 100;
    std::size_t n_test_sentences = 500;
    std::size_t sentence_length = 10;
    std::size_t vocab_size = 2000;
    std::size_t n_labels = 3;
    std::size_t dimension = 32;
    double zipf_exponent = 1.0;
    double abstraction_weight = 1.0;
    double noise_sigma = 0.01;
    Seed seed = 0;

    void validate() const {
        if (n_train_sentences == 0 || n_tuning_sentences == 0 || n_test_sentences == 0 || sentence_length == 0 ||
            vocab_size == 0 || n_labels == 0 || dimension == 0) {
            throw UsageError("synthetic corpus sizes must be positive");
        }
        if (vocab_size < n_labels) {
            throw UsageError("vocab_size must be at least n_labels");
        }
        if (!(zipf_exponent > 0.0) || !std::isfinite(zipf_exponent)) {
            throw UsageError("zipf_exponent must be positive");
        }
        if (!(abstraction_weight >= 0.0 && abstraction_weight <= 1.0)) {
            throw UsageError("abstraction_weight must lie in [0, 1]");
        }
        if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
            throw UsageError("noise_sigma must be non-negative");
        }
    }
};

struct SynthData {
    LabeledCorpus train;
    LabeledCorpus tuning;
    LabeledCorpus test;
    RepresentationStore train_store;
    RepresentationStore tuning_store;
    RepresentationStore test_store;
    std::vector<LabelId> type_labels; // gold label of word type i ("w<i>")
};

inline std::string synth_surface(std::size_t type) { return "w" + std::to_string(type); }
inline std::string synth_label(std::size_t label) { return "L" + std::to_string(label); }

namespace detail {

template <typename Engine>
std::vector<double> unit_gaussian_rows(std::size_t rows, std::size_t dim, Engine& engine) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> out(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
        double norm = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            double v = normal(engine);
            out[r * dim + c] = v;
            norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            out[r * dim] = 1.0;
            norm = 1.0;
        }
        for (std::size_t c = 0; c < dim; ++c) {
            out[r * dim + c] /= norm;
        }
    }
    return out;
}

} // namespace detail

inline SynthData generate(const SynthConfig& config) {
    config.validate();
    std::mt19937_64 engine(config.seed);
    const std::size_t dim = config.dimension;

    std::vector<std::string> inventory;
    for (std::size_t l = 0; l < config.n_labels; ++l) {
        inventory.push_back(synth_label(l));
    }

    std::uniform_int_distribution<std::size_t> pick_label(0, config.n_labels - 1);
    std::vector<LabelId> type_labels(config.vocab_size);
    for (auto& l : type_labels) {
        l = static_cast<LabelId>(pick_label(engine));
    }
    std::vector<double> identity = detail::unit_gaussian_rows(config.vocab_size, dim, engine);
    std::vector<double> prototype = detail::unit_gaussian_rows(config.n_labels, dim, engine);

    std::vector<double> weights(config.vocab_size);
    for (std::size_t k = 0; k < config.vocab_size; ++k) {
        weights[k] = 1.0 / std::pow(static_cast<double>(k + 1), config.zipf_exponent);
    }
    std::discrete_distribution<std::size_t> pick_type(weights.begin(), weights.end());
    std::normal_distribution<double> noise(0.0, config.noise_sigma > 0.0 ? config.noise_sigma : 1.0);

    const double alpha = config.abstraction_weight;
    auto make_split = [&](std::size_t n_sentences, LabeledCorpus& corpus, RepresentationStore& store) {
        corpus = LabeledCorpus(inventory);
        std::vector<double> rows;
        rows.reserve(n_sentences * config.sentence_length * dim);
        for (std::size_t s = 0; s < n_sentences; ++s) {
            std::vector<Token> tokens;
            for (std::size_t i = 0; i < config.sentence_length; ++i) {
                std::size_t type = pick_type(engine);
                LabelId label = type_labels[type];
                tokens.push_back(Token{synth_surface(type), label});
                for (std::size_t c = 0; c < dim; ++c) {
                    double v = alpha * prototype[label * dim + c] + (1.0 - alpha) * identity[type * dim + c];
                    if (config.noise_sigma > 0.0) {
                        v += noise(engine);
                    }
                    rows.push_back(v);
                }
            }
            corpus.add_sentence(std::move(tokens));
        }
        store = RepresentationStore::contextual(corpus, dim, std::move(rows));
    };

    SynthData data;
    make_split(config.n_train_sentences, data.train, data.train_store);
    make_split(config.n_tuning_sentences, data.tuning, data.tuning_store);
    make_split(config.n_test_sentences, data.test, data.test_store);
    data.type_labels = std::move(type_labels);
    return data;
}

struct BaselineResult {
    double accuracy = 0.0;
    std::size_t tokens = 0;
    bool zero_tokens = true;
};

// Accuracy of always answering the most frequent label of the whole test
// set (lowest id on ties), counted over tokens whose surface is in `words`.
inline BaselineResult majority_label_baseline(const LabeledCorpus& test, const WordSet& words) {
    std::vector<std::size_t> counts(test.label_count(), 0);
    for (const auto& s : test.sentences()) {
        for (const auto& t : s.tokens) {
            ++counts[t.label];
        }
    }
    LabelId majority = 0;
    for (std::size_t l = 1; l < counts.size(); ++l) {
        if (counts[l] > counts[majority]) {
            majority = static_cast<LabelId>(l);
        }
    }
    BaselineResult result;
    std::size_t hits = 0;
    for (const auto& s : test.sentences()) {
        for (const auto& t : s.tokens) {
            if (words.count(t.surface) != 0) {
                ++result.tokens;
                hits += t.label == majority ? 1 : 0;
            }
        }
    }
    result.zero_tokens = result.tokens == 0;
    result.accuracy = result.zero_tokens ? 0.0 : static_cast<double>(hits) / static_cast<double>(result.tokens);
    return result;
}

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{
        {"n_train_sentences", c.n_train_sentences},
        {"n_tuning_sentences", c.n_tuning_sentences},
        {"n_test_sentences", c.n_test_sentences},
        {"sentence_length", c.sentence_length},
        {"vocab_size", c.vocab_size},
        {"n_labels", c.n_labels},
        {"dimension", c.dimension},
        {"zipf_exponent", c.zipf_exponent},
        {"abstraction_weight", c.abstraction_weight},
        {"noise_sigma", c.noise_sigma},
        {"seed", c.seed},
    };
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, SynthConfig& c) {
    auto read = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            j.at(key).get_to(field);
        }
    };
    read("n_train_sentences", c.n_train_sentences);
    read("n_tuning_sentences", c.n_tuning_sentences);
    read("n_test_sentences", c.n_test_sentences);
    read("sentence_length", c.sentence_length);
    read("vocab_size", c.vocab_size);
    read("n_labels", c.n_labels);
    read("dimension", c.dimension);
    read("zipf_exponent", c.zipf_exponent);
    read("abstraction_weight", c.abstraction_weight);
    read("noise_sigma", c.noise_sigma);
    read("seed", c.seed);
}

} // namespace memprobe
