#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "memprobe/corpus.hpp"
#include "memprobe/error.hpp"

namespace memprobe {

using Seed = std::uint64_t;
using WordSet = std::set<std::string>;

// Seen/unseen halves of the training sentences for one repetition, and the
// words exclusive to each half.
struct SplitPlan {
    Seed seed = 0;
    std::vector<SentenceId> seen_sentence_ids;   // sorted, trained on
    std::vector<SentenceId> unseen_sentence_ids; // sorted, held out
    WordSet seen_words;
    WordSet unseen_words;

    bool operator==(const SplitPlan&) const = default;
};

// surface -> sorted ids of the training sentences containing it.
class WordOccurrenceIndex {
public:
    explicit WordOccurrenceIndex(const LabeledCorpus& corpus) {
        for (const auto& s : corpus.sentences()) {
            for (const auto& t : s.tokens) {
                auto& ids = index_[t.surface];
                if (ids.empty() || ids.back() != s.id) {
                    ids.push_back(s.id);
                }
            }
        }
    }

    bool contains(const std::string& word) const { return index_.count(word) != 0; }

    const std::vector<SentenceId>& sentences_with(const std::string& word) const {
        auto it = index_.find(word);
        if (it == index_.end()) {
            throw DataError("word '" + word + "' does not occur in the training corpus");
        }
        return it->second;
    }

    std::size_t containing_count(const std::string& word) const { return sentences_with(word).size(); }

    const std::map<std::string, std::vector<SentenceId>>& entries() const { return index_; }

private:
    std::map<std::string, std::vector<SentenceId>> index_;
};

namespace detail {

inline WordSet vocabulary(const LabeledCorpus& corpus) {
    WordSet words;
    for (const auto& s : corpus.sentences()) {
        for (const auto& t : s.tokens) {
            words.insert(t.surface);
        }
    }
    return words;
}

// Seeded uniform shuffle of 0..n-1. The first ceil(n/2) entries form the
// seen half.
template <typename Engine>
std::vector<SentenceId> shuffled_ids(std::size_t n, Engine& engine) {
    std::vector<SentenceId> ids(n);
    std::iota(ids.begin(), ids.end(), SentenceId{0});
    std::shuffle(ids.begin(), ids.end(), engine);
    return ids;
}

inline std::size_t seen_half_size(std::size_t n) { return (n + 1) / 2; }

} // namespace detail

// Derives the word sets for a given partition of `train`. Words that occur
// in `tuning` are dropped from both sets, as are words absent from `test`
// when `restrict_to_test_vocab` is set.
inline SplitPlan plan_from_halves(const LabeledCorpus& train, const LabeledCorpus& tuning, const LabeledCorpus& test,
                                  std::vector<SentenceId> seen_ids, std::vector<SentenceId> unseen_ids, Seed seed,
                                  bool restrict_to_test_vocab = true) {
    std::sort(seen_ids.begin(), seen_ids.end());
    std::sort(unseen_ids.begin(), unseen_ids.end());

    std::vector<int> side(train.size(), -1);
    for (SentenceId id : seen_ids) {
        if (id >= train.size() || side[id] != -1) {
            throw DataError("seen half is not a set of distinct training sentence ids");
        }
        side[id] = 0;
    }
    for (SentenceId id : unseen_ids) {
        if (id >= train.size() || side[id] != -1) {
            throw DataError("unseen half overlaps the seen half or names an unknown sentence");
        }
        side[id] = 1;
    }
    if (seen_ids.size() + unseen_ids.size() != train.size()) {
        throw DataError("halves do not cover the training corpus");
    }

    // Bit 0: occurs in a seen sentence; bit 1: occurs in an unseen sentence.
    std::map<std::string, unsigned> presence;
    for (const auto& s : train.sentences()) {
        unsigned bit = side[s.id] == 0 ? 1u : 2u;
        for (const auto& t : s.tokens) {
            presence[t.surface] |= bit;
        }
    }

    WordSet tuning_vocab = detail::vocabulary(tuning);
    WordSet test_vocab = restrict_to_test_vocab ? detail::vocabulary(test) : WordSet{};

    SplitPlan plan;
    plan.seed = seed;
    for (const auto& [word, mask] : presence) {
        if (mask == 3u || tuning_vocab.count(word) != 0) {
            continue;
        }
        if (restrict_to_test_vocab && test_vocab.count(word) == 0) {
            continue;
        }
        (mask == 1u ? plan.seen_words : plan.unseen_words).insert(word);
    }
    plan.seen_sentence_ids = std::move(seen_ids);
    plan.unseen_sentence_ids = std::move(unseen_ids);
    return plan;
}

// Randomly halves the training sentences (seen half gets the extra sentence
// when the count is odd) and derives the seen/unseen word sets.
inline SplitPlan sample_split(const LabeledCorpus& train, const LabeledCorpus& tuning, const LabeledCorpus& test,
                              Seed seed, bool restrict_to_test_vocab = true) {
    if (train.size() < 2) {
        throw DataError("need at least 2 training sentences to split, got " + std::to_string(train.size()));
    }
    std::mt19937_64 engine(seed);
    auto order = detail::shuffled_ids(train.size(), engine);
    auto cut = order.begin() + static_cast<std::ptrdiff_t>(detail::seen_half_size(order.size()));
    return plan_from_halves(train, tuning, test, std::vector<SentenceId>(order.begin(), cut),
                            std::vector<SentenceId>(cut, order.end()), seed, restrict_to_test_vocab);
}

// Exact probability that all `containing_count` sentences holding a word land
// in a designated half of floor(total/2) sentences (hypergeometric, all
// successes drawn).
inline double selection_probability(std::size_t total_sentences, std::size_t containing_count) {
    if (containing_count < 1 || containing_count > total_sentences) {
        throw DomainError("selection_probability requires 1 <= |S_w| <= |S|, got |S|=" +
                          std::to_string(total_sentences) + " |S_w|=" + std::to_string(containing_count));
    }
    const std::size_t half = total_sentences / 2;
    if (containing_count > half) {
        return 0.0;
    }
    double p = 1.0;
    for (std::size_t i = 0; i < containing_count; ++i) {
        p *= static_cast<double>(half - i) / static_cast<double>(total_sentences - i);
    }
    return p;
}

inline double selection_probability_approx(std::size_t containing_count) {
    if (containing_count < 1) {
        throw DomainError("selection_probability_approx requires |S_w| >= 1");
    }
    return std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(containing_count, 2000)));
}

// Fraction of `trials` seeded random halvings in which every sentence
// containing `word` falls in the unseen half. Tuning/test filtering does not
// apply here.
inline double empirical_selection_frequency(const LabeledCorpus& train, const std::string& word, std::size_t trials,
                                            Seed seed) {
    if (trials < 1) {
        throw DomainError("trials must be positive");
    }
    if (train.size() < 2) {
        throw DataError("need at least 2 training sentences to split");
    }
    WordOccurrenceIndex index(train);
    const auto& containing = index.sentences_with(word);

    std::mt19937_64 engine(seed);
    const std::size_t seen_size = detail::seen_half_size(train.size());
    std::vector<char> in_seen(train.size());
    std::size_t hits = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        auto order = detail::shuffled_ids(train.size(), engine);
        std::fill(in_seen.begin(), in_seen.end(), 0);
        for (std::size_t i = 0; i < seen_size; ++i) {
            in_seen[order[i]] = 1;
        }
        bool unseen = std::none_of(containing.begin(), containing.end(), [&](SentenceId id) { return in_seen[id]; });
        hits += unseen ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(trials);
}

inline nlohmann::json to_json(const SplitPlan& plan) {
    return nlohmann::json{
        {"seed", plan.seed},
        {"seen_sentence_ids", plan.seen_sentence_ids},
        {"unseen_sentence_ids", plan.unseen_sentence_ids},
        {"seen_words", std::vector<std::string>(plan.seen_words.begin(), plan.seen_words.end())},
        {"unseen_words", std::vector<std::string>(plan.unseen_words.begin(), plan.unseen_words.end())},
    };
}

inline SplitPlan split_plan_from_json(const nlohmann::json& j) {
    SplitPlan plan;
    plan.seed = j.at("seed").get<Seed>();
    plan.seen_sentence_ids = j.at("seen_sentence_ids").get<std::vector<SentenceId>>();
    plan.unseen_sentence_ids = j.at("unseen_sentence_ids").get<std::vector<SentenceId>>();
    for (const auto& w : j.at("seen_words")) {
        plan.seen_words.insert(w.get<std::string>());
    }
    for (const auto& w : j.at("unseen_words")) {
        plan.unseen_words.insert(w.get<std::string>());
    }
    return plan;
}

} // namespace memprobe
