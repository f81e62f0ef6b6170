#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "memprobe/corpus.hpp"
#include "memprobe/error.hpp"
#include "memprobe/probe.hpp"
#include "memprobe/split.hpp"
#include "memprobe/text_format.hpp"

namespace memprobe {

// Token counts for one repetition. Accuracies are 0 when their total is 0.
struct RunResult {
    std::size_t correct_seen = 0;
    std::size_t total_seen = 0;
    std::size_t correct_unseen = 0;
    std::size_t total_unseen = 0;
    std::size_t correct_all = 0;
    std::size_t total_all = 0;
    double acc_seen = 0.0;
    double acc_unseen = 0.0;
    double acc_all = 0.0;

    bool operator==(const RunResult&) const = default;
};

inline double ratio(std::size_t correct, std::size_t total) {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

inline RunResult make_run_result(std::size_t correct_seen, std::size_t total_seen, std::size_t correct_unseen,
                                 std::size_t total_unseen, std::size_t correct_all, std::size_t total_all) {
    RunResult r{correct_seen, total_seen, correct_unseen, total_unseen, correct_all, total_all, 0.0, 0.0, 0.0};
    r.acc_seen = ratio(correct_seen, total_seen);
    r.acc_unseen = ratio(correct_unseen, total_unseen);
    r.acc_all = ratio(correct_all, total_all);
    return r;
}

// Token-based evaluation of `model` on `test`, tallied separately over
// tokens of seen words and of unseen words. Tokens the store excludes are
// not counted anywhere.
template <VectorSource Store>
RunResult evaluate_run(const ProbeModel& model, const LabeledCorpus& test, const Store& test_store,
                       const SplitPlan& plan) {
    for (const auto& w : plan.seen_words) {
        if (plan.unseen_words.count(w) != 0) {
            throw DataError("word '" + w + "' is both seen and unseen in the split plan");
        }
    }
    if (test_store.dimension() != input_dim(model)) {
        throw DataError("test representations have dimension " + std::to_string(test_store.dimension()) +
                        ", model expects " + std::to_string(input_dim(model)));
    }

    enum class Group { seen, unseen, neither };
    std::vector<Group> groups;
    std::vector<LabelId> gold;
    std::vector<std::pair<SentenceId, std::size_t>> keys;
    for (const auto& s : test.sentences()) {
        for (std::size_t t = 0; t < s.tokens.size(); ++t) {
            if (test_store.is_excluded(s.id, t)) {
                continue;
            }
            if (!test_store.has(s.id, t)) {
                throw DataError("test sentence " + std::to_string(s.id) + " token " + std::to_string(t) +
                                " has no vector");
            }
            const auto& surface = s.tokens[t].surface;
            Group g = plan.seen_words.count(surface) != 0     ? Group::seen
                      : plan.unseen_words.count(surface) != 0 ? Group::unseen
                                                               : Group::neither;
            groups.push_back(g);
            gold.push_back(s.tokens[t].label);
            keys.emplace_back(s.id, t);
        }
    }
    if (keys.empty()) {
        return make_run_result(0, 0, 0, 0, 0, 0);
    }

    const auto d = static_cast<Eigen::Index>(test_store.dimension());
    Matrix inputs(static_cast<Eigen::Index>(keys.size()), d);
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto v = test_store.vector(keys[i].first, keys[i].second);
        inputs.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), d);
    }
    auto predicted = predict_labels(model, inputs);

    std::size_t cs = 0, ts = 0, cu = 0, tu = 0, ca = 0;
    for (std::size_t i = 0; i < keys.size(); ++i) {
        bool ok = predicted[i] == gold[i];
        ca += ok;
        if (groups[i] == Group::seen) {
            ++ts;
            cs += ok;
        } else if (groups[i] == Group::unseen) {
            ++tu;
            cu += ok;
        }
    }
    return make_run_result(cs, ts, cu, tu, ca, keys.size());
}

// Micro-averaged results over repetitions; the standard deviations are
// population deviations of the per-run accuracies.
struct AggregateReport {
    std::size_t n_runs = 0;
    std::size_t correct_seen = 0;
    std::size_t total_seen = 0;
    std::size_t correct_unseen = 0;
    std::size_t total_unseen = 0;
    std::size_t correct_all = 0;
    std::size_t total_all = 0;
    double micro_acc_seen = 0.0;
    double micro_acc_unseen = 0.0;
    double micro_acc_all = 0.0;
    double gap = 0.0;
    double std_seen = 0.0;
    double std_unseen = 0.0;
};

namespace detail {

// Sorted before summing so the result does not depend on run order.
inline double population_stddev(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    return std::sqrt(var / static_cast<double>(values.size()));
}

} // namespace detail

inline AggregateReport aggregate(const std::vector<RunResult>& results) {
    if (results.empty()) {
        throw DomainError("cannot aggregate an empty list of runs");
    }
    AggregateReport report;
    report.n_runs = results.size();
    std::vector<double> seen, unseen;
    for (const auto& r : results) {
        report.correct_seen += r.correct_seen;
        report.total_seen += r.total_seen;
        report.correct_unseen += r.correct_unseen;
        report.total_unseen += r.total_unseen;
        report.correct_all += r.correct_all;
        report.total_all += r.total_all;
        seen.push_back(r.acc_seen);
        unseen.push_back(r.acc_unseen);
    }
    report.micro_acc_seen = ratio(report.correct_seen, report.total_seen);
    report.micro_acc_unseen = ratio(report.correct_unseen, report.total_unseen);
    report.micro_acc_all = ratio(report.correct_all, report.total_all);
    report.gap = report.micro_acc_seen - report.micro_acc_unseen;
    report.std_seen = detail::population_stddev(std::move(seen));
    report.std_unseen = detail::population_stddev(std::move(unseen));
    return report;
}

// Seen minus unseen micro accuracy; positive values indicate memorization.
inline double memorization_gap(const AggregateReport& report) {
    return report.micro_acc_seen - report.micro_acc_unseen;
}

inline nlohmann::json to_json(const RunResult& r) {
    return nlohmann::json{
        {"correct_seen", r.correct_seen}, {"total_seen", r.total_seen},   {"correct_unseen", r.correct_unseen},
        {"total_unseen", r.total_unseen}, {"correct_all", r.correct_all}, {"total_all", r.total_all},
        {"acc_seen", r.acc_seen},         {"acc_unseen", r.acc_unseen},   {"acc_all", r.acc_all},
    };
}

inline nlohmann::json to_json(const AggregateReport& r) {
    return nlohmann::json{
        {"n_runs", r.n_runs},
        {"correct_seen", r.correct_seen},
        {"total_seen", r.total_seen},
        {"correct_unseen", r.correct_unseen},
        {"total_unseen", r.total_unseen},
        {"correct_all", r.correct_all},
        {"total_all", r.total_all},
        {"micro_acc_seen", r.micro_acc_seen},
        {"micro_acc_unseen", r.micro_acc_unseen},
        {"micro_acc_all", r.micro_acc_all},
        {"gap", r.gap},
        {"std_seen", r.std_seen},
        {"std_unseen", r.std_unseen},
    };
}

// Descriptive columns of a report table row.
struct ReportRowInfo {
    std::string train_sentences;
    std::string representation;
    std::string classifier;
};

inline std::string tsv_header() {
    return "train_sentences\trepresentation\tclassifier\tacc_seen\tacc_unseen\tdiff\tstd_seen\tstd_unseen";
}

// Percentages with one decimal. The diff is rounded from the exact gap, so
// it need not equal the difference of the two rounded accuracies.
inline std::string tsv_row(const ReportRowInfo& info, const AggregateReport& r) {
    return info.train_sentences + '\t' + info.representation + '\t' + info.classifier + '\t' +
           format_percent(r.micro_acc_seen) + '\t' + format_percent(r.micro_acc_unseen) + '\t' +
           format_percent(memorization_gap(r)) + '\t' + format_percent(r.std_seen) + '\t' +
           format_percent(r.std_unseen);
}

} // namespace memprobe
