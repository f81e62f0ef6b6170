#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "memprobe/corpus.hpp"
#include "memprobe/error.hpp"

namespace memprobe {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ProbeKind { linear, mlp };

inline std::string_view to_string(ProbeKind kind) { return kind == ProbeKind::linear ? "linear" : "mlp"; }

inline ProbeKind parse_probe_kind(std::string_view name) {
    if (name == "linear") {
        return ProbeKind::linear;
    }
    if (name == "mlp") {
        return ProbeKind::mlp;
    }
    throw UsageError("unknown classifier kind '" + std::string(name) + "' (expected linear or mlp)");
}

// Softmax regression: logits = W^T x + b, W is d x L.
struct LinearProbe {
    Matrix weights;
    Vector bias;

    std::size_t input_dim() const { return static_cast<std::size_t>(weights.rows()); }
    std::size_t label_count() const { return static_cast<std::size_t>(weights.cols()); }

    bool operator==(const LinearProbe& o) const {
        return weights.rows() == o.weights.rows() && weights.cols() == o.weights.cols() && weights == o.weights &&
               bias.size() == o.bias.size() && bias == o.bias;
    }
};

// One rectified hidden layer: logits = W2^T relu(W1^T x + b1) + b2.
struct MlpProbe {
    Matrix hidden_weights; // d x h
    Vector hidden_bias;    // h
    Matrix output_weights; // h x L
    Vector output_bias;    // L

    std::size_t input_dim() const { return static_cast<std::size_t>(hidden_weights.rows()); }
    std::size_t hidden_dim() const { return static_cast<std::size_t>(hidden_weights.cols()); }
    std::size_t label_count() const { return static_cast<std::size_t>(output_weights.cols()); }

    bool operator==(const MlpProbe& o) const {
        return hidden_weights.rows() == o.hidden_weights.rows() && hidden_weights.cols() == o.hidden_weights.cols() &&
               output_weights.rows() == o.output_weights.rows() && output_weights.cols() == o.output_weights.cols() &&
               hidden_weights == o.hidden_weights && hidden_bias == o.hidden_bias &&
               output_weights == o.output_weights && output_bias == o.output_bias;
    }
};

using ProbeModel = std::variant<LinearProbe, MlpProbe>;

template <typename P>
concept Probe = std::same_as<P, LinearProbe> || std::same_as<P, MlpProbe>;

inline ProbeKind kind_of(const ProbeModel& model) {
    return std::holds_alternative<LinearProbe>(model) ? ProbeKind::linear : ProbeKind::mlp;
}
inline std::size_t input_dim(const ProbeModel& model) {
    return std::visit([](const auto& p) { return p.input_dim(); }, model);
}
inline std::size_t label_count(const ProbeModel& model) {
    return std::visit([](const auto& p) { return p.label_count(); }, model);
}

inline LinearProbe zero_linear_probe(std::size_t dim, std::size_t labels) {
    return LinearProbe{Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(labels)),
                       Vector::Zero(static_cast<Eigen::Index>(labels))};
}

inline MlpProbe zero_mlp_probe(std::size_t dim, std::size_t hidden, std::size_t labels) {
    auto d = static_cast<Eigen::Index>(dim);
    auto h = static_cast<Eigen::Index>(hidden);
    auto l = static_cast<Eigen::Index>(labels);
    return MlpProbe{Matrix::Zero(d, h), Vector::Zero(h), Matrix::Zero(h, l), Vector::Zero(l)};
}

// -- Parameter blocks ------------------------------------------------------

// Calls f(data, size) for each parameter block, in a fixed order.
template <typename F>
void for_each_block(LinearProbe& p, F&& f) {
    f(p.weights.data(), static_cast<std::size_t>(p.weights.size()));
    f(p.bias.data(), static_cast<std::size_t>(p.bias.size()));
}
template <typename F>
void for_each_block(MlpProbe& p, F&& f) {
    f(p.hidden_weights.data(), static_cast<std::size_t>(p.hidden_weights.size()));
    f(p.hidden_bias.data(), static_cast<std::size_t>(p.hidden_bias.size()));
    f(p.output_weights.data(), static_cast<std::size_t>(p.output_weights.size()));
    f(p.output_bias.data(), static_cast<std::size_t>(p.output_bias.size()));
}

template <Probe P>
std::size_t parameter_count(const P& p) {
    std::size_t n = 0;
    for_each_block(const_cast<P&>(p), [&](double*, std::size_t size) { n += size; });
    return n;
}

template <Probe P>
Vector flatten(const P& p) {
    Vector out(static_cast<Eigen::Index>(parameter_count(p)));
    Eigen::Index at = 0;
    for_each_block(const_cast<P&>(p), [&](double* data, std::size_t size) {
        out.segment(at, static_cast<Eigen::Index>(size)) = Eigen::Map<Vector>(data, static_cast<Eigen::Index>(size));
        at += static_cast<Eigen::Index>(size);
    });
    return out;
}

template <Probe P>
void assign(P& p, const Vector& flat) {
    Eigen::Index at = 0;
    for_each_block(p, [&](double* data, std::size_t size) {
        Eigen::Map<Vector>(data, static_cast<Eigen::Index>(size)) = flat.segment(at, static_cast<Eigen::Index>(size));
        at += static_cast<Eigen::Index>(size);
    });
}

template <Probe P>
bool all_finite(const P& p) {
    return flatten(p).allFinite();
}

// -- Forward pass ----------------------------------------------------------

// Labelled examples, one per row of `inputs`.
struct Batch {
    Matrix inputs;
    std::vector<LabelId> labels;

    std::size_t size() const { return labels.size(); }
};

inline Batch make_batch(const std::vector<std::pair<std::vector<double>, LabelId>>& items) {
    Batch batch;
    if (items.empty()) {
        return batch;
    }
    auto d = static_cast<Eigen::Index>(items.front().first.size());
    batch.inputs.resize(static_cast<Eigen::Index>(items.size()), d);
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (static_cast<Eigen::Index>(items[i].first.size()) != d) {
            throw DomainError("batch vectors differ in dimension");
        }
        batch.inputs.row(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::RowVectorXd>(items[i].first.data(), d);
        batch.labels.push_back(items[i].second);
    }
    return batch;
}

namespace detail {

// Row-wise softmax of logits, numerically stabilised.
inline Matrix softmax_rows(Matrix logits) {
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        double m = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - m).exp().matrix();
        logits.row(r) /= logits.row(r).sum();
    }
    return logits;
}

inline Matrix logits(const LinearProbe& p, const Matrix& x) {
    return (x * p.weights).rowwise() + p.bias.transpose();
}

inline Matrix hidden_preactivation(const MlpProbe& p, const Matrix& x) {
    return (x * p.hidden_weights).rowwise() + p.hidden_bias.transpose();
}

inline Matrix logits(const MlpProbe& p, const Matrix& x) {
    Matrix h = hidden_preactivation(p, x).cwiseMax(0.0);
    return (h * p.output_weights).rowwise() + p.output_bias.transpose();
}

inline LabelId argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < row.size(); ++i) {
        if (row(i) > row(best)) {
            best = i;
        }
    }
    return static_cast<LabelId>(best);
}

template <Probe P>
void check_batch(const P& p, const Batch& batch) {
    if (batch.size() == 0) {
        throw DomainError("empty batch");
    }
    if (static_cast<std::size_t>(batch.inputs.cols()) != p.input_dim() ||
        static_cast<std::size_t>(batch.inputs.rows()) != batch.size()) {
        throw DomainError("batch dimension does not match the probe");
    }
    for (LabelId y : batch.labels) {
        if (y >= p.label_count()) {
            throw DomainError("gold label id " + std::to_string(y) + " outside the probe's label range");
        }
    }
}

} // namespace detail

template <Probe P>
Matrix probabilities(const P& p, const Matrix& inputs) {
    return detail::softmax_rows(detail::logits(p, inputs));
}

inline Matrix probabilities(const ProbeModel& model, const Matrix& inputs) {
    if (static_cast<std::size_t>(inputs.cols()) != input_dim(model)) {
        throw DomainError("input dimension " + std::to_string(inputs.cols()) + " != probe dimension " +
                          std::to_string(input_dim(model)));
    }
    return std::visit([&](const auto& p) { return probabilities(p, inputs); }, model);
}

// Argmax label per row, ties toward the lowest label id.
inline std::vector<LabelId> predict_labels(const ProbeModel& model, const Matrix& inputs) {
    Matrix probs = probabilities(model, inputs);
    std::vector<LabelId> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        out[static_cast<std::size_t>(r)] = detail::argmax(probs.row(r));
    }
    return out;
}

struct Prediction {
    LabelId label = 0;
    std::vector<double> probabilities;
};

inline Prediction predict(const ProbeModel& model, std::span<const double> vector) {
    if (vector.size() != input_dim(model)) {
        throw DomainError("vector dimension " + std::to_string(vector.size()) + " != probe dimension " +
                          std::to_string(input_dim(model)));
    }
    Matrix x = Eigen::Map<const Eigen::RowVectorXd>(vector.data(), static_cast<Eigen::Index>(vector.size()));
    Matrix probs = probabilities(model, x);
    Prediction out;
    out.label = detail::argmax(probs.row(0));
    out.probabilities.assign(probs.data(), probs.data() + probs.size());
    return out;
}

// -- Objective -------------------------------------------------------------

template <Probe P>
struct LossGradient {
    double loss = 0.0;
    P gradient;
};

// Mean cross-entropy of the gold labels and its exact gradient.
inline LossGradient<LinearProbe> loss_and_gradient(const LinearProbe& p, const Batch& batch) {
    detail::check_batch(p, batch);
    const auto n = static_cast<double>(batch.size());
    Matrix probs = probabilities(p, batch.inputs);
    double loss = 0.0;
    Matrix delta = probs;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto r = static_cast<Eigen::Index>(i);
        auto y = static_cast<Eigen::Index>(batch.labels[i]);
        loss -= std::log(probs(r, y));
        delta(r, y) -= 1.0;
    }
    delta /= n;
    return {loss / n, LinearProbe{batch.inputs.transpose() * delta, delta.colwise().sum().transpose()}};
}

inline LossGradient<MlpProbe> loss_and_gradient(const MlpProbe& p, const Batch& batch) {
    detail::check_batch(p, batch);
    const auto n = static_cast<double>(batch.size());
    Matrix pre = detail::hidden_preactivation(p, batch.inputs);
    Matrix hidden = pre.cwiseMax(0.0);
    Matrix probs = detail::softmax_rows((hidden * p.output_weights).rowwise() + p.output_bias.transpose());
    double loss = 0.0;
    Matrix delta = probs;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        auto r = static_cast<Eigen::Index>(i);
        auto y = static_cast<Eigen::Index>(batch.labels[i]);
        loss -= std::log(probs(r, y));
        delta(r, y) -= 1.0;
    }
    delta /= n;
    Matrix hidden_delta = (delta * p.output_weights.transpose()).cwiseProduct(
        (pre.array() > 0.0).cast<double>().matrix());
    MlpProbe grad{batch.inputs.transpose() * hidden_delta, hidden_delta.colwise().sum().transpose(),
                  hidden.transpose() * delta, delta.colwise().sum().transpose()};
    return {loss / n, std::move(grad)};
}

struct ModelLossGradient {
    double loss = 0.0;
    ProbeModel gradient;
};

inline ModelLossGradient loss_and_gradient(const ProbeModel& model, const Batch& batch) {
    return std::visit(
        [&](const auto& p) {
            auto r = loss_and_gradient(p, batch);
            return ModelLossGradient{r.loss, ProbeModel{std::move(r.gradient)}};
        },
        model);
}

template <Probe P>
double mean_loss(const P& p, const Batch& batch) {
    return loss_and_gradient(p, batch).loss;
}

inline double mean_loss(const ProbeModel& model, const Batch& batch) {
    return loss_and_gradient(model, batch).loss;
}

// -- Training --------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;
    std::size_t hidden_dim = 512;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw UsageError("learning_rate must be positive");
        }
        if (batch_size == 0 || max_epochs == 0 || hidden_dim == 0) {
            throw UsageError("batch_size, max_epochs and hidden_dim must be positive");
        }
    }
};

struct TrainLog {
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0; // 0 = the initial parameters
    double best_tuning_accuracy = 0.0;
    std::vector<double> epoch_losses;
};

struct TrainOutcome {
    ProbeModel model;
    TrainLog log;
};

namespace detail {

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename Engine>
Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Engine& engine) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(fan_in, fan_out);
    for (Eigen::Index c = 0; c < fan_out; ++c) {
        for (Eigen::Index r = 0; r < fan_in; ++r) {
            m(r, c) = dist(engine);
        }
    }
    return m;
}

template <typename Engine>
ProbeModel initial_model(ProbeKind kind, std::size_t dim, std::size_t labels, std::size_t hidden, Engine& engine) {
    auto d = static_cast<Eigen::Index>(dim);
    auto l = static_cast<Eigen::Index>(labels);
    if (kind == ProbeKind::linear) {
        return LinearProbe{glorot_uniform(d, l, engine), Vector::Zero(l)};
    }
    auto h = static_cast<Eigen::Index>(hidden);
    Matrix w1 = glorot_uniform(d, h, engine);
    Matrix w2 = glorot_uniform(h, l, engine);
    return MlpProbe{std::move(w1), Vector::Zero(h), std::move(w2), Vector::Zero(l)};
}

// Gathers the vectors of every token of the listed sentences. Tokens the
// store deliberately excludes are skipped; any other missing vector is an
// error.
template <VectorSource Store>
Batch gather(const Store& store, const LabeledCorpus& corpus, std::span<const SentenceId> ids, const char* what) {
    std::vector<std::pair<SentenceId, std::size_t>> keys;
    for (SentenceId sid : ids) {
        const auto& s = corpus.sentence(sid);
        for (std::size_t t = 0; t < s.tokens.size(); ++t) {
            if (store.is_excluded(sid, t)) {
                continue;
            }
            if (!store.has(sid, t)) {
                throw DataError(std::string(what) + " sentence " + std::to_string(sid) + " token " +
                                std::to_string(t) + " has no vector");
            }
            keys.emplace_back(sid, t);
        }
    }
    Batch batch;
    const auto d = static_cast<Eigen::Index>(store.dimension());
    batch.inputs.resize(static_cast<Eigen::Index>(keys.size()), d);
    batch.labels.reserve(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto [sid, t] = keys[i];
        std::span<const double> v = store.vector(sid, t);
        if (static_cast<Eigen::Index>(v.size()) != d) {
            throw DataError(std::string(what) + " vector has wrong dimension");
        }
        batch.inputs.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), d);
        batch.labels.push_back(corpus.sentence(sid).tokens[t].label);
    }
    return batch;
}

inline double accuracy(const ProbeModel& model, const Batch& batch) {
    auto predicted = predict_labels(model, batch.inputs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        correct += predicted[i] == batch.labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

// Adam over a flat parameter vector.
class Adam {
public:
    Adam(Eigen::Index size, double learning_rate)
        : lr_(learning_rate), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

    void step(Vector& params, const Vector& grad) {
        ++t_;
        m_ = beta1 * m_ + (1.0 - beta1) * grad;
        v_ = beta2 * v_ + (1.0 - beta2) * grad.cwiseProduct(grad);
        double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon);
    }

    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double epsilon = 1e-8;

private:
    double lr_;
    std::uint64_t t_ = 0;
    Vector m_;
    Vector v_;
};

template <Probe P>
void train_loop(P& probe, const Batch& train, const Batch& tuning, const TrainConfig& config, std::mt19937_64& engine,
                TrainLog& log, ProbeModel& best) {
    Vector params = flatten(probe);
    Adam adam(params.size(), config.learning_rate);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    log.best_tuning_accuracy = accuracy(ProbeModel{probe}, tuning);
    log.best_epoch = 0;
    best = probe;
    std::size_t stale = 0;

    Batch mini;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), engine);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            mini.inputs.resize(static_cast<Eigen::Index>(end - start), train.inputs.cols());
            mini.labels.resize(end - start);
            for (std::size_t i = start; i < end; ++i) {
                mini.inputs.row(static_cast<Eigen::Index>(i - start)) =
                    train.inputs.row(static_cast<Eigen::Index>(order[i]));
                mini.labels[i - start] = train.labels[order[i]];
            }
            auto [loss, grad] = loss_and_gradient(probe, mini);
            if (!std::isfinite(loss)) {
                throw NumericalError("training diverged (non-finite loss) in epoch " + std::to_string(epoch));
            }
            loss_sum += loss * static_cast<double>(end - start);
            adam.step(params, flatten(grad));
            assign(probe, params);
        }
        if (!params.allFinite()) {
            throw NumericalError("training diverged (non-finite parameters) in epoch " + std::to_string(epoch));
        }
        log.epoch_losses.push_back(loss_sum / static_cast<double>(order.size()));
        log.epochs_run = epoch;

        double acc = accuracy(ProbeModel{probe}, tuning);
        if (acc > log.best_tuning_accuracy) {
            log.best_tuning_accuracy = acc;
            log.best_epoch = epoch;
            best = probe;
            stale = 0;
        } else if (++stale > config.patience) {
            break;
        }
    }
}

} // namespace detail

// Trains a probe on the tokens of the seen sentences only and returns the
// snapshot with the best tuning accuracy (earliest epoch on ties). Fully
// determined by config.seed.
template <VectorSource TrainStore, VectorSource TuneStore>
TrainOutcome train_probe_logged(const TrainStore& store, const LabeledCorpus& train,
                                std::span<const SentenceId> seen_sentence_ids, const LabeledCorpus& tuning,
                                const TuneStore& tuning_store, ProbeKind kind, const TrainConfig& config) {
    config.validate();
    if (seen_sentence_ids.empty()) {
        throw DataError("no seen sentences to train on");
    }
    if (train.label_inventory() != tuning.label_inventory()) {
        throw DataError("training and tuning label inventories differ");
    }
    if (store.dimension() != tuning_store.dimension()) {
        throw DataError("training and tuning representations differ in dimension");
    }
    for (SentenceId id : seen_sentence_ids) {
        if (id >= train.size()) {
            throw DataError("seen sentence id " + std::to_string(id) + " outside the training corpus");
        }
    }

    Batch train_batch = detail::gather(store, train, seen_sentence_ids, "training");
    std::vector<SentenceId> tuning_ids(tuning.size());
    std::iota(tuning_ids.begin(), tuning_ids.end(), SentenceId{0});
    Batch tuning_batch = detail::gather(tuning_store, tuning, tuning_ids, "tuning");
    if (train_batch.size() == 0) {
        throw DataError("seen sentences contain no tokens with vectors");
    }
    if (tuning_batch.size() == 0) {
        throw DataError("tuning corpus contains no tokens with vectors");
    }

    std::mt19937_64 engine(config.seed);
    ProbeModel model = detail::initial_model(kind, store.dimension(), train.label_count(), config.hidden_dim, engine);
    TrainOutcome outcome{model, {}};
    std::visit([&](auto& probe) {
        detail::train_loop(probe, train_batch, tuning_batch, config, engine, outcome.log, outcome.model);
    }, model);
    return outcome;
}

template <VectorSource TrainStore, VectorSource TuneStore>
ProbeModel train_probe(const TrainStore& store, const LabeledCorpus& train, std::span<const SentenceId> seen_sentence_ids,
                       const LabeledCorpus& tuning, const TuneStore& tuning_store, ProbeKind kind,
                       const TrainConfig& config) {
    return train_probe_logged(store, train, seen_sentence_ids, tuning, tuning_store, kind, config).model;
}

// -- Serialization ---------------------------------------------------------

namespace detail {

inline nlohmann::json row_major(const Matrix& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            out.push_back(m(r, c));
        }
    }
    return out;
}

inline Matrix matrix_from(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
    auto values = j.at(name).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
        throw DataError(std::string("model field '") + name + "' has wrong size");
    }
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
        }
    }
    return m;
}

inline Vector vector_from(const nlohmann::json& j, Eigen::Index size, const char* name) {
    Matrix m = matrix_from(j, size, 1, name);
    return m.col(0);
}

} // namespace detail

// Model JSON: kind, dimensions, optional label names, row-major parameters.
inline nlohmann::json to_json(const ProbeModel& model, const std::vector<std::string>& labels = {}) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(kind_of(model)));
    j["input_dim"] = input_dim(model);
    j["label_count"] = label_count(model);
    if (!labels.empty()) {
        j["labels"] = labels;
    }
    if (const auto* p = std::get_if<LinearProbe>(&model)) {
        j["weights"] = detail::row_major(p->weights);
        j["bias"] = detail::row_major(p->bias);
    } else {
        const auto& m = std::get<MlpProbe>(model);
        j["hidden_dim"] = m.hidden_dim();
        j["hidden_weights"] = detail::row_major(m.hidden_weights);
        j["hidden_bias"] = detail::row_major(m.hidden_bias);
        j["output_weights"] = detail::row_major(m.output_weights);
        j["output_bias"] = detail::row_major(m.output_bias);
    }
    return j;
}

inline ProbeModel probe_from_json(const nlohmann::json& j) {
    try {
        auto kind = parse_probe_kind(j.at("kind").get<std::string>());
        auto d = j.at("input_dim").get<Eigen::Index>();
        auto l = j.at("label_count").get<Eigen::Index>();
        ProbeModel model;
        if (kind == ProbeKind::linear) {
            model = LinearProbe{detail::matrix_from(j, d, l, "weights"), detail::vector_from(j, l, "bias")};
        } else {
            auto h = j.at("hidden_dim").get<Eigen::Index>();
            model = MlpProbe{detail::matrix_from(j, d, h, "hidden_weights"), detail::vector_from(j, h, "hidden_bias"),
                             detail::matrix_from(j, h, l, "output_weights"), detail::vector_from(j, l, "output_bias")};
        }
        bool finite = std::visit([](const auto& p) { return all_finite(p); }, model);
        if (!finite) {
            throw DataError("model contains non-finite parameters");
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model JSON: ") + e.what());
    }
}

} // namespace memprobe
