#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "memprobe/error.hpp"
#include "memprobe/text_format.hpp"

namespace memprobe {

using LabelId = std::uint32_t;
using SentenceId = std::size_t;

struct Token {
    std::string surface;
    LabelId label = 0;

    bool operator==(const Token&) const = default;
};

struct Sentence {
    SentenceId id = 0;
    std::vector<Token> tokens;

    bool operator==(const Sentence&) const = default;
};

// Sentences of labelled tokens plus the label inventory they index into.
// Sentence ids are always 0..size()-1 in order.
class LabeledCorpus {
public:
    LabeledCorpus() = default;

    explicit LabeledCorpus(std::vector<std::string> inventory) {
        for (auto& label : inventory) {
            intern_label(label);
        }
    }

    const std::vector<Sentence>& sentences() const { return sentences_; }
    const Sentence& sentence(SentenceId id) const { return sentences_.at(id); }
    std::size_t size() const { return sentences_.size(); }
    bool empty() const { return sentences_.empty(); }

    const std::vector<std::string>& label_inventory() const { return labels_; }
    std::size_t label_count() const { return labels_.size(); }
    const std::string& label_name(LabelId id) const { return labels_.at(id); }

    std::optional<LabelId> find_label(std::string_view name) const {
        auto it = label_index_.find(std::string(name));
        if (it == label_index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    std::size_t token_count() const {
        std::size_t n = 0;
        for (const auto& s : sentences_) {
            n += s.tokens.size();
        }
        return n;
    }

    // Returns the id of `name`, adding it to the inventory on first sight.
    LabelId intern_label(const std::string& name) {
        auto [it, inserted] = label_index_.try_emplace(name, static_cast<LabelId>(labels_.size()));
        if (inserted) {
            labels_.push_back(name);
        }
        return it->second;
    }

    // Appends a sentence given (surface, label name) pairs.
    SentenceId add_sentence(const std::vector<std::pair<std::string, std::string>>& tokens) {
        std::vector<Token> out;
        out.reserve(tokens.size());
        for (const auto& [surface, label] : tokens) {
            out.push_back(Token{surface, intern_label(label)});
        }
        return add_sentence(std::move(out));
    }

    SentenceId add_sentence(std::vector<Token> tokens) {
        if (tokens.empty()) {
            throw DataError("sentence has no tokens");
        }
        for (const auto& t : tokens) {
            if (t.surface.empty()) {
                throw DataError("token with empty surface form");
            }
            if (t.label >= labels_.size()) {
                throw DataError("token label id " + std::to_string(t.label) + " outside inventory");
            }
        }
        SentenceId id = sentences_.size();
        sentences_.push_back(Sentence{id, std::move(tokens)});
        return id;
    }

    bool operator==(const LabeledCorpus& other) const {
        return labels_ == other.labels_ && sentences_ == other.sentences_;
    }

private:
    std::vector<Sentence> sentences_;
    std::vector<std::string> labels_;
    std::unordered_map<std::string, LabelId> label_index_;
};

// New corpus holding the given sentences (renumbered in the given order),
// with the same label inventory.
inline LabeledCorpus select_sentences(const LabeledCorpus& corpus, std::span<const SentenceId> ids) {
    LabeledCorpus out(corpus.label_inventory());
    for (SentenceId id : ids) {
        out.add_sentence(corpus.sentence(id).tokens);
    }
    return out;
}

// Re-expresses `corpus` over `reference` labels. Labels missing from the
// reference are appended after it, so the result's inventory starts with
// `reference` verbatim.
inline LabeledCorpus align_labels(const LabeledCorpus& corpus, const std::vector<std::string>& reference) {
    LabeledCorpus out(reference);
    for (const auto& s : corpus.sentences()) {
        std::vector<Token> tokens;
        tokens.reserve(s.tokens.size());
        for (const auto& t : s.tokens) {
            tokens.push_back(Token{t.surface, out.intern_label(corpus.label_name(t.label))});
        }
        out.add_sentence(std::move(tokens));
    }
    return out;
}

// -- CoNLL-U ---------------------------------------------------------------

// Parses CoNLL-U text, labelling each token with its UPOS column. Comment
// lines, multiword ranges ("1-2") and empty nodes ("1.1") are skipped.
inline LabeledCorpus parse_conllu(std::istream& in) {
    LabeledCorpus corpus;
    std::vector<Token> current;
    bool in_block = false;
    std::size_t block_start = 0;
    std::size_t line_no = 0;
    std::string raw;

    auto finish_block = [&]() {
        if (!in_block) {
            return;
        }
        if (current.empty()) {
            throw ParseError(block_start, "sentence block has no token lines");
        }
        corpus.add_sentence(std::move(current));
        current.clear();
        in_block = false;
    };

    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = strip_cr(raw);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            finish_block();
            continue;
        }
        if (!in_block) {
            in_block = true;
            block_start = line_no;
        }
        if (line.front() == '#') {
            continue;
        }

        std::vector<std::string_view> cols;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
            if (tab == std::string_view::npos) {
                break;
            }
            start = tab + 1;
        }
        if (cols.size() != 10) {
            throw ParseError(line_no, "expected 10 tab-separated columns, found " + std::to_string(cols.size()));
        }
        std::string_view id = cols[0];
        if (id.find('-') != std::string_view::npos || id.find('.') != std::string_view::npos) {
            continue;
        }
        if (!parse_integer<unsigned long>(id)) {
            throw ParseError(line_no, "invalid token id '" + std::string(id) + "'");
        }
        if (cols[1].empty()) {
            throw ParseError(line_no, "empty FORM column");
        }
        if (cols[3].empty()) {
            throw ParseError(line_no, "empty UPOS column");
        }
        current.push_back(Token{std::string(cols[1]), corpus.intern_label(std::string(cols[3]))});
    }
    finish_block();
    return corpus;
}

// Canonical CoNLL-U: token lines only, unused columns set to "_".
inline void write_conllu(const LabeledCorpus& corpus, std::ostream& out) {
    for (const auto& s : corpus.sentences()) {
        for (std::size_t i = 0; i < s.tokens.size(); ++i) {
            const auto& t = s.tokens[i];
            out << (i + 1) << '\t' << t.surface << "\t_\t" << corpus.label_name(t.label)
                << "\t_\t_\t_\t_\t_\t_\n";
        }
        out << '\n';
    }
}

// -- Representations -------------------------------------------------------

enum class RepresentationMode { contextual, static_type };

inline std::string_view to_string(RepresentationMode mode) {
    return mode == RepresentationMode::contextual ? "contextual" : "static";
}

// Anything the probe trainer and evaluator can read token vectors from.
template <typename S>
concept VectorSource = requires(const S& s, SentenceId sid, std::size_t tok) {
    { s.dimension() } -> std::convertible_to<std::size_t>;
    { s.has(sid, tok) } -> std::convertible_to<bool>;
    { s.is_excluded(sid, tok) } -> std::convertible_to<bool>;
    { s.vector(sid, tok) } -> std::convertible_to<std::span<const double>>;
};

// One real vector per corpus token. In static mode the vectors live in a
// per-type table, so equal surfaces share storage and are bit-identical.
class RepresentationStore {
public:
    RepresentationStore() = default;

    // `rows` holds one vector per corpus token, sentence-major.
    static RepresentationStore contextual(const LabeledCorpus& corpus, std::size_t dimension,
                                          std::vector<double> rows) {
        RepresentationStore store(corpus, dimension, RepresentationMode::contextual);
        std::size_t n = corpus.token_count();
        if (rows.size() != n * dimension) {
            throw LoadError("expected " + std::to_string(n) + " token vectors of dimension " +
                            std::to_string(dimension));
        }
        for (std::size_t i = 0; i < n; ++i) {
            store.row_of_token_[i] = static_cast<std::int64_t>(i);
        }
        store.rows_ = std::move(rows);
        store.check_finite();
        return store;
    }

    // `table` maps surface -> row index into `type_rows`. Tokens whose surface
    // is not in the table are recorded as missing.
    static RepresentationStore static_types(const LabeledCorpus& corpus, std::size_t dimension,
                                            const std::unordered_map<std::string, std::size_t>& table,
                                            std::vector<double> type_rows) {
        RepresentationStore store(corpus, dimension, RepresentationMode::static_type);
        std::set<std::string> missing;
        std::size_t flat = 0;
        for (const auto& s : corpus.sentences()) {
            for (const auto& t : s.tokens) {
                auto it = table.find(t.surface);
                if (it == table.end()) {
                    missing.insert(t.surface);
                    store.excluded_[flat] = true;
                } else {
                    store.row_of_token_[flat] = static_cast<std::int64_t>(it->second);
                }
                ++flat;
            }
        }
        store.rows_ = std::move(type_rows);
        store.missing_surfaces_.assign(missing.begin(), missing.end());
        store.check_finite();
        return store;
    }

    std::size_t dimension() const { return dimension_; }
    RepresentationMode mode() const { return mode_; }
    std::size_t sentence_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }

    std::size_t token_count(SentenceId sid) const { return offsets_.at(sid + 1) - offsets_.at(sid); }

    bool has(SentenceId sid, std::size_t tok) const {
        auto flat = flat_index(sid, tok);
        return flat && row_of_token_[*flat] >= 0;
    }

    // True for tokens deliberately left without a vector (static mode,
    // surface absent from the embedding file).
    bool is_excluded(SentenceId sid, std::size_t tok) const {
        auto flat = flat_index(sid, tok);
        return flat && excluded_[*flat];
    }

    std::span<const double> vector(SentenceId sid, std::size_t tok) const {
        auto flat = flat_index(sid, tok);
        if (!flat || row_of_token_[*flat] < 0) {
            throw LoadError("no vector for sentence " + std::to_string(sid) + " token " + std::to_string(tok));
        }
        return {rows_.data() + static_cast<std::size_t>(row_of_token_[*flat]) * dimension_, dimension_};
    }

    // Surfaces without a static embedding, sorted.
    const std::vector<std::string>& missing_surfaces() const { return missing_surfaces_; }

    std::size_t excluded_token_count() const {
        return static_cast<std::size_t>(std::count(excluded_.begin(), excluded_.end(), true));
    }

    // Store restricted to the given sentences, renumbered in the given order;
    // pairs with select_sentences().
    RepresentationStore select(std::span<const SentenceId> ids) const {
        RepresentationStore out;
        out.dimension_ = dimension_;
        out.mode_ = mode_;
        out.offsets_.push_back(0);
        if (mode_ == RepresentationMode::static_type) {
            out.rows_ = rows_;
        }
        for (SentenceId sid : ids) {
            std::size_t begin = offsets_.at(sid);
            std::size_t end = offsets_.at(sid + 1);
            for (std::size_t f = begin; f < end; ++f) {
                out.excluded_.push_back(excluded_[f]);
                std::int64_t row = row_of_token_[f];
                if (row >= 0 && mode_ == RepresentationMode::contextual) {
                    auto first = rows_.begin() + row * static_cast<std::int64_t>(dimension_);
                    std::int64_t new_row = static_cast<std::int64_t>(out.rows_.size() / dimension_);
                    out.rows_.insert(out.rows_.end(), first, first + static_cast<std::int64_t>(dimension_));
                    row = new_row;
                }
                out.row_of_token_.push_back(row);
            }
            out.offsets_.push_back(out.row_of_token_.size());
        }
        out.missing_surfaces_ = missing_surfaces_;
        return out;
    }

private:
    RepresentationStore(const LabeledCorpus& corpus, std::size_t dimension, RepresentationMode mode)
        : dimension_(dimension), mode_(mode) {
        if (dimension == 0) {
            throw LoadError("representation dimension must be positive");
        }
        offsets_.reserve(corpus.size() + 1);
        offsets_.push_back(0);
        for (const auto& s : corpus.sentences()) {
            offsets_.push_back(offsets_.back() + s.tokens.size());
        }
        row_of_token_.assign(offsets_.back(), -1);
        excluded_.assign(offsets_.back(), false);
    }

    std::optional<std::size_t> flat_index(SentenceId sid, std::size_t tok) const {
        if (sid + 1 >= offsets_.size()) {
            return std::nullopt;
        }
        std::size_t flat = offsets_[sid] + tok;
        if (flat >= offsets_[sid + 1]) {
            return std::nullopt;
        }
        return flat;
    }

    void check_finite() const {
        for (double v : rows_) {
            if (!std::isfinite(v)) {
                throw LoadError("non-finite vector component");
            }
        }
    }

    std::size_t dimension_ = 0;
    RepresentationMode mode_ = RepresentationMode::contextual;
    std::vector<std::size_t> offsets_;
    std::vector<std::int64_t> row_of_token_;
    std::vector<bool> excluded_;
    std::vector<double> rows_;
    std::vector<std::string> missing_surfaces_;
};

namespace detail {

inline std::vector<double> parse_components(std::span<const std::string_view> fields, std::size_t line_no,
                                            const std::string& record) {
    std::vector<double> values;
    values.reserve(fields.size());
    for (auto f : fields) {
        auto v = parse_double(f);
        if (!v) {
            throw LoadError("line " + std::to_string(line_no) + " (" + record + "): invalid number '" +
                            std::string(f) + "'");
        }
        if (!std::isfinite(*v)) {
            throw LoadError("line " + std::to_string(line_no) + " (" + record + "): non-finite value");
        }
        values.push_back(*v);
    }
    return values;
}

} // namespace detail

// Reads "SENT_ID TOKEN_INDEX v1 ... vd" records; exactly one per corpus token.
inline RepresentationStore load_token_vectors(std::istream& in, const LabeledCorpus& corpus) {
    std::vector<std::size_t> offsets{0};
    for (const auto& s : corpus.sentences()) {
        offsets.push_back(offsets.back() + s.tokens.size());
    }
    const std::size_t n_tokens = offsets.back();

    std::size_t dim = 0;
    std::vector<double> rows;
    std::vector<bool> seen(n_tokens, false);
    std::size_t line_no = 0;
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        auto fields = split_whitespace(strip_cr(raw));
        if (fields.empty()) {
            continue;
        }
        if (fields.size() < 3) {
            throw LoadError("line " + std::to_string(line_no) + ": expected SENT_ID TOKEN_INDEX and at least one value");
        }
        auto sid = parse_integer<std::size_t>(fields[0]);
        auto tok = parse_integer<std::size_t>(fields[1]);
        if (!sid || !tok) {
            throw LoadError("line " + std::to_string(line_no) + ": invalid sentence/token index");
        }
        std::string record = "sentence " + std::to_string(*sid) + " token " + std::to_string(*tok);
        if (*sid >= corpus.size() || *tok >= corpus.sentence(*sid).tokens.size()) {
            throw LoadError("line " + std::to_string(line_no) + " (" + record + "): no such corpus token");
        }
        std::size_t d = fields.size() - 2;
        if (dim == 0) {
            dim = d;
            rows.assign(n_tokens * dim, 0.0);
        } else if (d != dim) {
            throw LoadError("line " + std::to_string(line_no) + " (" + record + "): dimension " +
                            std::to_string(d) + " != " + std::to_string(dim));
        }
        std::size_t flat = offsets[*sid] + *tok;
        if (seen[flat]) {
            throw LoadError("line " + std::to_string(line_no) + " (" + record + "): duplicate record");
        }
        seen[flat] = true;
        auto values = detail::parse_components(std::span(fields).subspan(2), line_no, record);
        std::copy(values.begin(), values.end(), rows.begin() + static_cast<std::ptrdiff_t>(flat * dim));
    }
    for (std::size_t sid = 0; sid < corpus.size(); ++sid) {
        for (std::size_t tok = 0; tok < corpus.sentence(sid).tokens.size(); ++tok) {
            if (!seen[offsets[sid] + tok]) {
                throw LoadError("missing vector for sentence " + std::to_string(sid) + " token " + std::to_string(tok));
            }
        }
    }
    if (n_tokens == 0) {
        // Nothing to infer a dimension from; an empty corpus gets an empty store.
        return RepresentationStore::contextual(corpus, std::max<std::size_t>(dim, 1), {});
    }
    return RepresentationStore::contextual(corpus, dim, std::move(rows));
}

// Reads "SURFACE v1 ... vd" lines and broadcasts each type vector to all of
// its tokens in `corpus`.
inline RepresentationStore load_type_embeddings(std::istream& in, const LabeledCorpus& corpus) {
    std::unordered_map<std::string, std::size_t> table;
    std::vector<double> rows;
    std::size_t dim = 0;
    std::size_t line_no = 0;
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        auto fields = split_whitespace(strip_cr(raw));
        if (fields.empty()) {
            continue;
        }
        if (fields.size() < 2) {
            throw LoadError("line " + std::to_string(line_no) + ": expected SURFACE and at least one value");
        }
        std::string surface(fields[0]);
        std::size_t d = fields.size() - 1;
        if (dim == 0) {
            dim = d;
        } else if (d != dim) {
            throw LoadError("line " + std::to_string(line_no) + " (" + surface + "): dimension " +
                            std::to_string(d) + " != " + std::to_string(dim));
        }
        if (!table.try_emplace(surface, table.size()).second) {
            throw LoadError("line " + std::to_string(line_no) + " (" + surface + "): duplicate surface");
        }
        auto values = detail::parse_components(std::span(fields).subspan(1), line_no, surface);
        rows.insert(rows.end(), values.begin(), values.end());
    }
    if (dim == 0) {
        throw LoadError("embedding file contains no vectors");
    }
    return RepresentationStore::static_types(corpus, dim, table, std::move(rows));
}

inline void write_vector_values(std::ostream& out, std::span<const double> v) {
    for (double x : v) {
        out << ' ' << format_double(x);
    }
}

inline void write_token_vectors(const LabeledCorpus& corpus, const RepresentationStore& store, std::ostream& out) {
    for (const auto& s : corpus.sentences()) {
        for (std::size_t i = 0; i < s.tokens.size(); ++i) {
            out << s.id << ' ' << i;
            write_vector_values(out, store.vector(s.id, i));
            out << '\n';
        }
    }
}

// One line per distinct surface, in first-occurrence order.
inline void write_type_embeddings(const LabeledCorpus& corpus, const RepresentationStore& store, std::ostream& out) {
    std::set<std::string> written;
    for (const auto& s : corpus.sentences()) {
        for (std::size_t i = 0; i < s.tokens.size(); ++i) {
            if (!store.has(s.id, i) || !written.insert(s.tokens[i].surface).second) {
                continue;
            }
            out << s.tokens[i].surface;
            write_vector_values(out, store.vector(s.id, i));
            out << '\n';
        }
    }
}

} // namespace memprobe
