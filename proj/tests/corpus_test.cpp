#include "memprobe/corpus.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "gtest/gtest.h"

namespace memprobe {
namespace {

LabeledCorpus parse(const std::string& text) {
    std::istringstream in(text);
    return parse_conllu(in);
}

std::string token_line(int id, const std::string& form, const std::string& upos) {
    return std::to_string(id) + "\t" + form + "\t_\t" + upos + "\t_\t_\t_\t_\t_\t_\n";
}

TEST(ParseConllu, EmptyInput) {
    LabeledCorpus c = parse("");
    EXPECT_EQ(0u, c.size());
    EXPECT_TRUE(c.label_inventory().empty());
}

TEST(ParseConllu, MinimalSentence) {
    LabeledCorpus c = parse(token_line(1, "dog", "NOUN") + token_line(2, "runs", "VERB") + "\n");
    ASSERT_EQ(1u, c.size());
    ASSERT_EQ(2u, c.sentence(0).tokens.size());
    EXPECT_EQ("dog", c.sentence(0).tokens[0].surface);
    EXPECT_EQ((std::vector<std::string>{"NOUN", "VERB"}), c.label_inventory());
    EXPECT_EQ(0u, c.sentence(0).tokens[0].label);
    EXPECT_EQ(1u, c.sentence(0).tokens[1].label);
}

TEST(ParseConllu, SkipsCommentsAndMultiwordRanges) {
    std::ifstream in(MEMPROBE_TEST_DATA_DIR "/five_tokens.conllu");
    ASSERT_TRUE(in);
    LabeledCorpus c = parse_conllu(in);
    ASSERT_EQ(1u, c.size());
    const auto& toks = c.sentence(0).tokens;
    ASSERT_EQ(5u, toks.size());
    EXPECT_EQ("Ja", toks[0].surface);
    EXPECT_EQ("tady", toks[2].surface);
    EXPECT_EQ(",", toks[3].surface);
    EXPECT_EQ((std::vector<std::string>{"PRON", "AUX", "ADV", "PUNCT", "INTJ"}), c.label_inventory());
}

TEST(ParseConllu, SkipsEmptyNodes) {
    LabeledCorpus c = parse(token_line(1, "a", "X") + "1.1\tb\t_\tY\t_\t_\t_\t_\t_\t_\n" + token_line(2, "c", "Z"));
    ASSERT_EQ(1u, c.size());
    EXPECT_EQ(2u, c.sentence(0).tokens.size());
    EXPECT_EQ((std::vector<std::string>{"X", "Z"}), c.label_inventory());
}

TEST(ParseConllu, AcceptsCrlfAndMissingFinalBlankLine) {
    LabeledCorpus c = parse("1\ta\t_\tX\t_\t_\t_\t_\t_\t_\r\n\r\n1\tb\t_\tY\t_\t_\t_\t_\t_\t_");
    ASSERT_EQ(2u, c.size());
    EXPECT_EQ("b", c.sentence(1).tokens[0].surface);
    EXPECT_EQ(1u, c.sentence(1).id);
}

TEST(ParseConllu, WrongColumnCountReportsLine) {
    try {
        parse(token_line(1, "a", "X") + "2\tb\t_\tY\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(2u, e.line());
    }
}

TEST(ParseConllu, BlockWithoutTokensIsAnError) {
    try {
        parse(token_line(1, "a", "X") + "\n# only a comment\n3-4\tab\t_\t_\t_\t_\t_\t_\t_\t_\n\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(3u, e.line());
    }
}

TEST(ParseConllu, BadTokenIdIsAnError) {
    EXPECT_THROW(parse("x\ta\t_\tX\t_\t_\t_\t_\t_\t_\n"), ParseError);
}

// Random corpora survive write_conllu -> parse_conllu unchanged.
TEST(ParseConllu, CanonicalRoundTripProperty) {
    std::mt19937 rng(7);
    const std::vector<std::string> forms = {"a", "bb", "Cc", "d-d", "e.e", ",", "\xc5\xbe" "ena", "_"};
    const std::vector<std::string> tags = {"NOUN", "VERB", "PUNCT", "ADJ"};
    for (int trial = 0; trial < 50; ++trial) {
        LabeledCorpus c;
        int n = std::uniform_int_distribution<int>(0, 6)(rng);
        for (int s = 0; s < n; ++s) {
            std::vector<std::pair<std::string, std::string>> toks;
            int len = std::uniform_int_distribution<int>(1, 7)(rng);
            for (int t = 0; t < len; ++t) {
                toks.emplace_back(forms[rng() % forms.size()], tags[rng() % tags.size()]);
            }
            c.add_sentence(toks);
        }
        std::ostringstream out;
        write_conllu(c, out);
        EXPECT_EQ(c, parse(out.str())) << "trial " << trial;
    }
}

LabeledCorpus three_token_corpus() {
    LabeledCorpus c;
    c.add_sentence({{"the", "DET"}, {"cat", "NOUN"}});
    c.add_sentence({{"cat", "NOUN"}});
    return c;
}

RepresentationStore load_vectors(const std::string& text, const LabeledCorpus& c) {
    std::istringstream in(text);
    return load_token_vectors(in, c);
}

RepresentationStore load_types(const std::string& text, const LabeledCorpus& c) {
    std::istringstream in(text);
    return load_type_embeddings(in, c);
}

TEST(LoadTokenVectors, MinimalRecord) {
    LabeledCorpus c;
    c.add_sentence({{"x", "X"}});
    RepresentationStore s = load_vectors("0 0 0.5 -1.0\n", c);
    EXPECT_EQ(2u, s.dimension());
    EXPECT_EQ(RepresentationMode::contextual, s.mode());
    auto v = s.vector(0, 0);
    ASSERT_EQ(2u, v.size());
    EXPECT_EQ(0.5, v[0]);
    EXPECT_EQ(-1.0, v[1]);
}

TEST(LoadTokenVectors, RecordCountMustMatchTokens) {
    LabeledCorpus c = three_token_corpus();
    EXPECT_THROW(load_vectors("0 0 1\n0 1 2\n", c), LoadError);
    EXPECT_THROW(load_vectors("0 0 1\n0 1 2\n1 0 3\n1 1 4\n", c), LoadError);
}

TEST(LoadTokenVectors, RejectsDuplicatesDimensionAndNonFinite) {
    LabeledCorpus c = three_token_corpus();
    EXPECT_THROW(load_vectors("0 0 1\n0 0 1\n1 0 3\n", c), LoadError);
    EXPECT_THROW(load_vectors("0 0 1\n0 1 2 2\n1 0 3\n", c), LoadError);
    EXPECT_THROW(load_vectors("0 0 1\n0 1 nan\n1 0 3\n", c), LoadError);
    EXPECT_THROW(load_vectors("0 0 1\n0 1 inf\n1 0 3\n", c), LoadError);
    EXPECT_THROW(load_vectors("0 0 1\n0 1 abc\n1 0 3\n", c), LoadError);
    try {
        load_vectors("0 0 1\n0 1 2\n1 0 3 4\n", c);
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_NE(std::string::npos, std::string(e.what()).find("sentence 1 token 0"));
    }
}

// d=4 fixture whose values need full double precision; lookups must equal
// strtod of the file text, and re-serialising reproduces the file.
TEST(LoadTokenVectors, FixtureRoundTripIsExact) {
    LabeledCorpus c = three_token_corpus();
    const std::string text =
        "0 0 0.1 -2.5e-10 3.141592653589793 1e+300\n"
        "0 1 -0 0.30000000000000004 123456.789 -7\n"
        "1 0 2.2250738585072014e-308 0.5 -0.25 1.7976931348623157e+308\n";
    RepresentationStore s = load_vectors(text, c);
    ASSERT_EQ(4u, s.dimension());
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::istringstream fields(line);
        std::size_t sid = 0, tok = 0;
        fields >> sid >> tok;
        auto v = s.vector(sid, tok);
        for (std::size_t k = 0; k < 4; ++k) {
            std::string f;
            fields >> f;
            EXPECT_EQ(std::strtod(f.c_str(), nullptr), v[k]) << line;
        }
    }
    std::ostringstream out;
    write_token_vectors(c, s, out);
    EXPECT_EQ(text, out.str());
    RepresentationStore again = load_vectors(out.str(), c);
    for (std::size_t sid = 0; sid < c.size(); ++sid) {
        for (std::size_t t = 0; t < c.sentence(sid).tokens.size(); ++t) {
            auto a = s.vector(sid, t);
            auto b = again.vector(sid, t);
            EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
        }
    }
}

TEST(LoadTypeEmbeddings, BroadcastsToEveryToken) {
    LabeledCorpus c = three_token_corpus();
    RepresentationStore s = load_types("cat 1 0\nthe 0 1\n", c);
    EXPECT_EQ(RepresentationMode::static_type, s.mode());
    EXPECT_EQ(1.0, s.vector(0, 1)[0]);
    EXPECT_EQ(0.0, s.vector(0, 1)[1]);
    EXPECT_EQ(s.vector(0, 1).data(), s.vector(1, 0).data());
    EXPECT_TRUE(s.missing_surfaces().empty());
}

TEST(LoadTypeEmbeddings, DuplicateSurfaceIsAnError) {
    LabeledCorpus c = three_token_corpus();
    EXPECT_THROW(load_types("cat 1 0\ncat 1 0\n", c), LoadError);
    EXPECT_THROW(load_types("cat 1 0\nthe 1\n", c), LoadError);
    EXPECT_THROW(load_types("cat 1 nan\n", c), LoadError);
    EXPECT_THROW(load_types("", c), LoadError);
}

TEST(LoadTypeEmbeddings, ReportsMissingSurfaces) {
    LabeledCorpus c = three_token_corpus();
    c.add_sentence({{"The", "DET"}, {"cat", "NOUN"}});
    RepresentationStore s = load_types("cat 1 0\nthe 0 1\n", c);
    // Identity is case-sensitive: "The" has no vector.
    EXPECT_EQ((std::vector<std::string>{"The"}), s.missing_surfaces());
    EXPECT_FALSE(s.has(2, 0));
    EXPECT_TRUE(s.is_excluded(2, 0));
    EXPECT_TRUE(s.has(2, 1));
    EXPECT_EQ(1u, s.excluded_token_count());
}

// Equal surfaces always map to bit-identical vectors in static mode.
TEST(LoadTypeEmbeddings, StaticVectorsAreBitIdenticalPerSurface) {
    std::mt19937 rng(3);
    LabeledCorpus c;
    for (int s = 0; s < 30; ++s) {
        std::vector<std::pair<std::string, std::string>> toks;
        for (int t = 0; t < 6; ++t) {
            toks.emplace_back("w" + std::to_string(rng() % 10), "X");
        }
        c.add_sentence(toks);
    }
    std::ostringstream emb;
    std::normal_distribution<double> normal;
    for (int w = 0; w < 10; ++w) {
        emb << "w" << w;
        for (int k = 0; k < 3; ++k) {
            emb << ' ' << format_double(normal(rng));
        }
        emb << '\n';
    }
    RepresentationStore store = load_types(emb.str(), c);
    for (const auto& s1 : c.sentences()) {
        for (std::size_t i = 0; i < s1.tokens.size(); ++i) {
            for (const auto& s2 : c.sentences()) {
                for (std::size_t j = 0; j < s2.tokens.size(); ++j) {
                    if (s1.tokens[i].surface != s2.tokens[j].surface) {
                        continue;
                    }
                    auto a = store.vector(s1.id, i);
                    auto b = store.vector(s2.id, j);
                    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
                }
            }
        }
    }
}

TEST(RepresentationStore, SelectRenumbersSentences) {
    LabeledCorpus c = three_token_corpus();
    RepresentationStore s = load_vectors("0 0 1\n0 1 2\n1 0 3\n", c);
    std::vector<SentenceId> ids{1, 0};
    RepresentationStore sub = s.select(ids);
    LabeledCorpus csub = select_sentences(c, ids);
    EXPECT_EQ("cat", csub.sentence(0).tokens[0].surface);
    EXPECT_EQ(3.0, sub.vector(0, 0)[0]);
    EXPECT_EQ(1.0, sub.vector(1, 0)[0]);
    EXPECT_EQ(2.0, sub.vector(1, 1)[0]);
    EXPECT_FALSE(sub.has(0, 1));
}

TEST(LabeledCorpus, AlignLabelsKeepsReferenceOrder) {
    LabeledCorpus c;
    c.add_sentence({{"a", "VERB"}, {"b", "X"}});
    LabeledCorpus aligned = align_labels(c, {"NOUN", "VERB"});
    EXPECT_EQ((std::vector<std::string>{"NOUN", "VERB", "X"}), aligned.label_inventory());
    EXPECT_EQ(1u, aligned.sentence(0).tokens[0].label);
    EXPECT_EQ(2u, aligned.sentence(0).tokens[1].label);
}

TEST(LabeledCorpus, RejectsInvalidTokens) {
    LabeledCorpus c({"X"});
    EXPECT_THROW(c.add_sentence(std::vector<Token>{}), DataError);
    EXPECT_THROW(c.add_sentence(std::vector<Token>{{"", 0}}), DataError);
    EXPECT_THROW(c.add_sentence(std::vector<Token>{{"a", 1}}), DataError);
}

} // namespace
} // namespace memprobe
