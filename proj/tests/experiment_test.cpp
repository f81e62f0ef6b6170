#include "memprobe/experiment.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gtest/gtest.h"

namespace memprobe {
namespace {

namespace fs = std::filesystem;

// Fresh scratch directory per test, removed afterwards.
class ScratchDir {
public:
    ScratchDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() / ("memprobe_" + std::string(info->test_suite_name()) + "_" + info->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    std::string operator/(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct CommandResult {
    int status = -1;
    std::string out;
};

CommandResult run_cli(const std::string& args) {
    CommandResult r;
    std::string cmd = std::string(MEMPROBE_CLI) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
        return r;
    }
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) {
        r.out.append(buf, n);
    }
    int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

SynthConfig tiny_synth() {
    SynthConfig s;
    s.n_train_sentences = 120;
    s.n_tuning_sentences = 30;
    s.n_test_sentences = 80;
    s.vocab_size = 300;
    s.dimension = 16;
    s.seed = 11;
    return s;
}

ExperimentConfig synth_experiment(SynthConfig s, std::size_t reps) {
    ExperimentConfig c;
    c.synth = s;
    c.repetitions = reps;
    c.train.max_epochs = 30;
    return c;
}

// With pure abstraction there is nothing to memorize: seen and unseen
// words are tagged equally well.
TEST(Experiment, AbstractionOnlyDataHasNoGap) {
    SynthConfig s;
    s.abstraction_weight = 1.0;
    s.noise_sigma = 0.01;
    s.n_train_sentences = 200;
    s.n_labels = 3;
    ExperimentConfig c = synth_experiment(s, 2);
    c.train.max_epochs = 100;
    ExperimentResult r = run_experiment_on(load_experiment_data(c), c);
    EXPECT_GE(r.report.micro_acc_seen, 0.99);
    EXPECT_GE(r.report.micro_acc_unseen, 0.99);
    EXPECT_LE(std::abs(r.report.gap), 0.02);
}

TEST(Experiment, ReportsAreByteIdenticalAcrossReruns) {
    ExperimentConfig c = synth_experiment(tiny_synth(), 3);
    ExperimentResult a = run_experiment_on(load_experiment_data(c), c);
    ExperimentResult b = run_experiment_on(load_experiment_data(c), c);
    EXPECT_EQ(a.json.dump(2), b.json.dump(2));
    EXPECT_EQ(a.tsv, b.tsv);
    c.base_seed = 1;
    ExperimentResult other = run_experiment_on(load_experiment_data(c), c);
    EXPECT_NE(a.json["runs"][0], other.json["runs"][0]);
    // Repetition r of base seed 0 is repetition r-1 of base seed 1.
    EXPECT_EQ(a.json["runs"][1], other.json["runs"][0]);
}

TEST(Experiment, OneRunPerRepetition) {
    ExperimentConfig c = synth_experiment(tiny_synth(), 4);
    c.base_seed = 7;
    ExperimentResult r = run_experiment_on(load_experiment_data(c), c);
    ASSERT_EQ(4u, r.runs.size());
    ASSERT_EQ(4u, r.json["runs"].size());
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(7 + i, r.json["runs"][i]["seed"].get<Seed>());
    }
    EXPECT_EQ(4u, r.report.n_runs);
    EXPECT_EQ(to_json(aggregate(r.runs)), to_json(r.report));
    EXPECT_EQ(120u, r.train_sentences);
    EXPECT_EQ(0u, r.tsv.find(tsv_header() + "\n120\tsynthetic\tlinear\t"));
}

TEST(Experiment, SubsamplesTrainingSentences) {
    ExperimentConfig c = synth_experiment(tiny_synth(), 2);
    c.train_sentences = 30;
    ExperimentData data = load_experiment_data(c);
    Repetition r0 = prepare_repetition(data, c, 0);
    Repetition r1 = prepare_repetition(data, c, 1);
    EXPECT_EQ(30u, r0.train.size());
    EXPECT_NE(r0.source_ids, r1.source_ids);
    for (std::size_t i = 0; i < r0.source_ids.size(); ++i) {
        EXPECT_EQ(data.train.sentences()[r0.source_ids[i]].tokens, r0.train.sentences()[i].tokens);
    }
    EXPECT_EQ(30u, run_experiment_on(data, c).train_sentences);

    c.train_sentences = 121;
    try {
        run_experiment_on(data, c);
        FAIL() << "expected a StageError";
    } catch (const StageError& e) {
        EXPECT_EQ("subsample", e.stage());
        EXPECT_EQ(std::optional<std::size_t>(0), e.repetition());
        EXPECT_EQ(ExitCode::data, e.code());
    }
}

TEST(SubsampleIds, SortedDistinctAndSeeded) {
    auto ids = subsample_ids(50, 20, 3);
    EXPECT_EQ(20u, ids.size());
    EXPECT_TRUE(std::is_sorted(ids.begin(), ids.end()));
    EXPECT_EQ(ids.end(), std::adjacent_find(ids.begin(), ids.end()));
    EXPECT_LT(ids.back(), 50u);
    EXPECT_EQ(ids, subsample_ids(50, 20, 3));
    EXPECT_NE(ids, subsample_ids(50, 20, 4));
    EXPECT_EQ(50u, subsample_ids(50, 50, 9).size());
    EXPECT_THROW(subsample_ids(5, 6, 0), DataError);
}

TEST(DeriveSeed, StreamsDiffer) {
    EXPECT_NE(derive_seed(0, subsample_stream), derive_seed(0, training_stream));
    EXPECT_NE(derive_seed(0, training_stream), derive_seed(1, training_stream));
    EXPECT_EQ(derive_seed(5, training_stream), derive_seed(5, training_stream));
}

TEST(Config, OverridesUseDottedKeys) {
    nlohmann::json doc{{"repetitions", 10}, {"synth", {{"n_labels", 3}}}};
    apply_overrides(doc, {"repetitions=2", "synth.n_labels=5", "synth.dimension=8", "classifier=mlp", "output=out/x"});
    EXPECT_EQ(2, doc["repetitions"]);
    EXPECT_EQ(5, doc["synth"]["n_labels"]);
    EXPECT_EQ(8, doc["synth"]["dimension"]);
    EXPECT_EQ("mlp", doc["classifier"]);
    EXPECT_EQ("out/x", doc["output"]);
    EXPECT_THROW(apply_overrides(doc, {"no_equals_sign"}), UsageError);
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
    ScratchDir dir;
    std::ofstream(dir / "run.json") << R"({"train": "a.conllu", "test": "/abs/b.conllu",
        "train_vectors": "a.vec", "test_vectors": "b.vec", "output": "reports/r"})";
    ExperimentConfig c = load_experiment_config(dir / "run.json");
    EXPECT_EQ(dir / "a.conllu", c.train_path);
    EXPECT_EQ("/abs/b.conllu", c.test_path);
    EXPECT_EQ(dir / "reports/r", c.output);
}

TEST(Config, InvalidConfigsAreUsageErrors) {
    auto parse = [](nlohmann::json j) { return experiment_config_from_json(j); };
    EXPECT_THROW(parse({{"test", "t"}}), UsageError);
    EXPECT_THROW(parse({{"synth", nlohmann::json::object()}, {"classifier", "svm"}}), UsageError);
    EXPECT_THROW(parse({{"synth", nlohmann::json::object()}, {"repetitions", 0}}), UsageError);
    EXPECT_THROW(parse({{"synth", nlohmann::json::object()}, {"representation", "dense"}}), UsageError);
    EXPECT_THROW(parse({{"synth", nlohmann::json::object()}, {"learning_rate", -1.0}}), UsageError);
    EXPECT_THROW(parse({{"synth", nlohmann::json::object()}, {"repetitions", "many"}}), UsageError);
    EXPECT_THROW(parse({{"train", "a"}, {"test", "b"}, {"representation", "static"}}), UsageError);
    EXPECT_THROW(load_experiment_config("/nonexistent/run.json"), UsageError);
}

TEST(Config, JsonEchoRoundTrips) {
    ExperimentConfig c = synth_experiment(tiny_synth(), 3);
    c.classifier = ProbeKind::mlp;
    c.train_sentences = 40;
    nlohmann::json j = to_json(c);
    EXPECT_EQ(j, to_json(experiment_config_from_json(j)));
}

TEST(Experiment, MissingCorpusFailsInLoadStage) {
    ExperimentConfig c;
    c.train_path = "/nonexistent/train.conllu";
    c.test_path = "/nonexistent/test.conllu";
    c.train_vectors_path = "/nonexistent/train.vec";
    c.test_vectors_path = "/nonexistent/test.vec";
    try {
        run_experiment(c);
        FAIL() << "expected a StageError";
    } catch (const StageError& e) {
        EXPECT_EQ("load", e.stage());
        EXPECT_FALSE(e.repetition().has_value());
        EXPECT_NE(std::string::npos, std::string(e.what()).find("train.conllu"));
    }
}

TEST(Experiment, TuningSetDefaultsToHeadOfTrain) {
    ScratchDir dir;
    write_synth_dataset(generate(tiny_synth()), dir.path());
    ExperimentConfig c = load_experiment_config(dir / "run.json", {"tuning=null", "tuning_sentences=20"});
    ExperimentData data = load_experiment_data(c);
    EXPECT_EQ(20u, data.tuning.size());
    EXPECT_EQ(100u, data.train.size());
    SynthData reference = generate(tiny_synth());
    EXPECT_EQ(reference.train.sentences()[0].tokens, data.tuning.sentences()[0].tokens);
    EXPECT_EQ(reference.train.sentences()[20].tokens, data.train.sentences()[0].tokens);

    c.tuning_sentences = 120;
    EXPECT_THROW(load_experiment_data(c), DataError);
}

// Writing a synthetic dataset to disk and running from the files sees the
// same splits as running on it in memory. Label ids follow first appearance
// in the files, so the trained probes need not be bit-identical.
TEST(Experiment, FileRoundTripMatchesInMemoryRun) {
    ScratchDir dir;
    SynthConfig s = tiny_synth();
    write_synth_dataset(generate(s), dir.path());
    ExperimentConfig from_files =
        load_experiment_config(dir / "run.json", {"repetitions=2", "max_epochs=30", "model_dir=models"});
    ExperimentResult files = run_experiment(from_files);
    ExperimentConfig in_memory = synth_experiment(s, 2);
    ExperimentResult memory = run_experiment_on(load_experiment_data(in_memory), in_memory);
    for (std::size_t r = 0; r < 2; ++r) {
        EXPECT_EQ(memory.runs[r].total_seen, files.runs[r].total_seen);
        EXPECT_EQ(memory.runs[r].total_unseen, files.runs[r].total_unseen);
        EXPECT_EQ(memory.runs[r].total_all, files.runs[r].total_all);
        EXPECT_EQ(memory.json["runs"][r]["seen_words"], files.json["runs"][r]["seen_words"]);
        EXPECT_NEAR(memory.runs[r].acc_all, files.runs[r].acc_all, 0.05);
    }

    EXPECT_EQ(files.tsv, slurp(dir / "report.tsv"));
    EXPECT_EQ(files.json.dump(2) + "\n", slurp(dir / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "models/model_0.json"));
    EXPECT_TRUE(fs::exists(dir / "models/model_1.json"));
}

TEST(Experiment, StaticEmbeddingsReportMissingWords) {
    ScratchDir dir;
    std::ofstream(dir / "train.conllu") << "1\tthe\t_\tDET\t_\t_\t_\t_\t_\t_\n2\tdog\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\n"
                                        << "1\ta\t_\tDET\t_\t_\t_\t_\t_\t_\n2\tcat\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\n"
                                        << "1\tthe\t_\tDET\t_\t_\t_\t_\t_\t_\n2\tcat\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\n"
                                        << "1\ta\t_\tDET\t_\t_\t_\t_\t_\t_\n2\tdog\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\n";
    std::ofstream(dir / "test.conllu") << "1\tthe\t_\tDET\t_\t_\t_\t_\t_\t_\n2\tyak\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\n"
                                       << "1\ta\t_\tDET\t_\t_\t_\t_\t_\t_\n2\tcat\t_\tNOUN\t_\t_\t_\t_\t_\t_\n\n";
    std::ofstream(dir / "emb.txt") << "the 1 0\na 0.9 0.1\ndog 0 1\ncat 0.1 0.9\n";
    std::ofstream(dir / "run.json") << R"({"train": "train.conllu", "test": "test.conllu",
        "representation": "static", "embeddings": "emb.txt", "tuning_sentences": 1,
        "repetitions": 2, "restrict_to_test_vocab": false})";
    ExperimentResult r = run_experiment(load_experiment_config(dir / "run.json"));
    EXPECT_EQ(nlohmann::json({"yak"}), r.json["missing_embeddings"]["test_surfaces"]);
    EXPECT_EQ(1u, r.json["missing_embeddings"]["test_tokens"].get<std::size_t>());
    EXPECT_EQ(3u, r.runs[0].total_all);
    EXPECT_EQ(3u, r.train_sentences);
    EXPECT_NE(std::string::npos, r.tsv.find("\n3\tstatic\tlinear\t"));
}

TEST(ProbabilityTable, Rows) {
    EXPECT_EQ("1\t0.5\t0.5\n2\t0.166667\t0.25\n", probability_table(2, 4));
    EXPECT_THROW(probability_table(0, 4), DomainError);
    EXPECT_THROW(probability_table(5, 4), DomainError);
}

TEST(StageErrorTest, MessageNamesStageAndRepetition) {
    StageError e("train", 3, NumericalError("loss is not finite"));
    EXPECT_EQ("stage 'train' (repetition 3): loss is not finite", std::string(e.what()));
    EXPECT_EQ(ExitCode::numerical, e.code());
    EXPECT_EQ(ExitCode::usage, StageError("load", std::nullopt, UsageError("x")).code());
}

TEST(Cli, SynthRunSplitEval) {
    ScratchDir dir;
    std::ofstream(dir / "synth.json") << nlohmann::json(tiny_synth()).dump();
    ASSERT_EQ(0, run_cli("synth --config " + (dir / "synth.json") + " --out " + (dir / "data")).status);
    ASSERT_TRUE(fs::exists(dir / "data/run.json"));

    const std::string config = dir / "data/run.json";
    CommandResult run =
        run_cli("run --config " + config + " --override repetitions=2 --override max_epochs=20 --override model_dir=m");
    ASSERT_EQ(0, run.status);
    EXPECT_EQ(slurp(dir / "data/report.tsv"), run.out);
    nlohmann::json report = nlohmann::json::parse(slurp(dir / "data/report.json"));

    // eval on a saved model reproduces the run's own counts.
    CommandResult eval = run_cli("eval --model " + (dir / "data/m/model_1.json") + " --config " + config +
                                 " --repetition 1");
    ASSERT_EQ(0, eval.status);
    nlohmann::json ej = nlohmann::json::parse(eval.out);
    for (const char* key : {"correct_seen", "total_seen", "correct_unseen", "total_unseen", "correct_all"}) {
        EXPECT_EQ(report["runs"][1][key], ej[key]) << key;
    }

    // split emits the plan used by that repetition, and eval accepts it.
    ASSERT_EQ(0, run_cli("split --config " + config + " --seed 1 --out " + (dir / "plan.json")).status);
    ExperimentConfig c = load_experiment_config(config);
    SplitPlan expected = prepare_repetition(load_experiment_data(c), c, 1).plan;
    EXPECT_EQ(expected, split_plan_from_json(nlohmann::json::parse(slurp(dir / "plan.json"))));
    CommandResult with_plan = run_cli("eval --model " + (dir / "data/m/model_1.json") + " --config " + config +
                                      " --plan " + (dir / "plan.json"));
    ASSERT_EQ(0, with_plan.status);
    EXPECT_EQ(eval.out, with_plan.out);
}

TEST(Cli, ExitCodes) {
    ScratchDir dir;
    EXPECT_EQ(1, run_cli("run --config " + (dir / "absent.json")).status);
    EXPECT_EQ(1, run_cli("bogus").status);
    std::ofstream(dir / "run.json") << R"({"train": "absent.conllu", "test": "absent.conllu",
        "train_vectors": "a.vec", "test_vectors": "b.vec"})";
    EXPECT_EQ(2, run_cli("run --config " + (dir / "run.json")).status);
    EXPECT_EQ(2, run_cli("prob-table --total 3 --max 4").status);
}

} // namespace
} // namespace memprobe
