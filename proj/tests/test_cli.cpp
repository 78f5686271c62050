#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mclkit/cli.hpp"

using namespace mclkit;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "mclkit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path root() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / ("mclkit_cli_test_" + std::to_string(getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string p(const std::string& name) { return (root() / name).string(); }

// Small dataset shared by the tests.
std::string dataset() {
    static const std::string dir = [] {
        const auto d = p("ds");
        const auto r = run({"synth", "--out", d, "--shape", "8x8x1", "--classes", "3", "--per-class", "20", "--seed", "4"});
        EXPECT_EQ(r.code, 0) << r.err;
        return d;
    }();
    return dir;
}

std::string teacher() {
    static const std::string path = [] {
        const auto out = p("teacher");
        const auto r = run({"train-prior", "--dataset", dataset(), "--measurement", "4x4x1", "--epochs", "1", "--out", out});
        EXPECT_EQ(r.code, 0) << r.err;
        return (fs::path(out) / "model.ckpt").string();
    }();
    return path;
}

std::set<std::string> listing(const std::string& dir) {
    std::set<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) names.insert(e.path().filename().string());
    return names;
}

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"bogus"}).code, 2);
    EXPECT_EQ(run({"train-prior", "--no-such-flag"}).code, 2);
    EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, SynthWritesDatasetDirectory) {
    EXPECT_EQ(listing(dataset()), (std::set<std::string>{"train.mcld", "val.mcld", "test.mcld"}));
    const auto h = peek_dataset_file((fs::path(dataset()) / "train.mcld").string());
    EXPECT_EQ(h.shape, (Shape{8, 8, 1}));
    EXPECT_EQ(h.classes, 3u);
}

TEST(Cli, InvalidSpecificationsFailBeforeAnyOutput) {
    const auto out = p("never");
    struct Case {
        std::vector<std::string> args;
        std::string needle;
    };
    const std::vector<Case> cases = {
        {{"train-prior", "--dataset", dataset(), "--out", out}, "--measurement"},
        {{"train-prior", "--dataset", dataset(), "--measurement", "9x4x1", "--out", out}, "exceeds"},
        {{"train-prior", "--dataset", dataset(), "--measurement", "4x4", "--out", out}, "rank"},
        {{"train-prior", "--dataset", p("missing"), "--measurement", "4x4x1", "--out", out}, "does not exist"},
        {{"train-prior", "--dataset", dataset(), "--measurement", "4x4x1"}, "--out"},
        {{"train-prior", "--dataset", dataset(), "--measurement", "4x4x1", "--seed", "1,2", "--out", out}, "one seed"},
        {{"train-student", "--dataset", dataset(), "--method", "mclwp", "--out", out}, "--teacher"},
        {{"train-student", "--dataset", dataset(), "--method", "nope", "--out", out}, "--method"},
        {{"train-student", "--dataset", dataset(), "--method", "mcl", "--measurement", "4x4x1", "--mask", "101", "--out",
          out},
         "--mask"},
        {{"train-student", "--dataset", dataset(), "--method", "mclwp", "--teacher", teacher(), "--mask", "12x", "--out",
          out},
         "mask"},
        {{"train-student", "--dataset", dataset(), "--method", "mclwp", "--teacher", teacher(), "--measurement", "2x2x1",
          "--out", out},
         "does not match"},
        {{"train-prior-semisup", "--dataset", dataset(), "--measurement", "4x4x1", "--rho", "1.5", "--out", out}, "rho"},
        {{"train-prior-semisup", "--dataset", dataset(), "--measurement", "4x4x1", "--labeled-fraction", "0", "--out",
          out},
         "labeled fraction"},
        {{"eval", "--dataset", dataset(), "--checkpoint", teacher(), "--metric", "f1"}, "--metric"},
        {{"eval", "--dataset", dataset()}, "--checkpoint"},
    };
    for (const auto& c : cases) {
        const auto r = run(c.args);
        EXPECT_EQ(r.code, 2) << c.args[0] << " " << r.err;
        EXPECT_NE(r.err.find(c.needle), std::string::npos) << r.err;
        EXPECT_FALSE(fs::exists(out)) << c.args[0];
    }
}

TEST(Cli, TeacherForAnotherDatasetIsRejected) {
    const auto other = p("ds_other");
    ASSERT_EQ(run({"synth", "--out", other, "--shape", "8x8x1", "--classes", "4", "--per-class", "20"}).code, 0);
    const auto r = run({"train-student", "--dataset", other, "--method", "mclwp", "--teacher", teacher(), "--out",
                        p("never2")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("classes"), std::string::npos);
    const auto s = run({"train-student", "--dataset", dataset(), "--method", "mclwp", "--teacher",
                        (fs::path(dataset()) / "train.mcld").string(), "--out", p("never2")});
    EXPECT_NE(s.code, 0);
    EXPECT_FALSE(fs::exists(p("never2")));
}

TEST(Cli, ConfigFileErrorsNameTheLine) {
    const auto cfg = p("bad.cfg");
    {
        std::ofstream f(cfg);
        f << "# comment\nepochs = 1\nwhatever = 3\n";
    }
    const auto r = run({"train-prior", "--dataset", dataset(), "--measurement", "4x4x1", "--config", cfg, "--out",
                        p("never3")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("bad.cfg:3"), std::string::npos) << r.err;
}

TEST(Cli, TrainCommandsWriteExactlyThreeFiles) {
    const std::set<std::string> expected{"model.ckpt", "history.csv", "manifest.json"};
    EXPECT_EQ(listing(fs::path(teacher()).parent_path().string()), expected);
    for (const std::string method : {"mcl", "mclwop", "mclwp", "mclwp-s"}) {
        const auto out = p("student-" + method);
        std::vector<std::string> args{"train-student", "--dataset", dataset(), "--method", method, "--epochs", "1",
                                      "--out", out};
        if (method == "mcl" || method == "mclwop") {
            args.insert(args.end(), {"--measurement", "4x4x1"});
        } else {
            args.insert(args.end(), {"--teacher", teacher()});
        }
        const auto r = run(args);
        ASSERT_EQ(r.code, 0) << method << ": " << r.err;
        EXPECT_EQ(listing(out), expected) << method;
        const auto manifest = nlohmann::json::parse(std::ifstream(fs::path(out) / "manifest.json"));
        EXPECT_EQ(manifest["method"], method);
        EXPECT_TRUE(manifest["results"].contains("test_accuracy"));
    }
    const auto out = p("semisup");
    const auto r = run({"train-prior-semisup", "--dataset", dataset(), "--measurement", "4x4x1", "--epochs", "1",
                        "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(listing(out), expected);
    const auto manifest = nlohmann::json::parse(std::ifstream(fs::path(out) / "manifest.json"));
    EXPECT_TRUE(manifest.contains("self_labeling"));
}

TEST(Cli, SameSeedGivesIdenticalOutputs) {
    std::vector<std::vector<std::uint8_t>> ckpts, hists;
    for (const char* name : {"det-a", "det-b"}) {
        const auto out = p(name);
        const auto r = run({"train-student", "--dataset", dataset(), "--method", "mclwp", "--teacher", teacher(),
                            "--epochs", "1", "--seed", "3", "--out", out});
        ASSERT_EQ(r.code, 0) << r.err;
        ckpts.push_back(read_file((fs::path(out) / "model.ckpt").string()));
        hists.push_back(read_file((fs::path(out) / "history.csv").string()));
    }
    EXPECT_EQ(ckpts[0], ckpts[1]);
    EXPECT_EQ(hists[0], hists[1]);
}

TEST(Cli, EvalPrintsAndWritesReport) {
    const auto out = p("eval");
    const auto r = run({"eval", "--dataset", dataset(), "--checkpoint", teacher(), "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("run_id,mask_s1,mask_s2,mask_s3,config,seed,metric,value\n", 0), 0u);
    EXPECT_NE(r.out.find("test_accuracy"), std::string::npos);
    EXPECT_EQ(read_file((fs::path(out) / "report.csv").string()), std::vector<std::uint8_t>(r.out.begin(), r.out.end()));
    const auto k = run({"eval", "--dataset", dataset(), "--checkpoint", teacher(), "--metric", "knn", "--k", "3"});
    ASSERT_EQ(k.code, 0) << k.err;
    EXPECT_NE(k.out.find("knn_k3"), std::string::npos);
}

TEST(Cli, CorruptCheckpointIsARuntimeFailure) {
    auto bytes = read_file(teacher());
    bytes[bytes.size() / 2] ^= 0x5a;
    const auto bad = p("bad.ckpt");
    write_file(bad, bytes);
    const auto r = run({"eval", "--dataset", dataset(), "--checkpoint", bad});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("CRC"), std::string::npos) << r.err;
}

TEST(Cli, AblateWritesEightRows) {
    const auto out = p("ablate");
    const auto r = run({"ablate", "--dataset", dataset(), "--teacher", teacher(), "--epochs", "1", "--out", out});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(listing(out), (std::set<std::string>{"ablation.csv", "manifest.json"}));
    std::istringstream csv(r.out);
    std::string line;
    std::size_t rows = 0;
    std::getline(csv, line);
    while (std::getline(csv, line)) ++rows;
    EXPECT_EQ(rows, 8u);
}

TEST(Cli, ExecutableReportsExitCodes) {
    const std::string exe = MCLKIT_CLI_PATH;
    auto status = [&](const std::string& args) {
        const int s = std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status("--help"), 0);
    EXPECT_EQ(status(""), 2);
    EXPECT_EQ(status("train-prior --dataset " + dataset() + " --measurement 99x1x1 --out " + p("x")), 2);
    EXPECT_EQ(status("eval --dataset " + dataset() + " --checkpoint " + teacher()), 0);
}
