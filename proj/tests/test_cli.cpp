#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "lhfglp/bagging.hpp"
#include "lhfglp/dataset.hpp"

namespace fs = std::filesystem;
using lhfglp::cli::run;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome call(std::vector<std::string> args) {
    args.insert(args.begin(), "lhfglp");
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

class CliTest : public ::testing::Test {
 protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("lhfglp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void make_small_data() {
        ASSERT_EQ(call({"generate", "--n-per-class", "20", "--dim", "6", "--out", path("ds.txt")}).code, 0);
        ASSERT_EQ(call({"bag", "--dataset", path("ds.txt"), "--out", path("bags.txt")}).code, 0);
    }

    fs::path dir_;
};

TEST_F(CliTest, GenerateIsDeterministic) {
    ASSERT_EQ(call({"generate", "--seed", "3", "--out", path("a.txt")}).code, 0);
    ASSERT_EQ(call({"generate", "--seed", "3", "--out", path("b.txt")}).code, 0);
    EXPECT_EQ(slurp(path("a.txt")), slurp(path("b.txt")));
    ASSERT_EQ(call({"generate", "--seed", "4", "--out", path("c.txt")}).code, 0);
    EXPECT_NE(slurp(path("a.txt")), slurp(path("c.txt")));
}

TEST_F(CliTest, GenerateHonoursHierarchyFlags) {
    ASSERT_EQ(call({"generate", "--classes", "6", "--levels", "3", "--n-per-class", "5", "--out",
                    path("ds.txt")}).code,
              0);
    const lhfglp::InstanceDataset ds = lhfglp::load_dataset(path("ds.txt"));
    EXPECT_EQ(ds.hierarchy.levels(), 2u);
    EXPECT_EQ(ds.hierarchy.size(0), 3u);
    EXPECT_EQ(ds.hierarchy.size(1), 6u);
    EXPECT_EQ(ds.size(), 30u);
}

TEST_F(CliTest, HelpListsEveryFlagWithDefaults) {
    const Outcome r = call({"train", "--help"});
    EXPECT_EQ(r.code, 0);
    for (const char* flag : {"--lr0", "--epochs", "--weight-decay", "--momentum", "--bags-per-batch",
                             "--hidden-dim", "--feature-dim", "--n-atoms", "--layers", "--mask-levels",
                             "--activation", "--mask-pooling", "--dict", "--resume"})
        EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
    EXPECT_NE(r.out.find("[0.005]"), std::string::npos);
    EXPECT_NE(r.out.find("[100]"), std::string::npos);
    const Outcome g = call({"generate", "--help"});
    EXPECT_NE(g.out.find("--noise"), std::string::npos);
    EXPECT_NE(call({"bag", "--help"}).out.find("[10]"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitTwo) {
    EXPECT_EQ(call({}).code, 2);
    EXPECT_EQ(call({"frobnicate"}).code, 2);
    EXPECT_EQ(call({"generate"}).code, 2);
    EXPECT_EQ(call({"generate", "--seed", "x", "--out", path("a.txt")}).code, 2);
    make_small_data();
    EXPECT_EQ(call({"train", "--dataset", path("ds.txt"), "--manifest", path("bags.txt"), "--epochs", "-1"}).code,
              2);
    EXPECT_EQ(call({"train", "--dataset", path("ds.txt")}).code, 2);
    std::ofstream(path("bad.cfg")) << "epochs = 3\nnot a pair\n";
    const Outcome r = call({"train", "--config", path("bad.cfg")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 2"), std::string::npos);
}

TEST_F(CliTest, ValidatePassesFreshManifest) {
    make_small_data();
    const Outcome r = call({"validate", "--dataset", path("ds.txt"), "--manifest", path("bags.txt")});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("0 violations"), std::string::npos);
}

TEST_F(CliTest, CorruptedManifestExitsFour) {
    make_small_data();
    lhfglp::BagManifest m = lhfglp::load_manifest(path("bags.txt"));
    m.bags[1].instance_ids[0] = m.bags[0].instance_ids[0];
    lhfglp::save_manifest(m, path("bad.txt"));
    const Outcome r = call({"validate", "--dataset", path("ds.txt"), "--manifest", path("bad.txt")});
    EXPECT_EQ(r.code, 4);
    EXPECT_NE(r.out.find("violation"), std::string::npos);
    EXPECT_EQ(call({"train", "--dataset", path("ds.txt"), "--manifest", path("bad.txt"), "--epochs", "1"}).code, 4);

    std::string text = slurp(path("bags.txt"));
    text.resize(text.size() / 2);
    std::ofstream(path("trunc.txt")) << text;
    EXPECT_EQ(call({"validate", "--dataset", path("ds.txt"), "--manifest", path("trunc.txt")}).code, 4);
}

TEST_F(CliTest, StaleManifestExitsFour) {
    make_small_data();
    ASSERT_EQ(call({"generate", "--seed", "99", "--n-per-class", "20", "--dim", "6", "--out", path("other.txt")}).code,
              0);
    EXPECT_EQ(call({"validate", "--dataset", path("other.txt"), "--manifest", path("bags.txt")}).code, 4);
}

TEST_F(CliTest, TrainEvalAndResume) {
    make_small_data();
    const std::vector<std::string> base{"train", "--dataset", path("ds.txt"), "--manifest", path("bags.txt"),
                                        "--hidden-dim", "8", "--feature-dim", "6", "--n-atoms", "2",
                                        "--layers", "3"};
    auto with = [&](std::vector<std::string> extra) {
        std::vector<std::string> a = base;
        a.insert(a.end(), extra.begin(), extra.end());
        return a;
    };
    ASSERT_EQ(call(with({"--epochs", "4", "--out-dir", path("full")})).code, 0);
    ASSERT_EQ(call(with({"--epochs", "4", "--stop-after", "2", "--out-dir", path("half")})).code, 0);
    ASSERT_EQ(call(with({"--epochs", "4", "--out-dir", path("resumed"), "--resume",
                         path("half/checkpoint.llpckpt")})).code,
              0);
    EXPECT_EQ(slurp(path("resumed/checkpoint.llpckpt")), slurp(path("full/checkpoint.llpckpt")));
    EXPECT_EQ(slurp(path("resumed/metrics.csv")), slurp(path("full/metrics.csv")));
    // A different schedule length is a different configuration.
    EXPECT_EQ(call(with({"--epochs", "5", "--out-dir", path("other"), "--resume",
                         path("half/checkpoint.llpckpt")})).code,
              4);

    const std::string csv = slurp(path("full/metrics.csv"));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,lr,train_loss,test_acc_level0,test_acc_level1,test_acc_level2");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);

    const Outcome e = call({"eval", "--dataset", path("ds.txt"), "--checkpoint", path("full/checkpoint.llpckpt")});
    EXPECT_EQ(e.code, 0);
    EXPECT_NE(e.out.find("level 2 (12 classes) accuracy"), std::string::npos);
    EXPECT_EQ(call({"eval", "--dataset", path("ds.txt"), "--checkpoint", path("missing.llpckpt")}).code, 1);
    EXPECT_EQ(call({"eval", "--dataset", path("ds.txt"), "--checkpoint", path("full/metrics.csv")}).code, 4);
}

TEST_F(CliTest, RepeatedTrainingIsBitwiseIdentical) {
    make_small_data();
    for (const char* out : {"r1", "r2"})
        ASSERT_EQ(call({"train", "--dataset", path("ds.txt"), "--manifest", path("bags.txt"), "--epochs", "3",
                        "--hidden-dim", "8", "--feature-dim", "6", "--out-dir", path(out)}).code,
                  0);
    EXPECT_EQ(slurp(path("r1/metrics.csv")), slurp(path("r2/metrics.csv")));
    EXPECT_EQ(slurp(path("r1/checkpoint.llpckpt")), slurp(path("r2/checkpoint.llpckpt")));
}

TEST_F(CliTest, ConfigFileAndFlagOverride) {
    make_small_data();
    std::ofstream(path("exp.cfg")) << "# small run\ndataset = ds.txt\nmanifest = bags.txt\nepochs = 5\n"
                                      "hidden_dim = 8\nfeature_dim = 6\noutput_dir = out\n";
    ASSERT_EQ(call({"train", "--config", path("exp.cfg"), "--epochs", "2"}).code, 0);
    const std::string csv = slurp(path("out/metrics.csv"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(CliTest, OracleAndGradcheck) {
    make_small_data();
    const Outcome o = call({"eval-oracle", "--dataset", path("ds.txt")});
    EXPECT_EQ(o.code, 0);
    EXPECT_NE(o.out.find("nearest-centroid"), std::string::npos);
    const Outcome g = call({"gradcheck"});
    EXPECT_EQ(g.code, 0);
    EXPECT_EQ(g.out.find("FAIL"), std::string::npos);
}

}  // namespace
