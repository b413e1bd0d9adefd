#include <gtest/gtest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

// Small model dims keep training in the test fast.
const std::string kSmall =
    " --backbone.hidden_dim 8 --backbone.traj_embed_dim 8 --backbone.interaction_dim 8 --backbone.heads 2"
    " --backbone.layers 1 --backbone.noise_dim 2 --pose.dim 8 --pose.heads 2 --pose.layers 1 --train.epochs 2";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("posetraj_cli_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static int run(const std::string& args) {
    const std::string cmd = std::string(POSETRAJ_CLI_PATH) + " " + args + " > " + (root_ / "stdout.txt").string() +
                            " 2> " + (root_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static std::string dir(const std::string& name) { return (root_ / name).string(); }

  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, GenerateIsByteIdentical) {
  ASSERT_EQ(run("generate --scenes 100 --seed 7 --out " + dir("g1")), 0);
  ASSERT_EQ(run("generate --scenes 100 --seed 7 --out " + dir("g2")), 0);
  const std::string a = read(dir("g1") + "/corpus.jsonl");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read(dir("g2") + "/corpus.jsonl"));
  EXPECT_EQ(read(dir("g1") + "/manifest.json"), read(dir("g2") + "/manifest.json"));
  ASSERT_EQ(run("generate --scenes 100 --seed 8 --out " + dir("g3")), 0);
  EXPECT_NE(a, read(dir("g3") + "/corpus.jsonl"));
}

TEST_F(Cli, RerunFromEmbeddedConfigReproduces) {
  ASSERT_EQ(run("generate --scenes 20 --seed 3 --world.turn_rate 0.5 --out " + dir("e1")), 0);
  ASSERT_EQ(run("generate --config " + dir("e1") + "/config.ini --out " + dir("e2")), 0);
  EXPECT_EQ(read(dir("e1") + "/corpus.jsonl"), read(dir("e2") + "/corpus.jsonl"));
  const auto manifest = nlohmann::json::parse(read(dir("e1") + "/manifest.json"));
  EXPECT_EQ(manifest.at("seed"), 3);
  EXPECT_EQ(manifest.at("config").at("world.turn_rate"), "0.5");
}

TEST_F(Cli, RunDirectoryIsNamedByTimestampAndHash) {
  const std::string root = dir("runs");
  ASSERT_EQ(run("generate --scenes 5 --run-root " + root), 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(root)) {
    ++n;
    const std::string name = e.path().filename().string();
    EXPECT_EQ(name.size(), 15u + 1u + 10u) << name;
    EXPECT_TRUE(fs::exists(e.path() / "corpus.jsonl"));
  }
  EXPECT_EQ(n, 1u);
  ASSERT_EQ(::setenv("POSETRAJ_RUN_ROOT", dir("envruns").c_str(), 1), 0);
  ASSERT_EQ(run("generate --scenes 5"), 0);
  ::unsetenv("POSETRAJ_RUN_ROOT");
  EXPECT_FALSE(fs::is_empty(dir("envruns")));
}

TEST_F(Cli, TrainEvalPipeline) {
  ASSERT_EQ(run("generate --scenes 60 --seed 4 --out " + dir("p_corpus")), 0);
  const std::string corpus = dir("p_corpus") + "/corpus.jsonl";
  ASSERT_EQ(run("train --corpus " + corpus + " --family mlp --pose on" + kSmall + " --out " + dir("p_on")), 0);
  for (const char* f : {"checkpoint.json", "checkpoint_last.json", "loss.csv", "train.json", "manifest.json", "config.ini"})
    EXPECT_TRUE(fs::exists(dir("p_on") + "/" + f)) << f;

  ASSERT_EQ(run("eval --checkpoint " + dir("p_on") + "/checkpoint.json --corpus " + corpus + " --k 20 --out " + dir("p_eval")), 0);
  const std::string table = read(root_ / "stdout.txt");
  EXPECT_NE(table.find("ADE"), std::string::npos);
  EXPECT_NE(table.find("minADE@20"), std::string::npos);
  const auto report = nlohmann::json::parse(read(dir("p_eval") + "/report.json"));
  EXPECT_EQ(report.at("k"), 20);
  EXPECT_TRUE(report.at("overall").contains("min_fde"));
  EXPECT_TRUE(report.at("overall").contains("aswaee"));
  EXPECT_TRUE(report.contains("run_config"));

  ASSERT_EQ(run("eval --checkpoint " + dir("p_on") + "/checkpoint.json --corpus " + corpus + " --k 20 --out " + dir("p_eval2")), 0);
  EXPECT_EQ(read(dir("p_eval") + "/report.json"), read(dir("p_eval2") + "/report.json"));
}

TEST_F(Cli, PoseOffModelOnStrippedCorpusAndDimsMismatch) {
  ASSERT_EQ(run("generate --scenes 40 --seed 5 --pose-mode none --out " + dir("m_none")), 0);
  ASSERT_EQ(run("generate --scenes 40 --seed 5 --pose-mode 2d --out " + dir("m_2d")), 0);
  ASSERT_EQ(run("generate --scenes 40 --seed 5 --out " + dir("m_3d")), 0);
  ASSERT_EQ(run("train --corpus " + dir("m_3d") + "/corpus.jsonl --pose off --family recurrent" + kSmall + " --out " +
                dir("m_off")),
            0);
  EXPECT_EQ(run("eval --checkpoint " + dir("m_off") + "/checkpoint.json --corpus " + dir("m_none") +
                "/corpus.jsonl --out " + dir("m_off_eval")),
            0);
  ASSERT_EQ(run("train --corpus " + dir("m_3d") + "/corpus.jsonl --pose on --family recurrent" + kSmall + " --out " +
                dir("m_on")),
            0);
  EXPECT_EQ(run("eval --checkpoint " + dir("m_on") + "/checkpoint.json --corpus " + dir("m_2d") + "/corpus.jsonl --out " +
                dir("m_bad")),
            1);
}

TEST_F(Cli, ErrorExitCodes) {
  EXPECT_EQ(run("generate --world.no_such_key 3 --out " + dir("x1")), 1);
  EXPECT_NE(read(root_ / "stderr.txt").find("world.no_such_key"), std::string::npos);
  EXPECT_EQ(run("generate --world.speed_min abc --out " + dir("x2")), 1);
  EXPECT_NE(read(root_ / "stderr.txt").find("world.speed_min"), std::string::npos);
  EXPECT_EQ(run("eval --checkpoint " + dir("missing.json") + " --corpus " + dir("missing.jsonl") + " --out " + dir("x3")), 2);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("--help"), 0);

  const fs::path bad = root_ / "bad.jsonl";
  std::ofstream(bad) << "{not json}\n";
  EXPECT_EQ(run("perturb --corpus " + bad.string() + " --out " + dir("x4")), 2);
}

TEST_F(Cli, PerturbKeepsTrajectories) {
  ASSERT_EQ(run("generate --scenes 10 --seed 6 --out " + dir("q")), 0);
  ASSERT_EQ(run("perturb --corpus " + dir("q") + "/corpus.jsonl --eval.perturbation occlusion --eval.occlusion "
                "structured_right_leg --out " + dir("q_occ")),
            0);
  const std::string occluded = read(dir("q_occ") + "/corpus.jsonl");
  EXPECT_NE(occluded, read(dir("q") + "/corpus.jsonl"));
  std::istringstream a(read(dir("q") + "/corpus.jsonl")), b(occluded);
  std::string la, lb;
  while (std::getline(a, la) && std::getline(b, lb)) {
    const auto ja = nlohmann::json::parse(la), jb = nlohmann::json::parse(lb);
    for (std::size_t i = 0; i < ja.at("agents").size(); ++i)
      EXPECT_EQ(ja["agents"][i]["xy"], jb["agents"][i]["xy"]);
  }
}

TEST_F(Cli, AttentionNavsimAndPlots) {
  ASSERT_EQ(run("generate --scenes 30 --seed 9 --out " + dir("n_corpus")), 0);
  const std::string corpus = dir("n_corpus") + "/corpus.jsonl";
  ASSERT_EQ(run("train --corpus " + corpus + " --family mlp --pose.tokenization per-frame-joint" + kSmall + " --out " +
                dir("n_model")),
            0);
  const std::string ckpt = dir("n_model") + "/checkpoint.json";
  ASSERT_EQ(run("attention --checkpoint " + ckpt + " --corpus " + corpus + " --out " + dir("n_att")), 0);
  const auto att = nlohmann::json::parse(read(dir("n_att") + "/attention.json"));
  EXPECT_EQ(att.at("scores").size(), 17u);
  EXPECT_EQ(att.at("top_k").size(), 8u);

  ASSERT_EQ(run("plot --kind attention --input " + dir("n_att") + "/attention.json --out " + dir("n_plot_att")), 0);
  const std::string svg = read(dir("n_plot_att") + "/attention.svg");
  std::size_t markers = 0;
  for (auto pos = svg.find("<circle"); pos != std::string::npos; pos = svg.find("<circle", pos + 1)) ++markers;
  EXPECT_EQ(markers, 17u);

  ASSERT_EQ(run("navsim --predictor oracle --navsim.episodes 3 --out " + dir("n_nav")), 0);
  EXPECT_TRUE(fs::exists(dir("n_nav") + "/summary.json"));
  ASSERT_EQ(run("navsim --predictor model --checkpoint " + ckpt + " --navsim.episodes 2 --out " + dir("n_nav_m")), 0);
  ASSERT_EQ(run("plot --kind navigation --input " + dir("n_nav") + "/episodes.jsonl --out " + dir("n_plot_nav")), 0);
  EXPECT_GT(fs::file_size(dir("n_plot_nav") + "/navigation.svg"), 0u);

  ASSERT_EQ(run("plot --kind trajectory --corpus " + corpus + " --pose-model " + ckpt + " --out " + dir("n_traj1")), 0);
  ASSERT_EQ(run("plot --kind trajectory --corpus " + corpus + " --pose-model " + ckpt + " --out " + dir("n_traj2")), 0);
  const std::string traj = read(dir("n_traj1") + "/trajectory.svg");
  EXPECT_GT(traj.size(), 0u);
  EXPECT_EQ(traj, read(dir("n_traj2") + "/trajectory.svg"));
  EXPECT_NE(traj.find("#2ca02c"), std::string::npos);
  EXPECT_NE(traj.find("#1f77b4"), std::string::npos);
}

TEST_F(Cli, PlotRejectsEmptyInputAndUnknownKind) {
  const fs::path empty = root_ / "empty.json";
  std::ofstream(empty).close();
  EXPECT_EQ(run("plot --kind attention --input " + empty.string() + " --out " + dir("y1")), 1);
  EXPECT_NE(read(root_ / "stderr.txt").find("empty"), std::string::npos);
  EXPECT_EQ(run("plot --kind histogram --out " + dir("y2")), 1);
}
