// posetraj: generate / train / eval / perturb / attention / navsim / plot.
//
// Every subcommand accepts --config FILE, --out DIR, --run-root DIR, --seed N
// and any number of --section.key VALUE overrides. Exit codes: 0 success,
// 1 configuration error, 2 data error, 3 numeric failure.

#include "posetraj/analysis.hpp"
#include "posetraj/checkpoint.hpp"
#include "posetraj/config.hpp"
#include "posetraj/errors.hpp"
#include "posetraj/navsim.hpp"
#include "posetraj/plot.hpp"
#include "posetraj/scene_io.hpp"
#include "posetraj/synth.hpp"
#include "posetraj/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace posetraj;

namespace {

struct Common {
  std::string config_path;
  std::string out;
  std::string run_root;
  std::string seed;
  std::vector<std::string> overrides;
};

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string a = args[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
    a = a.substr(2);
    std::string value;
    if (const auto eq = a.find('='); eq != std::string::npos) {
      value = a.substr(eq + 1);
      a = a.substr(0, eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("flag '--" + a + "' needs a value");
      value = args[++i];
    }
    if (!cfg.has(a)) throw ConfigError("unknown config key '" + a + "'");
    cfg.set(a, value);
  }
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return out.str();
}

fs::path run_directory(const Common& c, const RunConfig& cfg) {
  fs::path dir;
  if (!c.out.empty()) {
    dir = c.out;
  } else {
    std::string root = c.run_root;
    if (root.empty()) root = cfg.str("paths.run_root");
    if (root.empty())
      if (const char* env = std::getenv("POSETRAJ_RUN_ROOT")) root = env;
    if (root.empty()) root = "runs";
    dir = fs::path(root) / (timestamp() + "-" + cfg.hash().substr(0, 10));
  }
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// Records the config echo and a content hash of every artifact of the run.
void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg,
                    const std::vector<fs::path>& artifacts) {
  nlohmann::json files = nlohmann::json::object();
  for (const auto& a : artifacts) files[a.filename().string()] = git_blob_hash(read_text(a));
  write_json(dir / "manifest.json", {{"command", command},
                                     {"seed", cfg.integer("seed")},
                                     {"config_hash", cfg.hash()},
                                     {"config", cfg.to_json()},
                                     {"artifacts", files}});
  write_text(dir / "config.ini", cfg.to_ini());
}

std::vector<Scene> load_corpus(const std::string& path) {
  if (path.empty()) throw ConfigError("--corpus is required");
  auto scenes = read_scenes(fs::path(path));
  if (scenes.empty()) throw DataError("corpus '" + path + "' is empty");
  return scenes;
}

int cmd_generate(const Common& c, RunConfig& cfg) {
  const auto world = world_config(cfg);
  const auto gait = gait_config(cfg);
  const int n = cfg.int32("world.scenes");
  auto corpus = synth::generate_corpus(world, gait, n);
  const std::string& mode = cfg.str("world.pose_mode");
  if (mode == "2d") {
    const auto cam = camera_config(cfg);
    for (auto& s : corpus) s = synth::project_to_2d(s, cam);
  } else if (mode == "none") {
    for (auto& s : corpus) s = strip_pose(std::move(s));
  } else if (mode != "3d") {
    throw ConfigError("config key 'world.pose_mode' must be 3d, 2d or none");
  }
  const fs::path dir = run_directory(c, cfg);
  write_scenes(corpus, dir / "corpus.jsonl");
  write_manifest(dir, "generate", cfg, {dir / "corpus.jsonl"});
  std::cout << "wrote " << corpus.size() << " scenes to " << (dir / "corpus.jsonl").string() << '\n';
  return 0;
}

int cmd_train(const Common& c, RunConfig& cfg, const std::string& corpus_path, const std::string& val_path) {
  const auto model_cfg = model_config(cfg);
  const auto train_cfg = train_config(cfg);
  auto corpus = load_corpus(corpus_path);
  if (!model_cfg.use_pose)
    for (auto& s : corpus) s = strip_pose(std::move(s));
  Model model(model_cfg);
  const fs::path dir = run_directory(c, cfg);
  const nlohmann::json extra = {{"run_config", cfg.to_json()}, {"train", to_json(train_cfg)}};
  auto on_epoch = [&](const EpochStats& e, const Model& m) {
    save_checkpoint(m, dir / "checkpoint_last.json", extra);
    std::cerr << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.train_loss << " val_ade " << e.val_ade << '\n';
  };
  TrainResult result;
  if (!val_path.empty()) {
    auto val = load_corpus(val_path);
    if (!model_cfg.use_pose)
      for (auto& s : val) s = strip_pose(std::move(s));
    result = train(model, corpus, val, train_cfg, on_epoch);
  } else {
    result = train(model, corpus, train_cfg, on_epoch);
  }
  save_checkpoint(model, dir / "checkpoint.json", extra);
  {
    std::ofstream csv(dir / "loss.csv", std::ios::binary);
    write_loss_csv(result, csv);
  }
  write_json(dir / "train.json", {{"best_epoch", result.best_epoch},
                                  {"best_val_ade", result.best_val_ade},
                                  {"epochs_run", result.curve.size()},
                                  {"stopped_early", result.stopped_early},
                                  {"parameters", model.parameter_count()},
                                  {"seed", train_cfg.seed},
                                  {"config", cfg.to_json()}});
  write_manifest(dir, "train", cfg,
                 {dir / "checkpoint.json", dir / "checkpoint_last.json", dir / "loss.csv", dir / "train.json"});
  std::cout << "best epoch " << result.best_epoch << " val ADE " << result.best_val_ade << "; checkpoint "
            << (dir / "checkpoint.json").string() << '\n';
  return 0;
}

std::vector<Scene> inputs_for(const Model& model, std::vector<Scene> corpus) {
  if (!model.config().use_pose)
    for (auto& s : corpus) s = strip_pose(std::move(s));
  return corpus;
}

int cmd_eval(const Common& c, RunConfig& cfg, const std::string& ckpt, const std::string& corpus_path) {
  if (ckpt.empty()) throw ConfigError("--checkpoint is required");
  const Model model = load_checkpoint(ckpt);
  const auto corpus = inputs_for(model, load_corpus(corpus_path));
  const int k = cfg.int32("eval.k");
  const auto perturbation = eval_perturbation(cfg);
  const auto report = evaluate(model, corpus, k, perturbation, cfg.seed_for("eval"));
  const fs::path dir = run_directory(c, cfg);
  nlohmann::json j = to_json(report);
  j["run_config"] = cfg.to_json();
  j["checkpoint_hash"] = git_blob_hash(read_text(ckpt));
  write_json(dir / "report.json", j);
  const std::string table = report_table(report);
  write_text(dir / "report.txt", table);
  write_manifest(dir, "eval", cfg, {dir / "report.json", dir / "report.txt"});
  std::cout << table;
  return 0;
}

int cmd_perturb(const Common& c, RunConfig& cfg, const std::string& corpus_path) {
  const auto corpus = load_corpus(corpus_path);
  const auto out = apply_perturbation(corpus, eval_perturbation(cfg));
  const fs::path dir = run_directory(c, cfg);
  write_scenes(out, dir / "corpus.jsonl");
  write_manifest(dir, "perturb", cfg, {dir / "corpus.jsonl"});
  std::cout << "wrote " << out.size() << " perturbed scenes to " << (dir / "corpus.jsonl").string() << '\n';
  return 0;
}

int cmd_attention(const Common& c, RunConfig& cfg, const std::string& ckpt, const std::string& corpus_path) {
  if (ckpt.empty()) throw ConfigError("--checkpoint is required");
  const Model model = load_checkpoint(ckpt);
  const auto corpus = load_corpus(corpus_path);
  const auto map = joint_attention(model, corpus);
  const auto top = select_top_joints(map, static_cast<std::size_t>(cfg.int32("analysis.top_k")));
  nlohmann::json scores = nlohmann::json::object();
  for (std::size_t k = 0; k < map.scores.size(); ++k)
    scores[std::string(skeleton::kNames[static_cast<std::size_t>(map.joints[k])])] = map.scores[k];
  const fs::path dir = run_directory(c, cfg);
  write_json(dir / "attention.json", {{"joints", map.joints},
                                      {"scores", map.scores},
                                      {"named_scores", scores},
                                      {"n_scenes", map.n_scenes},
                                      {"top_k", top},
                                      {"seed", cfg.integer("seed")},
                                      {"config", cfg.to_json()}});
  write_manifest(dir, "attention", cfg, {dir / "attention.json"});
  std::cout << "top joints:";
  for (int j : top) std::cout << ' ' << skeleton::kNames[static_cast<std::size_t>(j)];
  std::cout << '\n';
  return 0;
}

int cmd_navsim(const Common& c, RunConfig& cfg, const std::string& ckpt, const std::string& corpus_path) {
  const auto params = sfm_params(cfg);
  const auto kind = nav::predictor_from_string(cfg.str("navsim.predictor"));
  std::optional<Model> model;
  if (kind == nav::PredictorKind::Model) {
    if (ckpt.empty()) throw ConfigError("navsim.predictor = model needs --checkpoint");
    model.emplace(load_checkpoint(ckpt));
  }
  const int episodes = cfg.int32("navsim.episodes");
  if (episodes < 1) throw ConfigError("config key 'navsim.episodes' must be >= 1");
  std::vector<Scene> suite;
  if (!corpus_path.empty()) {
    suite = load_corpus(corpus_path);
    if (static_cast<int>(suite.size()) > episodes) suite.resize(static_cast<std::size_t>(episodes));
  } else {
    auto world = world_config(cfg);
    world.seed = cfg.seed_for("navsim");
    suite = synth::generate_corpus(world, gait_config(cfg), episodes);
  }
  if (model && !model->config().use_pose)
    for (auto& s : suite) s = strip_pose(std::move(s));
  const fs::path dir = run_directory(c, cfg);
  std::ofstream log(dir / "episodes.jsonl", std::ios::binary);
  std::vector<nav::NavEpisode> results;
  const std::uint64_t seed = cfg.seed_for("navsim");
  for (std::size_t i = 0; i < suite.size(); ++i) {
    results.push_back(nav::run_episode(suite[i], kind, model ? &*model : nullptr, params, seed + i));
    nav::write_episode_log(results.back(), i, log);
  }
  log.close();
  const auto summary = nav::evaluate_navigation(results);
  write_json(dir / "summary.json", {{"summary", nav::to_json(summary)},
                                    {"predictor", nav::to_string(kind)},
                                    {"params", nav::to_json(params)},
                                    {"seed", seed},
                                    {"config", cfg.to_json()}});
  write_manifest(dir, "navsim", cfg, {dir / "episodes.jsonl", dir / "summary.json"});
  std::cout << std::fixed << std::setprecision(3) << "episodes " << summary.episodes << "  mean completion "
            << summary.mean_completion_time << " s  collision rate " << summary.collision_rate << " %\n";
  return 0;
}

struct PlotArgs {
  std::string kind;
  std::string input;
  std::string corpus;
  std::string baseline;
  std::string pose_model;
};

int cmd_plot(const Common& c, RunConfig& cfg, const PlotArgs& a) {
  std::string svg;
  if (a.kind == "trajectory") {
    const auto corpus = load_corpus(a.corpus);
    const int index = cfg.int32("plot.scene");
    if (index < 0 || index >= static_cast<int>(corpus.size())) throw ConfigError("plot.scene is out of range");
    const Scene& scene = corpus[static_cast<std::size_t>(index)];
    auto predict = [&](const std::string& path) -> std::optional<Matrix> {
      if (path.empty()) return std::nullopt;
      const Model m = load_checkpoint(path);
      std::vector<Scene> one = inputs_for(m, {scene});
      std::vector<const Scene*> ptrs = {&one.front()};
      return m.predict(ptrs, 1).front().front();
    };
    const auto base = predict(a.baseline);
    const auto pose = predict(a.pose_model);
    svg = plot::trajectory_svg(scene, base ? &*base : nullptr, pose ? &*pose : nullptr);
  } else if (a.kind == "attention") {
    if (a.input.empty()) throw ConfigError("--input attention.json is required");
    const std::string text = read_text(a.input);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ConfigError("input '" + a.input + "' is empty");
    const auto j = nlohmann::json::parse(text);
    if (!j.contains("scores") || j.at("scores").empty()) throw ConfigError("input '" + a.input + "' has no scores");
    JointAttentionMap map;
    map.scores = j.at("scores").get<std::vector<double>>();
    map.joints = j.at("joints").get<std::vector<int>>();
    svg = plot::attention_svg(map);
  } else if (a.kind == "navigation") {
    if (a.input.empty()) throw ConfigError("--input episodes.jsonl is required");
    const std::string text = read_text(a.input);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ConfigError("input '" + a.input + "' is empty");
    const int wanted = cfg.int32("plot.scene");
    std::istringstream in(text);
    std::string line;
    std::vector<Vec2> robot;
    std::vector<std::vector<Vec2>> neighbors;
    Vec2 start = Vec2::Zero(), goal = Vec2::Zero();
    bool found = false;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (j.at("episode").get<int>() != wanted) continue;
      found = true;
      if (j.contains("goal")) {
        start = {j["start"][0].get<double>(), j["start"][1].get<double>()};
        goal = {j["goal"][0].get<double>(), j["goal"][1].get<double>()};
        continue;
      }
      robot.emplace_back(j["position"][0].get<double>(), j["position"][1].get<double>());
      const auto& ns = j.at("neighbors");
      if (neighbors.size() < ns.size()) neighbors.resize(ns.size());
      for (std::size_t n = 0; n < ns.size(); ++n) neighbors[n].emplace_back(ns[n][0].get<double>(), ns[n][1].get<double>());
    }
    if (!found) throw ConfigError("episode " + std::to_string(wanted) + " is not in '" + a.input + "'");
    svg = plot::navigation_svg(robot, neighbors, start, goal);
  } else {
    throw ConfigError("unknown plot kind '" + a.kind + "' (trajectory, attention, navigation)");
  }
  const fs::path dir = run_directory(c, cfg);
  const fs::path out = dir / (a.kind + ".svg");
  write_text(out, svg);
  write_manifest(dir, "plot", cfg, {out});
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-augmented pedestrian trajectory prediction toolkit"};
  app.require_subcommand(1);
  Common common;
  std::string corpus, val, checkpoint, scenes, pose_mode, pose, family, k, predictor;
  PlotArgs plot_args;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "INI config file");
    sub->add_option("--out", common.out, "Output directory (overrides the run directory)");
    sub->add_option("--run-root", common.run_root, "Root of timestamped run directories");
    sub->add_option("--seed", common.seed, "Global seed");
    sub->allow_extras();
  };
  auto* gen = app.add_subcommand("generate", "Generate a synthetic pose-annotated corpus");
  add_common(gen);
  gen->add_option("--scenes", scenes, "Number of scenes (world.scenes)");
  gen->add_option("--pose-mode", pose_mode, "3d, 2d or none (world.pose_mode)");
  auto* tr = app.add_subcommand("train", "Train a model");
  add_common(tr);
  tr->add_option("--corpus", corpus, "Training corpus (JSONL)");
  tr->add_option("--val", val, "Validation corpus (JSONL); default holds out part of the training corpus");
  tr->add_option("--pose", pose, "on or off (pose.enabled)");
  tr->add_option("--family", family, "recurrent, attention or mlp (backbone.family)");
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "Model checkpoint");
  ev->add_option("--corpus", corpus, "Test corpus (JSONL)");
  ev->add_option("--k", k, "Samples per scene (eval.k)");
  auto* pe = app.add_subcommand("perturb", "Write a perturbed copy of a corpus");
  add_common(pe);
  pe->add_option("--corpus", corpus, "Input corpus (JSONL)");
  auto* at = app.add_subcommand("attention", "Joint attention map of a per-frame-joint model");
  add_common(at);
  at->add_option("--checkpoint", checkpoint, "Model checkpoint");
  at->add_option("--corpus", corpus, "Corpus (JSONL)");
  auto* nv = app.add_subcommand("navsim", "Robot navigation episodes");
  add_common(nv);
  nv->add_option("--checkpoint", checkpoint, "Predictor checkpoint (navsim.predictor = model)");
  nv->add_option("--corpus", corpus, "Scenes to replay; default is a synthetic suite");
  nv->add_option("--predictor", predictor, "none, model or oracle (navsim.predictor)");
  auto* pl = app.add_subcommand("plot", "Render an SVG figure");
  add_common(pl);
  pl->add_option("--kind", plot_args.kind, "trajectory, attention or navigation")->required();
  pl->add_option("--input", plot_args.input, "attention.json or episodes.jsonl");
  pl->add_option("--corpus", plot_args.corpus, "Corpus for trajectory plots");
  pl->add_option("--baseline", plot_args.baseline, "Baseline checkpoint (red)");
  pl->add_option("--pose-model", plot_args.pose_model, "Pose model checkpoint (blue)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    RunConfig cfg;
    if (!common.config_path.empty()) cfg.load_file(common.config_path);
    if (!common.seed.empty()) cfg.set("seed", common.seed);
    if (!scenes.empty()) cfg.set("world.scenes", scenes);
    if (!pose_mode.empty()) cfg.set("world.pose_mode", pose_mode);
    if (!pose.empty()) cfg.set("pose.enabled", pose);
    if (!family.empty()) cfg.set("backbone.family", family);
    if (!k.empty()) cfg.set("eval.k", k);
    if (!predictor.empty()) cfg.set("navsim.predictor", predictor);
    apply_overrides(cfg, sub->remaining());

    const std::string name = sub->get_name();
    if (name == "generate") return cmd_generate(common, cfg);
    if (name == "train") return cmd_train(common, cfg, corpus, val);
    if (name == "eval") return cmd_eval(common, cfg, checkpoint, corpus);
    if (name == "perturb") return cmd_perturb(common, cfg, corpus);
    if (name == "attention") return cmd_attention(common, cfg, checkpoint, corpus);
    if (name == "navsim") return cmd_navsim(common, cfg, checkpoint, corpus);
    if (name == "plot") return cmd_plot(common, cfg, plot_args);
    throw ConfigError("unknown subcommand '" + name + "'");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
