#include "aligncap/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "aligncap/checkpoint.hpp"
#include "aligncap/training.hpp"

namespace aligncap {

namespace {

// Bad input that the user must fix on the command line (exit 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
};

TrainingConfig load_config(const Globals& g) {
  TrainingConfig c = g.config ? TrainingConfig::load(*g.config) : TrainingConfig{};
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("cannot open {}", path));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void configure_logging() {
  // Unregistered logger: run_cli may be entered more than once per process.
  spdlog::set_default_logger(std::make_shared<spdlog::logger>(
      "aligncap", std::make_shared<spdlog::sinks::stderr_sink_st>()));
  const char* env = std::getenv("ALIGNCAP_LOG");
  const std::string level = env ? env : "error";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else throw UsageError(fmt::format("ALIGNCAP_LOG must be error, info or debug, got '{}'", level));
}

// ---- god -------------------------------------------------------------------

struct GodArgs {
  std::string detections, target, select = "sample", mode;
  std::optional<std::string> scene;
  std::optional<std::size_t> k, j;
};

int cmd_god(const Globals& g, const GodArgs& a, std::ostream& out) {
  TrainingConfig cfg = load_config(g);
  if (a.k) cfg.god.k = *a.k;
  if (a.j) cfg.god.j = *a.j;
  if (!a.mode.empty()) cfg.god.discrepancy_mode = parse_discrepancy_mode(a.mode);
  cfg.god.validate();
  const auto detections = load_detections(a.detections);
  const BBox target = parse_bbox(a.target);

  Rng rng = Rng(cfg.seed).split("god");
  const auto views = build_candidates(target, detections, cfg.god, rng);
  std::string classes;
  for (const std::string& c : rank_classes(detections, cfg.god.k)) {
    classes += classes.empty() ? c : "," + c;
  }
  out << "classes\t" << classes << '\n';
  if (a.select == "sample") {
    for (std::size_t i = 0; i < views.size(); ++i) {
      const CandidateView& v = views[i];
      out << "view\t" << i << '\t' << (v.is_target ? "target" : v.source_class) << '\t'
          << format_bbox(v.bbox) << '\n';
    }
    return kExitOk;
  }
  // Inference: pick the most discrepant view.
  SceneInput scene;
  if (a.scene) {
    scene = SceneInput::load(*a.scene);
  } else if (cfg.god.discrepancy_mode == DiscrepancyMode::FeatureCosine) {
    throw UsageError("--select inference with feature-cosine needs --scene");
  } else {
    scene = SceneInput::from_values(cfg.dims.grid, cfg.dims.channels,
                                    std::vector<double>(cfg.dims.grid * cfg.dims.grid * cfg.dims.channels));
  }
  ParameterStore store(cfg.seed);
  const FrozenVisionEncoder encoder(store, scene.grid, scene.channels, cfg.dims.d_v);
  const SelectedView pick =
      select_inference_view(views, target, scene, encoder, cfg.god.discrepancy_mode);
  out << "selected\t" << (pick.view.is_target ? "target" : pick.view.source_class) << '\t'
      << format_bbox(pick.view.bbox) << '\t' << fmt::format("{:.6f}", pick.discrepancy) << '\n';
  return kExitOk;
}

// ---- grad-check ------------------------------------------------------------

int cmd_grad_check(const Globals& g, const std::string& module, double corrupt,
                   std::ostream& out) {
  const TrainingConfig base = load_config(g);
  // Minimized dims; seed, loss weights, dropout and GOD mode come from the config.
  TrainingConfig cfg = TrainingConfig::minimized();
  cfg.seed = base.seed;
  cfg.weights = base.weights;
  cfg.dropout_p = base.dropout_p;
  cfg.god.discrepancy_mode = base.god.discrepancy_mode;

  const auto checks = check_model_gradients(cfg, module, corrupt);
  std::size_t failed = 0;
  for (const GroupCheck& c : checks) {
    const bool ok = c.report.max_rel_error <= kGradCheckTolerance;
    failed += ok ? 0 : 1;
    out << fmt::format("{}\t{}\t{}\t{:.3e}\t{}\n", c.module, c.parameter, c.size,
                       c.report.max_rel_error, ok ? "ok" : "FAIL");
  }
  out << fmt::format("groups {} failed {} tolerance {:.0e}\n", checks.size(), failed,
                     kGradCheckTolerance);
  return failed == 0 ? kExitOk : kExitFailure;
}

// ---- train / eval / demo-caption ----------------------------------------------

std::vector<SyntheticExample> dataset_for(const TrainingConfig& cfg, const AlignCapModel& model,
                                          const std::optional<std::string>& path) {
  if (!path) {
    return make_synthetic_dataset(cfg.seed, cfg.dataset_size, cfg.dims.grid, cfg.dims.channels,
                                  model.tags());
  }
  const std::string text = read_file(*path);
  if (normalize_text(text).empty()) throw UsageError(fmt::format("data file {} is empty", *path));
  auto data = parse_dataset(text, cfg.dims.grid, cfg.dims.channels, model.tags());
  if (data.empty()) throw UsageError(fmt::format("data file {} has no examples", *path));
  return data;
}

std::string losses_json(const LossValues& v) {
  nlohmann::ordered_json j;
  j["l_tag"] = v.l_tag;
  j["l_cap"] = v.l_cap;
  j["l_cond"] = v.l_cond;
  j["l_multi"] = v.l_multi;
  j["total"] = v.total;
  return j.dump();
}

int cmd_train(const Globals& g, const std::string& out_dir,
              const std::optional<std::string>& data_path, std::ostream& out) {
  const TrainingConfig cfg = load_config(g);
  AlignCapModel model(cfg);
  const auto data = dataset_for(cfg, model, data_path);
  TrainOptions opts;
  opts.out_dir = out_dir;
  opts.on_record = [&](const MetricRecord& r) {
    if (r.step % 25 == 0 || r.step == cfg.steps) {
      spdlog::info("step {} total {:.6f}", r.step, r.losses.total);
    }
  };
  const auto records = train(model, data, opts);
  out << "initial\t" << losses_json(records.front().losses) << '\n';
  out << "final\t" << losses_json(records.back().losses) << '\n';
  out << "metrics\t" << (std::filesystem::path(out_dir) / "metrics.jsonl").string() << '\n';
  out << "checkpoint\t" << (std::filesystem::path(out_dir) / "checkpoint").string() << '\n';
  return kExitOk;
}

// Rebuilds the model a checkpoint was trained with. An explicit --config must
// agree on dims.
std::unique_ptr<AlignCapModel> model_from_checkpoint(const Globals& g, const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  TrainingConfig cfg = ckpt.config;
  if (g.config) {
    const TrainingConfig given = load_config(g);
    if (!(given.dims == ckpt.config.dims)) {
      throw IncompatibleCheckpoint(
          fmt::format("checkpoint {} was trained with different dims than config {}", path,
                      *g.config));
    }
  }
  if (g.seed) cfg.seed = *g.seed;
  auto model = std::make_unique<AlignCapModel>(cfg);
  apply_checkpoint(*model, ckpt);
  return model;
}

int cmd_eval(const Globals& g, const std::string& ckpt, const std::string& data_path,
             std::ostream& out) {
  const auto model = model_from_checkpoint(g, ckpt);
  const auto data = dataset_for(model->config(), *model, data_path);
  out << losses_json(evaluate(*model, data)) << '\n';
  return kExitOk;
}

int cmd_demo_caption(const Globals& g, const std::string& ckpt, const std::string& scene_path,
                     const std::string& target, const std::optional<std::string>& detections,
                     std::size_t top_k, std::ostream& out) {
  const auto model = model_from_checkpoint(g, ckpt);
  const SceneInput scene = SceneInput::load(scene_path);
  const auto dets = detections ? load_detections(*detections) : std::vector<Detection>{};
  const CaptionPrediction p = model->caption(scene, parse_bbox(target), dets, top_k, 20,
                                             Rng(model->config().seed).split("demo"));
  std::string tags, ids;
  for (const std::string& t : p.tags) tags += tags.empty() ? t : "," + t;
  for (TokenId id : p.tokens) ids += ids.empty() ? std::to_string(id) : " " + std::to_string(id);
  out << "view\t" << (p.view.is_target ? "target" : p.view.source_class) << '\t'
      << format_bbox(p.view.bbox) << '\n';
  out << "tags\t" << tags << '\n';
  out << "tokens\t" << ids << '\n';
  out << "caption\t" << p.caption << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region captioning pipeline at desk scale", "aligncap"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--config", g.config, "TrainingConfig JSON file")->check(CLI::ExistingFile);

  GodArgs god;
  auto* god_cmd = app.add_subcommand("god", "Rank classes and build candidate views");
  god_cmd->add_option("--detections", god.detections, "Detections JSON")
      ->required()
      ->check(CLI::ExistingFile);
  god_cmd->add_option("--target", god.target, "Target box x0,y0,x1,y1")->required();
  god_cmd->add_option("--k", god.k, "Top classes kept");
  god_cmd->add_option("--j", god.j, "Views including the target");
  god_cmd->add_option("--select", god.select, "sample or inference")
      ->check(CLI::IsMember({"sample", "inference"}));
  god_cmd->add_option("--mode", god.mode, "Discrepancy for inference selection")
      ->check(CLI::IsMember({"feature-cosine", "one-minus-iou"}));
  god_cmd->add_option("--scene", god.scene, "Scene JSON (feature-cosine selection)")
      ->check(CLI::ExistingFile);

  std::string module;
  double corrupt = 0.0;
  auto* grad_cmd = app.add_subcommand("grad-check", "Whole-model finite-difference check");
  grad_cmd->add_option("--module", module, "Restrict to one module");
  grad_cmd->add_option("--corrupt-gradient", corrupt)->group("");  // test hook

  std::string out_dir, ckpt, data_path, scene_path, target;
  std::optional<std::string> train_data, detections;
  std::size_t top_k = 4;
  auto* train_cmd = app.add_subcommand("train", "Train and write metrics + checkpoint");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_option("--data", train_data, "Dataset JSON (default: generated)")
      ->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("eval", "Mean eval-mode losses of a checkpoint");
  eval_cmd->add_option("--checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data_path, "Dataset JSON")->required()->check(CLI::ExistingFile);

  auto* demo_cmd = app.add_subcommand("demo-caption", "Caption one region greedily");
  demo_cmd->add_option("--checkpoint", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  demo_cmd->add_option("--scene", scene_path, "Scene JSON")->required()->check(CLI::ExistingFile);
  demo_cmd->add_option("--target", target, "Target box x0,y0,x1,y1")->required();
  demo_cmd->add_option("--detections", detections, "Detections JSON")->check(CLI::ExistingFile);
  demo_cmd->add_option("--top-k", top_k, "Tags to show and prompt with");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    configure_logging();
    if (god_cmd->parsed()) return cmd_god(g, god, out);
    if (grad_cmd->parsed()) return cmd_grad_check(g, module, corrupt, out);
    if (train_cmd->parsed()) return cmd_train(g, out_dir, train_data, out);
    if (eval_cmd->parsed()) return cmd_eval(g, ckpt, data_path, out);
    if (demo_cmd->parsed()) return cmd_demo_caption(g, ckpt, scene_path, target, detections, top_k, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IncompatibleCheckpoint& e) {
    err << "incompatible checkpoint: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace aligncap
