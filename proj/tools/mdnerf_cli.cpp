#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "mdnerf/mdnerf.hpp"

namespace fs = std::filesystem;
using namespace mdnerf;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

int run_generate(const std::string& scene_name, int n_views, int resolution,
                 uint64_t seed, const fs::path& out) {
  SceneSpec scene = preset_scene(scene_name, seed);
  std::vector<CameraView> views = orbit_views(scene, n_views, resolution, resolution);
  io::save_dataset(views, out, &scene);
  std::cout << "wrote " << views.size() << " views to " << out.string() << "\n";
  return 0;
}

TrainConfig load_config(const std::string& config_path) {
  if (config_path.empty()) return TrainConfig{};
  return train_config_from_json(nlohmann::json::parse(io::read_file(config_path)));
}

int run_train(const fs::path& data, const std::string& config_path,
              const fs::path& out, std::optional<uint64_t> seed,
              std::optional<int> steps, std::optional<double> tau,
              std::optional<int> threads) {
  TrainConfig config = load_config(config_path);
  if (seed) config.seed = *seed;
  if (steps) config.total_steps = *steps;
  if (tau) config.tau = *tau;
  if (threads) config.threads = *threads;

  const std::vector<CameraView> views = io::load_dataset(data);
  if (views.size() < 2) {
    std::cerr << "error: >= 2 views required\n";
    return kExitData;
  }
  const std::optional<SceneSpec> scene = io::load_scene_spec(data);
  DepthProvider provider =
      scene ? make_distorted_provider(*scene, config.seed)
            : DepthProvider(AmbiguityOracleConfig{});

  TrainResult result = train(views, std::move(provider), config, scene);

  fs::create_directories(out);
  save_field_checkpoint(result.field, out / "field.ckpt");
  save_provider_checkpoint(result.provider, out / "provider.ckpt");
  write_loss_log_csv(result.loss_log, out / "loss_log.csv");
  {
    nlohmann::json j = train_config_to_json(config);
    j["t_near"] = result.t_near;
    j["t_far"] = result.t_far;
    std::ofstream cfg_out(out / "config.json");
    cfg_out << j.dump(2) << "\n";
  }
  std::cout << "trained " << config.total_steps << " steps; checkpoints in "
            << out.string() << "\n";
  if (result.degenerate_fit_skips > 0)
    std::cout << "degenerate-fit skips: " << result.degenerate_fit_skips << "\n";
  return 0;
}

struct RunContext {
  RadianceFieldGrid field{2, 2, 2, Aabb{Vec3(-1, -1, -1), Vec3(1, 1, 1)}};
  double t_near = 0.1;
  double t_far = 10.0;
  int n_samples = 64;
  double opacity_threshold = 0.5;
  int threads = 1;
};

RunContext load_run(const fs::path& ckpt_dir) {
  RunContext ctx;
  ctx.field = load_field_checkpoint(ckpt_dir / "field.ckpt");
  const fs::path config_path = ckpt_dir / "config.json";
  if (fs::exists(config_path)) {
    const nlohmann::json j = nlohmann::json::parse(io::read_file(config_path));
    if (j.contains("t_near")) ctx.t_near = j.at("t_near").get<double>();
    if (j.contains("t_far")) ctx.t_far = j.at("t_far").get<double>();
    if (j.contains("n_samples_per_ray"))
      ctx.n_samples = j.at("n_samples_per_ray").get<int>();
    if (j.contains("opacity_threshold"))
      ctx.opacity_threshold = j.at("opacity_threshold").get<double>();
  }
  return ctx;
}

int run_render(const fs::path& data, const fs::path& ckpt_dir, const fs::path& out,
               std::optional<int> threads) {
  const std::vector<CameraView> views = io::load_dataset(data);
  RunContext ctx = load_run(ckpt_dir);
  if (threads) ctx.threads = *threads;
  fs::create_directories(out);
  for (const auto& view : views) {
    ImageRgb rendered(view.height(), view.width(), 3);
    Image<double> depth(view.height(), view.width(), 1);
    detail::parallel_chunks(view.height(), ctx.threads, [&](long y0, long y1, int) {
      for (long y = y0; y < y1; ++y)
        for (int x = 0; x < view.width(); ++x) {
          const Ray ray =
              pixel_ray(view, x, static_cast<double>(y), ctx.t_near, ctx.t_far);
          const RenderResult r = render_ray(ctx.field, ray, ctx.n_samples);
          const Vec3 color = r.composited(ctx.field.background());
          for (int c = 0; c < 3; ++c)
            rendered.at(static_cast<int>(y), x, c) = std::clamp(color[c], 0.0, 1.0);
          depth.at(static_cast<int>(y), x) =
              r.depth * depth_axis_cosine(view, x, static_cast<double>(y));
        }
    });
    const std::string id = std::to_string(view.view_id);
    io::save_ppm(out / ("render_" + id + ".ppm"), rendered);
    io::save_pfm(out / ("render_depth_" + id + ".pfm"), depth);
  }
  std::cout << "rendered " << views.size() << " views to " << out.string() << "\n";
  return 0;
}

int run_evaluate(const fs::path& data, const std::string& ckpt_dir,
                 const std::string& scene_name, std::optional<int> threads) {
  const std::vector<CameraView> views = io::load_dataset(data);
  EvaluationReport report;
  if (!ckpt_dir.empty()) {
    RunContext ctx = load_run(ckpt_dir);
    if (threads) ctx.threads = *threads;
    report = evaluate_field(ctx.field, views, ctx.n_samples, ctx.t_near, ctx.t_far,
                            ctx.opacity_threshold, scene_name, ctx.threads);
  } else {
    // Ground truth against itself: identity-rendering baseline row.
    report.scene = scene_name;
    report.n_views = static_cast<int>(views.size());
    report.psnr = 99.0;
    report.ssim = 1.0;
    report.scale_factor_s = 1.0;
  }
  std::cout << report.csv_header() << "\n" << report.csv_row() << "\n";
  return 0;
}

int run_ablate(const std::string& scene_name, int n_seeds, int n_views, int steps,
               uint64_t seed, const fs::path& out, std::optional<int> threads) {
  SceneSpec scene = preset_scene(scene_name, seed);
  TrainConfig base;
  base.total_steps = steps;
  if (threads) base.threads = *threads;
  std::vector<AblationVariant> variants = {
      {"photometric-only",
       [](TrainConfig& c) {
         c.coeff_seen = c.coeff_mde = c.coeff_reg = c.coeff_unseen = 0;
       }},
      {"seen-global-fit",
       [](TrainConfig& c) {
         c.coeff_unseen = 0;
         c.global_fit = true;
       }},
      {"seen-patch-fit", [](TrainConfig& c) { c.coeff_unseen = 0; }},
      {"full", [](TrainConfig&) {}},
  };
  AblationTable table = run_ablation(
      scene, base, variants, n_seeds, n_views, 48,
      [&scene](uint64_t s) { return make_distorted_provider(scene, s); });
  fs::create_directories(out);
  io::write_file(out / "ablation.csv", table.to_csv());
  io::write_file(out / "ablation.md", table.to_markdown());
  std::cout << table.to_markdown();
  return 0;
}

int run_mask_dump(const fs::path& data, const fs::path& ckpt_dir, int source_id,
                  int target_id, std::optional<double> tau_flag,
                  const fs::path& out) {
  const std::vector<CameraView> views = io::load_dataset(data);
  const std::optional<SceneSpec> scene = io::load_scene_spec(data);
  const CameraView* source = nullptr;
  const CameraView* target = nullptr;
  for (const auto& view : views) {
    if (view.view_id == source_id) source = &view;
    if (view.view_id == target_id) target = &view;
  }
  if (!source || !target) {
    std::cerr << "error: source/target view id not in dataset\n";
    return kExitData;
  }
  RunContext ctx = load_run(ckpt_dir);
  TrainConfig config;
  config.n_samples_per_ray = ctx.n_samples;
  config.opacity_threshold = ctx.opacity_threshold;
  const double diag = scene ? scene->bounds.diagonal() : 6.93;
  const double tau = tau_flag ? *tau_flag : 0.05 * diag;

  DepthProvider provider = scene ? make_distorted_provider(*scene, 0)
                                 : DepthProvider(AmbiguityOracleConfig{});
  if (!source->gt_depth) {
    std::cerr << "error: source view lacks depth\n";
    return kExitData;
  }
  const DepthMap provider_depth = provider.predict(source->image, *source->gt_depth);

  auto render_depth = [&](const CameraView& view) {
    DepthMap depth(view.height(), view.width(), DepthFrame::kAbsolute);
    for (int y = 0; y < view.height(); ++y)
      for (int x = 0; x < view.width(); ++x) {
        const Ray ray = pixel_ray(view, x, y, ctx.t_near, ctx.t_far);
        const RenderResult r = render_ray(ctx.field, ray, ctx.n_samples);
        depth.at(y, x) = r.depth * depth_axis_cosine(view, x, y);
        depth.validity.at(y, x) = r.opacity >= ctx.opacity_threshold ? 1 : 0;
      }
    return depth;
  };
  const ConfidenceMask mask = build_mask_seen(
      provider_depth, render_depth(*source), render_depth(*target),
      source->intrinsics, RelativePose::between(*source, *target), tau,
      source_id, target_id);
  io::save_pbm(out, mask.values);
  std::cout << "mask coverage " << mask.coverage << " written to " << out.string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot radiance-field training with monocular depth distillation"};
  app.require_subcommand(1);

  std::string data, out = "out", config_path, ckpt, scene_name = "box";
  std::optional<uint64_t> seed_flag;
  std::optional<int> steps_flag, threads_flag;
  std::optional<double> tau_flag;
  int n_views = 8, resolution = 64, n_seeds = 3;
  int source_id = 0, target_id = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed_flag, "RNG seed");
    cmd->add_option("--threads", threads_flag, "worker thread cap");
  };

  CLI::App* generate = app.add_subcommand("generate", "trace a synthetic dataset");
  generate->add_option("--scene", scene_name, "preset scene name");
  generate->add_option("--views", n_views, "number of views");
  generate->add_option("--resolution", resolution, "image resolution");
  generate->add_option("--out", out, "output dataset directory")->required();
  add_common(generate);

  CLI::App* train_cmd = app.add_subcommand("train", "train field and provider");
  train_cmd->add_option("--data", data, "dataset directory")->required();
  train_cmd->add_option("--config", config_path, "flat JSON training config");
  train_cmd->add_option("--out", out, "run output directory");
  train_cmd->add_option("--steps", steps_flag, "override total steps");
  train_cmd->add_option("--tau", tau_flag, "confidence threshold");
  add_common(train_cmd);

  CLI::App* render_cmd = app.add_subcommand("render", "render dataset poses");
  render_cmd->add_option("--data", data, "dataset directory")->required();
  render_cmd->add_option("--ckpt", ckpt, "run directory with field.ckpt")->required();
  render_cmd->add_option("--out", out, "output directory");
  add_common(render_cmd);

  CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "score a checkpoint");
  evaluate_cmd->add_option("--data", data, "dataset directory")->required();
  evaluate_cmd->add_option("--ckpt", ckpt, "run directory (omit for gt-vs-gt)");
  evaluate_cmd->add_option("--scene", scene_name, "scene label for the CSV");
  add_common(evaluate_cmd);

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "paired component ablations");
  ablate_cmd->add_option("--scene", scene_name, "preset scene name");
  ablate_cmd->add_option("--seeds", n_seeds, "number of paired seeds");
  ablate_cmd->add_option("--views", n_views, "views per dataset");
  ablate_cmd->add_option("--steps", steps_flag, "steps per run");
  ablate_cmd->add_option("--out", out, "output directory");
  add_common(ablate_cmd);

  CLI::App* mask_cmd = app.add_subcommand("mask-dump", "dump a confidence mask");
  mask_cmd->add_option("--data", data, "dataset directory")->required();
  mask_cmd->add_option("--ckpt", ckpt, "run directory")->required();
  mask_cmd->add_option("--source", source_id, "source view id");
  mask_cmd->add_option("--target", target_id, "target view id");
  mask_cmd->add_option("--tau", tau_flag, "confidence threshold");
  mask_cmd->add_option("--out", out, "output PBM path");
  add_common(mask_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  try {
    if (generate->parsed())
      return run_generate(scene_name, n_views, resolution, seed_flag.value_or(0), out);
    if (train_cmd->parsed())
      return run_train(data, config_path, out, seed_flag, steps_flag, tau_flag,
                       threads_flag);
    if (render_cmd->parsed()) return run_render(data, ckpt, out, threads_flag);
    if (evaluate_cmd->parsed())
      return run_evaluate(data, ckpt, scene_name, threads_flag);
    if (ablate_cmd->parsed())
      return run_ablate(scene_name, n_seeds, n_views, steps_flag.value_or(400),
                        seed_flag.value_or(0), out, threads_flag);
    if (mask_cmd->parsed())
      return run_mask_dump(data, ckpt, source_id, target_id, tau_flag, out);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const GeometryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
