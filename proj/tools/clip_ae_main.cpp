// clip-ae: command-line entry point for synthesis, training, localization,
// evaluation, ablation and gradient checking.

#include "clip_ae/gradcheck.hpp"
#include "clip_ae/serialization.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace clip_ae;

namespace {

struct Options {
  int threads = 1;
  std::optional<std::uint64_t> seed;

  std::string out;
  std::string manifest;
  std::string config;
  std::string checkpoint;
  std::string proposals;
  std::string tcam_out;

  int videos = 30;
  int classes = 3;
  int frames = 40;
  int dim = 16;

  std::vector<double> thresholds;
  bool no_align = false;
};

// --seed beats CLIP_AE_SEED, which beats the config file.
std::optional<std::uint64_t> resolve_seed(const Options& o) {
  if (o.seed) return o.seed;
  if (const char* env = std::getenv("CLIP_AE_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    require(end != nullptr && *end == '\0', ErrorCode::InvalidArgument, "CLIP_AE_SEED must be an unsigned integer");
    return v;
  }
  return std::nullopt;
}

RunConfig run_config(const Options& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (auto s = resolve_seed(o)) rc.train.seed = *s;
  if (o.threads > 1) rc.train.threads = o.threads;
  return rc;
}

int cmd_synth(const Options& o) {
  SynthOptions so;
  so.seed = resolve_seed(o).value_or(1);
  so.num_videos = o.videos;
  so.num_classes = o.classes;
  so.frames = o.frames;
  so.dim = o.dim;
  const Dataset ds = synth_dataset(so, o.out);
  std::cout << "wrote " << ds.videos.size() << " videos to " << (fs::path(o.out) / "manifest.json").string() << '\n';
  return 0;
}

int cmd_train(const Options& o) {
  const RunConfig rc = run_config(o);
  const Dataset ds = load_manifest(o.manifest);
  const TrainResult result = train(ds, rc.train);
  write_json_file(to_json(make_checkpoint(result, rc)), o.out);
  for (const auto& e : result.loss_history)
    std::printf("epoch %3d  de_cor %.6f  ins_dis %.6f  self %.6f  cls %.6f\n", e.epoch, e.ssl.de_cor, e.ssl.ins_dis,
                e.ssl.total, e.cls);
  const auto truth = video_classes(ds);
  if (std::none_of(truth.begin(), truth.end(), [](int c) { return c < 0; }))
    std::printf("pseudo-label purity %.4f\n", clustering_purity(result.final_labels.labels, truth));
  return 0;
}

int cmd_localize(const Options& o) {
  const Checkpoint ck = checkpoint_from_json(read_json_file(o.checkpoint));
  const Dataset ds = load_manifest(o.manifest);
  const int threads = std::max(o.threads, ck.run_config.train.threads);
  const LocalizationOutput loc = localize_dataset(ck.params, ck.model_config, ds, ck.run_config.localization, threads);
  write_json_file(proposals_to_json(loc.proposals), o.out);
  if (!o.tcam_out.empty()) write_json_file(tcams_to_json(loc.tcams), o.tcam_out);
  std::cout << "wrote " << loc.proposals.size() << " proposals to " << o.out << '\n';
  return 0;
}

int cmd_eval(const Options& o) {
  const auto proposals = proposals_from_json(read_json_file(o.proposals));
  const Dataset ds = load_manifest(o.manifest);
  const auto gts = ds.ground_truth();
  const auto thresholds = o.thresholds.empty() ? default_iou_thresholds() : o.thresholds;
  for (double t : thresholds)
    require(t > 0.0 && t <= 1.0, ErrorCode::InvalidArgument, "IoU thresholds must lie in (0, 1]");
  const auto scored = o.no_align ? proposals : align_proposal_classes(proposals, gts, ds.num_classes());
  const EvalReport report = evaluate(scored, gts, thresholds);
  write_json_file(to_json(report), o.out);
  for (std::size_t k = 0; k < report.thresholds.size(); ++k)
    std::printf("mAP@%.2f  %6.2f\n", report.thresholds[k], 100.0 * report.map[k]);
  for (const auto& [name, v] : report.averages) std::printf("AVG(%s)  %6.2f\n", name.c_str(), 100.0 * v);
  return 0;
}

int cmd_ablate(const Options& o) {
  const RunConfig rc = run_config(o);
  const Dataset ds = load_manifest(o.manifest);
  const auto rows = run_ablation(ds, rc.train, rc.localization);
  write_json_file(ablation_to_json(rows), o.out);
  const std::string table = format_ablation_table(rows);
  std::ofstream(o.out + ".txt") << table;
  std::cout << table;
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const GradCheckProblem p = make_gradcheck_problem(resolve_seed(o).value_or(7));
  GradCheckOptions opts;
  opts.threads = o.threads;
  const GradCheckReport report = gradient_check(p.params, p.config, p.videos, p.labels, &p.banks, opts);
  for (const auto& t : report.tensors)
    std::printf("%-18s entries %4ld  checked %4ld  max_rel_error %.3e\n", t.name.c_str(), static_cast<long>(t.entries),
                static_cast<long>(t.checked), t.max_rel_error);
  const bool ok = report.max_rel_error < 1e-4;
  std::printf("max_rel_error %.6e (%s, tolerance 1e-4)\n", report.max_rel_error, ok ? "pass" : "FAIL");
  return ok ? 0 : 1;
}

std::string config_defaults_footer() {
  return "\nConfig file keys and defaults (any subset may be given; unknown keys are rejected):\n" +
         to_json(RunConfig{}).dump(2) + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clip-ae: unsupervised temporal action localization with audio-visual fusion and cross-view attention"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--threads", o.threads, "Worker threads for per-video work")->capture_default_str()->check(CLI::PositiveNumber);

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Random seed (overrides CLIP_AE_SEED and the config file)");
  };

  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  add_seed(synth);
  synth->add_option("--videos", o.videos, "Number of videos")->capture_default_str();
  synth->add_option("--classes", o.classes, "Number of action classes")->capture_default_str();
  synth->add_option("--frames", o.frames, "Segments per video")->capture_default_str();
  synth->add_option("--dim", o.dim, "Feature dimension of every modality")->capture_default_str();
  synth->add_option("--out", o.out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train on a manifest and write a checkpoint");
  add_seed(train_cmd);
  train_cmd->add_option("--manifest", o.manifest, "Dataset manifest JSON")->required();
  train_cmd->add_option("--config", o.config, "Config JSON");
  train_cmd->add_option("--out", o.out, "Checkpoint path")->required();
  train_cmd->footer(config_defaults_footer());

  auto* localize = app.add_subcommand("localize", "Produce proposals from a checkpoint");
  localize->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON")->required();
  localize->add_option("--manifest", o.manifest, "Dataset manifest JSON")->required();
  localize->add_option("--out", o.out, "Proposals JSON")->required();
  localize->add_option("--tcam-out", o.tcam_out, "Optional JSON dump of every video's TCAM");

  auto* eval = app.add_subcommand("eval", "Score proposals against manifest ground truth");
  eval->add_option("--proposals", o.proposals, "Proposals JSON")->required();
  eval->add_option("--manifest", o.manifest, "Dataset manifest JSON")->required();
  eval->add_option("--thresholds", o.thresholds, "IoU thresholds (default 0.1:0.1:0.7 and 0.5:0.05:0.95)");
  eval->add_flag("--no-align", o.no_align, "Score class ids as given instead of aligning clusters to classes");
  eval->add_option("--out", o.out, "Report JSON")->required();

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the four CAF/CCP configurations");
  add_seed(ablate);
  ablate->add_option("--manifest", o.manifest, "Dataset manifest JSON")->required();
  ablate->add_option("--config", o.config, "Config JSON");
  ablate->add_option("--out", o.out, "Table JSON (a .txt rendering is written alongside)")->required();
  ablate->footer(config_defaults_footer());

  auto* gradcheck = app.add_subcommand("gradcheck", "Check analytic gradients against central finite differences");
  add_seed(gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return 2;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*train_cmd) return cmd_train(o);
    if (*localize) return cmd_localize(o);
    if (*eval) return cmd_eval(o);
    if (*ablate) return cmd_ablate(o);
    if (*gradcheck) return cmd_gradcheck(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
