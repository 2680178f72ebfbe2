// hotspot: command-line front end.
#include "hotspot/checkpoint.hpp"
#include "hotspot/inference.hpp"
#include "hotspot/synthetic.hpp"
#include "hotspot/trainer.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace hotspot;

namespace {

struct Options {
  // shared
  std::string config, data, model, out, split = "val", stats_split = "train";
  std::uint64_t seed = 0;
  // gen
  int count = 16, val_count = 0, test_count = 0;
  Index size = 640;
  std::string preset = "default";
  bool force = false;
  // train
  int epochs = 200, batch = 16, eval_every = 1, classes = 1;
  double lr = 0.001, lr_min = 0.0, weight_decay = 0.0005, eval_conf = 0.001;
  Index input_size = 224;
  std::string eval_split = "val";
  bool flip = true, crop = true;
  // infer / eval / robust
  std::string input, annotate_out, suite = "all", report, csv;
  double conf = 0.25, nms_iou = 0.5, iou = 0.5;
  int max_det = 300;
  // bench
  int runs = 10;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Reads "key=value" lines into "--key=value" tokens. Keys must name an
// option of the subcommand.
std::vector<std::string> config_tokens(const fs::path& path, const CLI::App& sub) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open config file");
  std::vector<std::string> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config" || key == "help" || !sub.get_option_no_throw("--" + key))
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": unknown key '" + key + "' for " +
                               sub.get_name());
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

void need(const std::string& value, const char* flag) {
  if (value.empty()) throw CLI::RequiredError(flag);
}

ModelConfig model_config(const Options& o) {
  ModelConfig mc;
  mc.backbone.input_h = mc.backbone.input_w = o.input_size;
  mc.num_classes = o.classes;
  return mc;
}

InferenceConfig inference_config(const Options& o, double conf) {
  InferenceConfig c;
  c.conf_threshold = conf;
  c.nms.iou_threshold = o.nms_iou;
  c.nms.max_detections = o.max_det;
  return c;
}

bool has_split(const fs::path& root, const std::string& split) {
  return fs::exists(root / "manifest.txt") && !read_manifest(root, split).empty();
}

int cmd_gen(const Options& o) {
  need(o.out, "--out");
  const fs::path root(o.out);
  if (fs::exists(root) && !fs::is_directory(root)) throw std::runtime_error(o.out + ": exists and is not a directory");
  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!o.force) throw std::runtime_error(o.out + ": directory is not empty (use --force to overwrite)");
    fs::remove_all(root);
  }
  if (o.count < 1 || o.val_count < 0 || o.test_count < 0) throw std::runtime_error("gen: counts must be non-negative, train count positive");
  SceneSpec spec = scene_preset(o.preset);
  spec.width = spec.height = o.size;
  fs::create_directories(root);
  const std::array<std::pair<const char*, int>, 3> splits{{{"train", o.count}, {"val", o.val_count}, {"test", o.test_count}}};
  for (std::size_t s = 0; s < splits.size(); ++s) {
    if (splits[s].second == 0) continue;
    generate_split(spec, splits[s].second, o.seed + 1000003ull * s, root, splits[s].first);
    std::cout << splits[s].first << " " << splits[s].second << "\n";
  }
  return 0;
}

int cmd_train(const Options& o) {
  need(o.data, "--data");
  need(o.out, "--out");
  const fs::path root(o.data);
  DatasetSplit train_split = load_split(root, "train");
  DatasetSplit eval_split = has_split(root, o.eval_split) ? load_split(root, o.eval_split) : train_split;
  Model<float> model = build_model<float>(model_config(o), o.seed);
  TrainConfig tc;
  tc.lr0 = o.lr;
  tc.lr_min = o.lr_min;
  tc.batch_size = o.batch;
  tc.epochs = o.epochs;
  tc.adam.weight_decay = o.weight_decay;
  tc.seed = o.seed;
  tc.eval_every = o.eval_every;
  tc.flip = o.flip;
  tc.crop = o.crop;
  tc.eval_conf = o.eval_conf;
  tc.nms_iou = o.nms_iou;
  tc.out_dir = o.out;
  std::cout << "train " << train_split.items.size() << " images, eval on " << eval_split.name << " ("
            << eval_split.items.size() << ")\n";
  const TrainResult r = train(model, train_split, eval_split, tc, &std::cout);
  std::cout << summary_line(r.last_report) << "\n";
  return 0;
}

std::vector<fs::path> input_files(const fs::path& input) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      const auto ext = e.path().extension();
      if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    if (!fs::exists(input)) throw std::runtime_error(input.string() + ": no such file or directory");
    files.push_back(input);
  }
  return files;
}

int cmd_infer(const Options& o) {
  need(o.model, "--model");
  need(o.input, "--input");
  const Model<float> model = load_checkpoint(o.model).model;
  const InferenceConfig ic = inference_config(o, o.conf);
  if (!o.annotate_out.empty()) fs::create_directories(o.annotate_out);
  int failures = 0;
  for (const auto& file : input_files(o.input)) {
    try {
      const Tensorf pixels = load_image(file);
      const auto dets = detect_one(model, pixels, ic);
      const std::string id = file.stem().string();
      for (const auto& d : dets) std::cout << format_detection(id, d) << "\n";
      if (!o.annotate_out.empty()) save_ppm(fs::path(o.annotate_out) / (id + ".ppm"), annotate(pixels, dets));
    } catch (const std::exception& e) {
      ++failures;
      std::cerr << "error: " << one_line(e.what()) << "\n";
    }
  }
  std::cout << std::flush;
  return failures ? 1 : 0;
}

DatasetSplit load_nonempty_split(const std::string& root, const std::string& name) {
  DatasetSplit split = load_split(root, name);
  if (split.items.empty())
    throw std::runtime_error("split '" + name + "' has no images in " + (std::filesystem::path(root) / "manifest.txt").string());
  return split;
}

int cmd_eval(const Options& o) {
  need(o.model, "--model");
  need(o.data, "--data");
  const Model<float> model = load_checkpoint(o.model).model;
  const DatasetSplit split = load_nonempty_split(o.data, o.split);
  const EvalReport rep = evaluate_model(model, split, inference_config(o, o.eval_conf), o.iou, o.conf);
  std::ostringstream os;
  write_report(rep, os);
  os << summary_line(rep) << "\n";
  if (!o.report.empty()) write_file(o.report, os.str());
  std::cout << os.str();
  return 0;
}

int cmd_robust(const Options& o) {
  need(o.model, "--model");
  need(o.data, "--data");
  const Model<float> model = load_checkpoint(o.model).model;
  const DatasetSplit split = load_nonempty_split(o.data, o.split);
  const auto rows = run_robustness(model, split, robustness_transforms(o.suite), inference_config(o, o.conf));
  std::ostringstream os;
  write_robustness_report(rows, os);
  if (!o.report.empty()) write_file(o.report, os.str());
  std::cout << os.str();
  return 0;
}

int cmd_stats(const Options& o) {
  need(o.data, "--data");
  const DatasetStats stats = dataset_stats(load_split(o.data, o.stats_split));
  write_stats_text(stats, std::cout);
  if (!o.csv.empty()) {
    std::ostringstream os;
    write_stats_csv(stats, os);
    write_file(o.csv, os.str());
  }
  return 0;
}

int cmd_summary(const Options& o) {
  need(o.model, "--model");
  write_summary(load_checkpoint(o.model).model, std::cout);
  return 0;
}

int cmd_bench(const Options& o) {
  need(o.model, "--model");
  const Model<float> model = load_checkpoint(o.model).model;
  Tensorf pixels;
  if (o.input.empty()) {
    SceneSpec spec;
    spec.seed = o.seed;
    spec.width = spec.height = o.size;
    pixels = generate_scene(spec).image.pixels;
  } else {
    pixels = load_image(o.input);
  }
  const BenchResult r = bench(model, pixels, o.runs, inference_config(o, o.conf));
  char buf[128];
  std::snprintf(buf, sizeof buf, "bench runs %d mean %.3f ms std %.3f ms\n", r.runs, r.mean_ms, r.std_ms);
  std::cout << buf;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"hotspot: thermal anomaly detector"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_all_flag("--help-all", "Help for every command");

  auto common = [&](CLI::App* s) { s->add_option("--config", o.config, "key=value file; flags override it"); };
  std::map<std::string, std::function<int(const Options&)>> run;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  common(gen);
  gen->add_option("--out", o.out, "Output dataset directory (required)");
  gen->add_option("--count", o.count, "Training scenes");
  gen->add_option("--val-count", o.val_count, "Validation scenes");
  gen->add_option("--test-count", o.test_count, "Test scenes");
  gen->add_option("--seed", o.seed, "Random seed");
  gen->add_option("--preset", o.preset, "Scene preset")->check(CLI::IsMember({"default", "high-irradiance"}));
  gen->add_option("--size", o.size, "Scene width and height in pixels")->check(CLI::PositiveNumber);
  gen->add_flag("--force", o.force, "Replace a non-empty output directory");
  run["gen"] = cmd_gen;

  auto* tr = app.add_subcommand("train", "Train a model");
  common(tr);
  tr->add_option("--data", o.data, "Dataset root (required)");
  tr->add_option("--out", o.out, "Directory for checkpoints and the epoch curve (required)");
  tr->add_option("--epochs", o.epochs, "Epochs");
  tr->add_option("--batch", o.batch, "Batch size");
  tr->add_option("--lr", o.lr, "Initial learning rate");
  tr->add_option("--lr-min", o.lr_min, "Final learning rate of the cosine schedule");
  tr->add_option("--weight-decay", o.weight_decay, "Decoupled weight decay");
  tr->add_option("--seed", o.seed, "Seed for initialization, shuffling and augmentation");
  tr->add_option("--input-size", o.input_size, "Model input resolution (multiple of 8)");
  tr->add_option("--classes", o.classes, "Number of classes");
  tr->add_option("--eval-every", o.eval_every, "Evaluate every N epochs");
  tr->add_option("--eval-split", o.eval_split, "Split scored each evaluation (train if absent)");
  tr->add_option("--eval-conf", o.eval_conf, "Confidence floor for detections ranked by AP");
  tr->add_option("--nms-iou", o.nms_iou, "NMS IoU threshold during evaluation");
  tr->add_option("--flip", o.flip, "Random horizontal flip");
  tr->add_option("--crop", o.crop, "Random crop and resize");
  run["train"] = cmd_train;

  auto* inf = app.add_subcommand("infer", "Detect hotspots in images");
  common(inf);
  inf->add_option("--model", o.model, "Checkpoint (required)");
  inf->add_option("--input", o.input, "PPM/PGM file or directory (required)");
  inf->add_option("--conf", o.conf, "Confidence threshold");
  inf->add_option("--nms-iou", o.nms_iou, "NMS IoU threshold");
  inf->add_option("--max-det", o.max_det, "Detections kept per image");
  inf->add_option("--annotate-out", o.annotate_out, "Directory for annotated PPM copies");
  run["infer"] = cmd_infer;

  auto* ev = app.add_subcommand("eval", "Score a split");
  common(ev);
  ev->add_option("--model", o.model, "Checkpoint (required)");
  ev->add_option("--data", o.data, "Dataset root (required)");
  ev->add_option("--split", o.split, "Split");
  ev->add_option("--iou", o.iou, "Matching IoU threshold");
  ev->add_option("--eval-conf", o.eval_conf, "Confidence floor for detections ranked by AP");
  ev->add_option("--conf", o.conf, "Operating threshold for tp/fp/fn counts");
  ev->add_option("--nms-iou", o.nms_iou, "NMS IoU threshold");
  ev->add_option("--max-det", o.max_det, "Detections kept per image");
  ev->add_option("--report", o.report, "Also write the report here");
  run["eval"] = cmd_eval;

  auto* rb = app.add_subcommand("robust", "Confidence and mAP under image transforms");
  common(rb);
  rb->add_option("--model", o.model, "Checkpoint (required)");
  rb->add_option("--data", o.data, "Dataset root (required)");
  rb->add_option("--split", o.split, "Split");
  rb->add_option("--suite", o.suite, "Transform suite")
      ->check(CLI::IsMember({"brightness-contrast", "grayscale", "blur", "all"}));
  rb->add_option("--conf", o.conf, "Confidence threshold");
  rb->add_option("--nms-iou", o.nms_iou, "NMS IoU threshold");
  rb->add_option("--max-det", o.max_det, "Detections kept per image");
  rb->add_option("--report", o.report, "Also write the report here");
  run["robust"] = cmd_robust;

  auto* st = app.add_subcommand("stats", "Box position and size statistics");
  common(st);
  st->add_option("--data", o.data, "Dataset root (required)");
  st->add_option("--split", o.stats_split, "Split");
  st->add_option("--csv", o.csv, "Write every histogram bin as CSV here");
  run["stats"] = cmd_stats;

  auto* sm = app.add_subcommand("summary", "Per-layer parameters and FLOPs");
  common(sm);
  sm->add_option("--model", o.model, "Checkpoint (required)");
  run["summary"] = cmd_summary;

  auto* bn = app.add_subcommand("bench", "Single-image inference timing");
  common(bn);
  bn->add_option("--model", o.model, "Checkpoint (required)");
  bn->add_option("--runs", o.runs, "Timed runs after 2 warmups (at least 3)");
  bn->add_option("--input", o.input, "Image to time (default: a synthetic scene)");
  bn->add_option("--size", o.size, "Synthetic scene size when no input is given");
  bn->add_option("--seed", o.seed, "Synthetic scene seed");
  bn->add_option("--conf", o.conf, "Confidence threshold");
  bn->add_option("--nms-iou", o.nms_iou, "NMS IoU threshold");
  bn->add_option("--max-det", o.max_det, "Detections kept per image");
  run["bench"] = cmd_bench;

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    // Config tokens go right after the subcommand name so that later
    // command-line flags take precedence.
    if (!args.empty()) {
      CLI::App* sub = app.get_subcommand_no_throw(args[0]);
      std::string cfg;
      for (std::size_t i = 1; sub && i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) cfg = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) cfg = args[i].substr(9);
      }
      if (!cfg.empty()) {
        auto extra = config_tokens(cfg, *sub);
        args.insert(args.begin() + 1, extra.begin(), extra.end());
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    if (app.get_subcommands().empty()) {
      std::cout << app.help("", CLI::AppFormatMode::All);
      return 0;
    }
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    for (auto* sub : app.get_subcommands()) return run.at(sub->get_name())(o);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 1;
}
