#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "svga/svga_c.h"

namespace {

struct ConfigDeleter {
  void operator()(svga_config* c) const { svga_config_free(c); }
};
struct DatasetDeleter {
  void operator()(svga_dataset* d) const { svga_dataset_free(d); }
};
struct ModelDeleter {
  void operator()(svga_model* m) const { svga_model_free(m); }
};
struct DetectionsDeleter {
  void operator()(svga_detections* d) const { svga_detections_free(d); }
};

using ConfigPtr = std::unique_ptr<svga_config, ConfigDeleter>;
using DatasetPtr = std::unique_ptr<svga_dataset, DatasetDeleter>;
using ModelPtr = std::unique_ptr<svga_model, ModelDeleter>;
using DetectionsPtr = std::unique_ptr<svga_detections, DetectionsDeleter>;

struct String {
  char* s = nullptr;
  ~String() { svga_string_free(s); }
};

[[noreturn]] void die(const char* where) {
  std::fprintf(stderr, "%s: %s\n", where, svga_last_error());
  std::exit(1);
}

void check(svga_status st, const char* where) {
  if (st != SVGA_OK) die(where);
}

struct CommonFlags {
  std::string config;      // file path, or "desk" for the built-in preset
  std::string checkpoint;
  std::string dataset;     // "synthetic" or a KITTI root directory
  std::string split;
  std::string class_set;
  std::string seed;
  std::string out;
};

void add_common(CLI::App* app, CommonFlags& f, bool with_config) {
  if (with_config) {
    app->add_option("--config", f.config,
                    "Config file; the literal name 'desk' selects the small built-in preset");
    app->add_option("--class", f.class_set, "Class set (car or pedcyc) when no --config is given");
  }
  app->add_option("--dataset", f.dataset, "'synthetic' or a KITTI-layout root directory");
  app->add_option("--split", f.split, "Split file of scene ids (KITTI datasets)");
  app->add_option("--seed", f.seed, "Override the config seed");
  app->add_option("--out", f.out, "Output location");
}

ConfigPtr make_config(const CommonFlags& f) {
  svga_config* raw = nullptr;
  if (f.config == "desk") {
    check(svga_config_desk(&raw), "config");
  } else if (!f.config.empty()) {
    check(svga_config_load(f.config.c_str(), &raw), "config");
  } else {
    const std::string cls = f.class_set.empty() ? "car" : f.class_set;
    check(svga_config_default(cls.c_str(), &raw), "config");
  }
  ConfigPtr cfg(raw);
  if (!f.config.empty() && !f.class_set.empty())
    check(svga_config_set(cfg.get(), "class_set", f.class_set.c_str()), "config");
  if (!f.dataset.empty()) {
    if (f.dataset == "synthetic") {
      check(svga_config_set(cfg.get(), "dataset", "synthetic"), "config");
    } else {
      check(svga_config_set(cfg.get(), "dataset", "kitti"), "config");
      check(svga_config_set(cfg.get(), "dataset_root", f.dataset.c_str()), "config");
    }
  }
  if (!f.split.empty()) check(svga_config_set(cfg.get(), "split", f.split.c_str()), "config");
  if (!f.seed.empty()) check(svga_config_set(cfg.get(), "seed", f.seed.c_str()), "config");
  return cfg;
}

// Dataset flags applied on top of a model's embedded config.
ConfigPtr dataset_config(const svga_model* model, const CommonFlags& f) {
  String text;
  check(svga_model_config(model, &text.s), "config");
  svga_config* raw = nullptr;
  check(svga_config_parse(text.s, &raw), "config");
  ConfigPtr cfg(raw);
  if (!f.dataset.empty()) {
    if (f.dataset == "synthetic") {
      check(svga_config_set(cfg.get(), "dataset", "synthetic"), "config");
    } else {
      check(svga_config_set(cfg.get(), "dataset", "kitti"), "config");
      check(svga_config_set(cfg.get(), "dataset_root", f.dataset.c_str()), "config");
    }
  }
  if (!f.split.empty()) check(svga_config_set(cfg.get(), "split", f.split.c_str()), "config");
  if (!f.seed.empty()) check(svga_config_set(cfg.get(), "seed", f.seed.c_str()), "config");
  return cfg;
}

int cmd_train(const CommonFlags& f) {
  ConfigPtr cfg = make_config(f);
  svga_model* raw_model = nullptr;
  check(svga_model_create(cfg.get(), &raw_model), "model");
  ModelPtr model(raw_model);
  if (!f.checkpoint.empty())
    check(svga_model_load_weights(model.get(), f.checkpoint.c_str()), "checkpoint");

  svga_dataset* raw_ds = nullptr;
  check(svga_dataset_open(cfg.get(), &raw_ds), "dataset");
  DatasetPtr ds(raw_ds);

  const std::string out_dir = f.out.empty() ? "." : f.out;
  std::filesystem::create_directories(out_dir);
  const std::string metrics_path = out_dir + "/metrics.tsv";
  const std::string ckpt_path = out_dir + "/checkpoint.svga";

  size_t n = 0;
  svga_dataset_size(ds.get(), &n);
  std::printf("training on %zu scenes; metrics -> %s\n", n, metrics_path.c_str());
  double first = 0, last = 0;
  check(svga_train(model.get(), ds.get(), metrics_path.c_str(), &first, &last), "train");
  std::printf("total loss: first step %.6f, last step %.6f\n", first, last);

  check(svga_model_save(model.get(), ckpt_path.c_str()), "save");
  std::printf("checkpoint -> %s\n", ckpt_path.c_str());
  return 0;
}

int cmd_eval(const CommonFlags& f) {
  if (f.checkpoint.empty()) {
    std::fprintf(stderr, "eval: --checkpoint is required\n");
    return 1;
  }
  svga_model* raw_model = nullptr;
  check(svga_model_open(f.checkpoint.c_str(), &raw_model), "checkpoint");
  ModelPtr model(raw_model);

  ConfigPtr cfg = dataset_config(model.get(), f);
  svga_dataset* raw_ds = nullptr;
  check(svga_dataset_open(cfg.get(), &raw_ds), "dataset");
  DatasetPtr ds(raw_ds);

  String report;
  double overall = -1;
  check(svga_evaluate(model.get(), ds.get(), &report.s, &overall), "eval");
  std::printf("%s", report.s);
  if (!f.out.empty()) {
    FILE* out = std::fopen(f.out.c_str(), "w");
    if (!out) {
      std::fprintf(stderr, "eval: cannot write '%s'\n", f.out.c_str());
      return 1;
    }
    std::fputs(report.s, out);
    std::fclose(out);
  }
  return 0;
}

int cmd_infer(const CommonFlags& f) {
  if (f.checkpoint.empty()) {
    std::fprintf(stderr, "infer: --checkpoint is required\n");
    return 1;
  }
  svga_model* raw_model = nullptr;
  check(svga_model_open(f.checkpoint.c_str(), &raw_model), "checkpoint");
  ModelPtr model(raw_model);

  ConfigPtr cfg = dataset_config(model.get(), f);
  svga_dataset* raw_ds = nullptr;
  check(svga_dataset_open(cfg.get(), &raw_ds), "dataset");
  DatasetPtr ds(raw_ds);

  const std::string out_dir = f.out.empty() ? "detections" : f.out;
  std::filesystem::create_directories(out_dir);
  size_t n = 0;
  svga_dataset_size(ds.get(), &n);
  for (size_t i = 0; i < n; ++i) {
    svga_detections* raw_dets = nullptr;
    check(svga_infer_scene(model.get(), ds.get(), i, &raw_dets), "infer");
    DetectionsPtr dets(raw_dets);
    String id;
    check(svga_dataset_scene_id(ds.get(), i, &id.s), "infer");
    size_t count = 0;
    svga_detections_count(dets.get(), &count);
    const std::string path = out_dir + "/" + id.s + ".txt";
    check(svga_detections_write(dets.get(), path.c_str()), "infer");
    std::printf("%s: %zu detections -> %s\n", id.s, count, path.c_str());
  }
  return 0;
}

int cmd_bench(const CommonFlags& f, int iterations) {
  ModelPtr model;
  ConfigPtr cfg;
  if (!f.checkpoint.empty()) {
    svga_model* raw_model = nullptr;
    check(svga_model_open(f.checkpoint.c_str(), &raw_model), "checkpoint");
    model.reset(raw_model);
    cfg = dataset_config(model.get(), f);
  } else {
    cfg = make_config(f);
    svga_model* raw_model = nullptr;
    check(svga_model_create(cfg.get(), &raw_model), "model");
    model.reset(raw_model);
  }
  svga_dataset* raw_ds = nullptr;
  check(svga_dataset_open(cfg.get(), &raw_ds), "dataset");
  DatasetPtr ds(raw_ds);

  String report;
  check(svga_bench(model.get(), ds.get(), iterations, &report.s), "bench");
  std::printf("%s", report.s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud 3D object detector: voxel graph attention with a "
               "sparse-to-dense BEV head"};
  app.require_subcommand(1);

  CommonFlags train_f, eval_f, infer_f, bench_f;
  int bench_iters = 5;

  CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(train, train_f, true);
  train->add_option("--checkpoint", train_f.checkpoint, "Start from these weights");

  CLI::App* eval = app.add_subcommand("eval", "Average precision of a checkpoint on a dataset");
  add_common(eval, eval_f, false);
  eval->add_option("--checkpoint", eval_f.checkpoint, "Model checkpoint")->required();

  CLI::App* infer = app.add_subcommand("infer", "Write per-scene detection files");
  add_common(infer, infer_f, false);
  infer->add_option("--checkpoint", infer_f.checkpoint, "Model checkpoint")->required();

  CLI::App* bench = app.add_subcommand("bench", "Time forward and backward passes");
  add_common(bench, bench_f, true);
  bench->add_option("--checkpoint", bench_f.checkpoint, "Model checkpoint");
  bench->add_option("--iterations", bench_iters, "Timing repetitions");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return cmd_train(train_f);
  if (eval->parsed()) return cmd_eval(eval_f);
  if (infer->parsed()) return cmd_infer(infer_f);
  if (bench->parsed()) return cmd_bench(bench_f, bench_iters);
  return 1;
}
