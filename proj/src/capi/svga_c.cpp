#include "svga/svga_c.h"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "svga/eval.hpp"
#include "svga/model.hpp"
#include "svga/trainer.hpp"

using namespace svga;

struct svga_config {
  TrainConfig cfg;
};
struct svga_dataset {
  Dataset data;
};
struct svga_model {
  SvgaModel model;
};
struct svga_detections {
  std::vector<Detection> dets;
};

namespace {

thread_local std::string t_last_error;

svga_status status_of(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidArgument: return SVGA_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return SVGA_ERR_IO;
    case ErrorCode::Parse: return SVGA_ERR_PARSE;
    case ErrorCode::Shape: return SVGA_ERR_SHAPE;
    case ErrorCode::Numeric: return SVGA_ERR_NUMERIC;
    case ErrorCode::Config: return SVGA_ERR_CONFIG;
    case ErrorCode::State: return SVGA_ERR_STATE;
  }
  return SVGA_ERR_UNKNOWN;
}

template <typename Fn>
svga_status guarded(Fn&& fn) {
  try {
    fn();
    return SVGA_OK;
  } catch (const Error& e) {
    t_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return SVGA_ERR_UNKNOWN;
  }
}

svga_status fail_null(const char* what) {
  t_last_error = std::string(what) + " is null";
  return SVGA_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Dataset open_dataset(const TrainConfig& cfg) {
  if (cfg.dataset == "kitti") return Dataset::open_kitti(cfg.dataset_root, cfg.split);
  return Dataset::synthetic(cfg.synth_config(), cfg.synthetic_scenes, cfg.seed);
}

std::vector<std::vector<LabeledBox>> dataset_labels(Dataset& data) {
  std::vector<std::vector<LabeledBox>> gts;
  gts.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) gts.push_back(data.load(i).labels);
  return gts;
}

}  // namespace

extern "C" {

const char* svga_last_error(void) { return t_last_error.c_str(); }

void svga_string_free(char* s) { delete[] s; }

svga_status svga_config_default(const char* class_set, svga_config** out) {
  if (!class_set) return fail_null("class_set");
  if (!out) return fail_null("out");
  return guarded([&] { *out = new svga_config{config_defaults(class_set)}; });
}

svga_status svga_config_desk(svga_config** out) {
  if (!out) return fail_null("out");
  return guarded([&] { *out = new svga_config{desk_preset()}; });
}

svga_status svga_config_load(const char* path, svga_config** out) {
  if (!path) return fail_null("path");
  if (!out) return fail_null("out");
  return guarded([&] { *out = new svga_config{load_config(path)}; });
}

svga_status svga_config_parse(const char* text, svga_config** out) {
  if (!text) return fail_null("text");
  if (!out) return fail_null("out");
  return guarded([&] { *out = new svga_config{parse_config(text)}; });
}

svga_status svga_config_set(svga_config* cfg, const char* key, const char* value) {
  if (!cfg) return fail_null("cfg");
  if (!key) return fail_null("key");
  if (!value) return fail_null("value");
  return guarded([&] {
    // Reuse the file parser so key handling stays in one place: serialize,
    // override the one key, reparse.
    std::istringstream is(serialize_config(cfg->cfg));
    std::ostringstream os;
    std::string line;
    const std::string prefix = std::string(key) + " = ";
    bool found = false;
    while (std::getline(is, line)) {
      if (line.rfind(prefix, 0) == 0) {
        os << prefix << value << "\n";
        found = true;
      } else {
        os << line << "\n";
      }
    }
    if (!found) throw ConfigError("config: unknown key '" + std::string(key) + "'");
    cfg->cfg = parse_config(os.str());
  });
}

svga_status svga_config_serialize(const svga_config* cfg, char** out_text) {
  if (!cfg) return fail_null("cfg");
  if (!out_text) return fail_null("out_text");
  return guarded([&] { *out_text = dup_string(serialize_config(cfg->cfg)); });
}

void svga_config_free(svga_config* cfg) { delete cfg; }

svga_status svga_dataset_open(const svga_config* cfg, svga_dataset** out) {
  if (!cfg) return fail_null("cfg");
  if (!out) return fail_null("out");
  return guarded([&] { *out = new svga_dataset{open_dataset(cfg->cfg)}; });
}

svga_status svga_dataset_size(const svga_dataset* ds, size_t* out) {
  if (!ds) return fail_null("ds");
  if (!out) return fail_null("out");
  *out = ds->data.size();
  return SVGA_OK;
}

svga_status svga_dataset_scene_id(const svga_dataset* ds, size_t index, char** out_id) {
  if (!ds) return fail_null("ds");
  if (!out_id) return fail_null("out_id");
  return guarded([&] { *out_id = dup_string(ds->data.scene_id(index)); });
}

void svga_dataset_free(svga_dataset* ds) { delete ds; }

svga_status svga_model_create(const svga_config* cfg, svga_model** out) {
  if (!cfg) return fail_null("cfg");
  if (!out) return fail_null("out");
  return guarded([&] { *out = new svga_model{SvgaModel(cfg->cfg)}; });
}

svga_status svga_model_open(const char* checkpoint_path, svga_model** out) {
  if (!checkpoint_path) return fail_null("checkpoint_path");
  if (!out) return fail_null("out");
  return guarded([&] { *out = new svga_model{SvgaModel::load(checkpoint_path)}; });
}

svga_status svga_model_save(const svga_model* model, const char* path) {
  if (!model) return fail_null("model");
  if (!path) return fail_null("path");
  return guarded([&] { model->model.save(path); });
}

svga_status svga_model_load_weights(svga_model* model, const char* checkpoint_path) {
  if (!model) return fail_null("model");
  if (!checkpoint_path) return fail_null("checkpoint_path");
  return guarded([&] { model->model.load_weights(checkpoint_path); });
}

svga_status svga_model_param_count(const svga_model* model, size_t* out) {
  if (!model) return fail_null("model");
  if (!out) return fail_null("out");
  *out = model->model.parameter_count();
  return SVGA_OK;
}

svga_status svga_model_config(const svga_model* model, char** out_text) {
  if (!model) return fail_null("model");
  if (!out_text) return fail_null("out_text");
  return guarded([&] { *out_text = dup_string(serialize_config(model->model.config())); });
}

void svga_model_free(svga_model* model) { delete model; }

svga_status svga_train(svga_model* model, svga_dataset* ds, const char* metrics_path,
                       double* first_total, double* last_total) {
  if (!model) return fail_null("model");
  if (!ds) return fail_null("ds");
  return guarded([&] {
    std::ofstream metrics;
    if (metrics_path) {
      metrics.open(metrics_path);
      if (!metrics) throw IoError("train: cannot open metrics file '" +
                                  std::string(metrics_path) + "'");
    }
    Trainer trainer(model->model, ds->data, metrics_path ? &metrics : nullptr);
    const std::vector<StepLog> logs = trainer.run();
    if (first_total) *first_total = logs.empty() ? 0.0 : logs.front().total;
    if (last_total) *last_total = logs.empty() ? 0.0 : logs.back().total;
  });
}

svga_status svga_infer_file(svga_model* model, const char* velodyne_path, svga_detections** out) {
  if (!model) return fail_null("model");
  if (!velodyne_path) return fail_null("velodyne_path");
  if (!out) return fail_null("out");
  return guarded([&] {
    Scene scene;
    scene.points = load_velodyne(velodyne_path);
    scene.id = velodyne_path;
    *out = new svga_detections{model->model.infer(scene)};
  });
}

svga_status svga_infer_scene(svga_model* model, svga_dataset* ds, size_t index,
                             svga_detections** out) {
  if (!model) return fail_null("model");
  if (!ds) return fail_null("ds");
  if (!out) return fail_null("out");
  return guarded([&] {
    const Scene scene = ds->data.load(index);
    *out = new svga_detections{model->model.infer(scene)};
  });
}

svga_status svga_detections_count(const svga_detections* d, size_t* out) {
  if (!d) return fail_null("detections");
  if (!out) return fail_null("out");
  *out = d->dets.size();
  return SVGA_OK;
}

svga_status svga_detections_row(const svga_detections* d, size_t index, double out_row[9]) {
  if (!d) return fail_null("detections");
  if (!out_row) return fail_null("out_row");
  return guarded([&] {
    if (index >= d->dets.size())
      throw InvalidArgumentError("detections: index " + std::to_string(index) + " outside [0, " +
                                 std::to_string(d->dets.size()) + ")");
    const Detection& det = d->dets[index];
    out_row[0] = det.box.x;
    out_row[1] = det.box.y;
    out_row[2] = det.box.z;
    out_row[3] = det.box.l;
    out_row[4] = det.box.w;
    out_row[5] = det.box.h;
    out_row[6] = det.box.theta;
    out_row[7] = det.score;
    out_row[8] = static_cast<double>(static_cast<int>(det.cls));
  });
}

svga_status svga_detections_write(const svga_detections* d, const char* path) {
  if (!d) return fail_null("detections");
  if (!path) return fail_null("path");
  return guarded([&] { save_detections(path, d->dets, CalibTransform{}); });
}

void svga_detections_free(svga_detections* d) { delete d; }

svga_status svga_evaluate(svga_model* model, svga_dataset* ds, char** out_report,
                          double* out_overall_ap) {
  if (!model) return fail_null("model");
  if (!ds) return fail_null("ds");
  return guarded([&] {
    const TrainConfig& cfg = model->model.config();
    std::vector<std::vector<Detection>> dets;
    dets.reserve(ds->data.size());
    for (std::size_t i = 0; i < ds->data.size(); ++i)
      dets.push_back(model->model.infer(ds->data.load(i)));
    const auto gts = dataset_labels(ds->data);

    std::vector<ObjectClass> classes;
    for (const AnchorSpec& spec : cfg.anchor_specs())
      if (std::find(classes.begin(), classes.end(), spec.cls) == classes.end())
        classes.push_back(spec.cls);

    std::string report;
    double overall = -1.0;
    bool first = true;
    for (ObjectClass cls : classes) {
      const EvalReport r = evaluate_all(dets, gts, cls, cfg.eval_iou,
                                        cfg.eval_space == "bev", cfg.ap_mode);
      report += format_report(r);
      if (first && r.overall) overall = r.overall->ap;
      first = false;
    }
    if (out_report) *out_report = dup_string(report);
    if (out_overall_ap) *out_overall_ap = overall;
  });
}

svga_status svga_bench(svga_model* model, svga_dataset* ds, int iterations, char** out_report) {
  if (!model) return fail_null("model");
  if (!ds) return fail_null("ds");
  if (!out_report) return fail_null("out_report");
  if (iterations < 1) {
    t_last_error = "bench: iterations must be positive";
    return SVGA_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    const Scene scene = ds->data.load(0);
    using clock = std::chrono::steady_clock;

    auto time_forward = [&] {
      NoGradGuard guard;
      const auto t0 = clock::now();
      for (int i = 0; i < iterations; ++i) model->model.forward(scene, false);
      return std::chrono::duration<double, std::milli>(clock::now() - t0).count() / iterations;
    };
    auto time_train = [&] {
      Trainer trainer(model->model, ds->data, nullptr);
      const auto t0 = clock::now();
      for (int i = 0; i < iterations; ++i) {
        LossBreakdown loss = trainer.scene_loss(scene, true);
        backward(loss.total);
        for (Tensor p : model->model.registry().params()) p.zero_grad();
      }
      return std::chrono::duration<double, std::milli>(clock::now() - t0).count() / iterations;
    };

    const double fwd_ms = time_forward();
    const double bwd_ms = time_train();
    std::ostringstream os;
    os.precision(1);
    os << std::fixed;
    os << "scene '" << scene.id << "', " << scene.points.size() << " points, " << iterations
       << " iterations\n"
       << "forward (no grad): " << fwd_ms << " ms\n"
       << "forward+backward:  " << bwd_ms << " ms\n"
       << "parameters: " << model->model.parameter_count() << "\n";
    *out_report = dup_string(os.str());
  });
}

}  // extern "C"
