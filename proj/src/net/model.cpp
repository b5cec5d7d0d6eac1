#include "svga/model.hpp"

#include <algorithm>
#include <cmath>

namespace svga {

namespace {
constexpr std::uint64_t kInitStream = 0x696e6974;  // distinct from data streams

TrainConfig validated(TrainConfig cfg) {
  validate_config(cfg);
  return cfg;
}
}  // namespace

SvgaModel::SvgaModel(const TrainConfig& cfg)
    : cfg_(validated(cfg)),
      init_rng_(mix_seed(cfg_.seed, kInitStream)),
      vgnet_(cfg_, reg_, init_rng_),
      sdr_(cfg_, reg_, init_rng_),
      anchors_(build_anchor_grid(cfg_.grid_x_min, cfg_.grid_y_min, cfg_.head_cell(),
                                 cfg_.head_h(), cfg_.head_w(), cfg_.anchor_specs())) {}

std::vector<SphericalVoxel> SvgaModel::build_scene_voxels(const std::vector<Point>& points) const {
  if (points.empty()) throw InvalidArgumentError("model: scene has no points");
  const int n = std::min<int>(cfg_.n_points, static_cast<int>(points.size()));
  return build_voxels(points, n, cfg_.radius, cfg_.point_cap);
}

SvgaModel::SceneForward SvgaModel::forward(const Scene& scene, bool training) {
  return forward_from_voxels(scene.points, build_scene_voxels(scene.points), training);
}

SvgaModel::SceneForward SvgaModel::forward_from_voxels(const std::vector<Point>& points,
                                                       const std::vector<SphericalVoxel>& voxels,
                                                       bool training) {
  SceneForward out;
  out.n_sampled = static_cast<int>(voxels.size());
  out.vg = vgnet_.forward(points, voxels);
  out.head = sdr_.forward(out.vg.bev, training);
  return out;
}

std::vector<Detection> SvgaModel::decode(const SdrHead::Output& head) const {
  const int a_per_cell = anchors_.anchors_per_cell();
  const int h1 = anchors_.h1, w1 = anchors_.w1;
  const std::size_t plane = static_cast<std::size_t>(h1) * w1;
  auto cls_v = head.cls.values();
  auto reg_v = head.reg.values();

  std::vector<Detection> dets;
  for (std::size_t a = 0; a < anchors_.size(); ++a) {
    const int s = static_cast<int>(a) % a_per_cell;
    const std::size_t cell = a / static_cast<std::size_t>(a_per_cell);
    const double logit = cls_v[static_cast<std::size_t>(s) * plane + cell];
    const double score = 1.0 / (1.0 + std::exp(-logit));
    if (score < cfg_.score_threshold) continue;
    Residual7 r;
    double* comps[7] = {&r.dx, &r.dy, &r.dz, &r.dw, &r.dl, &r.dh, &r.dtheta};
    for (int c = 0; c < 7; ++c)
      *comps[c] = reg_v[static_cast<std::size_t>(7 * s + c) * plane + cell];
    Detection d;
    d.box = decode_residual(r, anchors_.boxes[a], &decode_clamps_);
    d.score = score;
    d.cls = anchors_.classes[a];
    dets.push_back(d);
  }
  return dets;
}

std::vector<Detection> SvgaModel::infer(const Scene& scene) {
  NoGradGuard guard;
  SceneForward fwd = forward(scene, /*training=*/false);
  std::vector<Detection> dets = decode(fwd.head);

  const bool use_3d = cfg_.nms_space == "3d";
  std::vector<Detection> kept;
  for (ObjectClass cls : {ObjectClass::Car, ObjectClass::Pedestrian, ObjectClass::Cyclist}) {
    std::vector<Detection> of_class;
    for (const auto& d : dets)
      if (d.cls == cls) of_class.push_back(d);
    if (of_class.empty()) continue;
    std::vector<Box7> boxes;
    std::vector<double> scores;
    for (const auto& d : of_class) {
      boxes.push_back(d.box);
      scores.push_back(d.score);
    }
    for (int i : nms(boxes, scores, cfg_.nms_iou, use_3d))
      kept.push_back(of_class[static_cast<std::size_t>(i)]);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (static_cast<int>(kept.size()) > cfg_.max_detections)
    kept.resize(static_cast<std::size_t>(cfg_.max_detections));
  return kept;
}

void SvgaModel::save(const std::string& path) const {
  save_checkpoint(path, serialize_config(cfg_), reg_.saved_tensors());
}

void SvgaModel::load_weights(const std::string& path) {
  load_into_registry(load_checkpoint(path), reg_);
}

SvgaModel SvgaModel::load(const std::string& path) {
  CheckpointData data = load_checkpoint(path);
  SvgaModel model(parse_config(data.config_text));
  load_into_registry(data, model.reg_);
  return model;
}

}  // namespace svga
