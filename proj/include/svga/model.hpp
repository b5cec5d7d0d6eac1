#pragma once

#include <string>
#include <vector>

#include "svga/checkpoint.hpp"
#include "svga/config.hpp"
#include "svga/geometry.hpp"
#include "svga/sdr.hpp"
#include "svga/vgnet.hpp"

namespace svga {

// Full detector: spherical voxel grouping, voxel graph network, BEV scatter,
// sparse-to-dense head, anchor decode with NMS. Parameter initialization is a
// pure function of the config seed.
class SvgaModel {
 public:
  explicit SvgaModel(const TrainConfig& cfg);

  struct SceneForward {
    SdrHead::Output head;
    VgNet::Forward vg;
    int n_sampled = 0;  // FPS seeds actually used (clamped to the cloud size)
  };

  std::vector<SphericalVoxel> build_scene_voxels(const std::vector<Point>& points) const;
  SceneForward forward(const Scene& scene, bool training);
  SceneForward forward_from_voxels(const std::vector<Point>& points,
                                   const std::vector<SphericalVoxel>& voxels, bool training);

  // Decode + score threshold + per-class NMS, capped at max_detections.
  std::vector<Detection> infer(const Scene& scene);
  std::vector<Detection> decode(const SdrHead::Output& head) const;

  const TrainConfig& config() const { return cfg_; }
  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }
  const AnchorGrid& anchors() const { return anchors_; }
  VgNet& vgnet() { return vgnet_; }
  SdrHead& sdr() { return sdr_; }

  std::size_t parameter_count() const { return reg_.param_count(); }
  int decode_clamp_count() const { return decode_clamps_; }

  void save(const std::string& path) const;
  void load_weights(const std::string& path);
  static SvgaModel load(const std::string& path);

 private:
  TrainConfig cfg_;
  ParamRegistry reg_;
  Rng init_rng_;  // declared before the networks; they draw from it in order
  VgNet vgnet_;
  SdrHead sdr_;
  AnchorGrid anchors_;
  mutable int decode_clamps_ = 0;  // telemetry only
};

}  // namespace svga
