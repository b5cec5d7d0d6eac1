#pragma once

#include <ostream>
#include <vector>

#include "svga/adam.hpp"
#include "svga/losses.hpp"
#include "svga/model.hpp"

namespace svga {

// Learning rate after the configured decay epochs at or before this epoch.
double lr_at_epoch(const TrainConfig& cfg, int epoch);

// Epoch the given 0-based step falls in when each step consumes batch_size
// scenes of an n_scenes dataset.
int epoch_of_step(const TrainConfig& cfg, int step, std::size_t n_scenes);

struct StepLog {
  int step = 0;  // 1-based
  double cls_loss = 0, reg_loss = 0, total = 0, lr = 0;
  int n_pos = 0, n_neg = 0;
};

// Deterministic training loop: scenes cycle in order, the optimizer follows
// the epoch-keyed decay schedule, metrics stream as tab-separated rows.
class Trainer {
 public:
  Trainer(SvgaModel& model, Dataset& dataset, std::ostream* metrics = nullptr);

  // Forward + anchor matching + loss for one scene; no optimizer involvement.
  LossBreakdown scene_loss(const Scene& scene, bool training);

  StepLog step();
  std::vector<StepLog> run();

  int steps_done() const { return steps_done_; }
  int planned_steps() const;

 private:
  Scene scene_for(int step, int slot);

  SvgaModel& model_;
  Dataset& data_;
  std::ostream* metrics_;
  Adam opt_;
  int steps_done_ = 0;
};

}  // namespace svga
