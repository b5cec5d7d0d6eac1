#include "svga/trainer.hpp"

#include <cmath>

#include "svga/augment.hpp"

namespace svga {

namespace {
constexpr std::uint64_t kAugmentStream = 0x617567;
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw InvalidArgumentError("lr_at_epoch: negative epoch");
  double lr = cfg.learning_rate;
  for (int decay : cfg.lr_decay_epochs)
    if (epoch >= decay) lr *= cfg.lr_decay_factor;
  return lr;
}

int epoch_of_step(const TrainConfig& cfg, int step, std::size_t n_scenes) {
  if (n_scenes == 0) throw InvalidArgumentError("epoch_of_step: empty dataset");
  const std::size_t consumed = static_cast<std::size_t>(step) * cfg.batch_size;
  return static_cast<int>(consumed / n_scenes);
}

Trainer::Trainer(SvgaModel& model, Dataset& dataset, std::ostream* metrics)
    : model_(model),
      data_(dataset),
      metrics_(metrics),
      opt_(model.registry().params(), model.config().learning_rate) {
  validate_for_training(model.config());
  if (data_.size() == 0) throw InvalidArgumentError("trainer: empty dataset");
  if (metrics_) (*metrics_) << "step\tcls_loss\treg_loss\ttotal\tlr\n";
}

LossBreakdown Trainer::scene_loss(const Scene& scene, bool training) {
  SvgaModel::SceneForward fwd = model_.forward(scene, training);
  const AnchorAssignment assign = match_anchors(model_.anchors(), scene.labels,
                                                model_.config().pos_iou, model_.config().neg_iou);
  return compute_loss(fwd.head, model_.anchors(), assign, scene.labels);
}

Scene Trainer::scene_for(int step, int slot) {
  const std::size_t index =
      (static_cast<std::size_t>(step) * model_.config().batch_size + slot) % data_.size();
  Scene scene = data_.load(index);
  if (model_.config().augment) {
    const std::uint64_t counter =
        static_cast<std::uint64_t>(step) * model_.config().batch_size + slot;
    scene = augment(scene, mix_seed(mix_seed(model_.config().seed, kAugmentStream), counter));
  }
  return scene;
}

int Trainer::planned_steps() const {
  const TrainConfig& cfg = model_.config();
  if (cfg.max_steps > 0) return cfg.max_steps;
  const std::size_t total = static_cast<std::size_t>(cfg.epochs) * data_.size();
  return static_cast<int>((total + cfg.batch_size - 1) / cfg.batch_size);
}

StepLog Trainer::step() {
  const TrainConfig& cfg = model_.config();
  const int epoch = epoch_of_step(cfg, steps_done_, data_.size());
  opt_.set_lr(lr_at_epoch(cfg, epoch));

  Tensor total = Tensor::scalar(0.0);
  StepLog log;
  for (int slot = 0; slot < cfg.batch_size; ++slot) {
    const Scene scene = scene_for(steps_done_, slot);
    const LossBreakdown loss = scene_loss(scene, /*training=*/true);
    if (!std::isfinite(loss.total.scalar_value()))
      throw NumericError("trainer: non-finite loss on scene '" + scene.id + "' at step " +
                         std::to_string(steps_done_ + 1));
    total = add(total, loss.total);
    log.cls_loss += loss.cls_loss.scalar_value();
    log.reg_loss += loss.reg_loss.scalar_value();
    log.n_pos += loss.n_pos;
    log.n_neg += loss.n_neg;
  }
  total = scale(total, 1.0 / cfg.batch_size);
  opt_.zero_grad();
  backward(total);
  opt_.step();

  ++steps_done_;
  log.step = steps_done_;
  log.cls_loss /= cfg.batch_size;
  log.reg_loss /= cfg.batch_size;
  log.total = total.scalar_value();
  log.lr = opt_.lr();
  if (metrics_)
    (*metrics_) << log.step << "\t" << log.cls_loss << "\t" << log.reg_loss << "\t" << log.total
                << "\t" << log.lr << "\n";
  return log;
}

std::vector<StepLog> Trainer::run() {
  std::vector<StepLog> logs;
  const int n = planned_steps();
  logs.reserve(static_cast<std::size_t>(n));
  for (int i = steps_done_; i < n; ++i) logs.push_back(step());
  return logs;
}

}  // namespace svga
