#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmlp/dataset.hpp"
#include "dmlp/fusion.hpp"
#include "dmlp/rng.hpp"

namespace dmlp::train {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double base_lr = 0.04;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t warmup_epochs = 2;
  double label_smoothing = 0.1;
  double mixup_alpha = 0.0;
  std::uint64_t seed = 17;

  void validate() const;
};

struct Metrics {
  std::map<std::size_t, double> topk;  // k -> fraction
  double mean_loss = 0.0;

  double top1() const { return top(1); }
  double top5() const { return top(5); }
  double top(std::size_t k) const;
};

// Linear warmup over `warmup_steps` then cosine decay to zero over the rest.
struct LrSchedule {
  double base_lr = 0.0;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;

  double at(std::size_t step) const;
};

LrSchedule make_schedule(const TrainConfig& cfg, std::size_t steps_per_epoch);
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr);

// (1 - eps) on the true class plus eps / C everywhere; [B, C].
ad::Tensor smoothed_targets(const std::vector<std::size_t>& labels, std::size_t num_classes, double epsilon);
// mean over rows of -sum(target * log_softmax(scores)).
ad::Tensor soft_cross_entropy(ad::Tape& tape, const ad::Tensor& scores, const ad::Tensor& targets);
ad::Tensor smoothed_cross_entropy(ad::Tape& tape, const ad::Tensor& scores, const std::vector<std::size_t>& labels,
                                  double epsilon);

// A batch with soft targets, ready for the model.
struct TrainingBatch {
  ad::Tensor features;
  ad::Tensor encoded;
  ad::Tensor targets;               // [B, C]
  std::vector<std::size_t> labels;  // hard labels of the primary sample
  double lambda = 1.0;
};

TrainingBatch prepare_batch(const data::Batch& batch, std::size_t num_classes, double epsilon);
// lambda * a + (1 - lambda) * b, with b the batch reordered by `pairing`.
TrainingBatch mix_batch(const TrainingBatch& batch, double lambda, const std::vector<std::size_t>& pairing);
// alpha == 0 returns the batch unchanged; otherwise lambda ~ Beta(alpha, alpha)
// and a random pairing.
TrainingBatch mixup_batch(const TrainingBatch& batch, double alpha, Rng& rng);

// SGD with momentum; weight decay folded into the gradient:
// v <- momentum * v + grad + wd * p;  p <- p - lr * v.
class Sgd {
 public:
  Sgd(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(nn::ParameterStore& params, double lr);

  const std::vector<std::vector<double>>& velocity() const { return velocity_; }
  nlohmann::json state_json(const nn::ParameterStore& params) const;
  void load_state(const nlohmann::json& doc, const nn::ParameterStore& params);

 private:
  double momentum_;
  double weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

// Rank-based top-k with ties broken toward the lower class index; loss is
// plain cross-entropy. Batches may be evaluated in parallel; the reduction is
// in example order.
Metrics evaluate(const fusion::FusionModel& model, const std::vector<data::LabeledExample>& examples,
                 const std::vector<std::size_t>& ks = {1, 5}, std::size_t batch_size = 256);

// True when `label` is among the k highest of `scores` (ties -> lower index wins).
bool in_top_k(std::span<const double> scores, std::size_t label, std::size_t k);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  Metrics train;
  Metrics validation;
  double lr = 0.0;        // learning rate of the epoch's last step
};

struct TrainState {
  std::size_t epochs_completed = 0;
  std::optional<Sgd> optimizer;
};

// Trains from state.epochs_completed up to cfg.epochs. Deterministic given
// the seed. Throws NumericalError naming the global step on a non-finite loss.
// `on_epoch` runs after each epoch (for CSV streaming).
std::vector<EpochRecord> train_loop(fusion::FusionModel& model, const data::DatasetSplit& split,
                                    const TrainConfig& cfg, TrainState& state,
                                    const std::function<void(const EpochRecord&)>& on_epoch = {});

std::vector<EpochRecord> train_loop(fusion::FusionModel& model, const data::DatasetSplit& split,
                                    const TrainConfig& cfg);

std::string metrics_csv_header();
// Two rows per epoch: train then validation.
std::string metrics_csv_rows(const EpochRecord& record);

}  // namespace dmlp::train
