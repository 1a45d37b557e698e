#include "dmlp/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numbers>
#include <numeric>

#include "dmlp/errors.hpp"

namespace dmlp::train {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("training.batch_size must be at least 1");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ValidationError("training.base_lr must be non-negative");
  if (!(momentum >= 0.0) || !std::isfinite(momentum)) throw ValidationError("training.momentum must be non-negative");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
    throw ValidationError("training.weight_decay must be non-negative");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
    throw ValidationError("training.label_smoothing must be in [0, 1)");
  if (!(mixup_alpha >= 0.0) || !std::isfinite(mixup_alpha))
    throw ValidationError("training.mixup_alpha must be non-negative");
}

double Metrics::top(std::size_t k) const {
  const auto it = topk.find(k);
  if (it == topk.end()) throw std::out_of_range("top-" + std::to_string(k) + " was not evaluated");
  return it->second;
}

// ---------------------------------------------------------------------------

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr) {
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  const std::size_t span = total_steps > warmup_steps ? total_steps - warmup_steps : 1;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double LrSchedule::at(std::size_t step) const { return lr_at(step, total_steps, warmup_steps, base_lr); }

LrSchedule make_schedule(const TrainConfig& cfg, std::size_t steps_per_epoch) {
  return LrSchedule{cfg.base_lr, cfg.warmup_epochs * steps_per_epoch, cfg.epochs * steps_per_epoch};
}

// ---------------------------------------------------------------------------

ad::Tensor smoothed_targets(const std::vector<std::size_t>& labels, std::size_t num_classes, double epsilon) {
  if (num_classes < 2) throw ValidationError("label smoothing needs at least 2 classes");
  const double off = epsilon / static_cast<double>(num_classes);
  std::vector<double> t(labels.size() * num_classes, off);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= num_classes) throw ValidationError("label " + std::to_string(labels[r]) + " out of range");
    t[r * num_classes + labels[r]] += 1.0 - epsilon;
  }
  return ad::Tensor::from_values({labels.size(), num_classes}, std::move(t));
}

ad::Tensor soft_cross_entropy(ad::Tape& tape, const ad::Tensor& scores, const ad::Tensor& targets) {
  if (scores.shape() != targets.shape() || scores.rank() != 2)
    throw ShapeError("cross entropy: scores " + ad::shape_string(scores.shape()) + " vs targets " +
                     ad::shape_string(targets.shape()));
  const ad::Tensor total = ad::sum(tape, ad::mul(tape, targets, ad::log_softmax(tape, scores)));
  return ad::scale(tape, total, -1.0 / static_cast<double>(scores.dim(0)));
}

ad::Tensor smoothed_cross_entropy(ad::Tape& tape, const ad::Tensor& scores, const std::vector<std::size_t>& labels,
                                  double epsilon) {
  return soft_cross_entropy(tape, scores, smoothed_targets(labels, scores.dim(1), epsilon));
}

// ---------------------------------------------------------------------------

TrainingBatch prepare_batch(const data::Batch& batch, std::size_t num_classes, double epsilon) {
  return TrainingBatch{batch.features, batch.encoded, smoothed_targets(batch.labels, num_classes, epsilon),
                       batch.labels, 1.0};
}

namespace {

ad::Tensor blend_rows(const ad::Tensor& x, double lambda, const std::vector<std::size_t>& pairing) {
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.numel() / rows;
  auto v = x.values();
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = lambda * v[r * cols + c] + (1.0 - lambda) * v[pairing[r] * cols + c];
  return ad::Tensor::from_values(x.shape(), std::move(out));
}

}  // namespace

TrainingBatch mix_batch(const TrainingBatch& batch, double lambda, const std::vector<std::size_t>& pairing) {
  if (pairing.size() != batch.features.dim(0)) throw ShapeError("mixup: pairing does not match batch size");
  TrainingBatch out;
  out.features = blend_rows(batch.features, lambda, pairing);
  out.encoded = blend_rows(batch.encoded, lambda, pairing);
  out.targets = blend_rows(batch.targets, lambda, pairing);
  out.labels = batch.labels;
  out.lambda = lambda;
  return out;
}

TrainingBatch mixup_batch(const TrainingBatch& batch, double alpha, Rng& rng) {
  if (alpha <= 0.0) return batch;
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double x = gamma(rng);
  const double y = gamma(rng);
  const double lambda = (x + y) > 0.0 ? x / (x + y) : 1.0;
  std::vector<std::size_t> pairing(batch.features.dim(0));
  std::iota(pairing.begin(), pairing.end(), 0);
  std::shuffle(pairing.begin(), pairing.end(), rng);
  return mix_batch(batch, lambda, pairing);
}

// ---------------------------------------------------------------------------

void Sgd::step(nn::ParameterStore& params, double lr) {
  const auto& entries = params.entries();
  if (velocity_.size() != entries.size()) {
    velocity_.clear();
    for (const auto& e : entries) velocity_.emplace_back(e.tensor.numel(), 0.0);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ad::Tensor p = entries[i].tensor;
    auto values = p.mutable_values();
    auto grad = p.grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      v[j] = momentum_ * v[j] + g + weight_decay_ * values[j];
      values[j] -= lr * v[j];
    }
  }
}

nlohmann::json Sgd::state_json(const nn::ParameterStore& params) const {
  nlohmann::json doc = nlohmann::json::object();
  const auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::vector<double> v = i < velocity_.size() ? velocity_[i] : std::vector<double>(entries[i].tensor.numel(), 0.0);
    doc[entries[i].name] = ad::Tensor::from_values(entries[i].tensor.shape(), std::move(v)).to_json();
  }
  return doc;
}

void Sgd::load_state(const nlohmann::json& doc, const nn::ParameterStore& params) {
  velocity_.clear();
  for (const auto& e : params.entries()) {
    if (!doc.contains(e.name)) throw ValidationError("optimizer state lacks " + e.name);
    const ad::Tensor v = ad::Tensor::from_json(doc.at(e.name));
    if (v.shape() != e.tensor.shape()) throw ValidationError("optimizer state for " + e.name + " has the wrong shape");
    velocity_.emplace_back(v.values().begin(), v.values().end());
  }
}

// ---------------------------------------------------------------------------

bool in_top_k(std::span<const double> scores, std::size_t label, std::size_t k) {
  const double s = scores[label];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (scores[j] > s || (scores[j] == s && j < label)) ++rank;
  return rank < k;
}

namespace {

struct ExampleOutcome {
  std::vector<char> hits;  // per k
  double loss = 0.0;
};

// Top-k hits and cross-entropy per row of `scores`.
void score_rows(const ad::Tensor& scores, const std::vector<std::size_t>& labels, const std::vector<std::size_t>& ks,
                ExampleOutcome* out) {
  const std::size_t cols = scores.dim(1);
  auto v = scores.values();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    std::span<const double> row = v.subspan(r * cols, cols);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double x : row) z += std::exp(x - mx);
    out[r].loss = -(row[labels[r]] - mx - std::log(z));
    out[r].hits.resize(ks.size());
    for (std::size_t i = 0; i < ks.size(); ++i) out[r].hits[i] = in_top_k(row, labels[r], ks[i]);
  }
}

Metrics reduce_outcomes(const std::vector<ExampleOutcome>& outcomes, const std::vector<std::size_t>& ks) {
  Metrics m;
  const double n = static_cast<double>(outcomes.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    std::size_t hits = 0;
    for (const auto& o : outcomes) hits += o.hits[i] ? 1 : 0;
    m.topk[ks[i]] = outcomes.empty() ? 0.0 : static_cast<double>(hits) / n;
  }
  double loss = 0.0;
  for (const auto& o : outcomes) loss += o.loss;
  m.mean_loss = outcomes.empty() ? 0.0 : loss / n;
  return m;
}

}  // namespace

Metrics evaluate(const fusion::FusionModel& model, const std::vector<data::LabeledExample>& examples,
                 const std::vector<std::size_t>& ks, std::size_t batch_size) {
  std::vector<ExampleOutcome> outcomes(examples.size());
  const auto batches = data::sequential_batches(examples.size(), batch_size);
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t b = 0; b < static_cast<std::int64_t>(batches.size()); ++b) {
    try {
      const auto& idx = batches[static_cast<std::size_t>(b)];
      const data::Batch batch = data::make_batch(examples, idx);
      ad::Tape tape = ad::Tape::inference();
      const ad::Tensor scores = model.forward(tape, batch.features, batch.encoded);
      score_rows(scores, batch.labels, ks, outcomes.data() + idx.front());
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return reduce_outcomes(outcomes, ks);
}

// ---------------------------------------------------------------------------

std::vector<EpochRecord> train_loop(fusion::FusionModel& model, const data::DatasetSplit& split,
                                    const TrainConfig& cfg, TrainState& state,
                                    const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  split.validate();
  if (split.num_classes != model.config().fusion.num_classes)
    throw ValidationError("dataset has " + std::to_string(split.num_classes) + " classes, model expects " +
                          std::to_string(model.config().fusion.num_classes));
  if (split.feature_dim() != model.config().encoder.input_dim)
    throw ValidationError("dataset feature width " + std::to_string(split.feature_dim()) +
                          " does not match encoder.input_dim " + std::to_string(model.config().encoder.input_dim));

  if (!state.optimizer) state.optimizer.emplace(cfg.momentum, cfg.weight_decay);
  auto& params = model.parameters();
  const std::size_t n = split.train.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const LrSchedule schedule = make_schedule(cfg, steps_per_epoch);
  const std::vector<std::size_t> ks{1, 5};

  std::vector<EpochRecord> history;
  for (std::size_t epoch = state.epochs_completed; epoch < cfg.epochs; ++epoch) {
    const auto batches = data::epoch_batches(n, cfg.batch_size, cfg.seed, epoch);
    auto mix_rng = stream(cfg.seed, "mixup/" + std::to_string(epoch));
    auto dropout_rng = stream(cfg.seed, "dropout/" + std::to_string(epoch));
    const nn::ForwardContext ctx{true, &dropout_rng};

    std::vector<ExampleOutcome> outcomes(n);
    std::size_t seen = 0;
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const std::size_t step = epoch * steps_per_epoch + b;
      TrainingBatch batch =
          prepare_batch(data::make_batch(split.train, batches[b]), split.num_classes, cfg.label_smoothing);
      batch = mixup_batch(batch, cfg.mixup_alpha, mix_rng);

      ad::Tape tape;
      const ad::Tensor scores = model.forward(tape, batch.features, batch.encoded, ctx);
      const ad::Tensor loss = soft_cross_entropy(tape, scores, batch.targets);
      if (!std::isfinite(loss.item()))
        throw NumericalError("non-finite training loss at step " + std::to_string(step) + " (epoch " +
                             std::to_string(epoch + 1) + ")");

      params.zero_grad();
      tape.backward(loss);
      lr = schedule.at(step);
      state.optimizer->step(params, lr);

      score_rows(scores, batch.labels, ks, outcomes.data() + seen);
      const double rows = static_cast<double>(batch.labels.size());
      loss_sum += loss.item() * rows;
      seen += batch.labels.size();
    }

    EpochRecord record;
    record.epoch = epoch + 1;
    record.lr = lr;
    record.train = reduce_outcomes(outcomes, ks);
    record.train.mean_loss = loss_sum / static_cast<double>(n);
    record.validation = evaluate(model, split.validation, ks);
    state.epochs_completed = epoch + 1;
    history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return history;
}

std::vector<EpochRecord> train_loop(fusion::FusionModel& model, const data::DatasetSplit& split,
                                    const TrainConfig& cfg) {
  TrainState state;
  return train_loop(model, split, cfg, state);
}

std::string metrics_csv_header() { return "epoch,split,top1,top5,mean_loss,lr\n"; }

std::string metrics_csv_rows(const EpochRecord& record) {
  std::string out;
  char line[256];
  for (const auto& [name, m] : {std::pair<const char*, const Metrics*>{"train", &record.train},
                                {"val", &record.validation}}) {
    std::snprintf(line, sizeof line, "%zu,%s,%.17g,%.17g,%.17g,%.17g\n", record.epoch, name, m->top1(), m->top5(),
                  m->mean_loss, record.lr);
    out += line;
  }
  return out;
}

}  // namespace dmlp::train
