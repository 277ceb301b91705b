#include "hykey/training.hpp"

#include <algorithm>
#include <cmath>

#include "detail/random.hpp"
#include "hykey/config.hpp"
#include "hykey/error.hpp"
#include "hykey/matching.hpp"
#include "hykey/ops.hpp"

namespace hykey::training {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) fail(ErrorCode::kConfig, "train.learning_rate must be > 0");
  if (warmup_steps < 0) fail(ErrorCode::kConfig, "train.warmup_steps must be >= 0");
  if (batch_size < 1) fail(ErrorCode::kConfig, "train.batch_size must be >= 1");
  if (epoch_frame_cap < 1) fail(ErrorCode::kConfig, "train.epoch_frame_cap must be >= 1");
  if (epochs < 1) fail(ErrorCode::kConfig, "train.epochs must be >= 1");
  if (max_steps < 0) fail(ErrorCode::kConfig, "train.max_steps must be >= 0");
  if (!(grad_clip > 0)) fail(ErrorCode::kConfig, "train.grad_clip must be > 0");
  weights.validate();
  model.validate();
}

nlohmann::json TrainConfig::to_json() const {
  // Threshold and window settings follow the model section.
  auto loss_json = loss.to_json();
  for (const char* key : {"score_threshold", "window_radius", "window_temperature"}) loss_json.erase(key);
  return {{"learning_rate", learning_rate},
          {"warmup_steps", warmup_steps},
          {"batch_size", batch_size},
          {"epoch_frame_cap", epoch_frame_cap},
          {"epochs", epochs},
          {"epipolar_start_epoch", epipolar_start_epoch},
          {"epipolar", epipolar},
          {"grad_clip", grad_clip},
          {"max_steps", max_steps},
          {"seed", seed},
          {"weights", weights.to_json()},
          {"loss", loss_json},
          {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const std::string& path) {
  const config::Reader r(j, path);
  r.require_known({"learning_rate", "warmup_steps", "batch_size", "epoch_frame_cap", "epochs",
                   "epipolar_start_epoch", "epipolar", "grad_clip", "max_steps", "seed", "weights", "loss", "model"});
  TrainConfig c;
  c.learning_rate = r.get("learning_rate", c.learning_rate);
  c.warmup_steps = r.get("warmup_steps", c.warmup_steps);
  c.batch_size = r.get("batch_size", c.batch_size);
  c.epoch_frame_cap = r.get("epoch_frame_cap", c.epoch_frame_cap);
  c.epochs = r.get("epochs", c.epochs);
  c.epipolar_start_epoch = r.get("epipolar_start_epoch", c.epipolar_start_epoch);
  c.epipolar = r.get("epipolar", c.epipolar);
  c.grad_clip = r.get("grad_clip", c.grad_clip);
  c.max_steps = r.get("max_steps", c.max_steps);
  c.seed = r.get("seed", c.seed);
  if (r.has("weights")) c.weights = losses::LossWeights::from_json(r.raw().at("weights"), r.where("weights"));
  if (r.has("model")) c.model = model::HyKeyConfig::from_json(r.raw().at("model"), r.where("model"));
  c.loss = losses::LossSettings::from(c.model);
  if (r.has("loss")) {
    const auto l = r.child("loss");
    l.require_known({"sigmoid_width", "reprojection_radius", "label_radius", "huber_reprojection", "huber_epipolar",
                     "descriptor_temperature", "epipolar_temperature"});
    c.loss.sigmoid_width = l.get("sigmoid_width", c.loss.sigmoid_width);
    c.loss.reprojection_radius = l.get("reprojection_radius", c.loss.reprojection_radius);
    c.loss.label_radius = l.get("label_radius", c.loss.label_radius);
    c.loss.huber_reprojection = l.get("huber_reprojection", c.loss.huber_reprojection);
    c.loss.huber_epipolar = l.get("huber_epipolar", c.loss.huber_epipolar);
    c.loss.descriptor_temperature = l.get("descriptor_temperature", c.loss.descriptor_temperature);
    c.loss.epipolar_temperature = l.get("epipolar_temperature", c.loss.epipolar_temperature);
  }
  c.validate();
  return c;
}

double lr_schedule(std::int64_t step, const TrainConfig& config) {
  if (config.warmup_steps == 0) return config.learning_rate;
  return config.learning_rate * std::min(1.0, static_cast<double>(step) / config.warmup_steps);
}

bool adam_step(std::vector<model::Parameter>& params, AdamState& s, double lr) {
  for (const auto& p : params) {
    for (float g : p.value.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }
  if (s.m.size() != params.size()) {
    s.m.assign(params.size(), {});
    s.v.assign(params.size(), {});
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].value.mutable_data();
    auto grad = params[k].value.grad();
    auto& m = s.m[k];
    auto& v = s.v[k];
    if (m.size() != data.size()) {
      m.assign(data.size(), 0.0f);
      v.assign(data.size(), 0.0f);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      const double mi = s.beta1 * m[i] + (1.0 - s.beta1) * g;
      const double vi = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      data[i] = static_cast<float>(data[i] - lr * (mi / c1) / (std::sqrt(vi / c2) + s.eps));
    }
  }
  return true;
}

double clip_gradients(std::vector<model::Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (float g : p.value.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && std::isfinite(norm)) {
    const auto factor = static_cast<float>(max_norm / norm);
    for (auto& p : params) {
      for (float& g : p.value.node()->grad) g *= factor;
    }
  }
  return norm;
}

EpochPlan plan_epoch(const std::vector<std::size_t>& sizes, const TrainConfig& config, int epoch) {
  if (sizes.empty()) fail(ErrorCode::kEmptyDataset, "no training dataset configured");
  for (auto s : sizes) {
    if (s == 0) fail(ErrorCode::kEmptyDataset, "a training dataset is empty");
  }
  EpochPlan plan;
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  plan.frames = std::min<std::size_t>(total, static_cast<std::size_t>(config.epoch_frame_cap));

  struct Stream {
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    bool exhausted = false;
  };
  std::vector<Stream> streams(sizes.size());
  detail::Rng rng(hsi::mix_seed(config.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
  for (std::size_t d = 0; d < sizes.size(); ++d) {
    auto& order = streams[d].order;
    order.resize(sizes[d]);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  auto draw = [&](std::size_t d) {
    auto& s = streams[d];
    if (s.cursor < s.order.size()) return s.order[s.cursor++];
    if (!s.exhausted) {
      s.exhausted = true;
      plan.events.push_back("dataset " + std::to_string(d) + " exhausted at batch " +
                            std::to_string(plan.batches.size()) + "; resampling with replacement");
    }
    return static_cast<std::size_t>(rng.below(sizes[d]));
  };

  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::size_t assigned = 0;
  while (assigned < plan.frames) {
    const std::size_t n = std::min(batch, plan.frames - assigned);
    std::vector<BatchItem> items;
    if (sizes.size() == 1) {
      for (std::size_t i = 0; i < n; ++i) items.push_back({0, draw(0)});
    } else {
      const std::size_t first = (n + 1) / 2;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t d = i < first ? 0 : 1;
        items.push_back({d, draw(d)});
      }
    }
    assigned += n;
    plan.batches.push_back(std::move(items));
  }
  return plan;
}

TripletResult triplet_loss(model::HyKeyNetwork& network, const data::TrainingTriplet& t, const TrainConfig& config,
                           int epoch, std::uint64_t seed) {
  using model::Mode;
  const auto& s = config.loss;
  auto out0 = network.forward(t.i0, Mode::kTrain, hsi::mix_seed(seed, 0));
  auto out1 = network.forward(t.i1, Mode::kTrain, hsi::mix_seed(seed, 1), &t.valid1);

  losses::LossTerms terms;
  const auto pk0 = losses::loss_pk(out0.dense.score_map, out0.keypoints, s);
  const auto pk1 = losses::loss_pk(out1.dense.score_map, out1.keypoints, s);
  terms.pk = {scale(add(pk0.value, pk1.value), 0.5f), pk0.empty && pk1.empty};

  const auto det0 = static_cast<std::int64_t>(out0.keypoints.detected);
  const auto det1 = static_cast<std::int64_t>(out1.keypoints.detected);
  terms.rp = losses::loss_rp(narrow(out0.keypoints.points, 0, det0), narrow(out0.keypoints.scores, 0, det0),
                             narrow(out1.keypoints.points, 0, det1), narrow(out1.keypoints.scores, 0, det1), t.h01, s);

  const auto labels = losses::homography_labels(out0.keypoints.points, out1.keypoints.points, t.h01, s.label_radius);
  const Tensor sim01 = matching::similarity(out0.descriptors, out1.descriptors);
  terms.rel = losses::loss_rel(out0.keypoints.scores, out1.keypoints.scores, sim01, labels, s);
  terms.desc = losses::loss_desc(sim01, labels, s.descriptor_temperature);

  const float w_epi = losses::epipolar_weight(config.weights, epoch, config.epipolar_start_epoch, config.epipolar);
  if (t.second && w_epi > 0.0f) {
    try {
      const auto f = geometry::compose_fundamental(t.second->k0, t.second->k2, t.second->pose02);
      auto out2 = network.forward(t.second->cube, Mode::kTrain, hsi::mix_seed(seed, 2));
      const Tensor sim02 = matching::similarity(out0.descriptors, out2.descriptors);
      terms.epi = losses::loss_epi(out0.keypoints.points, out2.keypoints.points, sim02, f.m, t.second->k0,
                                   t.second->k2, s);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateMotion) throw;
      terms.epi = losses::Term{Tensor::scalar(0.0f), true};
    }
  }

  TripletResult r;
  r.loss = losses::total_loss(terms, config.weights, epoch, config.epipolar_start_epoch, config.epipolar);
  r.keypoints0 = out0.keypoints.pixels.size();
  r.keypoints1 = out1.keypoints.pixels.size();
  r.labelled = labels.count();
  return r;
}

nlohmann::json StepLog::to_json() const {
  nlohmann::json j{{"step", step},
                   {"epoch", epoch},
                   {"lr", lr},
                   {"loss", loss.to_json()},
                   {"keypoints", keypoints},
                   {"labelled", labelled},
                   {"grad_norm", grad_norm},
                   {"clipped", clipped},
                   {"skipped", skipped}};
  if (!events.empty()) j["events"] = events;
  return j;
}

Trainer::Trainer(TrainConfig config, std::vector<std::vector<data::TrainingTriplet>> datasets)
    : config_(std::move(config)), datasets_(std::move(datasets)), network_(config_.model, config_.seed) {
  config_.validate();
  if (datasets_.empty() || datasets_.size() > 2) {
    fail(ErrorCode::kConfig, "training takes one or two datasets");
  }
  for (const auto& d : datasets_) {
    if (d.empty()) fail(ErrorCode::kEmptyDataset, "a training dataset is empty");
  }
  network_.set_requires_grad(true);
}

bool Trainer::finished() const {
  return epoch_ > config_.epochs || (config_.max_steps > 0 && step_ >= config_.max_steps);
}

void Trainer::ensure_plan() {
  if (planned_epoch_ == epoch_) return;
  std::vector<std::size_t> sizes;
  for (const auto& d : datasets_) sizes.push_back(d.size());
  plan_ = plan_epoch(sizes, config_, epoch_);
  planned_epoch_ = epoch_;
}

StepLog Trainer::step() {
  if (finished()) fail(ErrorCode::kUsage, "training already finished");
  ensure_plan();
  const auto& items = plan_.batches[batch_];

  StepLog log;
  log.epoch = epoch_;
  if (batch_ == 0) log.events = plan_.events;
  network_.zero_grad();
  const float inv_batch = 1.0f / static_cast<float>(items.size());
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto& triplet = datasets_[items[k].dataset][items[k].index];
    Tape tape;
    TapeScope scope(tape);
    const auto seed = hsi::mix_seed(config_.seed, static_cast<std::uint64_t>(step_) * 1024 + k);
    auto r = triplet_loss(network_, triplet, config_, epoch_, seed);
    tape.backward(scale(r.loss.total, inv_batch));

    auto& b = log.loss;
    const auto& rb = r.loss.breakdown;
    b.weights = rb.weights;
    b.pk += rb.pk * inv_batch;
    b.rp += rb.rp * inv_batch;
    b.rel += rb.rel * inv_batch;
    b.desc += rb.desc * inv_batch;
    b.epi += rb.epi * inv_batch;
    b.total += rb.total * inv_batch;
    for (const auto& w : rb.warnings) {
      if (std::find(b.warnings.begin(), b.warnings.end(), w) == b.warnings.end()) b.warnings.push_back(w);
    }
    log.keypoints += 0.5 * static_cast<double>(r.keypoints0 + r.keypoints1) * inv_batch;
    log.labelled += static_cast<double>(r.labelled) * inv_batch;
  }

  log.grad_norm = clip_gradients(network_.parameters(), config_.grad_clip);
  log.clipped = log.grad_norm > config_.grad_clip;
  log.lr = lr_schedule(step_ + 1, config_);
  log.skipped = !adam_step(network_.parameters(), adam_, log.lr);
  if (log.skipped) log.events.emplace_back("non-finite gradient; optimiser step skipped");
  network_.zero_grad();

  ++step_;
  log.step = step_;
  if (++batch_ >= plan_.batches.size()) {
    batch_ = 0;
    ++epoch_;
  }
  return log;
}

void Trainer::run(const std::function<void(const StepLog&)>& sink) {
  while (!finished()) {
    const auto log = step();
    if (sink) sink(log);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ckpt;
  export_network(network_, ckpt);
  ckpt.metadata["train"] = config_.to_json();
  ckpt.metadata["step"] = step_;
  ckpt.metadata["epoch"] = epoch_;
  ckpt.metadata["batch"] = batch_;
  ckpt.metadata["adam_step"] = adam_.step;
  const auto& params = network_.parameters();
  for (std::size_t k = 0; k < adam_.m.size(); ++k) {
    ckpt.add("adam/m/" + params[k].name, params[k].value.shape(), adam_.m[k]);
    ckpt.add("adam/v/" + params[k].name, params[k].value.shape(), adam_.v[k]);
  }
  return ckpt;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("model") ||
      model::HyKeyConfig::from_json(ckpt.metadata.at("model")) != config_.model) {
    fail(ErrorCode::kCheckpointMismatch, "checkpoint model config differs from the training config");
  }
  import_weights(network_, ckpt);
  step_ = ckpt.metadata.value("step", std::int64_t{0});
  epoch_ = ckpt.metadata.value("epoch", 1);
  batch_ = ckpt.metadata.value("batch", std::size_t{0});
  adam_ = AdamState{};
  adam_.step = ckpt.metadata.value("adam_step", std::int64_t{0});
  auto& params = network_.parameters();
  if (adam_.step > 0) {
    adam_.m.resize(params.size());
    adam_.v.resize(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto* m = ckpt.find("adam/m/" + params[k].name);
      const auto* v = ckpt.find("adam/v/" + params[k].name);
      if (m == nullptr || v == nullptr || m->shape != params[k].value.shape() || v->shape != m->shape) {
        fail(ErrorCode::kCheckpointMismatch, "optimiser state missing or malformed for " + params[k].name);
      }
      adam_.m[k] = m->data;
      adam_.v[k] = v->data;
    }
  }
  planned_epoch_ = 0;
}

}  // namespace hykey::training
