#include "wonderm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "wonderm/preprocess.hpp"
#include "wonderm/random.hpp"

namespace wonderm {

namespace fs = std::filesystem;

namespace {
constexpr std::array<std::string_view, 3> kLossNames = {"bce_dice", "cross_entropy", "bce"};
}

std::string_view loss_name(LossKind k) { return kLossNames[static_cast<std::size_t>(k)]; }

LossKind parse_loss(std::string_view s) {
  for (std::size_t i = 0; i < kLossNames.size(); ++i)
    if (kLossNames[i] == s) return static_cast<LossKind>(i);
  throw PipelineError("unknown loss '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw PipelineError("lr0 must be a finite non-negative number");
  if (!(decay > 0.0 && decay <= 1.0)) throw PipelineError("decay must lie in (0, 1]");
  if (decay_every < 1) throw PipelineError("decay_every must be >= 1");
  if (epochs < 0) throw PipelineError("epochs must be >= 0");
  if (batch_size < 1) throw PipelineError("batch_size must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw PipelineError("momentum must lie in [0, 1)");
  if (calibration_images < 0) throw PipelineError("calibration_images must be >= 0");
}

Json to_json(const TrainConfig& c) {
  Json j;
  j["lr0"] = c.lr0;
  j["decay"] = c.decay;
  j["decay_every"] = c.decay_every;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["momentum"] = c.momentum;
  j["loss"] = loss_name(c.loss);
  j["best_dev"] = c.best_dev;
  j["calibration_images"] = c.calibration_images;
  return j;
}

TrainConfig train_config_from_json(const Json& j, TrainConfig d) {
  d.lr0 = j.value("lr0", d.lr0);
  d.decay = j.value("decay", d.decay);
  d.decay_every = j.value("decay_every", d.decay_every);
  d.epochs = j.value("epochs", d.epochs);
  d.batch_size = j.value("batch_size", d.batch_size);
  d.seed = j.value("seed", d.seed);
  d.momentum = j.value("momentum", d.momentum);
  if (j.contains("loss")) d.loss = parse_loss(j["loss"].get<std::string>());
  d.best_dev = j.value("best_dev", d.best_dev);
  d.calibration_images = j.value("calibration_images", d.calibration_images);
  d.validate();
  return d;
}

double lr_schedule(const TrainConfig& c, int epoch) {
  if (epoch < 0) throw PipelineError("epoch must be >= 0");
  return c.lr0 * std::pow(c.decay, epoch / c.decay_every);
}

Json to_json(const RunRecord& r) {
  Json j;
  Json eps = Json::array();
  for (const auto& e : r.epochs) {
    Json x;
    x["epoch"] = e.epoch;
    x["loss"] = e.loss;
    x["dev_metric"] = e.dev_metric ? Json(*e.dev_metric) : Json(nullptr);
    x["lr"] = e.lr;
    x["seconds"] = e.seconds;
    eps.push_back(std::move(x));
  }
  j["epochs"] = std::move(eps);
  j["checkpoint"] = r.checkpoint ? Json(r.checkpoint->string()) : Json(nullptr);
  j["early_stopped"] = r.early_stopped;
  return j;
}

void write_run_record(const fs::path& file, const RunRecord& r) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw PipelineError("cannot write " + file.string());
  out << to_json(r).dump(1) << '\n';
}

void Sgd::step(const nn::ParamList<Scalar>& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.assign(params.size(), Eigen::VectorXf());
    for (std::size_t i = 0; i < params.size(); ++i) velocity_[i] = Eigen::VectorXf::Zero(params[i]->size());
  }
  const auto flr = static_cast<float>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    if (!p->trainable) continue;
    if (momentum_ > 0.0) {
      velocity_[i] = static_cast<float>(momentum_) * velocity_[i] + p->grad;
      p->value -= flr * velocity_[i];
    } else {
      p->value -= flr * p->grad;
    }
  }
}

Image load_input(const ImageRecord& r, int side) {
  Image img = load_pixels(r);
  if (img.is_square() && img.rows() == side) return img;
  return fit_square(img, side);
}

namespace {

Mask load_target_mask(const ImageRecord& r, int side) {
  Mask m = load_mask(r);
  if (m.is_square() && m.rows() == side) return m;
  return resize_mask(pad_to_square(m), side);
}

Tensor batch_images(const DatasetManifest& m, const std::vector<std::size_t>& batch, int side) {
  std::vector<Image> imgs;
  for (std::size_t i : batch) imgs.push_back(load_input(m[i], side));
  return images_to_tensor(imgs);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::derived(seed, 0x7a11, epoch);
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

void check_finite(double loss, int epoch, std::size_t step) {
  if (!std::isfinite(loss))
    throw PipelineError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                        std::to_string(step));
}

struct Snapshot {
  std::vector<Eigen::VectorXf> values;
  void take(const nn::ParamList<Scalar>& ps) {
    values.clear();
    for (auto* p : ps) values.push_back(p->value);
  }
  void restore(const nn::ParamList<Scalar>& ps) const {
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
  }
};

// Shared epoch loop. `step` runs forward+backward on one batch of record
// indices and returns the batch loss (a mean over items).
template <typename StepFn, typename DevFn, typename CalibFn>
RunRecord run_epochs(const nn::ParamList<Scalar>& params, std::size_t n, const TrainConfig& cfg, bool has_dev,
                     StepFn step, DevFn dev_metric, CalibFn calibrate) {
  cfg.validate();
  const bool calibrating = cfg.calibration_images > 0 && n > 0;
  std::vector<std::size_t> calib = epoch_order(n, cfg.seed ^ 0xca11b, 0);
  calib.resize(std::min(n, static_cast<std::size_t>(cfg.calibration_images)));
  std::sort(calib.begin(), calib.end());
  auto recalibrate = [&] {
    for (std::size_t b = 0; b < calib.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(calib.size(), b + static_cast<std::size_t>(cfg.batch_size));
      calibrate(std::vector<std::size_t>(calib.begin() + static_cast<long>(b), calib.begin() + static_cast<long>(end)));
    }
  };
  RunRecord rec;
  Sgd opt(cfg.momentum);
  Snapshot best;
  double best_metric = -1.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(cfg, e);
    const auto order = epoch_order(n, cfg.seed, e);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < n; b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> batch(order.begin() + static_cast<long>(b), order.begin() + static_cast<long>(end));
      nn::zero_grad(params);
      const double loss = step(batch);
      check_finite(loss, e, steps);
      opt.step(params, lr);
      total += loss * static_cast<double>(batch.size());
      ++steps;
    }
    EpochLog log;
    log.epoch = e;
    log.loss = n ? total / static_cast<double>(n) : 0.0;
    log.lr = lr;
    // Dev scores are taken with freshly calibrated statistics so that a
    // best-dev snapshot behaves exactly as it did when it was scored.
    if (has_dev && calibrating) recalibrate();
    log.dev_metric = dev_metric();
    if (cfg.best_dev && log.dev_metric && *log.dev_metric > best_metric) {
      best_metric = *log.dev_metric;
      best.take(params);
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back(log);
  }
  if (cfg.best_dev && !best.values.empty()) best.restore(params);
  if (!has_dev && calibrating && cfg.epochs > 0) recalibrate();
  return rec;
}

void expect_loss(const TrainConfig& cfg, LossKind k, std::string_view what) {
  if (cfg.loss != k)
    throw PipelineError(std::string(what) + " training expects loss '" + std::string(loss_name(k)) + "', config has '" +
                        std::string(loss_name(cfg.loss)) + "'");
}

}  // namespace

RunRecord train_seg(SegModel& model, const DatasetManifest& data, const TrainConfig& cfg,
                    const std::optional<fs::path>& checkpoint) {
  expect_loss(cfg, LossKind::BceDice, "segmentation");
  for (const auto& r : data.records())
    if (!r.has_mask()) throw PipelineError("segmentation record " + r.id + " has no mask");
  const int side = model.spec().input_side;
  auto params = model.parameters();
  RunRecord rec = run_epochs(
      params, data.size(), cfg, false,
      [&](const std::vector<std::size_t>& batch) {
        std::vector<Image> imgs;
        std::vector<Mask> masks;
        for (std::size_t i : batch) {
          imgs.push_back(load_input(data[i], side));
          masks.push_back(load_target_mask(data[i], side));
        }
        Tensor logits = model.forward(images_to_tensor(imgs), nn::Mode::Train);
        auto loss = nn::bce_dice(logits, masks_to_tensor(masks));
        model.backward(loss.grad);
        return static_cast<double>(loss.value);
      },
      [] { return std::optional<double>(); },
      [&](const std::vector<std::size_t>& batch) { model.forward(batch_images(data, batch, side), nn::Mode::Calibrate); });
  if (checkpoint) {
    save_seg(*checkpoint, model, {{"train", to_json(cfg)}, {"records", data.size()}});
    rec.checkpoint = checkpoint;
  }
  return rec;
}

RunRecord train_cls(ClsModel& model, const DatasetManifest& train, const DatasetManifest& dev, const TrainConfig& cfg,
                    const std::optional<fs::path>& checkpoint) {
  expect_loss(cfg, LossKind::CrossEntropy, "classification");
  const std::vector<int> labels = label_indices(train);
  const int side = model.spec().input_side;
  auto params = model.parameters();
  RunRecord rec = run_epochs(
      params, train.size(), cfg, !dev.empty(),
      [&](const std::vector<std::size_t>& batch) {
        std::vector<Image> imgs;
        std::vector<int> y;
        for (std::size_t i : batch) {
          imgs.push_back(load_input(train[i], side));
          y.push_back(labels[i]);
        }
        Tensor logits = model.forward(images_to_tensor(imgs), nn::Mode::Train);
        auto loss = nn::cross_entropy(logits, std::span<const int>(y));
        model.backward(loss.grad);
        return static_cast<double>(loss.value);
      },
      [&]() -> std::optional<double> {
        if (dev.empty()) return std::nullopt;
        return class_metrics(evaluate_cls(model, dev)).balanced_accuracy;
      },
      [&](const std::vector<std::size_t>& batch) { model.forward(batch_images(train, batch, side), nn::Mode::Calibrate); });
  if (checkpoint) {
    save_cls(*checkpoint, model, {{"train", to_json(cfg)}, {"records", train.size()}});
    rec.checkpoint = checkpoint;
  }
  return rec;
}

RunRecord train_hair(HairNet& model, const DatasetManifest& data, const TrainConfig& cfg,
                     const std::optional<fs::path>& checkpoint) {
  expect_loss(cfg, LossKind::Bce, "hair");
  const int side = model.input_side();
  auto params = model.parameters();
  RunRecord rec = run_epochs(
      params, data.size(), cfg, false,
      [&](const std::vector<std::size_t>& batch) {
        std::vector<Image> imgs;
        Tensor target(static_cast<int>(batch.size()), 1, 1, 1);
        for (std::size_t k = 0; k < batch.size(); ++k) {
          imgs.push_back(load_input(data[batch[k]], side));
          target.data[static_cast<Eigen::Index>(k)] = data[batch[k]].hairy ? 1.0f : 0.0f;
        }
        Tensor logits = model.forward(images_to_tensor(imgs), nn::Mode::Train);
        auto loss = nn::bce_with_logits(logits, target);
        model.backward(loss.grad);
        return static_cast<double>(loss.value);
      },
      [] { return std::optional<double>(); },
      [&](const std::vector<std::size_t>& batch) { model.forward(batch_images(data, batch, side), nn::Mode::Calibrate); });
  model.set_trained(true);
  if (checkpoint) {
    save_hair(*checkpoint, model, {{"train", to_json(cfg)}, {"records", data.size()}});
    rec.checkpoint = checkpoint;
  }
  return rec;
}

Eigen::MatrixXd predict_probabilities(ClsModel& model, const DatasetManifest& m, int batch_size) {
  const int side = model.spec().input_side;
  Eigen::MatrixXd p(static_cast<Eigen::Index>(m.size()), model.n_classes());
  for (std::size_t b = 0; b < m.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(m.size(), b + static_cast<std::size_t>(batch_size));
    std::vector<Image> imgs;
    for (std::size_t i = b; i < end; ++i) imgs.push_back(load_input(m[i], side));
    p.middleRows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(end - b)) =
        model.predict(images_to_tensor(imgs)).cast<double>();
  }
  return p;
}

Eigen::VectorXd predict_hair(HairNet& model, const DatasetManifest& m, int batch_size) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(m.size()));
  for (std::size_t b = 0; b < m.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(m.size(), b + static_cast<std::size_t>(batch_size));
    std::vector<Image> imgs;
    for (std::size_t i = b; i < end; ++i) imgs.push_back(load_input(m[i], model.input_side()));
    p.segment(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(end - b)) =
        model.predict(images_to_tensor(imgs)).cast<double>();
  }
  return p;
}

double mean_dice(SegModel& model, const DatasetManifest& m, int batch_size) {
  if (m.empty()) throw PipelineError("mean_dice: empty manifest");
  const int side = model.spec().input_side;
  double total = 0.0;
  for (std::size_t b = 0; b < m.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(m.size(), b + static_cast<std::size_t>(batch_size));
    std::vector<Image> imgs;
    std::vector<Mask> masks;
    for (std::size_t i = b; i < end; ++i) {
      imgs.push_back(load_input(m[i], side));
      masks.push_back(load_target_mask(m[i], side));
    }
    const Tensor prob = model.predict(images_to_tensor(imgs));
    const Tensor truth = masks_to_tensor(masks);
    for (int i = 0; i < prob.n; ++i) {
      const auto p = (prob.item(i).array() >= 0.5f).cast<double>();
      const auto t = truth.item(i).array().cast<double>();
      const double inter = (p * t).sum(), denom = p.sum() + t.sum();
      total += denom == 0.0 ? 1.0 : 2.0 * inter / denom;
    }
  }
  return total / static_cast<double>(m.size());
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& p) {
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < p.cols(); ++j)
      if (p(i, j) > p(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> label_indices(const DatasetManifest& m) {
  std::vector<int> y;
  y.reserve(m.size());
  for (const auto& r : m.records()) {
    if (!r.label) throw PipelineError("record " + r.id + " has no label");
    y.push_back(index_of(*r.label));
  }
  return y;
}

ConfusionMatrix evaluate_cls(ClsModel& model, const DatasetManifest& labeled) {
  const auto truth = label_indices(labeled);
  const auto pred = argmax_rows(predict_probabilities(model, labeled));
  return confusion(std::span<const int>(truth), std::span<const int>(pred), model.n_classes());
}

}  // namespace wonderm
