#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wonderm/checkpoint.hpp"
#include "wonderm/dataset.hpp"
#include "wonderm/metrics.hpp"
#include "wonderm/nets.hpp"

namespace wonderm {

enum class LossKind { BceDice, CrossEntropy, Bce };
std::string_view loss_name(LossKind k);
LossKind parse_loss(std::string_view s);

struct TrainConfig {
  double lr0 = 0.001;
  double decay = 0.9;
  int decay_every = 10;
  int epochs = 50;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double momentum = 0.0;
  LossKind loss = LossKind::CrossEntropy;
  bool best_dev = false;  // keep the best-dev-epoch parameters instead of the last
  // Batch-norm running statistics are replaced by their plain average over
  // this many training images (a fixed seeded subset) after the last epoch
  // and before every dev evaluation. 0 keeps the moving averages.
  int calibration_images = 1024;

  static TrainConfig seg() { return {.epochs = 100, .loss = LossKind::BceDice}; }
  static TrainConfig cls() { return {.epochs = 50, .loss = LossKind::CrossEntropy}; }
  static TrainConfig hair() { return {.epochs = 30, .loss = LossKind::Bce}; }

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, TrainConfig defaults);

// lr0 * decay^floor(epoch / decay_every)
double lr_schedule(const TrainConfig& c, int epoch);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> dev_metric;
  double lr = 0.0;
  double seconds = 0.0;
};

struct RunRecord {
  std::vector<EpochLog> epochs;
  std::optional<std::filesystem::path> checkpoint;
  bool early_stopped = false;
};

Json to_json(const RunRecord& r);
void write_run_record(const std::filesystem::path& file, const RunRecord& r);

// One SGD update over every trainable parameter. Velocity buffers are keyed
// by position in `params`.
class Sgd {
 public:
  explicit Sgd(double momentum = 0.0) : momentum_(momentum) {}
  void step(const nn::ParamList<Scalar>& params, double lr);

 private:
  double momentum_;
  std::vector<Eigen::VectorXf> velocity_;
};

// Batches are drawn from a seeded permutation per epoch; images that do not
// match the model side are padded and resized on the fly.
RunRecord train_seg(SegModel& model, const DatasetManifest& data, const TrainConfig& cfg,
                    const std::optional<std::filesystem::path>& checkpoint = std::nullopt);
RunRecord train_cls(ClsModel& model, const DatasetManifest& train, const DatasetManifest& dev, const TrainConfig& cfg,
                    const std::optional<std::filesystem::path>& checkpoint = std::nullopt);
// Labels are the records' hairy flags.
RunRecord train_hair(HairNet& model, const DatasetManifest& data, const TrainConfig& cfg,
                     const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

// Inference helpers, evaluation mode, fixed batch order.
Image load_input(const ImageRecord& r, int side);
Eigen::MatrixXd predict_probabilities(ClsModel& model, const DatasetManifest& m, int batch_size = 16);
Eigen::VectorXd predict_hair(HairNet& model, const DatasetManifest& m, int batch_size = 16);
// Mean per-image dice of the thresholded (0.5) prediction.
double mean_dice(SegModel& model, const DatasetManifest& m, int batch_size = 8);

std::vector<int> argmax_rows(const Eigen::MatrixXd& p);
std::vector<int> label_indices(const DatasetManifest& m);
ConfusionMatrix evaluate_cls(ClsModel& model, const DatasetManifest& labeled);

}  // namespace wonderm
