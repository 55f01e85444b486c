#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wonderm/dataset.hpp"
#include "wonderm/metrics.hpp"

namespace wonderm {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// P[k] is the I x J probability matrix of network k.
template <typename S>
using ProbabilityTensor = std::vector<Matrix<S>>;

// K x J, row k holds network k's per-class weights.
template <typename S>
using WeightMatrix = Matrix<S>;

// Per-class TPRs of each network's dev confusion matrix.
Eigen::MatrixXd compute_weights(std::span<const ConfusionMatrix> dev_confusions);

// Score(i, j) = sum_k W(k, j) P[k](i, j), normalized over j per image.
// A row whose total is not positive raises an error naming the image
// (its id when `ids` is given, else its index).
template <typename S>
Matrix<S> weighted_scores(const ProbabilityTensor<S>& P, const WeightMatrix<S>& W,
                          std::span<const std::string> ids = {}) {
  if (P.empty()) throw PipelineError("weighted_scores: no networks");
  if (static_cast<Eigen::Index>(P.size()) != W.rows())
    throw PipelineError("weighted_scores: " + std::to_string(P.size()) + " networks but " + std::to_string(W.rows()) +
                        " weight rows");
  const Eigen::Index I = P.front().rows(), J = P.front().cols();
  if (W.cols() != J) throw PipelineError("weighted_scores: weight matrix has the wrong class count");
  if (!ids.empty() && static_cast<Eigen::Index>(ids.size()) != I)
    throw PipelineError("weighted_scores: id list does not match image count");
  Matrix<S> num = Matrix<S>::Zero(I, J);
  for (std::size_t k = 0; k < P.size(); ++k) {
    if (P[k].rows() != I || P[k].cols() != J) throw PipelineError("weighted_scores: probability shapes differ");
    num.array() += P[k].array().rowwise() * W.row(static_cast<Eigen::Index>(k)).array();
  }
  const Eigen::Matrix<S, Eigen::Dynamic, 1> den = num.rowwise().sum();
  for (Eigen::Index i = 0; i < I; ++i)
    if (!(den[i] > S(0)))
      throw PipelineError("degenerate ensemble input: zero weighted mass for image " +
                          (ids.empty() ? "#" + std::to_string(i) : ids[static_cast<std::size_t>(i)]));
  return num.array().colwise() / den.array();
}

// Argmax per row; ties go to the lowest class index.
template <typename Derived>
std::vector<int> predict(const Eigen::MatrixBase<Derived>& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j)
      if (scores(i, j) > scores(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<ClassLabel> predict_labels(const Eigen::MatrixXd& scores);

// `image,MEL,...,VASC` probability table and `image,label` argmax table.
void write_predictions(const std::filesystem::path& file, std::span<const std::string> ids, const Eigen::MatrixXd& scores);
void write_labels(const std::filesystem::path& file, std::span<const std::string> ids, std::span<const int> labels);

struct Predictions {
  std::vector<std::string> ids;
  Eigen::MatrixXd scores;
};
Predictions read_predictions(const std::filesystem::path& file);

// weights.json: member checkpoints, class codes and the K x J matrix.
void write_weights(const std::filesystem::path& file, std::span<const std::filesystem::path> members,
                   const Eigen::MatrixXd& weights);
Eigen::MatrixXd read_weights(const std::filesystem::path& file);

struct EnsembleResult {
  Eigen::MatrixXd weights;                    // K x J
  std::vector<ConfusionMatrix> dev_confusions;  // per member
  Eigen::MatrixXd dev_scores;                 // ensemble scores on dev
  ConfusionMatrix dev_confusion;              // ensemble on dev
  std::vector<std::string> target_ids;
  Eigen::MatrixXd target_scores;
  std::vector<int> target_predictions;
};

// Loads each checkpoint, derives weights from dev, scores the target and
// writes predictions.csv / labels.csv / weights.json under out_dir.
EnsembleResult run_ensemble(std::span<const std::filesystem::path> checkpoints, const DatasetManifest& dev,
                            const DatasetManifest& target, const std::filesystem::path& out_dir);

}  // namespace wonderm
