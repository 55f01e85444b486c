#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wonderm/labels.hpp"

namespace wonderm {

using CountMatrix = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>;

// Rows are the true class, columns the prediction.
struct ConfusionMatrix {
  CountMatrix counts;

  explicit ConfusionMatrix(int j = kNumClasses) : counts(CountMatrix::Zero(j, j)) {}
  explicit ConfusionMatrix(CountMatrix c);
  int classes() const { return static_cast<int>(counts.rows()); }
  long total() const { return counts.sum(); }
  bool operator==(const ConfusionMatrix& o) const { return counts == o.counts; }
};

struct ClassMetrics {
  Eigen::VectorXd tpr;  // 0 for classes with no true samples
  double balanced_accuracy = 0.0;
  double accuracy = 0.0;
};

ConfusionMatrix confusion(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred);
ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int n_classes = kNumClasses);

// Nonzero rows sum to 1; zero rows stay zero.
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m);
Eigen::MatrixXd normalize_rows(const ConfusionMatrix& cm);

Eigen::VectorXd true_positive_rates(const ConfusionMatrix& cm);

// Balanced accuracy averages over classes that occur in the truth.
ClassMetrics class_metrics(const ConfusionMatrix& cm);

std::string format_confusion(const ConfusionMatrix& cm, const std::string& title = {});
void write_confusion_text(const std::filesystem::path& file, const ConfusionMatrix& cm, const std::string& title = {});
// Row-normalized heatmap (white = 0, dark blue = 1), one square per entry.
void write_heatmap(const std::filesystem::path& file, const ConfusionMatrix& cm, int cell = 48);

}  // namespace wonderm
