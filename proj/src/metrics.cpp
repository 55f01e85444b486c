#include "wonderm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wonderm/image.hpp"

namespace wonderm {

ConfusionMatrix::ConfusionMatrix(CountMatrix c) : counts(std::move(c)) {
  if (counts.rows() != counts.cols()) throw PipelineError("confusion matrix must be square");
  if ((counts.array() < 0).any()) throw PipelineError("confusion matrix has negative counts");
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, int n_classes) {
  if (truth.size() != pred.size())
    throw PipelineError("confusion: " + std::to_string(truth.size()) + " truths vs " + std::to_string(pred.size()) +
                        " predictions");
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes || pred[i] < 0 || pred[i] >= n_classes)
      throw PipelineError("confusion: label out of range at position " + std::to_string(i));
    ++cm.counts(truth[i], pred[i]);
  }
  return cm;
}

ConfusionMatrix confusion(std::span<const ClassLabel> truth, std::span<const ClassLabel> pred) {
  std::vector<int> t(truth.size()), p(pred.size());
  std::transform(truth.begin(), truth.end(), t.begin(), index_of);
  std::transform(pred.begin(), pred.end(), p.begin(), index_of);
  return confusion(std::span<const int>(t), std::span<const int>(p));
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double s = m.row(r).sum();
    if (s != 0.0) out.row(r) /= s;
  }
  return out;
}

Eigen::MatrixXd normalize_rows(const ConfusionMatrix& cm) { return normalize_rows(Eigen::MatrixXd(cm.counts.cast<double>())); }

Eigen::VectorXd true_positive_rates(const ConfusionMatrix& cm) {
  Eigen::VectorXd tpr = Eigen::VectorXd::Zero(cm.classes());
  for (int j = 0; j < cm.classes(); ++j) {
    const long row = cm.counts.row(j).sum();
    if (row > 0) tpr[j] = static_cast<double>(cm.counts(j, j)) / static_cast<double>(row);
  }
  return tpr;
}

ClassMetrics class_metrics(const ConfusionMatrix& cm) {
  const long total = cm.total();
  if (total == 0) throw PipelineError("metrics are undefined for an empty confusion matrix");
  ClassMetrics m;
  m.tpr = true_positive_rates(cm);
  double sum = 0;
  int present = 0;
  for (int j = 0; j < cm.classes(); ++j)
    if (cm.counts.row(j).sum() > 0) {
      sum += m.tpr[j];
      ++present;
    }
  m.balanced_accuracy = sum / present;
  m.accuracy = static_cast<double>(cm.counts.trace()) / static_cast<double>(total);
  return m;
}

std::string format_confusion(const ConfusionMatrix& cm, const std::string& title) {
  const bool named = cm.classes() == kNumClasses;
  auto name = [&](int j) { return named ? std::string(kClassCodes[static_cast<std::size_t>(j)]) : std::to_string(j); };
  std::ostringstream os;
  if (!title.empty()) os << title << '\n';
  char buf[64];
  os << "counts (rows: truth, columns: prediction)\n" << std::string(7, ' ');
  for (int j = 0; j < cm.classes(); ++j) {
    std::snprintf(buf, sizeof buf, "%7s", name(j).c_str());
    os << buf;
  }
  os << '\n';
  for (int r = 0; r < cm.classes(); ++r) {
    std::snprintf(buf, sizeof buf, "%-7s", name(r).c_str());
    os << buf;
    for (int c = 0; c < cm.classes(); ++c) {
      std::snprintf(buf, sizeof buf, "%7ld", cm.counts(r, c));
      os << buf;
    }
    os << '\n';
  }
  const Eigen::MatrixXd n = normalize_rows(cm);
  os << "normalized\n";
  for (int r = 0; r < cm.classes(); ++r) {
    std::snprintf(buf, sizeof buf, "%-7s", name(r).c_str());
    os << buf;
    for (int c = 0; c < cm.classes(); ++c) {
      std::snprintf(buf, sizeof buf, "%7.3f", n(r, c));
      os << buf;
    }
    os << '\n';
  }
  if (cm.total() > 0) {
    const ClassMetrics m = class_metrics(cm);
    std::snprintf(buf, sizeof buf, "balanced_accuracy %.4f\naccuracy %.4f\n", m.balanced_accuracy, m.accuracy);
    os << buf;
  }
  return os.str();
}

void write_confusion_text(const std::filesystem::path& file, const ConfusionMatrix& cm, const std::string& title) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw PipelineError("cannot write " + file.string());
  out << format_confusion(cm, title);
}

void write_heatmap(const std::filesystem::path& file, const ConfusionMatrix& cm, int cell) {
  const Eigen::MatrixXd n = normalize_rows(cm);
  const int j = cm.classes(), gap = 2, side = j * cell + (j + 1) * gap;
  Image img(side, side, 3, 96);
  for (int r = 0; r < j; ++r)
    for (int c = 0; c < j; ++c) {
      const double v = n(r, c);
      const auto mix = [v](int lo, int hi) { return static_cast<std::uint8_t>(std::lround(lo + (hi - lo) * v)); };
      const std::uint8_t rgb[3] = {mix(255, 8), mix(255, 48), mix(255, 107)};
      const int y0 = gap + r * (cell + gap), x0 = gap + c * (cell + gap);
      for (int y = y0; y < y0 + cell; ++y)
        for (int x = x0; x < x0 + cell; ++x)
          for (int k = 0; k < 3; ++k) img(y, x, k) = rgb[k];
    }
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  write_image(file, img);
}

}  // namespace wonderm
