#include "wonderm/ensemble.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "wonderm/checkpoint.hpp"
#include "wonderm/trainer.hpp"

namespace wonderm {

namespace fs = std::filesystem;

Eigen::MatrixXd compute_weights(std::span<const ConfusionMatrix> dev_confusions) {
  if (dev_confusions.empty()) throw PipelineError("compute_weights: no confusion matrices");
  const int j = dev_confusions.front().classes();
  Eigen::MatrixXd w(static_cast<Eigen::Index>(dev_confusions.size()), j);
  for (std::size_t k = 0; k < dev_confusions.size(); ++k) {
    if (dev_confusions[k].classes() != j)
      throw PipelineError("compute_weights: confusion matrix " + std::to_string(k) + " is " +
                          std::to_string(dev_confusions[k].classes()) + "x" + std::to_string(dev_confusions[k].classes()) +
                          ", expected " + std::to_string(j) + "x" + std::to_string(j));
    w.row(static_cast<Eigen::Index>(k)) = true_positive_rates(dev_confusions[k]).transpose();
  }
  return w;
}

std::vector<ClassLabel> predict_labels(const Eigen::MatrixXd& scores) {
  if (scores.cols() != kNumClasses) throw PipelineError("predict_labels expects 7 class columns");
  std::vector<ClassLabel> out;
  for (int i : predict(scores)) out.push_back(label_from_index(i));
  return out;
}

namespace {

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw PipelineError("cannot write " + file.string());
  return out;
}

}  // namespace

void write_predictions(const fs::path& file, std::span<const std::string> ids, const Eigen::MatrixXd& scores) {
  if (static_cast<Eigen::Index>(ids.size()) != scores.rows()) throw PipelineError("write_predictions: id count mismatch");
  if (scores.cols() != kNumClasses) throw PipelineError("write_predictions expects 7 class columns");
  auto out = open_out(file);
  out << "image";
  for (auto code : kClassCodes) out << ',' << code;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i];
    for (int j = 0; j < kNumClasses; ++j) {
      std::snprintf(buf, sizeof buf, ",%.10f", scores(static_cast<Eigen::Index>(i), j));
      out << buf;
    }
    out << '\n';
  }
}

void write_labels(const fs::path& file, std::span<const std::string> ids, std::span<const int> labels) {
  if (ids.size() != labels.size()) throw PipelineError("write_labels: id count mismatch");
  auto out = open_out(file);
  out << "image,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << code_of(label_from_index(labels[i])) << '\n';
}

Predictions read_predictions(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw PipelineError("cannot open predictions file " + file.string());
  std::string line;
  std::getline(in, line);
  std::string expected = "image";
  for (auto code : kClassCodes) expected += "," + std::string(code);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected) throw PipelineError("predictions header must be: " + expected);
  Predictions p;
  std::vector<std::array<double, kNumClasses>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    p.ids.push_back(cell);
    std::array<double, kNumClasses> row{};
    for (int j = 0; j < kNumClasses; ++j) {
      if (!std::getline(ss, cell, ',')) throw PipelineError("short predictions row for " + p.ids.back());
      try {
        row[static_cast<std::size_t>(j)] = std::stod(cell);
      } catch (const std::exception&) {
        throw PipelineError("bad probability '" + cell + "' for " + p.ids.back());
      }
    }
    rows.push_back(row);
  }
  p.scores.resize(static_cast<Eigen::Index>(rows.size()), kNumClasses);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < kNumClasses; ++j) p.scores(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  return p;
}

void write_weights(const fs::path& file, std::span<const fs::path> members, const Eigen::MatrixXd& weights) {
  if (weights.cols() != kNumClasses) throw PipelineError("write_weights expects 7 class columns");
  Json w;
  w["members"] = Json::array();
  for (const auto& ck : members) w["members"].push_back(ck.string());
  w["classes"] = Json::array();
  for (auto code : kClassCodes) w["classes"].push_back(code);
  w["weights"] = Json::array();
  for (Eigen::Index k = 0; k < weights.rows(); ++k) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < weights.cols(); ++j) row.push_back(weights(k, j));
    w["weights"].push_back(std::move(row));
  }
  open_out(file) << w.dump(1) << '\n';
}

Eigen::MatrixXd read_weights(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw PipelineError("cannot open weights file " + file.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw PipelineError("bad weights file " + file.string() + ": " + e.what());
  }
  const auto& rows = j.at("weights");
  Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.size()), kNumClasses);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].size() != kNumClasses) throw PipelineError("weights row " + std::to_string(k) + " needs 7 entries");
    for (int c = 0; c < kNumClasses; ++c) w(static_cast<Eigen::Index>(k), c) = rows[k][static_cast<std::size_t>(c)].get<double>();
  }
  return w;
}

EnsembleResult run_ensemble(std::span<const fs::path> checkpoints, const DatasetManifest& dev,
                            const DatasetManifest& target, const fs::path& out_dir) {
  if (checkpoints.empty()) throw PipelineError("run_ensemble: no checkpoints");
  if (dev.empty()) throw PipelineError("run_ensemble: empty development set");
  std::vector<std::string> dev_ids, target_ids;
  for (const auto& r : dev.records()) dev_ids.push_back(r.id);
  for (const auto& r : target.records()) target_ids.push_back(r.id);
  const bool same = dev_ids == target_ids;
  const auto truth = label_indices(dev);

  EnsembleResult res;
  ProbabilityTensor<double> p_dev, p_target;
  std::optional<EncoderSpec> spec;
  for (const auto& ck : checkpoints) {
    ClsModel m = load_cls(ck);
    if (m.n_classes() != kNumClasses) throw PipelineError("checkpoint " + ck.string() + " is not a 7-class model");
    if (spec && !(*spec == m.spec())) throw PipelineError("checkpoint " + ck.string() + " has a different encoder spec");
    spec = m.spec();
    p_dev.push_back(predict_probabilities(m, dev));
    p_target.push_back(same ? p_dev.back() : predict_probabilities(m, target));
    const auto pred = predict(p_dev.back());
    res.dev_confusions.push_back(confusion(std::span<const int>(truth), std::span<const int>(pred)));
  }
  res.weights = compute_weights(res.dev_confusions);
  res.dev_scores = weighted_scores<double>(p_dev, res.weights, dev_ids);
  const auto dev_pred = predict(res.dev_scores);
  res.dev_confusion = confusion(std::span<const int>(truth), std::span<const int>(dev_pred));
  res.target_ids = target_ids;
  res.target_scores = same ? res.dev_scores : weighted_scores<double>(p_target, res.weights, target_ids);
  res.target_predictions = predict(res.target_scores);

  write_predictions(out_dir / "predictions.csv", target_ids, res.target_scores);
  write_labels(out_dir / "labels.csv", target_ids, res.target_predictions);
  write_weights(out_dir / "weights.json", checkpoints, res.weights);
  write_confusion_text(out_dir / "dev_confusion.txt", res.dev_confusion, "ensemble, development set");
  return res;
}

}  // namespace wonderm
