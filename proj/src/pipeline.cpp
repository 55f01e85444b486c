#include "wonderm/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "wonderm/augment.hpp"
#include "wonderm/ensemble.hpp"
#include "wonderm/metrics.hpp"
#include "wonderm/preprocess.hpp"
#include "wonderm/sampler.hpp"

namespace wonderm {

namespace fs = std::filesystem;

namespace {

Json path_json(const fs::path& p) { return p.empty() ? Json(nullptr) : Json(p.string()); }

fs::path path_from(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  return fs::path(j[key].get<std::string>());
}

Json train_json(const TrainConfig& c) {
  Json j = to_json(c);
  j.erase("seed");  // stage seeds derive from the pipeline seed
  return j;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

void PipelineConfig::validate() const {
  encoder.validate();
  train_seg.validate();
  train_cls.validate();
  if (train_seg.loss != LossKind::BceDice) throw PipelineError("train_seg.loss must be bce_dice");
  if (train_cls.loss != LossKind::CrossEntropy) throw PipelineError("train_cls.loss must be cross_entropy");
  if (n_sets < 1) throw PipelineError("sampler.n_sets must be >= 1");
  if (max_seg_images < 0) throw PipelineError("train_seg.max_images must be >= 0");
  if (inference_batch < 1) throw PipelineError("ensemble.inference_batch must be >= 1");
  if (!images.empty() && ground_truth.empty()) throw PipelineError("data.images needs data.ground_truth");
  if (images.empty() && synth.n_per_class < 1) throw PipelineError("data.synthetic.n_per_class must be >= 1");
  if (!(hair_threshold >= 0.0 && hair_threshold <= 1.0)) throw PipelineError("preprocess.hair_threshold must lie in [0, 1]");
}

Json to_json(const PipelineConfig& c) {
  Json j;
  j["seed"] = c.seed;
  Json d;
  d["images"] = path_json(c.images);
  d["ground_truth"] = path_json(c.ground_truth);
  d["segmentation"] = path_json(c.segmentation);
  d["target"] = path_json(c.target);
  d["synthetic"] = {{"n_per_class", c.synth.n_per_class},
                    {"image_size", c.synth.image_size},
                    {"hair_fraction", c.synth.hair_fraction},
                    {"seed", c.synth.seed}};
  j["data"] = std::move(d);
  j["preprocess"] = {{"hair_model", c.hair_model ? Json(c.hair_model->string()) : Json(nullptr)},
                     {"force_hair_removal", c.force_hair_removal},
                     {"hair_threshold", c.hair_threshold}};
  j["encoder"] = to_json(c.encoder);
  j["train_seg"] = train_json(c.train_seg);
  j["train_seg"]["max_images"] = c.max_seg_images;
  j["train_cls"] = train_json(c.train_cls);
  j["sampler"] = {{"anchor", code_of(c.anchor)}, {"n_sets", c.n_sets}};
  j["ensemble"] = {{"inference_batch", c.inference_batch}};
  return j;
}

PipelineConfig pipeline_config_from_json(const Json& j) {
  PipelineConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("data")) {
      const Json& d = j["data"];
      c.images = path_from(d, "images");
      c.ground_truth = path_from(d, "ground_truth");
      c.segmentation = path_from(d, "segmentation");
      c.target = path_from(d, "target");
      if (d.contains("synthetic")) {
        const Json& s = d["synthetic"];
        c.synth.n_per_class = s.value("n_per_class", c.synth.n_per_class);
        c.synth.image_size = s.value("image_size", c.synth.image_size);
        c.synth.hair_fraction = s.value("hair_fraction", c.synth.hair_fraction);
        c.synth.seed = s.value("seed", c.synth.seed);
      }
    }
    if (j.contains("preprocess")) {
      const Json& p = j["preprocess"];
      if (fs::path hm = path_from(p, "hair_model"); !hm.empty()) c.hair_model = hm;
      c.force_hair_removal = p.value("force_hair_removal", c.force_hair_removal);
      c.hair_threshold = p.value("hair_threshold", c.hair_threshold);
    }
    if (j.contains("encoder")) c.encoder = encoder_spec_from_json(j["encoder"]);
    if (j.contains("train_seg")) {
      c.train_seg = train_config_from_json(j["train_seg"], c.train_seg);
      c.max_seg_images = j["train_seg"].value("max_images", c.max_seg_images);
    }
    if (j.contains("train_cls")) c.train_cls = train_config_from_json(j["train_cls"], c.train_cls);
    if (j.contains("sampler")) {
      c.anchor = parse_label(j["sampler"].value("anchor", std::string(code_of(c.anchor))));
      c.n_sets = j["sampler"].value("n_sets", c.n_sets);
    }
    if (j.contains("ensemble")) c.inference_batch = j["ensemble"].value("inference_batch", c.inference_batch);
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(std::string("bad pipeline config: ") + e.what());
  }
  c.train_seg.seed = c.train_cls.seed = 0;
  c.validate();
  return c;
}

PipelineConfig read_pipeline_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw PipelineError("cannot open config " + file.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw PipelineError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  PipelineConfig c = pipeline_config_from_json(j);
  // relative data paths are taken from the config file's directory
  const fs::path base = fs::absolute(file).parent_path();
  for (fs::path* p : {&c.images, &c.ground_truth, &c.segmentation, &c.target})
    if (!p->empty() && p->is_relative()) *p = (base / *p).lexically_normal();
  if (c.hair_model && c.hair_model->is_relative()) c.hair_model = (base / *c.hair_model).lexically_normal();
  return c;
}

void write_pipeline_config(const fs::path& file, const PipelineConfig& c) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw PipelineError("cannot write " + file.string());
  out << to_json(c).dump(1) << '\n';
}

std::string config_hash(const PipelineConfig& c) {
  Json j = to_json(c);
  j.erase("ensemble");  // inference batching does not change any output
  const std::string text = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) h = (h ^ ch) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> stage_names(int n_sets) {
  std::vector<std::string> s{"preprocess", "split", "sample", "augment", "train-seg", "transplant"};
  for (int k = 1; k <= n_sets; ++k) s.push_back("train-cls-" + std::to_string(k));
  for (const char* t : {"weights", "ensemble", "evaluate"}) s.emplace_back(t);
  return s;
}

bool RunManifest::complete() const {
  for (const auto& name : stage_order) {
    auto it = stages.find(name);
    if (it == stages.end() || !it->second.done) return false;
  }
  return !stage_order.empty();
}

bool RunManifest::satisfied(const std::string& stage, const fs::path& run_dir) const {
  auto it = stages.find(stage);
  if (it == stages.end() || !it->second.done) return false;
  for (const auto& a : it->second.artifacts)
    if (!fs::exists(run_dir / a)) return false;
  return true;
}

Json to_json(const RunManifest& m) {
  Json j;
  j["config_hash"] = m.config_hash;
  j["stages"] = Json::array();
  for (const auto& name : m.stage_order) {
    Json s;
    s["name"] = name;
    auto it = m.stages.find(name);
    const StageState st = it == m.stages.end() ? StageState{} : it->second;
    s["done"] = st.done;
    s["seconds"] = st.seconds;
    s["artifacts"] = Json::array();
    for (const auto& a : st.artifacts) s["artifacts"].push_back(a.generic_string());
    j["stages"].push_back(std::move(s));
  }
  j["failed_stage"] = m.failed_stage ? Json(*m.failed_stage) : Json(nullptr);
  j["error"] = m.error ? Json(*m.error) : Json(nullptr);
  j["metrics"] = m.metrics;
  return j;
}

RunManifest run_manifest_from_json(const Json& j) {
  RunManifest m;
  try {
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& s : j.at("stages")) {
      const std::string name = s.at("name").get<std::string>();
      m.stage_order.push_back(name);
      StageState st;
      st.done = s.value("done", false);
      st.seconds = s.value("seconds", 0.0);
      for (const auto& a : s.at("artifacts")) st.artifacts.emplace_back(a.get<std::string>());
      m.stages[name] = std::move(st);
    }
    if (j.contains("failed_stage") && !j["failed_stage"].is_null()) m.failed_stage = j["failed_stage"].get<std::string>();
    if (j.contains("error") && !j["error"].is_null()) m.error = j["error"].get<std::string>();
    if (j.contains("metrics")) m.metrics = j["metrics"];
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(std::string("bad run manifest: ") + e.what());
  }
  return m;
}

RunManifest read_run_manifest(const fs::path& run_dir) {
  std::ifstream in(run_dir / "run_manifest.json");
  if (!in) throw PipelineError("no run manifest in " + run_dir.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw PipelineError("run manifest in " + run_dir.string() + " is not valid JSON: " + e.what());
  }
  return run_manifest_from_json(j);
}

void write_run_manifest(const fs::path& run_dir, const RunManifest& m) {
  fs::create_directories(run_dir);
  const fs::path tmp = run_dir / "run_manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw PipelineError("cannot write run manifest in " + run_dir.string());
    out << to_json(m).dump(1) << '\n';
  }
  fs::rename(tmp, run_dir / "run_manifest.json");
}

std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) throw PipelineError("mean_sd of an empty list");
  const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
  const double mean = x.mean();
  return {mean, std::sqrt((x.array() - mean).square().mean())};
}

namespace {

// Stage bodies. Each returns its artifacts relative to the run directory.
class Stages {
 public:
  Stages(const PipelineConfig& c, fs::path dir) : c_(c), dir_(std::move(dir)) {}

  std::vector<fs::path> run(const std::string& name) {
    if (name == "preprocess") return preprocess();
    if (name == "split") return split_stage();
    if (name == "sample") return sample();
    if (name == "augment") return augment();
    if (name == "train-seg") return train_seg_stage();
    if (name == "transplant") return transplant();
    if (name.rfind("train-cls-", 0) == 0) return train_cls_stage(std::stoi(name.substr(10)));
    if (name == "weights") return weights();
    if (name == "ensemble") return ensemble();
    if (name == "evaluate") return evaluate();
    throw PipelineError("unknown stage " + name);
  }

 private:
  const PipelineConfig& c_;
  fs::path dir_;

  DatasetManifest manifest(const fs::path& rel) const { return read_manifest(dir_ / rel); }
  std::vector<fs::path> saved(const DatasetManifest& m, const fs::path& rel) const {
    write_manifest(m, dir_ / rel);
    return {rel};
  }
  PreprocessOptions prep_options() const {
    PreprocessOptions o;
    o.side = c_.encoder.input_side;
    o.hair_model = c_.hair_model;
    o.force_hair_removal = c_.force_hair_removal;
    o.hair_threshold = c_.hair_threshold;
    return o;
  }
  fs::path cls_ckpt(int k) const { return fs::path("train_cls") / ("cls_" + std::to_string(k) + ".ckpt"); }
  fs::path dev_probs(int k) const { return fs::path("weights") / ("dev_probs_" + std::to_string(k) + ".csv"); }

  std::vector<fs::path> preprocess() {
    DatasetManifest raw;
    if (c_.images.empty()) {
      raw = materialize(generate_synthetic(c_.synth), dir_ / "raw");
    } else {
      raw = ingest_classification(c_.images, c_.ground_truth);
    }
    auto res = preprocess_manifest(raw, dir_ / "preprocess", prep_options());
    std::vector<fs::path> out = saved(res.manifest, "preprocess/manifest.json");
    if (c_.hair_model) {
      write_verdicts(dir_ / "preprocess/hair_verdicts.json", res.verdicts);
      out.emplace_back("preprocess/hair_verdicts.json");
    }
    if (!c_.target.empty()) {
      auto t = preprocess_manifest(ingest_unlabeled(c_.target), dir_ / "preprocess_target", prep_options());
      out.push_back(saved(t.manifest, "preprocess_target/manifest.json").front());
    }
    return out;
  }

  std::vector<fs::path> split_stage() {
    Split s = split(manifest("preprocess/manifest.json"), c_.seed);
    std::vector<fs::path> out = saved(s.train, "split/train.json");
    out.push_back(saved(s.dev, "split/dev.json").front());
    std::ofstream w(dir_ / "split/warnings.txt");
    for (const auto& msg : s.warnings) w << msg << '\n';
    out.emplace_back("split/warnings.txt");
    return out;
  }

  std::vector<fs::path> sample() {
    DatasetManifest train = manifest("split/train.json");
    auto sets = balance(train, c_.anchor, c_.n_sets, c_.seed);
    std::vector<fs::path> out;
    for (const auto& s : sets) out.push_back(saved(s.records, "sample/set_" + std::to_string(s.index) + ".json").front());
    SplitPlan plan{manifest("split/dev.json").class_counts(), train.class_counts(), c_.seed};
    std::ofstream(dir_ / "sample/plan.json") << plan_report(plan, sets) << '\n';
    out.emplace_back("sample/plan.json");
    return out;
  }

  std::vector<fs::path> augment() {
    std::vector<fs::path> out;
    for (int k = 1; k <= c_.n_sets; ++k) {
      const fs::path sub = fs::path("augment") / ("set_" + std::to_string(k));
      DatasetManifest m = expand_manifest(manifest(fs::path("sample") / ("set_" + std::to_string(k) + ".json")), dir_ / sub);
      out.push_back(saved(m, sub / "manifest.json").front());
    }
    return out;
  }

  std::vector<fs::path> train_seg_stage() {
    DatasetManifest data = c_.segmentation.empty() ? as_segmentation(manifest("split/train.json"))
                                                   : ingest_segmentation(c_.segmentation);
    if (c_.max_seg_images > 0 && data.size() > static_cast<std::size_t>(c_.max_seg_images)) {
      std::vector<ImageRecord> head(data.records().begin(), data.records().begin() + c_.max_seg_images);
      data = DatasetManifest(data.kind(), data.seed(), std::move(head));
    }
    TrainConfig cfg = c_.train_seg;
    cfg.seed = c_.seed;
    SegModel model = build_seg(c_.encoder, c_.seed);
    RunRecord rec = train_seg(model, data, cfg, dir_ / "train_seg/seg.ckpt");
    write_run_record(dir_ / "train_seg/run.json", rec);
    return {"train_seg/seg.ckpt", "train_seg/run.json"};
  }

  std::vector<fs::path> transplant() {
    SegModel seg = load_seg(dir_ / "train_seg/seg.ckpt");
    ClsModel cls = transplant_encoder(seg, c_.encoder, c_.seed);
    save_cls(dir_ / "transplant/cls_init.ckpt", cls, {{"source", "train_seg/seg.ckpt"}});
    return {"transplant/cls_init.ckpt"};
  }

  std::vector<fs::path> train_cls_stage(int k) {
    ClsModel model = load_cls(dir_ / "transplant/cls_init.ckpt");
    DatasetManifest train = manifest(fs::path("augment") / ("set_" + std::to_string(k)) / "manifest.json");
    DatasetManifest dev = manifest("split/dev.json");
    TrainConfig cfg = c_.train_cls;
    cfg.seed = c_.seed + static_cast<std::uint64_t>(k);
    const fs::path run = fs::path("train_cls") / ("run_" + std::to_string(k) + ".json");
    RunRecord rec = train_cls(model, train, dev, cfg, dir_ / cls_ckpt(k));
    write_run_record(dir_ / run, rec);
    return {cls_ckpt(k), run};
  }

  std::vector<fs::path> weights() {
    DatasetManifest dev = manifest("split/dev.json");
    if (dev.empty()) throw PipelineError("development set is empty");
    std::vector<std::string> ids;
    for (const auto& r : dev.records()) ids.push_back(r.id);
    const auto truth = label_indices(dev);
    std::vector<ConfusionMatrix> cms;
    std::vector<fs::path> members, out;
    for (int k = 1; k <= c_.n_sets; ++k) {
      ClsModel m = load_cls(dir_ / cls_ckpt(k));
      Eigen::MatrixXd p = predict_probabilities(m, dev, c_.inference_batch);
      write_predictions(dir_ / dev_probs(k), ids, p);
      out.push_back(dev_probs(k));
      const auto pred = predict(p);
      cms.push_back(confusion(std::span<const int>(truth), std::span<const int>(pred)));
      members.push_back(cls_ckpt(k));
    }
    write_weights(dir_ / "weights/weights.json", members, compute_weights(cms));
    out.emplace_back("weights/weights.json");
    return out;
  }

  std::vector<fs::path> ensemble() {
    const Eigen::MatrixXd w = read_weights(dir_ / "weights/weights.json");
    ProbabilityTensor<double> p_dev;
    std::vector<std::string> dev_ids;
    for (int k = 1; k <= c_.n_sets; ++k) {
      Predictions p = read_predictions(dir_ / dev_probs(k));
      dev_ids = p.ids;
      p_dev.push_back(std::move(p.scores));
    }
    const Eigen::MatrixXd dev_scores = weighted_scores<double>(p_dev, w, dev_ids);
    write_predictions(dir_ / "ensemble/dev_scores.csv", dev_ids, dev_scores);

    std::vector<std::string> ids = dev_ids;
    Eigen::MatrixXd scores = dev_scores;
    if (!c_.target.empty()) {
      DatasetManifest target = manifest("preprocess_target/manifest.json");
      ids.clear();
      for (const auto& r : target.records()) ids.push_back(r.id);
      ProbabilityTensor<double> p_t;
      for (int k = 1; k <= c_.n_sets; ++k) {
        ClsModel m = load_cls(dir_ / cls_ckpt(k));
        p_t.push_back(predict_probabilities(m, target, c_.inference_batch));
      }
      scores = weighted_scores<double>(p_t, w, ids);
    }
    write_predictions(dir_ / "ensemble/predictions.csv", ids, scores);
    const auto labels = predict(scores);
    write_labels(dir_ / "ensemble/labels.csv", ids, labels);
    return {"ensemble/dev_scores.csv", "ensemble/predictions.csv", "ensemble/labels.csv"};
  }

  std::vector<fs::path> evaluate() {
    DatasetManifest dev = manifest("split/dev.json");
    const auto truth = label_indices(dev);
    auto summarize = [&](const fs::path& probs, const std::string& title, const fs::path& text) {
      Predictions p = read_predictions(dir_ / probs);
      const auto pred = predict(p.scores);
      ConfusionMatrix cm = confusion(std::span<const int>(truth), std::span<const int>(pred));
      write_confusion_text(dir_ / text, cm, title);
      ClassMetrics m = class_metrics(cm);
      Json j;
      j["balanced_accuracy"] = m.balanced_accuracy;
      j["accuracy"] = m.accuracy;
      j["tpr"] = std::vector<double>(m.tpr.data(), m.tpr.data() + m.tpr.size());
      j["confusion"] = Json::array();
      for (Eigen::Index r = 0; r < cm.counts.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < cm.counts.cols(); ++c) row.push_back(cm.counts(r, c));
        j["confusion"].push_back(std::move(row));
      }
      return j;
    };
    Json metrics;
    metrics["dev_size"] = dev.size();
    metrics["models"] = Json::array();
    std::vector<fs::path> out;
    for (int k = 1; k <= c_.n_sets; ++k) {
      const fs::path text = fs::path("evaluate") / ("model_" + std::to_string(k) + "_dev_confusion.txt");
      metrics["models"].push_back(summarize(dev_probs(k), "model " + std::to_string(k) + ", development set", text));
      out.push_back(text);
    }
    metrics["ensemble"] = summarize("ensemble/dev_scores.csv", "ensemble, development set", "evaluate/ensemble_dev_confusion.txt");
    out.emplace_back("evaluate/ensemble_dev_confusion.txt");
    std::ofstream(dir_ / "evaluate/metrics.json") << metrics.dump(1) << '\n';
    out.emplace_back("evaluate/metrics.json");
    return out;
  }
};

}  // namespace

RunManifest run_all(const PipelineConfig& config, const fs::path& run_dir, const RunOptions& opts) {
  config.validate();
  fs::create_directories(run_dir);
  const std::string hash = config_hash(config);
  RunManifest m;
  if (fs::exists(run_dir / "run_manifest.json")) {
    m = read_run_manifest(run_dir);
    if (m.config_hash != hash) m = RunManifest{};
  }
  m.config_hash = hash;
  m.stage_order = stage_names(config.n_sets);
  m.failed_stage.reset();
  m.error.reset();
  write_pipeline_config(run_dir / "config.json", config);

  Stages stages(config, run_dir);
  for (const auto& name : m.stage_order) {
    if (m.satisfied(name, run_dir)) continue;
    if (opts.verbose) std::cerr << "[stage] " << name << std::endl;
    if (opts.executed) opts.executed->push_back(name);
    m.stages[name] = StageState{};
    const auto t0 = std::chrono::steady_clock::now();
    try {
      auto artifacts = stages.run(name);
      StageState& st = m.stages[name];
      st.artifacts = std::move(artifacts);
      st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      st.done = true;
    } catch (const std::exception& e) {
      m.failed_stage = name;
      m.error = e.what();
      write_run_manifest(run_dir, m);
      throw PipelineError("stage '" + name + "' failed: " + e.what());
    }
    write_run_manifest(run_dir, m);
  }

  std::ifstream in(run_dir / "evaluate/metrics.json");
  m.metrics = Json::parse(in);
  write_run_manifest(run_dir, m);
  report(run_dir);
  return m;
}

void report(const fs::path& run_dir) {
  const RunManifest m = read_run_manifest(run_dir);
  if (!m.satisfied("evaluate", run_dir)) throw PipelineError("report: the evaluate stage has not completed in " + run_dir.string());
  std::ifstream in(run_dir / "evaluate/metrics.json");
  const Json metrics = Json::parse(in);

  auto confusion_of = [](const Json& j) {
    CountMatrix c(kNumClasses, kNumClasses);
    for (int r = 0; r < kNumClasses; ++r)
      for (int k = 0; k < kNumClasses; ++k) c(r, k) = j["confusion"][static_cast<std::size_t>(r)][static_cast<std::size_t>(k)].get<long>();
    return ConfusionMatrix(c);
  };

  const fs::path out = run_dir / "report";
  fs::create_directories(out);
  std::ostringstream s;
  s << "development set: " << metrics["dev_size"].get<long>() << " images\n\n";
  s << "model      balanced_acc  accuracy\n";
  std::vector<double> bas;
  int k = 1;
  for (const auto& mj : metrics["models"]) {
    const double ba = mj["balanced_accuracy"].get<double>();
    bas.push_back(ba);
    s << "model " << k << "    " << fmt("%.4f", ba) << "        " << fmt("%.4f", mj["accuracy"].get<double>()) << '\n';
    write_heatmap(out / ("model_" + std::to_string(k) + "_dev.png"), confusion_of(mj));
    ++k;
  }
  const auto [mean, sd] = mean_sd(bas);
  s << "mean +- sd  " << fmt("%.4f", mean) << " +- " << fmt("%.4f", sd) << '\n';
  const Json& e = metrics["ensemble"];
  s << "ensemble   " << fmt("%.4f", e["balanced_accuracy"].get<double>()) << "        "
    << fmt("%.4f", e["accuracy"].get<double>()) << '\n';
  s << "\nreference (full corpus, published): dev balanced accuracy 0.836 +- 0.015, validation 0.899\n\n";
  const ConfusionMatrix ens = confusion_of(e);
  s << format_confusion(ens, "ensemble, development set");
  write_heatmap(out / "ensemble_dev.png", ens);
  std::ofstream(out / "report.txt") << s.str();
}

}  // namespace wonderm
