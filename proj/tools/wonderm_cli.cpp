#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "wonderm/augment.hpp"
#include "wonderm/checkpoint.hpp"
#include "wonderm/ensemble.hpp"
#include "wonderm/metrics.hpp"
#include "wonderm/pipeline.hpp"
#include "wonderm/preprocess.hpp"
#include "wonderm/sampler.hpp"
#include "wonderm/trainer.hpp"

namespace fs = std::filesystem;
using namespace wonderm;

namespace {

// Flags every subcommand accepts.
struct Common {
  fs::path config;
  std::optional<std::uint64_t> seed;
  fs::path out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "pipeline config (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
  auto* o = cmd->add_option("--out", c.out, "output directory");
  if (out_required) o->required();
}

PipelineConfig load_config(const Common& c) {
  PipelineConfig p = c.config.empty() ? PipelineConfig{} : read_pipeline_config(c.config);
  if (c.seed) p.seed = *c.seed;
  return p;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw PipelineError("cannot write " + file.string());
  out << text;
}

void print_counts(const DatasetManifest& m, std::ostream& os) {
  os << m.size() << " records";
  if (m.labeled_total() > 0) {
    os << " (";
    for (int j = 0; j < kNumClasses; ++j)
      os << (j ? ", " : "") << kClassCodes[static_cast<std::size_t>(j)] << ' ' << m.class_counts()[static_cast<std::size_t>(j)];
    os << ')';
  }
  os << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wonderm: dermoscopy lesion classification pipeline"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // synth
  Common synth_c;
  SynthSpec synth;
  auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic corpus");
  add_common(synth_cmd, synth_c);
  synth_cmd->add_option("--n-per-class", synth.n_per_class)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--image-size", synth.image_size)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--hair-fraction", synth.hair_fraction)->check(CLI::Range(0.0, 1.0));

  // ingest
  Common ingest_c;
  fs::path ingest_images, ingest_truth, ingest_seg, ingest_unl;
  auto* ingest_cmd = app.add_subcommand("ingest", "build a manifest from images on disk");
  add_common(ingest_cmd, ingest_c);
  auto* g_img = ingest_cmd->add_option("--images", ingest_images, "classification image directory")->check(CLI::ExistingDirectory);
  ingest_cmd->add_option("--ground-truth", ingest_truth, "one-hot label table")->check(CLI::ExistingFile)->needs(g_img);
  auto* g_seg = ingest_cmd->add_option("--segmentation", ingest_seg, "image + mask directory")->check(CLI::ExistingDirectory);
  auto* g_unl = ingest_cmd->add_option("--unlabeled", ingest_unl, "unlabeled image directory")->check(CLI::ExistingDirectory);
  g_img->excludes(g_seg)->excludes(g_unl);
  g_seg->excludes(g_unl);

  // preprocess
  Common prep_c;
  fs::path prep_manifest, prep_hair;
  std::optional<int> prep_side;
  bool prep_force = false;
  double prep_thr = 0.5;
  auto* prep_cmd = app.add_subcommand("preprocess", "pad, resize and optionally remove hair");
  add_common(prep_cmd, prep_c);
  prep_cmd->add_option("--manifest", prep_manifest)->required()->check(CLI::ExistingFile);
  prep_cmd->add_option("--side", prep_side, "output side (default: the config's encoder input side)");
  prep_cmd->add_option("--hair-model", prep_hair)->check(CLI::ExistingFile);
  prep_cmd->add_flag("--force-hair-removal", prep_force);
  prep_cmd->add_option("--hair-threshold", prep_thr)->check(CLI::Range(0.0, 1.0));

  // split
  Common split_c;
  fs::path split_manifest;
  auto* split_cmd = app.add_subcommand("split", "stratified 9:1 train/dev split");
  add_common(split_cmd, split_c);
  split_cmd->add_option("--manifest", split_manifest)->required()->check(CLI::ExistingFile);

  // sample
  Common sample_c;
  fs::path sample_train;
  std::string sample_anchor;
  std::optional<int> sample_sets;
  auto* sample_cmd = app.add_subcommand("sample", "balanced subsets of the training split");
  add_common(sample_cmd, sample_c);
  sample_cmd->add_option("--train", sample_train)->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--anchor", sample_anchor, "anchor class code");
  sample_cmd->add_option("--n-sets", sample_sets)->check(CLI::PositiveNumber);

  // augment
  Common aug_c;
  fs::path aug_manifest;
  auto* aug_cmd = app.add_subcommand("augment", "rotations and flips of every record");
  add_common(aug_cmd, aug_c);
  aug_cmd->add_option("--manifest", aug_manifest)->required()->check(CLI::ExistingFile);

  // train-seg
  Common tseg_c;
  fs::path tseg_data;
  auto* tseg_cmd = app.add_subcommand("train-seg", "train the segmentation network");
  add_common(tseg_cmd, tseg_c);
  tseg_cmd->add_option("--data", tseg_data, "manifest with lesion masks")->required()->check(CLI::ExistingFile);

  // train-cls
  Common tcls_c;
  fs::path tcls_train, tcls_dev, tcls_seg, tcls_init;
  int tcls_index = 1;
  auto* tcls_cmd = app.add_subcommand("train-cls", "fine-tune one classifier");
  add_common(tcls_cmd, tcls_c);
  tcls_cmd->add_option("--train", tcls_train)->required()->check(CLI::ExistingFile);
  tcls_cmd->add_option("--dev", tcls_dev)->check(CLI::ExistingFile);
  auto* o_seg = tcls_cmd->add_option("--seg", tcls_seg, "segmentation checkpoint to transplant from")->check(CLI::ExistingFile);
  tcls_cmd->add_option("--init", tcls_init, "classifier checkpoint to start from")->check(CLI::ExistingFile)->excludes(o_seg);
  tcls_cmd->add_option("--set-index", tcls_index, "balanced set index (seeds the batch order)")->check(CLI::PositiveNumber);

  // train-hair
  Common thair_c;
  fs::path thair_data;
  int thair_side = 64;
  auto* thair_cmd = app.add_subcommand("train-hair", "train the hair/no-hair classifier");
  add_common(thair_cmd, thair_c);
  thair_cmd->add_option("--data", thair_data)->required()->check(CLI::ExistingFile);
  thair_cmd->add_option("--side", thair_side);

  // ensemble
  Common ens_c;
  std::vector<fs::path> ens_ckpts;
  fs::path ens_dev, ens_target;
  auto* ens_cmd = app.add_subcommand("ensemble", "TPR-weighted ensemble of classifiers");
  add_common(ens_cmd, ens_c);
  ens_cmd->add_option("--checkpoints", ens_ckpts)->required()->check(CLI::ExistingFile)->delimiter(',');
  ens_cmd->add_option("--dev", ens_dev)->required()->check(CLI::ExistingFile);
  ens_cmd->add_option("--target", ens_target, "manifest to predict (default: dev)")->check(CLI::ExistingFile);

  // evaluate
  Common eval_c;
  fs::path eval_pred, eval_truth;
  auto* eval_cmd = app.add_subcommand("evaluate", "confusion matrix and accuracies of a predictions file");
  add_common(eval_cmd, eval_c);
  eval_cmd->add_option("--predictions", eval_pred)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--truth", eval_truth, "labeled manifest")->required()->check(CLI::ExistingFile);

  // report
  Common rep_c;
  auto* rep_cmd = app.add_subcommand("report", "report files for a finished run");
  add_common(rep_cmd, rep_c);

  // run-all
  Common all_c;
  bool all_quiet = false;
  auto* all_cmd = app.add_subcommand("run-all", "every stage, resuming where a previous run stopped");
  add_common(all_cmd, all_c);
  all_cmd->add_flag("--quiet", all_quiet);

  // inspect-model
  Common insp_c;
  fs::path insp_ckpt;
  auto* insp_cmd = app.add_subcommand("inspect-model", "parameter count and layer table of a checkpoint");
  add_common(insp_cmd, insp_c, false);
  insp_cmd->add_option("checkpoint", insp_ckpt)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      synth.seed = load_config(synth_c).seed;
      auto m = materialize(generate_synthetic(synth), synth_c.out);
      write_manifest(m, synth_c.out / "manifest.json");
      print_counts(m, std::cout);
    } else if (*ingest_cmd) {
      DatasetManifest m;
      if (!ingest_images.empty()) {
        if (ingest_truth.empty()) throw PipelineError("--images needs --ground-truth");
        m = ingest_classification(ingest_images, ingest_truth);
      } else if (!ingest_seg.empty()) {
        m = ingest_segmentation(ingest_seg);
      } else if (!ingest_unl.empty()) {
        m = ingest_unlabeled(ingest_unl);
      } else {
        throw PipelineError("ingest needs --images, --segmentation or --unlabeled");
      }
      write_manifest(m, ingest_c.out / "manifest.json");
      print_counts(m, std::cout);
    } else if (*prep_cmd) {
      const PipelineConfig cfg = load_config(prep_c);
      PreprocessOptions o;
      o.side = prep_side.value_or(cfg.encoder.input_side);
      if (!prep_hair.empty()) o.hair_model = prep_hair;
      o.force_hair_removal = prep_force;
      o.hair_threshold = prep_thr;
      auto res = preprocess_manifest(read_manifest(prep_manifest), prep_c.out, o);
      write_manifest(res.manifest, prep_c.out / "manifest.json");
      if (o.hair_model) write_verdicts(prep_c.out / "hair_verdicts.json", res.verdicts);
      print_counts(res.manifest, std::cout);
    } else if (*split_cmd) {
      const PipelineConfig cfg = load_config(split_c);
      Split s = split(read_manifest(split_manifest), cfg.seed);
      write_manifest(s.train, split_c.out / "train.json");
      write_manifest(s.dev, split_c.out / "dev.json");
      for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "train ";
      print_counts(s.train, std::cout);
      std::cout << "dev ";
      print_counts(s.dev, std::cout);
    } else if (*sample_cmd) {
      const PipelineConfig cfg = load_config(sample_c);
      const ClassLabel anchor = sample_anchor.empty() ? cfg.anchor : parse_label(sample_anchor);
      DatasetManifest train = read_manifest(sample_train);
      auto sets = balance(train, anchor, sample_sets.value_or(cfg.n_sets), cfg.seed);
      for (const auto& s : sets) write_manifest(s.records, sample_c.out / ("set_" + std::to_string(s.index) + ".json"));
      SplitPlan plan;
      plan.train_counts = train.class_counts();
      plan.seed = cfg.seed;
      write_text(sample_c.out / "plan.json", plan_report(plan, sets) + "\n");
      for (const auto& s : sets) {
        std::cout << "set " << s.index << ": ";
        print_counts(s.records, std::cout);
      }
    } else if (*aug_cmd) {
      auto m = expand_manifest(read_manifest(aug_manifest), aug_c.out);
      write_manifest(m, aug_c.out / "manifest.json");
      print_counts(m, std::cout);
    } else if (*tseg_cmd) {
      const PipelineConfig cfg = load_config(tseg_c);
      DatasetManifest data = as_segmentation(read_manifest(tseg_data));
      TrainConfig t = cfg.train_seg;
      t.seed = cfg.seed;
      SegModel model = build_seg(cfg.encoder, cfg.seed);
      auto rec = train_seg(model, data, t, tseg_c.out / "seg.ckpt");
      write_run_record(tseg_c.out / "run.json", rec);
      std::printf("final loss %.6f, training dice %.4f\n", rec.epochs.empty() ? 0.0 : rec.epochs.back().loss,
                  mean_dice(model, data));
    } else if (*tcls_cmd) {
      const PipelineConfig cfg = load_config(tcls_c);
      ClsModel model;
      if (!tcls_init.empty()) {
        model = load_cls(tcls_init);
      } else if (!tcls_seg.empty()) {
        SegModel seg = load_seg(tcls_seg);
        model = transplant_encoder(seg, seg.spec(), cfg.seed);
      } else {
        model = build_cls(cfg.encoder, kNumClasses, cfg.seed);
      }
      DatasetManifest dev = tcls_dev.empty() ? DatasetManifest{} : read_manifest(tcls_dev);
      TrainConfig t = cfg.train_cls;
      t.seed = cfg.seed + static_cast<std::uint64_t>(tcls_index);
      const std::string k = std::to_string(tcls_index);
      auto rec = train_cls(model, read_manifest(tcls_train), dev, t, tcls_c.out / ("cls_" + k + ".ckpt"));
      write_run_record(tcls_c.out / ("run_" + k + ".json"), rec);
      if (!rec.epochs.empty() && rec.epochs.back().dev_metric)
        std::printf("dev balanced accuracy %.4f\n", *rec.epochs.back().dev_metric);
    } else if (*thair_cmd) {
      const PipelineConfig cfg = load_config(thair_c);
      TrainConfig t = TrainConfig::hair();
      t.seed = cfg.seed;
      if (!thair_c.config.empty()) {
        std::ifstream in(thair_c.config);
        const Json j = Json::parse(in);
        if (j.contains("train_hair")) t = train_config_from_json(j["train_hair"], t);
        if (thair_c.seed) t.seed = *thair_c.seed;
      }
      HairNet model = build_hair(thair_side, t.seed);
      DatasetManifest data = read_manifest(thair_data);
      auto rec = train_hair(model, data, t, thair_c.out / "hair.ckpt");
      write_run_record(thair_c.out / "run.json", rec);
    } else if (*ens_cmd) {
      DatasetManifest dev = read_manifest(ens_dev);
      DatasetManifest target = ens_target.empty() ? dev : read_manifest(ens_target);
      auto res = run_ensemble(ens_ckpts, dev, target, ens_c.out);
      const ClassMetrics m = class_metrics(res.dev_confusion);
      std::printf("ensemble dev balanced accuracy %.4f, accuracy %.4f\n", m.balanced_accuracy, m.accuracy);
    } else if (*eval_cmd) {
      Predictions p = read_predictions(eval_pred);
      DatasetManifest truth = read_manifest(eval_truth);
      std::map<std::string, int> label;
      for (const auto& r : truth.records())
        if (r.label) label[r.id] = index_of(*r.label);
      std::vector<int> t, pred = predict(p.scores);
      for (const auto& id : p.ids) {
        auto it = label.find(id);
        if (it == label.end()) throw PipelineError("no label for predicted image " + id);
        t.push_back(it->second);
      }
      ConfusionMatrix cm = confusion(std::span<const int>(t), std::span<const int>(pred));
      write_confusion_text(eval_c.out / "confusion.txt", cm, eval_pred.filename().string());
      write_heatmap(eval_c.out / "confusion.png", cm);
      std::cout << format_confusion(cm);
    } else if (*rep_cmd) {
      report(rep_c.out);
      std::ifstream in(rep_c.out / "report" / "report.txt");
      std::cout << in.rdbuf();
    } else if (*all_cmd) {
      const PipelineConfig cfg = load_config(all_c);
      RunOptions o;
      o.verbose = !all_quiet;
      run_all(cfg, all_c.out, o);
      if (!all_quiet) {
        std::ifstream in(all_c.out / "report" / "report.txt");
        std::cout << in.rdbuf();
      }
    } else if (*insp_cmd) {
      const CheckpointHeader h = read_checkpoint_header(insp_ckpt);
      std::vector<LayerRow> rows;
      if (h.model == "seg") {
        SegModel m = load_seg(insp_ckpt);
        rows = layer_table(m);
      } else if (h.model == "cls") {
        ClsModel m = load_cls(insp_ckpt);
        rows = layer_table(m);
      } else {
        HairNet m = load_hair(insp_ckpt);
        rows = layer_table(m);
      }
      long trainable = 0, total = 0;
      std::cout << "model " << h.model << "\narch " << h.arch.dump() << "\n\n";
      for (const auto& r : rows) {
        std::string shape;
        for (std::size_t i = 0; i < r.shape.size(); ++i) shape += (i ? "x" : "") + std::to_string(r.shape[i]);
        std::printf("%-48s %-16s %10ld%s\n", r.name.c_str(), shape.c_str(), r.count, r.trainable ? "" : "  (buffer)");
        total += r.count;
        if (r.trainable) trainable += r.count;
      }
      std::printf("\ntrainable parameters %ld\nall tensors %ld\n", trainable, total);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
