#include "wonderm/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace wonderm {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr std::string_view kManifestFormat = "wonderm-manifest/1";
constexpr std::array<std::string_view, 4> kStageNames = {"raw", "padded", "resized",
                                                         "hair-removed"};
constexpr std::array<std::string_view, 3> kKindNames = {"classification", "segmentation",
                                                        "synthetic"};

const std::set<std::string> kImageExtensions = {".jpg", ".jpeg", ".png", ".JPG", ".PNG"};

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

fs::path absolute_normal(const fs::path& p) { return fs::absolute(p).lexically_normal(); }

std::string relative_string(const fs::path& p, const fs::path& base) {
  return absolute_normal(p).lexically_relative(absolute_normal(base)).generic_string();
}

std::optional<fs::path> find_image(const fs::path& dir, const std::string& id) {
  for (const char* ext : {".jpg", ".jpeg", ".png", ".JPG", ".PNG"}) {
    fs::path p = dir / (id + ext);
    if (fs::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

bool same_buffer(const auto& a, const auto& b) {
  if (!a || !b) return true;
  return *a == *b;
}

}  // namespace

std::string_view stage_name(Stage s) { return kStageNames[static_cast<int>(s)]; }

Stage parse_stage(std::string_view s) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (kStageNames[i] == s) return static_cast<Stage>(i);
  throw PipelineError("unknown stage '" + std::string(s) + "'");
}

std::string_view kind_name(ManifestKind k) { return kKindNames[static_cast<int>(k)]; }

ManifestKind parse_kind(std::string_view s) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i)
    if (kKindNames[i] == s) return static_cast<ManifestKind>(i);
  throw PipelineError("unknown manifest kind '" + std::string(s) + "'");
}

bool same_metadata(const ImageRecord& a, const ImageRecord& b) {
  return a.id == b.id && a.path == b.path && a.label == b.label && a.mask_path == b.mask_path &&
         a.hair_mask_path == b.hair_mask_path && a.stage == b.stage && a.hairy == b.hairy;
}

DatasetManifest::DatasetManifest(ManifestKind kind, std::uint64_t seed,
                                 std::vector<ImageRecord> records)
    : kind_(kind), seed_(seed), records_(std::move(records)) {
  std::unordered_set<std::string> ids;
  ids.reserve(records_.size());
  for (const auto& r : records_) {
    if (!ids.insert(r.id).second) throw PipelineError("duplicate image id: " + r.id);
    if (r.label) ++counts_[index_of(*r.label)];
    if (r.pixels && r.mask &&
        (r.pixels->rows() != r.mask->rows() || r.pixels->cols() != r.mask->cols()))
      throw PipelineError("mask shape differs from image shape: " + r.id);
  }
}

long DatasetManifest::labeled_total() const {
  long t = 0;
  for (long c : counts_) t += c;
  return t;
}

bool DatasetManifest::operator==(const DatasetManifest& o) const {
  if (kind_ != o.kind_ || seed_ != o.seed_ || counts_ != o.counts_ ||
      records_.size() != o.records_.size())
    return false;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& a = records_[i];
    const auto& b = o.records_[i];
    if (!same_metadata(a, b) || !same_buffer(a.pixels, b.pixels) || !same_buffer(a.mask, b.mask) ||
        !same_buffer(a.hair_mask, b.hair_mask))
      return false;
  }
  return true;
}

Image load_pixels(const ImageRecord& r) {
  if (r.pixels) return *r.pixels;
  if (r.path.empty()) throw PipelineError("record has neither pixels nor path: " + r.id);
  return read_image(r.path);
}

Mask load_mask(const ImageRecord& r) {
  if (r.mask) return *r.mask;
  if (!r.mask_path) throw PipelineError("record has no mask: " + r.id);
  return read_mask(*r.mask_path);
}

Mask load_hair_mask(const ImageRecord& r) {
  if (r.hair_mask) return *r.hair_mask;
  if (!r.hair_mask_path) throw PipelineError("record has no hair mask: " + r.id);
  return read_mask(*r.hair_mask_path);
}

std::string serialize_manifest(const DatasetManifest& m, const fs::path& base_dir) {
  ojson j;
  j["format"] = kManifestFormat;
  j["kind"] = kind_name(m.kind());
  j["seed"] = m.seed();
  ojson counts = ojson::object();
  for (ClassLabel c : kAllClasses) counts[std::string(code_of(c))] = m.count(c);
  j["class_counts"] = counts;
  j["total"] = m.size();
  ojson recs = ojson::array();
  for (const auto& r : m.records()) {
    if (r.path.empty())
      throw PipelineError("record " + r.id + " is not file-backed; materialize first");
    ojson e;
    e["id"] = r.id;
    e["path"] = relative_string(r.path, base_dir);
    e["label"] = r.label ? ojson(code_of(*r.label)) : ojson(nullptr);
    e["stage"] = stage_name(r.stage);
    if (r.mask_path) e["mask"] = relative_string(*r.mask_path, base_dir);
    if (r.hair_mask_path) e["hair_mask"] = relative_string(*r.hair_mask_path, base_dir);
    e["hairy"] = r.hairy;
    recs.push_back(std::move(e));
  }
  j["records"] = std::move(recs);
  return j.dump(1) + "\n";
}

DatasetManifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw PipelineError(std::string("malformed manifest: ") + e.what());
  }
  if (j.value("format", "") != kManifestFormat)
    throw PipelineError("unsupported manifest format");
  auto resolve = [&](const std::string& rel) { return (absolute_normal(base_dir) / rel).lexically_normal(); };
  std::vector<ImageRecord> records;
  for (const auto& e : j.at("records")) {
    ImageRecord r;
    r.id = e.at("id").get<std::string>();
    r.path = resolve(e.at("path").get<std::string>());
    if (!e.at("label").is_null()) r.label = parse_label(e.at("label").get<std::string>());
    r.stage = parse_stage(e.at("stage").get<std::string>());
    if (e.contains("mask")) r.mask_path = resolve(e["mask"].get<std::string>());
    if (e.contains("hair_mask")) r.hair_mask_path = resolve(e["hair_mask"].get<std::string>());
    r.hairy = e.value("hairy", false);
    records.push_back(std::move(r));
  }
  DatasetManifest m(parse_kind(j.at("kind").get<std::string>()), j.at("seed").get<std::uint64_t>(),
                    std::move(records));
  for (ClassLabel c : kAllClasses) {
    auto stated = j.at("class_counts").at(std::string(code_of(c))).get<long>();
    if (stated != m.count(c))
      throw PipelineError("manifest header count for " + std::string(code_of(c)) +
                          " disagrees with its records");
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::string text = serialize_manifest(m, file.parent_path().empty() ? fs::path(".") : file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw PipelineError("cannot write manifest: " + file.string());
  out << text;
}

DatasetManifest read_manifest(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw PipelineError("cannot read manifest: " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), file.parent_path().empty() ? fs::path(".") : file.parent_path());
}

DatasetManifest materialize(const DatasetManifest& m, const fs::path& dir) {
  std::vector<ImageRecord> out;
  out.reserve(m.size());
  const fs::path img_dir = absolute_normal(dir / "images");
  for (const auto& r : m.records()) {
    ImageRecord c = r;
    if (r.pixels || r.path.empty()) {
      c.path = img_dir / (r.id + ".png");
      write_image(c.path, load_pixels(r));
    }
    if (r.mask) {
      c.mask_path = img_dir / (r.id + "_segmentation.png");
      write_mask(*c.mask_path, *r.mask);
    }
    if (r.hair_mask) {
      c.hair_mask_path = img_dir / (r.id + "_hair.png");
      write_mask(*c.hair_mask_path, *r.hair_mask);
    }
    c.pixels.reset();
    c.mask.reset();
    c.hair_mask.reset();
    out.push_back(std::move(c));
  }
  return DatasetManifest(m.kind(), m.seed(), std::move(out));
}

std::vector<GroundTruthRow> parse_ground_truth(std::string_view text) {
  std::vector<GroundTruthRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::optional<ClassLabel>> columns;
  bool header = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (header) {
      if (cells.empty() || cells[0] != "image")
        throw PipelineError("ground truth header must start with 'image'");
      for (std::size_t i = 1; i < cells.size(); ++i) columns.push_back(try_parse_label(cells[i]));
      header = false;
      continue;
    }
    if (cells.size() != columns.size() + 1)
      throw PipelineError("ground truth line " + std::to_string(line_no) + ": wrong column count");
    std::optional<ClassLabel> label;
    int positives = 0;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      double v = 0.0;
      try {
        v = std::stod(cells[i + 1]);
      } catch (const std::exception&) {
        throw PipelineError("ground truth line " + std::to_string(line_no) + ": non-numeric cell");
      }
      if (v > 0.5) {
        ++positives;
        label = columns[i];
      }
    }
    if (positives != 1 || !label)
      throw PipelineError("ground truth row for '" + cells[0] + "' has " +
                          std::to_string(positives) + " positive class indicators");
    rows.push_back({cells[0], *label});
  }
  return rows;
}

DatasetManifest ingest_classification(const fs::path& root_dir, const fs::path& ground_truth) {
  std::ifstream in(ground_truth, std::ios::binary);
  if (!in) throw PipelineError("cannot read ground truth table: " + ground_truth.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto rows = parse_ground_truth(ss.str());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  std::vector<ImageRecord> records;
  records.reserve(rows.size());
  for (const auto& row : rows) {
    auto p = find_image(root_dir, row.id);
    if (!p) throw PipelineError("missing image file for id " + row.id);
    ImageRecord r;
    r.id = row.id;
    r.path = absolute_normal(*p);
    r.label = row.label;
    records.push_back(std::move(r));
  }
  return DatasetManifest(ManifestKind::Classification, 0, std::move(records));
}

DatasetManifest ingest_segmentation(const fs::path& root_dir, const SegmentationOptions& opts) {
  std::vector<std::string> images;
  std::set<std::string> masks;
  for (const auto& entry : fs::directory_iterator(root_dir)) {
    if (!entry.is_regular_file() || !kImageExtensions.count(entry.path().extension().string()))
      continue;
    std::string stem = entry.path().stem().string();
    if (stem.size() > opts.mask_suffix.size() &&
        stem.compare(stem.size() - opts.mask_suffix.size(), opts.mask_suffix.size(),
                     opts.mask_suffix) == 0)
      masks.insert(stem.substr(0, stem.size() - opts.mask_suffix.size()));
    else
      images.push_back(stem);
  }
  std::sort(images.begin(), images.end());

  std::vector<ImageRecord> records;
  for (const auto& id : images) {
    if (!masks.count(id)) throw PipelineError("image without mask: " + id);
    auto img_path = find_image(root_dir, id);
    auto mask_path = find_image(root_dir, id + opts.mask_suffix);
    Image img = read_image(*img_path);
    Mask mask = read_mask(*mask_path);
    if (img.rows() != mask.rows() || img.cols() != mask.cols())
      throw PipelineError("mask dimension mismatch for " + id);
    ImageRecord r;
    r.id = id;
    r.path = absolute_normal(*img_path);
    r.mask_path = absolute_normal(*mask_path);
    records.push_back(std::move(r));
  }
  return DatasetManifest(ManifestKind::Segmentation, 0, std::move(records));
}

DatasetManifest ingest_unlabeled(const fs::path& root_dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root_dir))
    if (entry.is_regular_file() && kImageExtensions.count(entry.path().extension().string()))
      files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.stem() < b.stem(); });
  std::vector<ImageRecord> records;
  for (const auto& f : files) {
    ImageRecord r;
    r.id = f.stem().string();
    r.path = absolute_normal(f);
    records.push_back(std::move(r));
  }
  return DatasetManifest(ManifestKind::Classification, 0, std::move(records));
}

DatasetManifest as_segmentation(const DatasetManifest& m) {
  std::vector<ImageRecord> recs;
  for (const auto& r : m.records()) {
    if (!r.has_mask()) throw PipelineError("record has no lesion mask: " + r.id);
    recs.push_back(r);
  }
  return DatasetManifest(ManifestKind::Segmentation, m.seed(), std::move(recs));
}

}  // namespace wonderm
