#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wonderm/image.hpp"
#include "wonderm/labels.hpp"

namespace wonderm {

enum class Stage { Raw, Padded, Resized, HairRemoved };
enum class ManifestKind { Classification, Segmentation, Synthetic };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view s);
std::string_view kind_name(ManifestKind k);
ManifestKind parse_kind(std::string_view s);

// One image. `path` and friends are absolute when the record is backed by a
// file; in-memory records (fresh synthetic output) carry the buffers instead.
struct ImageRecord {
  std::string id;
  std::filesystem::path path;
  std::optional<ClassLabel> label;
  std::optional<std::filesystem::path> mask_path;
  std::optional<std::filesystem::path> hair_mask_path;
  Stage stage = Stage::Raw;
  bool hairy = false;

  std::shared_ptr<const Image> pixels;
  std::shared_ptr<const Mask> mask;
  std::shared_ptr<const Mask> hair_mask;

  bool has_mask() const { return mask || mask_path; }
  bool has_hair_mask() const { return hair_mask || hair_mask_path; }
};

// Metadata equality; pixel buffers are compared by the callers that care.
bool same_metadata(const ImageRecord& a, const ImageRecord& b);

// Immutable after construction. Validates id uniqueness and, for loaded
// buffers, mask/pixel shape agreement.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  DatasetManifest(ManifestKind kind, std::uint64_t seed, std::vector<ImageRecord> records);

  ManifestKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<ImageRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const ImageRecord& operator[](std::size_t i) const { return records_[i]; }
  const ClassCounts& class_counts() const { return counts_; }
  long count(ClassLabel c) const { return counts_[index_of(c)]; }
  long labeled_total() const;

  bool operator==(const DatasetManifest& o) const;

 private:
  ManifestKind kind_ = ManifestKind::Classification;
  std::uint64_t seed_ = 0;
  std::vector<ImageRecord> records_;
  ClassCounts counts_{};
};

Image load_pixels(const ImageRecord& r);
Mask load_mask(const ImageRecord& r);
Mask load_hair_mask(const ImageRecord& r);

// Structured-text (JSON) persistence. Paths are stored relative to the
// manifest file's directory. Records without a backing file are rejected;
// use materialize() first.
std::string serialize_manifest(const DatasetManifest& m, const std::filesystem::path& base_dir);
DatasetManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& file);
DatasetManifest read_manifest(const std::filesystem::path& file);

// Writes in-memory buffers under dir/images and returns a file-backed copy.
DatasetManifest materialize(const DatasetManifest& m, const std::filesystem::path& dir);

// Ground-truth table: header `image,<codes...>`, one one-hot row per image.
struct GroundTruthRow {
  std::string id;
  ClassLabel label;
};
std::vector<GroundTruthRow> parse_ground_truth(std::string_view csv_text);

DatasetManifest ingest_classification(const std::filesystem::path& root_dir,
                                      const std::filesystem::path& ground_truth);

struct SegmentationOptions {
  std::string mask_suffix = "_segmentation";
};
DatasetManifest ingest_segmentation(const std::filesystem::path& root_dir,
                                    const SegmentationOptions& opts = {});

// Label-absent manifest over every image in a directory (validation/test
// images that ship without ground truth).
DatasetManifest ingest_unlabeled(const std::filesystem::path& root_dir);

struct SynthSpec {
  int n_per_class = 10;
  int image_size = 64;
  double hair_fraction = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const SynthSpec&) const = default;
};

// Seven parametric lesion families on a skin-toned background. Every record
// carries its exact lesion mask; hairy records also carry the stroke mask.
DatasetManifest generate_synthetic(const SynthSpec& spec);

// Segmentation view of a manifest whose records carry lesion masks.
DatasetManifest as_segmentation(const DatasetManifest& m);

}  // namespace wonderm
