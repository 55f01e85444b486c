#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "wonderm/nets.hpp"

namespace wonderm {

using Json = nlohmann::ordered_json;

Json to_json(const EncoderSpec& spec);
EncoderSpec encoder_spec_from_json(const Json& j);

// Versioned checkpoint: a one-line magic/version tag, a one-line JSON header
// (model kind, encoder spec, metadata, tensor table) and the little-endian
// float32 payload in table order.
inline constexpr int kCheckpointVersion = 1;

struct CheckpointHeader {
  std::string model;  // "seg", "cls" or "hair"
  Json arch;          // encoder spec, or hair-net geometry
  Json metadata;
};

void save_checkpoint(const std::filesystem::path& file, const CheckpointHeader& header,
                     const nn::ParamList<Scalar>& params);
CheckpointHeader read_checkpoint_header(const std::filesystem::path& file);
// Fills `params` by name; every tensor must be present with a matching shape.
CheckpointHeader load_checkpoint(const std::filesystem::path& file, const nn::ParamList<Scalar>& params);

void save_seg(const std::filesystem::path& file, SegModel& m, const Json& metadata = Json::object());
void save_cls(const std::filesystem::path& file, ClsModel& m, const Json& metadata = Json::object());
void save_hair(const std::filesystem::path& file, HairNet& m, const Json& metadata = Json::object());
SegModel load_seg(const std::filesystem::path& file);
ClsModel load_cls(const std::filesystem::path& file);
HairNet load_hair(const std::filesystem::path& file);

}  // namespace wonderm
