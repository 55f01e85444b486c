#include "wonderm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace wonderm {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kMagic = "wonderm-checkpoint";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

struct RawCheckpoint {
  CheckpointHeader header;
  Json tensors;
  std::vector<float> payload;
};

RawCheckpoint read_raw(const fs::path& file, bool with_payload) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw PipelineError("cannot open checkpoint: " + file.string());
  std::string tag, header_line;
  std::getline(in, tag);
  std::getline(in, header_line);
  const std::string expected = std::string(kMagic) + " " + std::to_string(kCheckpointVersion);
  if (tag != expected) throw PipelineError("not a version " + std::to_string(kCheckpointVersion) + " checkpoint: " + file.string());
  RawCheckpoint raw;
  Json j;
  try {
    j = Json::parse(header_line);
  } catch (const Json::parse_error& e) {
    throw PipelineError("corrupt checkpoint header in " + file.string() + ": " + e.what());
  }
  raw.header.model = j.at("model").get<std::string>();
  raw.header.arch = j.at("arch");
  raw.header.metadata = j.value("metadata", Json::object());
  raw.tensors = j.at("tensors");
  if (with_payload) {
    std::size_t total = 0;
    for (const auto& t : raw.tensors) total += t.at("count").get<std::size_t>();
    raw.payload.resize(total);
    in.read(reinterpret_cast<char*>(raw.payload.data()), static_cast<std::streamsize>(total * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != total * sizeof(float))
      throw PipelineError("truncated checkpoint payload: " + file.string());
  }
  return raw;
}

void expect_model(const CheckpointHeader& h, std::string_view kind, const fs::path& file) {
  if (h.model != kind)
    throw PipelineError("checkpoint " + file.string() + " holds a '" + h.model + "' model, expected '" + std::string(kind) + "'");
}

}  // namespace

Json to_json(const EncoderSpec& s) {
  Json j;
  j["growth_rate"] = s.growth_rate;
  j["block_layers"] = s.block_layers;
  j["initial_channels"] = s.initial_channels;
  j["input_side"] = s.input_side;
  j["compression"] = s.compression;
  return j;
}

EncoderSpec encoder_spec_from_json(const Json& j) {
  EncoderSpec s;
  s.growth_rate = j.value("growth_rate", s.growth_rate);
  s.block_layers = j.value("block_layers", s.block_layers);
  s.initial_channels = j.value("initial_channels", s.initial_channels);
  s.input_side = j.value("input_side", s.input_side);
  s.compression = j.value("compression", s.compression);
  s.validate();
  return s;
}

void save_checkpoint(const fs::path& file, const CheckpointHeader& header, const nn::ParamList<Scalar>& params) {
  Json j;
  j["model"] = header.model;
  j["arch"] = header.arch;
  j["metadata"] = header.metadata;
  Json table = Json::array();
  for (const auto* p : params) {
    Json t;
    t["name"] = p->name;
    t["shape"] = p->shape;
    t["count"] = p->size();
    t["trainable"] = p->trainable;
    table.push_back(std::move(t));
  }
  j["tensors"] = std::move(table);
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = fs::path(file.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write checkpoint: " + file.string());
    out << kMagic << ' ' << kCheckpointVersion << '\n' << j.dump() << '\n';
    for (const auto* p : params)
      out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->size() * sizeof(float)));
    if (!out) throw PipelineError("short write on checkpoint: " + file.string());
  }
  fs::rename(tmp, file);
}

CheckpointHeader read_checkpoint_header(const fs::path& file) { return read_raw(file, false).header; }

CheckpointHeader load_checkpoint(const fs::path& file, const nn::ParamList<Scalar>& params) {
  RawCheckpoint raw = read_raw(file, true);
  std::map<std::string, std::pair<std::size_t, std::vector<int>>> index;
  std::size_t offset = 0;
  for (const auto& t : raw.tensors) {
    const auto count = t.at("count").get<std::size_t>();
    index[t.at("name").get<std::string>()] = {offset, t.at("shape").get<std::vector<int>>()};
    offset += count;
  }
  if (index.size() != params.size())
    throw PipelineError("checkpoint " + file.string() + " has " + std::to_string(index.size()) + " tensors, model expects " +
                        std::to_string(params.size()));
  for (auto* p : params) {
    auto it = index.find(p->name);
    if (it == index.end()) throw PipelineError("checkpoint " + file.string() + " lacks tensor " + p->name);
    if (it->second.second != p->shape) throw PipelineError("shape mismatch for tensor " + p->name);
    std::memcpy(p->value.data(), raw.payload.data() + it->second.first, static_cast<std::size_t>(p->size()) * sizeof(float));
  }
  return raw.header;
}

void save_seg(const fs::path& file, SegModel& m, const Json& metadata) {
  save_checkpoint(file, {"seg", to_json(m.spec()), metadata}, m.parameters());
}

void save_cls(const fs::path& file, ClsModel& m, const Json& metadata) {
  Json arch = to_json(m.spec());
  arch["n_classes"] = m.n_classes();
  save_checkpoint(file, {"cls", arch, metadata}, m.parameters());
}

void save_hair(const fs::path& file, HairNet& m, const Json& metadata) {
  Json arch;
  arch["input_side"] = m.input_side();
  arch["width"] = m.width();
  arch["trained"] = m.trained();
  save_checkpoint(file, {"hair", arch, metadata}, m.parameters());
}

SegModel load_seg(const fs::path& file) {
  auto h = read_checkpoint_header(file);
  expect_model(h, "seg", file);
  SegModel m(encoder_spec_from_json(h.arch));
  load_checkpoint(file, m.parameters());
  return m;
}

ClsModel load_cls(const fs::path& file) {
  auto h = read_checkpoint_header(file);
  expect_model(h, "cls", file);
  ClsModel m(encoder_spec_from_json(h.arch), h.arch.value("n_classes", kNumClasses));
  load_checkpoint(file, m.parameters());
  return m;
}

HairNet load_hair(const fs::path& file) {
  auto h = read_checkpoint_header(file);
  expect_model(h, "hair", file);
  HairNet m(h.arch.at("input_side").get<int>(), h.arch.value("width", 8));
  load_checkpoint(file, m.parameters());
  m.set_trained(h.arch.value("trained", false));
  return m;
}

}  // namespace wonderm
