#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wonderm {

struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kNumClasses = 7;

// Canonical class order. Every per-class axis in the project uses it.
enum class ClassLabel : int { MEL = 0, NV = 1, BCC = 2, AKIEC = 3, BKL = 4, DF = 5, VASC = 6 };

inline constexpr std::array<std::string_view, kNumClasses> kClassCodes = {
    "MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC"};

inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::MEL, ClassLabel::NV,  ClassLabel::BCC, ClassLabel::AKIEC,
    ClassLabel::BKL, ClassLabel::DF, ClassLabel::VASC};

constexpr int index_of(ClassLabel c) { return static_cast<int>(c); }

inline ClassLabel label_from_index(int i) {
  if (i < 0 || i >= kNumClasses)
    throw PipelineError("class index out of range: " + std::to_string(i));
  return static_cast<ClassLabel>(i);
}

constexpr std::string_view code_of(ClassLabel c) { return kClassCodes[index_of(c)]; }

inline std::optional<ClassLabel> try_parse_label(std::string_view code) {
  for (int i = 0; i < kNumClasses; ++i)
    if (kClassCodes[i] == code) return static_cast<ClassLabel>(i);
  return std::nullopt;
}

inline ClassLabel parse_label(std::string_view code) {
  if (auto l = try_parse_label(code)) return *l;
  throw PipelineError("unknown class code '" + std::string(code) + "'");
}

// Per-class integer table indexed by ClassLabel.
using ClassCounts = std::array<long, kNumClasses>;

}  // namespace wonderm
