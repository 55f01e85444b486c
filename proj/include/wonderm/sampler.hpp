#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wonderm/dataset.hpp"

namespace wonderm {

// Nearest integer to n/10, ties to even, in exact integer arithmetic.
long dev_count(long n);

struct SplitPlan {
  ClassCounts dev_counts{};
  ClassCounts train_counts{};
  std::uint64_t seed = 0;
};

struct Split {
  DatasetManifest train;
  DatasetManifest dev;
  SplitPlan plan;
  std::vector<std::string> warnings;  // one per empty class
};

// Stratified 9:1 split, sampled without replacement per class. Both halves
// keep the input's record order.
Split split(const DatasetManifest& m, std::uint64_t seed);

struct BalancedDataset {
  int index = 1;  // 1-based
  DatasetManifest records;
  ClassLabel anchor = ClassLabel::BCC;
  long cap = 0;
};

// Caps every class at the anchor's count. Set k draws with seed + k.
std::vector<BalancedDataset> balance(const DatasetManifest& train, ClassLabel anchor, int n_sets, std::uint64_t seed);

std::string plan_report(const SplitPlan& plan, const std::vector<BalancedDataset>& sets);

}  // namespace wonderm
