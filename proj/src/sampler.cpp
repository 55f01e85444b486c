#include "wonderm/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "wonderm/checkpoint.hpp"
#include "wonderm/random.hpp"

namespace wonderm {

long dev_count(long n) {
  const long q = n / 10, r = n % 10;
  if (r > 5 || (r == 5 && q % 2 == 1)) return q + 1;
  return q;
}

namespace {

std::array<std::vector<std::size_t>, kNumClasses> indices_by_class(const DatasetManifest& m) {
  std::array<std::vector<std::size_t>, kNumClasses> by;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i].label) throw PipelineError("record " + m[i].id + " has no label");
    by[static_cast<std::size_t>(index_of(*m[i].label))].push_back(i);
  }
  return by;
}

// First k of a seeded permutation of idx; returned in ascending order.
std::vector<std::size_t> draw(std::vector<std::size_t> idx, std::size_t k, Rng& rng) {
  rng.shuffle(std::span<std::size_t>(idx));
  idx.resize(std::min(k, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

DatasetManifest subset(const DatasetManifest& m, const std::vector<bool>& keep) {
  std::vector<ImageRecord> recs;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (keep[i]) recs.push_back(m[i]);
  return DatasetManifest(m.kind(), m.seed(), std::move(recs));
}

}  // namespace

Split split(const DatasetManifest& m, std::uint64_t seed) {
  const auto by = indices_by_class(m);
  Split s;
  s.plan.seed = seed;
  std::vector<bool> in_dev(m.size(), false);
  for (ClassLabel c : kAllClasses) {
    const auto& idx = by[static_cast<std::size_t>(index_of(c))];
    if (idx.empty()) s.warnings.push_back("class " + std::string(code_of(c)) + " has no records; strata left empty");
    Rng rng = Rng::derived(seed, 0x5b117, index_of(c));
    const long n_dev = dev_count(static_cast<long>(idx.size()));
    for (std::size_t i : draw(idx, static_cast<std::size_t>(n_dev), rng)) in_dev[i] = true;
    s.plan.dev_counts[index_of(c)] = n_dev;
    s.plan.train_counts[index_of(c)] = static_cast<long>(idx.size()) - n_dev;
  }
  std::vector<bool> in_train(in_dev.size());
  std::transform(in_dev.begin(), in_dev.end(), in_train.begin(), [](bool b) { return !b; });
  s.train = subset(m, in_train);
  s.dev = subset(m, in_dev);
  return s;
}

std::vector<BalancedDataset> balance(const DatasetManifest& train, ClassLabel anchor, int n_sets, std::uint64_t seed) {
  if (n_sets < 1) throw PipelineError("balance: n_sets must be >= 1");
  const long cap = train.count(anchor);
  if (cap == 0) throw PipelineError("balance: anchor class " + std::string(code_of(anchor)) + " is empty");
  const auto by = indices_by_class(train);
  std::vector<BalancedDataset> sets;
  for (int k = 1; k <= n_sets; ++k) {
    Rng rng(seed + static_cast<std::uint64_t>(k));
    std::vector<bool> keep(train.size(), false);
    for (ClassLabel c : kAllClasses) {
      const auto& idx = by[static_cast<std::size_t>(index_of(c))];
      if (static_cast<long>(idx.size()) <= cap) {
        for (std::size_t i : idx) keep[i] = true;
      } else {
        for (std::size_t i : draw(idx, static_cast<std::size_t>(cap), rng)) keep[i] = true;
      }
    }
    sets.push_back({k, subset(train, keep), anchor, cap});
  }
  return sets;
}

std::string plan_report(const SplitPlan& plan, const std::vector<BalancedDataset>& sets) {
  auto counts = [](const ClassCounts& c) {
    Json j;
    for (ClassLabel l : kAllClasses) j[std::string(code_of(l))] = c[index_of(l)];
    return j;
  };
  Json j;
  j["seed"] = plan.seed;
  j["dev_counts"] = counts(plan.dev_counts);
  j["train_counts"] = counts(plan.train_counts);
  Json arr = Json::array();
  for (const auto& s : sets)
    arr.push_back({{"index", s.index}, {"anchor", code_of(s.anchor)}, {"cap", s.cap},
                   {"counts", counts(s.records.class_counts())}});
  j["balanced_sets"] = std::move(arr);
  return j.dump(1) + "\n";
}

}  // namespace wonderm
