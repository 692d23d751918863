#pragma once

#include <stdexcept>
#include <vector>

#include "rayzer/rng.hpp"

namespace rayzer::train {

// Disjoint cover of {0..K-1}: A feeds scene reconstruction, B supplies
// photometric supervision.
struct SplitPlan {
  std::vector<int> a;
  std::vector<int> b;

  int K() const { return int(a.size() + b.size()); }
  bool valid() const;
};

enum class SplitMode { TrainRandom, TestEven, TestRandom };

// TrainRandom / TestRandom: uniform random partition from rng.
// TestEven: B at evenly spaced interleaved positions, floor((j+0.5)*K/K_B).
SplitPlan split_views(int K, int K_A, int K_B, SplitMode mode, Rng& rng);

}  // namespace rayzer::train
