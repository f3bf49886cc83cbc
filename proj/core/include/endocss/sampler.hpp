#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "endocss/rng.hpp"
#include "endocss/tensor.hpp"

namespace endocss {

/// Fixed per-batch split between current-task and replay items.
struct BatchPlan {
  int s_current = 0;  // S_D
  int s_replay = 0;   // S_R

  int total() const { return s_current + s_replay; }
};

/// S_R = clamp(round(B · n_replay / (n_replay + n_current)), lo, B-1) with
/// lo = 1 when replay is nonempty, else 0. Rounding is half-away-from-zero,
/// so replay is represented in every batch yet never crowds out current data.
BatchPlan compute_ratio(long n_current, long n_replay, int batch_size);

/// One batch as index lists; `current` indexes the current-task dataset,
/// `replay` the replay set. Concatenation order is current-then-replay.
struct BatchIndices {
  std::vector<long> current;
  std::vector<long> replay;
  bool padded = false;  // final partial batch completed by wrap-around
};

/// Materialized batch, order current-then-replay, matching BatchIndices.
struct TrainBatch {
  Tensor images;                        // {B,H,W,3}
  TensorI masks;                        // {B,H,W}
  std::vector<std::uint8_t> is_replay;  // origin flag per item
  bool padded = false;
};

/// Deterministic epoch iterator. Current indices come from a fresh
/// permutation each epoch (without replacement; the final short batch wraps
/// around to the permutation's start and is flagged). Replay indices are
/// uniform with replacement.
class BatchSampler {
 public:
  BatchSampler(long n_current, long n_replay, const BatchPlan& plan, std::uint64_t seed);

  /// Next batch of the current epoch, or nullopt once the epoch is done.
  std::optional<BatchIndices> next();
  /// Starts a new epoch with a fresh permutation.
  void start_epoch();

  long batches_per_epoch() const;
  const BatchPlan& plan() const { return plan_; }

 private:
  long n_current_ = 0;
  long n_replay_ = 0;
  BatchPlan plan_;
  Rng rng_;
  std::vector<long> perm_;
  long cursor_ = 0;
};

}  // namespace endocss
