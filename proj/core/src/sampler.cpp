#include "endocss/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "endocss/error.hpp"

namespace endocss {

BatchPlan compute_ratio(long n_current, long n_replay, int batch_size) {
  require(n_current >= 1, "need at least one current sample, got ", n_current);
  require(n_replay >= 0, "replay count cannot be negative, got ", n_replay);
  if (n_replay > 0)
    require(batch_size >= 2, "batch_size must be >= 2 to mix replay into batches, got ",
            batch_size);
  else
    require(batch_size >= 1, "batch_size must be >= 1, got ", batch_size);

  BatchPlan plan;
  if (n_replay == 0) {
    plan.s_current = batch_size;
    plan.s_replay = 0;
    return plan;
  }
  const double share = static_cast<double>(batch_size) * static_cast<double>(n_replay) /
                       static_cast<double>(n_replay + n_current);
  long s_replay = std::lround(share);  // half-away-from-zero
  s_replay = std::max<long>(1, std::min<long>(s_replay, batch_size - 1));
  plan.s_replay = static_cast<int>(s_replay);
  plan.s_current = batch_size - plan.s_replay;
  return plan;
}

BatchSampler::BatchSampler(long n_current, long n_replay, const BatchPlan& plan,
                           std::uint64_t seed)
    : n_current_(n_current), n_replay_(n_replay), plan_(plan), rng_(seed) {
  require(n_current >= 1, "sampler needs at least one current sample");
  require(plan.s_current >= 1, "batch plan must include current data");
  require(plan.s_replay == 0 || n_replay >= 1,
          "batch plan requests replay items but the replay set is empty");
  perm_.resize(static_cast<std::size_t>(n_current));
  std::iota(perm_.begin(), perm_.end(), 0L);
  start_epoch();
}

void BatchSampler::start_epoch() {
  rng_.shuffle(perm_.begin(), perm_.end());
  cursor_ = 0;
}

long BatchSampler::batches_per_epoch() const {
  return (n_current_ + plan_.s_current - 1) / plan_.s_current;
}

std::optional<BatchIndices> BatchSampler::next() {
  if (cursor_ >= n_current_) return std::nullopt;
  BatchIndices batch;
  batch.current.reserve(static_cast<std::size_t>(plan_.s_current));
  for (int i = 0; i < plan_.s_current; ++i) {
    if (cursor_ + i >= n_current_) {
      // Wrap to the start of this epoch's permutation to keep the batch full.
      batch.current.push_back(perm_[static_cast<std::size_t>((cursor_ + i) % n_current_)]);
      batch.padded = true;
    } else {
      batch.current.push_back(perm_[static_cast<std::size_t>(cursor_ + i)]);
    }
  }
  cursor_ += plan_.s_current;
  for (int i = 0; i < plan_.s_replay; ++i)
    batch.replay.push_back(
        static_cast<long>(rng_.uniform_index(static_cast<std::uint64_t>(n_replay_))));
  return batch;
}

}  // namespace endocss
