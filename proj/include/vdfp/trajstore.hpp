#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "vdfp/nn/rng.hpp"
#include "vdfp/nn/tensor.hpp"

namespace vdfp::trajstore {

struct Transition {
  Vec state;
  Vec action;
  double reward = 0.0;
};

using Episode = std::vector<Transition>;

/// One complete episode, frozen at store time. Row t of `features` is the
/// encoder input x_t = s_t (+) a_t.
struct StoredEpisode {
  Mat features;
  Vec rewards;
  int state_dim = 0;
  int action_dim = 0;

  int length() const { return static_cast<int>(rewards.size()); }
};

/// Suffix window tau_{t:t+k} of a stored episode. Keeps the episode alive.
class Segment {
 public:
  Segment(std::shared_ptr<const StoredEpisode> episode, int start, int length);

  int size() const { return length_; }
  /// Index t of the anchor pair within its episode.
  int start() const { return start_; }
  bool reaches_episode_end() const { return start_ + length_ == episode_->length(); }

  auto features() const { return episode_->features.middleRows(start_, length_); }
  auto state(int i) const { return episode_->features.row(start_ + i).head(episode_->state_dim); }
  auto action(int i) const {
    return episode_->features.row(start_ + i).segment(episode_->state_dim, episode_->action_dim);
  }
  double reward(int i) const { return episode_->rewards[start_ + i]; }
  auto rewards() const { return episode_->rewards.segment(start_, length_); }
  const StoredEpisode& episode() const { return *episode_; }

 private:
  std::shared_ptr<const StoredEpisode> episode_;
  int start_ = 0;
  int length_ = 0;
};

/// FIFO store of complete episodes bounded by a total transition budget.
///
/// Single writer. Concurrent sample_segments() calls are fine only while no
/// store_episode() is in flight.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::int64_t capacity_steps = 100000);

  /// Throws std::invalid_argument for an empty episode, mismatched
  /// dimensions, or an episode longer than the whole capacity.
  void store_episode(std::span<const Transition> episode);
  /// Same, for an episode already in stored form (checkpoint restore).
  void store(StoredEpisode episode);

  /// N suffixes tau_{t:min(t+L-1, T)} with anchors uniform over every stored
  /// (episode, t). Throws for N <= 0, L <= 0 or an empty buffer.
  std::vector<Segment> sample_segments(int n, int max_len, Rng& rng) const;

  /// Segment anchored at the i-th stored transition (oldest first).
  Segment segment_at(std::int64_t index, int max_len) const;
  /// The i-th stored transition as (episode, t).
  std::pair<std::size_t, int> locate(std::int64_t index) const;

  std::int64_t capacity_steps() const { return capacity_; }
  std::int64_t size_steps() const { return total_; }
  std::size_t num_episodes() const { return episodes_.size(); }
  bool empty() const { return episodes_.empty(); }
  const StoredEpisode& episode(std::size_t i) const { return *episodes_[i]; }
  std::shared_ptr<const StoredEpisode> episode_ptr(std::size_t i) const { return episodes_[i]; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }

  void clear();

  /// Line-delimited text: a header line, then one transition per line
  /// (state..., action..., reward) with a blank line after each episode.
  void dump(std::ostream& os) const;

 private:
  std::int64_t capacity_;
  std::int64_t total_ = 0;
  std::deque<std::shared_ptr<const StoredEpisode>> episodes_;
  std::deque<std::int64_t> offsets_;  // running start index of each episode
  std::int64_t evicted_ = 0;          // transitions evicted so far
  int state_dim_ = 0;
  int action_dim_ = 0;
};

/// Parses the dump() format back into episodes.
std::vector<Episode> load_episodes(std::istream& is);

/// sum_k gamma^k r_{t+k} over the segment.
double discounted_return(const Segment& segment, double gamma);
double discounted_return(std::span<const double> rewards, double gamma);

/// Aggregation factor implied by a max length: L/64 above 64, else 1.
int agg_factor_for(int max_len);

/// A segment zero-padded on the tail to exactly L rows.
struct PaddedSegment {
  Mat rows;
  Vec mask;  // 1 for real rows
  int length = 0;
};

/// Throws std::invalid_argument if the segment is longer than L or the
/// aggregation factor does not match L.
PaddedSegment pad_to_matrix(const Segment& segment, int max_len, int agg_factor);

/// Encoder input for a batch: segment b occupies rows [b*L, (b+1)*L).
struct PaddedBatch {
  Mat rows;
  std::vector<int> lengths;
  int rows_per_segment = 0;

  int batch_size() const { return static_cast<int>(lengths.size()); }
};

PaddedBatch pad_batch(std::span<const Segment> segments, int max_len, int agg_factor);
PaddedBatch pad_batch(std::span<const PaddedSegment> segments);

}  // namespace vdfp::trajstore
