#include "vdfp/trajstore.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace vdfp::trajstore {

Segment::Segment(std::shared_ptr<const StoredEpisode> episode, int start, int length)
    : episode_(std::move(episode)), start_(start), length_(length) {
  if (!episode_) throw std::invalid_argument("Segment: null episode");
  if (start < 0 || length < 1 || start + length > episode_->length()) {
    throw std::out_of_range("Segment: window outside episode");
  }
}

ReplayBuffer::ReplayBuffer(std::int64_t capacity_steps) : capacity_(capacity_steps) {
  if (capacity_steps < 1) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::store_episode(std::span<const Transition> episode) {
  if (episode.empty()) throw std::invalid_argument("store_episode: empty episode");
  const auto len = static_cast<std::int64_t>(episode.size());
  if (len > capacity_) throw std::invalid_argument("store_episode: episode longer than buffer capacity");

  const int sd = static_cast<int>(episode.front().state.size());
  const int ad = static_cast<int>(episode.front().action.size());
  if (sd < 1 || ad < 1) throw std::invalid_argument("store_episode: empty state or action");
  if (state_dim_ != 0 && (sd != state_dim_ || ad != action_dim_)) {
    throw std::invalid_argument("store_episode: dimensions differ from stored episodes");
  }

  StoredEpisode built;
  built.state_dim = sd;
  built.action_dim = ad;
  built.features.resize(len, sd + ad);
  built.rewards.resize(len);
  for (std::int64_t t = 0; t < len; ++t) {
    const Transition& tr = episode[static_cast<std::size_t>(t)];
    if (tr.state.size() != sd || tr.action.size() != ad) {
      throw std::invalid_argument("store_episode: inconsistent dimensions within episode");
    }
    built.features.row(t).head(sd) = tr.state.transpose();
    built.features.row(t).tail(ad) = tr.action.transpose();
    built.rewards[t] = tr.reward;
  }

  store(std::move(built));
}

void ReplayBuffer::store(StoredEpisode episode) {
  const auto len = static_cast<std::int64_t>(episode.length());
  if (len < 1 || len > capacity_) throw std::invalid_argument("store: bad episode length");
  if (episode.features.rows() != len || episode.features.cols() != episode.state_dim + episode.action_dim) {
    throw std::invalid_argument("store: feature matrix does not match the episode");
  }
  if (state_dim_ != 0 && (episode.state_dim != state_dim_ || episode.action_dim != action_dim_)) {
    throw std::invalid_argument("store: dimensions differ from stored episodes");
  }
  state_dim_ = episode.state_dim;
  action_dim_ = episode.action_dim;
  auto stored = std::make_shared<const StoredEpisode>(std::move(episode));
  while (total_ + len > capacity_) {
    const std::int64_t n = episodes_.front()->length();
    episodes_.pop_front();
    offsets_.pop_front();
    total_ -= n;
    evicted_ += n;
  }
  offsets_.push_back(evicted_ + total_);
  episodes_.push_back(std::move(stored));
  total_ += len;
}

std::pair<std::size_t, int> ReplayBuffer::locate(std::int64_t index) const {
  if (index < 0 || index >= total_) throw std::out_of_range("ReplayBuffer: index out of range");
  const std::int64_t global = evicted_ + index;
  const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), global);
  const auto e = static_cast<std::size_t>(std::distance(offsets_.begin(), it) - 1);
  return {e, static_cast<int>(global - offsets_[e])};
}

Segment ReplayBuffer::segment_at(std::int64_t index, int max_len) const {
  if (max_len < 1) throw std::invalid_argument("segment_at: max_len must be positive");
  const auto [e, t] = locate(index);
  const int remaining = episodes_[e]->length() - t;
  return Segment(episodes_[e], t, std::min(remaining, max_len));
}

std::vector<Segment> ReplayBuffer::sample_segments(int n, int max_len, Rng& rng) const {
  if (n <= 0) throw std::invalid_argument("sample_segments: batch size must be positive");
  if (max_len < 1) throw std::invalid_argument("sample_segments: max_len must be positive");
  if (empty()) throw std::logic_error("sample_segments: buffer is empty");
  std::vector<Segment> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(total_)));
    out.push_back(segment_at(idx, max_len));
  }
  return out;
}

void ReplayBuffer::clear() {
  episodes_.clear();
  offsets_.clear();
  evicted_ += total_;
  total_ = 0;
}

void ReplayBuffer::dump(std::ostream& os) const {
  os << "# vdfp-episodes v1 state_dim=" << state_dim_ << " action_dim=" << action_dim_ << "\n";
  const auto old_precision = os.precision(17);
  for (const auto& ep : episodes_) {
    for (int t = 0; t < ep->length(); ++t) {
      for (Eigen::Index j = 0; j < ep->features.cols(); ++j) os << ep->features(t, j) << ' ';
      os << ep->rewards[t] << '\n';
    }
    os << '\n';
  }
  os.precision(old_precision);
}

std::vector<Episode> load_episodes(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("load_episodes: missing header");
  int sd = 0;
  int ad = 0;
  {
    std::istringstream hs(line);
    std::string hash;
    std::string magic;
    std::string version;
    std::string sd_kv;
    std::string ad_kv;
    hs >> hash >> magic >> version >> sd_kv >> ad_kv;
    if (hash != "#" || magic != "vdfp-episodes" || version != "v1") {
      throw std::runtime_error("load_episodes: unrecognised header '" + line + "'");
    }
    if (sd_kv.rfind("state_dim=", 0) != 0 || ad_kv.rfind("action_dim=", 0) != 0) {
      throw std::runtime_error("load_episodes: header lacks dimensions");
    }
    sd = std::stoi(sd_kv.substr(10));
    ad = std::stoi(ad_kv.substr(11));
  }
  std::vector<Episode> episodes;
  Episode current;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      if (!current.empty()) episodes.push_back(std::move(current));
      current.clear();
      continue;
    }
    std::istringstream ls(line);
    std::vector<double> values;
    double x = 0.0;
    while (ls >> x) values.push_back(x);
    if (!ls.eof() || static_cast<int>(values.size()) != sd + ad + 1) {
      throw std::runtime_error("load_episodes: malformed transition on line " + std::to_string(line_no));
    }
    Transition tr;
    tr.state = Eigen::Map<const Vec>(values.data(), sd);
    tr.action = Eigen::Map<const Vec>(values.data() + sd, ad);
    tr.reward = values.back();
    current.push_back(std::move(tr));
  }
  if (!current.empty()) episodes.push_back(std::move(current));
  return episodes;
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double total = 0.0;
  double discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

double discounted_return(const Segment& segment, double gamma) {
  const auto r = segment.rewards();
  return discounted_return(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), gamma);
}

int agg_factor_for(int max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be positive");
  if (max_len <= 64) return 1;
  if (max_len % 64 != 0) throw std::invalid_argument("max_len above 64 must be a multiple of 64");
  return max_len / 64;
}

PaddedSegment pad_to_matrix(const Segment& segment, int max_len, int agg_factor) {
  if (agg_factor != agg_factor_for(max_len)) {
    throw std::invalid_argument("pad_to_matrix: agg_factor must equal L/64 for L > 64, else 1");
  }
  if (segment.size() > max_len) throw std::invalid_argument("pad_to_matrix: segment longer than L");
  PaddedSegment p;
  p.length = segment.size();
  p.rows = Mat::Zero(max_len, segment.features().cols());
  p.rows.topRows(p.length) = segment.features();
  p.mask = Vec::Zero(max_len);
  p.mask.head(p.length).setOnes();
  return p;
}

PaddedBatch pad_batch(std::span<const Segment> segments, int max_len, int agg_factor) {
  if (agg_factor != agg_factor_for(max_len)) {
    throw std::invalid_argument("pad_batch: agg_factor must equal L/64 for L > 64, else 1");
  }
  if (segments.empty()) throw std::invalid_argument("pad_batch: empty batch");
  const auto width = segments.front().features().cols();
  PaddedBatch b;
  b.rows_per_segment = max_len;
  b.rows = Mat::Zero(static_cast<Eigen::Index>(segments.size()) * max_len, width);
  b.lengths.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    if (s.size() > max_len) throw std::invalid_argument("pad_batch: segment longer than L");
    b.rows.middleRows(static_cast<Eigen::Index>(i) * max_len, s.size()) = s.features();
    b.lengths.push_back(s.size());
  }
  return b;
}

PaddedBatch pad_batch(std::span<const PaddedSegment> segments) {
  if (segments.empty()) throw std::invalid_argument("pad_batch: empty batch");
  const auto rows = segments.front().rows.rows();
  const auto width = segments.front().rows.cols();
  PaddedBatch b;
  b.rows_per_segment = static_cast<int>(rows);
  b.rows.resize(static_cast<Eigen::Index>(segments.size()) * rows, width);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].rows.rows() != rows || segments[i].rows.cols() != width) {
      throw std::invalid_argument("pad_batch: inconsistent padded shapes");
    }
    b.rows.middleRows(static_cast<Eigen::Index>(i) * rows, rows) = segments[i].rows;
    b.lengths.push_back(segments[i].length);
  }
  return b;
}

}  // namespace vdfp::trajstore
