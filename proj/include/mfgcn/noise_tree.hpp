#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mfgcn/torus.hpp"

namespace mfgcn {

inline constexpr int kMaxEpochs = 14;

/// Binomial tree of piecewise-constant common-noise paths. The noise jumps
/// by +/- sqrt(2 sigma Delta) at the end of every epoch; leaves carry the
/// state right after the last jump at the horizon.
///
/// The root epoch may be shorter than the others (lead_steps < fine_steps);
/// this lets a solve started inside an epoch keep the jump times of a
/// longer solve.
///
/// Nodes are stored heap-style: node (depth e, index i) has id 2^e - 1 + i
/// and children (e+1, 2i) [plus jump] and (e+1, 2i+1) [minus jump].
class NoiseTree {
 public:
  static NoiseTree build(double sigma, double horizon, int epochs, int fine_steps);
  /// Tree with a root epoch of lead_steps fine steps; the other epochs keep
  /// length epoch_len and fine_steps steps.
  static NoiseTree build_with_lead(double sigma, double epoch_len, int epochs, int fine_steps, int lead_steps);

  double sigma() const { return sigma_; }
  double horizon() const { return horizon_; }
  int epochs() const { return epochs_; }
  double epoch_len() const { return epoch_len_; }
  int fine_steps() const { return fine_steps_; }
  double dt() const { return epoch_len_ / fine_steps_; }
  /// Jump size sqrt(2 sigma Delta).
  double step() const { return step_; }
  /// Total number of fine steps from 0 to the horizon.
  int total_steps() const { return epochs_ == 0 ? lead_steps_ : lead_steps_ + (epochs_ - 1) * fine_steps_; }
  int lead_steps() const { return lead_steps_; }

  int node_count() const { return (1 << (epochs_ + 1)) - 1; }
  static int node_id(int depth, int index) { return (1 << depth) - 1 + index; }
  static int depth_of(int id);
  static int index_of(int id) { return id - ((1 << depth_of(id)) - 1); }
  bool is_leaf(int id) const { return depth_of(id) == epochs_; }
  int first_leaf() const { return (1 << epochs_) - 1; }
  int leaf_count() const { return 1 << epochs_; }
  static int child_plus(int id) { return 2 * id + 1; }
  static int child_minus(int id) { return 2 * id + 2; }
  static int parent(int id) { return (id - 1) / 2; }

  double node_prob(int id) const;
  /// Cumulative translation: step * (#plus - #minus) along the path.
  double node_shift(int id) const;

  /// Number of time slices stored on a node and the global step of slice 0.
  int slice_count(int id) const;
  int first_step(int id) const;
  /// Depth that owns global step k (the post-jump node at epoch boundaries).
  int depth_at_step(int k) const;

 private:
  double sigma_ = 0, horizon_ = 0, epoch_len_ = 0, step_ = 0;
  int epochs_ = 0, fine_steps_ = 1, lead_steps_ = 1;
};

inline NoiseTree build_tree(double sigma, double horizon, int epochs, int fine_steps) {
  return NoiseTree::build(sigma, horizon, epochs, fine_steps);
}

/// Tree for horizon `horizon` whose jumps fall on multiples of epoch_len
/// counted from `phase` (the time already elapsed in the current epoch).
NoiseTree build_phased_tree(double sigma, double epoch_len, double dt, double phase, double horizon);

/// Sum over leaves of node_prob * value, in leaf order.
double expect_over_leaves(const NoiseTree& tree, std::span<const double> leaf_values);
/// Same, for the nodes of one depth.
double expect_over_depth(const NoiseTree& tree, int depth, std::span<const double> values);

std::pair<double, double> child_shifts(const NoiseTree& tree, int node);

/// Per-node time slices of grid functions, one contiguous buffer.
template <class Tag>
class TreeField {
 public:
  TreeField(const NoiseTree& tree, const Grid& grid) : grid_(grid), n_(static_cast<std::size_t>(grid.n())) {
    offset_.resize(static_cast<std::size_t>(tree.node_count()) + 1);
    std::size_t acc = 0;
    for (int id = 0; id < tree.node_count(); ++id) {
      offset_[static_cast<std::size_t>(id)] = acc;
      acc += static_cast<std::size_t>(tree.slice_count(id)) * n_;
    }
    offset_.back() = acc;
    data_.assign(acc, 0.0);
  }

  const Grid& grid() const { return grid_; }
  int node_count() const { return static_cast<int>(offset_.size()) - 1; }
  int slices(int id) const {
    return static_cast<int>((offset_[static_cast<std::size_t>(id) + 1] - offset_[static_cast<std::size_t>(id)]) / n_);
  }

  std::span<double> slice(int id, int k) { return {data_.data() + offset_[static_cast<std::size_t>(id)] + static_cast<std::size_t>(k) * n_, n_}; }
  std::span<const double> slice(int id, int k) const {
    return {data_.data() + offset_[static_cast<std::size_t>(id)] + static_cast<std::size_t>(k) * n_, n_};
  }
  std::span<double> last(int id) { return slice(id, slices(id) - 1); }
  std::span<const double> last(int id) const { return slice(id, slices(id) - 1); }

  GridFunction<Tag> field(int id, int k) const { return retag<Tag>(grid_, slice(id, k)); }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

 private:
  Grid grid_;
  std::size_t n_;
  std::vector<std::size_t> offset_;
  std::vector<double> data_;
};

/// Slice of node `id` holding global step k, or -1 if the node does not own it.
int local_slice(const NoiseTree& tree, int id, int k);

}  // namespace mfgcn
