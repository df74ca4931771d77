#include "mfgcn/noise_tree.hpp"

#include <bit>
#include <cmath>

namespace mfgcn {

NoiseTree NoiseTree::build(double sigma, double horizon, int epochs, int fine_steps) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error("noise tree: sigma must be nonnegative");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw Error("noise tree: horizon must be positive");
  if (epochs < 0) throw Error("noise tree: negative epoch count");
  if (fine_steps < 1) throw Error("noise tree: fine_steps must be at least 1");
  if (epochs > kMaxEpochs) throw Error("noise tree: more than " + std::to_string(kMaxEpochs) + " epochs");
  NoiseTree t;
  t.sigma_ = sigma;
  t.horizon_ = horizon;
  if (sigma == 0.0 && epochs > 0) {
    // no common noise: collapse to one branch but keep the time step
    fine_steps *= epochs;
    epochs = 0;
  }
  t.epochs_ = epochs;
  t.fine_steps_ = fine_steps;
  t.lead_steps_ = fine_steps;
  t.epoch_len_ = epochs == 0 ? horizon : horizon / epochs;
  t.step_ = std::sqrt(2.0 * sigma * t.epoch_len_);
  return t;
}

NoiseTree NoiseTree::build_with_lead(double sigma, double epoch_len, int epochs, int fine_steps, int lead_steps) {
  if (!(epoch_len > 0.0)) throw Error("noise tree: epoch length must be positive");
  if (lead_steps < 1 || lead_steps > fine_steps) throw Error("noise tree: lead_steps must lie in [1, fine_steps]");
  if (epochs < 1) throw Error("noise tree: a shortened root epoch needs at least one jump");
  NoiseTree t = build(sigma, epoch_len * epochs, epochs, fine_steps);
  if (t.epochs_ == 0) {
    // sigma = 0 collapsed the tree; keep only the requested number of steps
    t.fine_steps_ = lead_steps + (epochs - 1) * fine_steps;
    t.lead_steps_ = t.fine_steps_;
    t.horizon_ = t.fine_steps_ * (epoch_len / fine_steps);
    t.epoch_len_ = t.horizon_;
    return t;
  }
  t.lead_steps_ = lead_steps;
  t.horizon_ = (lead_steps + (epochs - 1) * fine_steps) * (epoch_len / fine_steps);
  return t;
}

NoiseTree build_phased_tree(double sigma, double epoch_len, double dt, double phase, double horizon) {
  const int fine = static_cast<int>(std::lround(epoch_len / dt));
  if (fine < 1) throw Error("phased tree: epoch must span at least one step");
  // the step actually used divides the epoch exactly
  const double h_t = epoch_len / fine;
  const int done = static_cast<int>(std::lround(phase / h_t)) % fine;
  const int total = static_cast<int>(std::lround(horizon / h_t));
  if (total < 1) throw Error("phased tree: horizon must span at least one step");
  const int lead = fine - done;
  if (total <= lead) return NoiseTree::build(0.0, total * h_t, 0, total);
  int epochs = 1 + (total - lead + fine - 1) / fine;
  if (epochs > kMaxEpochs) throw Error("phased tree: more than " + std::to_string(kMaxEpochs) + " epochs");
  return NoiseTree::build_with_lead(sigma, epoch_len, epochs, fine, lead);
}

int NoiseTree::depth_of(int id) { return std::bit_width(static_cast<unsigned>(id + 1)) - 1; }

double NoiseTree::node_prob(int id) const { return std::ldexp(1.0, -depth_of(id)); }

double NoiseTree::node_shift(int id) const {
  int e = depth_of(id);
  int minus = std::popcount(static_cast<unsigned>(index_of(id)));
  return step_ * static_cast<double>(e - 2 * minus);
}

int NoiseTree::slice_count(int id) const {
  if (epochs_ == 0) return fine_steps_ + 1;
  if (is_leaf(id)) return 1;
  return (id == 0 ? lead_steps_ : fine_steps_) + 1;
}

int NoiseTree::first_step(int id) const {
  int e = depth_of(id);
  return e == 0 ? 0 : lead_steps_ + (e - 1) * fine_steps_;
}

int NoiseTree::depth_at_step(int k) const {
  if (epochs_ == 0 || k < lead_steps_) return 0;
  int d = 1 + (k - lead_steps_) / fine_steps_;
  return d > epochs_ ? epochs_ : d;
}

int local_slice(const NoiseTree& tree, int id, int k) {
  int j = k - tree.first_step(id);
  if (j < 0 || j >= tree.slice_count(id)) return -1;
  return j;
}

double expect_over_depth(const NoiseTree& tree, int depth, std::span<const double> values) {
  if (depth < 0 || depth > tree.epochs()) throw Error("expectation: depth out of range");
  if (values.size() != (std::size_t{1} << depth)) throw Error("expectation: one value per node required");
  const double p = std::ldexp(1.0, -depth);
  double acc = 0.0;
  for (double v : values) acc += p * v;
  return acc;
}

double expect_over_leaves(const NoiseTree& tree, std::span<const double> leaf_values) {
  if (static_cast<int>(leaf_values.size()) != tree.leaf_count()) throw Error("expectation: one value per leaf required");
  return expect_over_depth(tree, tree.epochs(), leaf_values);
}

std::pair<double, double> child_shifts(const NoiseTree& tree, int node) {
  if (node < 0 || node >= tree.node_count()) throw Error("child_shifts: node out of range");
  if (tree.is_leaf(node)) throw Error("child_shifts: leaf has no children");
  return {tree.step(), -tree.step()};
}

}  // namespace mfgcn
