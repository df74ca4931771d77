#include <cmath>
#include <map>

#include "doctest.h"
#include "mfgcn/noise_tree.hpp"

using namespace mfgcn;

namespace {

std::vector<double> leaf_values(const NoiseTree& t, double (*fn)(double)) {
  std::vector<double> v;
  for (int i = 0; i < t.leaf_count(); ++i) v.push_back(fn(t.node_shift(t.first_leaf() + i)));
  return v;
}

}  // namespace

TEST_SUITE("noise_tree") {
  TEST_CASE("no common noise collapses to one branch") {
    auto t = build_tree(0.0, 4.0, 4, 10);
    CHECK(t.epochs() == 0);
    CHECK(t.node_count() == 1);
    CHECK(t.node_shift(0) == 0.0);
    CHECK(t.dt() == doctest::Approx(0.1));
    CHECK(t.slice_count(0) == 41);
  }

  TEST_CASE("four epochs with sigma one half") {
    auto t = build_tree(0.5, 4.0, 4, 8);
    CHECK(t.step() == doctest::Approx(1.0));
    std::map<long, int> mult;
    for (int i = 0; i < t.leaf_count(); ++i) mult[std::lround(t.node_shift(t.first_leaf() + i))]++;
    CHECK(mult[-4] == 1);
    CHECK(mult[-2] == 4);
    CHECK(mult[0] == 6);
    CHECK(mult[2] == 4);
    CHECK(mult[4] == 1);
    CHECK(expect_over_leaves(t, leaf_values(t, [](double s) { return s * s; })) == 4.0);
    CHECK(expect_over_leaves(t, leaf_values(t, [](double s) { return s; })) == 0.0);
    CHECK(expect_over_leaves(t, leaf_values(t, [](double) { return 2.5; })) == 2.5);
  }

  TEST_CASE("moments at every depth") {
    auto t = build_tree(0.3, 3.0, 7, 4);
    for (int e = 0; e <= t.epochs(); ++e) {
      double p = 0, m1 = 0, m2 = 0;
      for (int i = 0; i < (1 << e); ++i) {
        int id = NoiseTree::node_id(e, i);
        p += t.node_prob(id);
        m1 += t.node_prob(id) * t.node_shift(id);
        m2 += t.node_prob(id) * t.node_shift(id) * t.node_shift(id);
      }
      CHECK(p == 1.0);
      CHECK(std::abs(m1) < 1e-14);
      CHECK(m2 == doctest::Approx(2 * 0.3 * e * t.epoch_len()).epsilon(1e-13));
    }
  }

  TEST_CASE("child shifts") {
    auto t1 = build_tree(0.5, 1.0, 1, 4);
    auto [sp, sm] = child_shifts(t1, 0);
    CHECK(sp == doctest::Approx(1.0));
    CHECK(sm == doctest::Approx(-1.0));
    CHECK(t1.node_prob(1) == 0.5);
    CHECK(t1.node_shift(NoiseTree::child_plus(0)) == doctest::Approx(1.0));
    CHECK(t1.node_shift(NoiseTree::child_minus(0)) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(child_shifts(t1, 1), Error);

    auto t2 = build_tree(0.5, 1.0, 2, 4);
    CHECK(child_shifts(t2, 0).first == doctest::Approx(1.0 / std::sqrt(2.0)));
    auto t0 = build_tree(0.0, 1.0, 3, 4);
    CHECK_THROWS_AS(child_shifts(t0, 0), Error);
  }

  TEST_CASE("guards") {
    CHECK_THROWS_AS(build_tree(0.5, 1.0, 15, 4), Error);
    CHECK_THROWS_AS(build_tree(0.5, 1.0, 2, 0), Error);
    CHECK_THROWS_AS(build_tree(-0.1, 1.0, 2, 4), Error);
    auto t = build_tree(0.5, 2.0, 2, 4);
    CHECK_THROWS_AS(expect_over_leaves(t, std::vector<double>(3, 1.0)), Error);
  }

  TEST_CASE("time layout") {
    auto t = build_tree(0.5, 3.0, 3, 5);
    CHECK(t.total_steps() == 15);
    for (int id = 0; id < t.node_count(); ++id) {
      if (t.is_leaf(id)) {
        CHECK(t.slice_count(id) == 1);
        CHECK(t.first_step(id) == 15);
      } else {
        CHECK(t.slice_count(id) == 6);
        CHECK(t.first_step(id) == 5 * NoiseTree::depth_of(id));
      }
    }
    CHECK(t.depth_at_step(0) == 0);
    CHECK(t.depth_at_step(4) == 0);
    CHECK(t.depth_at_step(5) == 1);
    CHECK(t.depth_at_step(15) == 3);
    TreeField<ValueTag> f(t, Grid(8));
    CHECK(f.raw().size() == (7 * 6 + 8) * 8u);
  }
}
