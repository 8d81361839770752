#include "doctest.h"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "test_support.hpp"
#include "vbmerge/errors.hpp"
#include "vbmerge/eval.hpp"

using namespace vbmerge;

namespace {

VariationalState state_with_phi(const std::vector<std::vector<double>>& rows) {
  VariationalState state(rows.size(), rows.empty() ? 1 : rows.front().size(), {2});
  for (std::size_t n = 0; n < rows.size(); ++n) {
    std::copy(rows[n].begin(), rows[n].end(), state.phi_row(n).begin());
  }
  return state;
}

// O(N^2) pair loop, independent of the contingency-table implementation.
LinkageScore brute_force(const std::vector<std::uint32_t>& pred,
                         const std::vector<std::uint32_t>& truth) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = i + 1; j < pred.size(); ++j) {
      const bool p = pred[i] == pred[j];
      const bool t = truth[i] == truth[j];
      tp += p && t;
      fp += p && !t;
      fn += !p && t;
    }
  }
  LinkageScore s;
  s.pairwise_precision = tp + fp == 0 ? 1.0 : tp / (tp + fp);
  s.pairwise_recall = tp + fn == 0 ? 1.0 : tp / (tp + fn);
  const double sum = s.pairwise_precision + s.pairwise_recall;
  s.pairwise_f1 = sum == 0 ? 0.0 : 2 * s.pairwise_precision * s.pairwise_recall / sum;
  return s;
}

std::vector<std::uint32_t> labels(std::initializer_list<std::uint32_t> l) { return l; }

}  // namespace

TEST_CASE("map_linkage") {
  SUBCASE("argmax") {
    const auto link = map_linkage(state_with_phi({{0.2, 0.7, 0.1}}));
    CHECK(link.map_entity == labels({2}));
    CHECK(link.max_prob[0] == 0.7);
  }
  SUBCASE("ties go to the smallest entity") {
    const auto link = map_linkage(state_with_phi({{0.5, 0.5}, {0.25, 0.75}}));
    CHECK(link.map_entity == labels({1, 2}));
  }
  SUBCASE("single entity") {
    const auto link = map_linkage(state_with_phi({{1.0}, {1.0}, {1.0}}));
    CHECK(link.map_entity == labels({1, 1, 1}));
    CHECK(link.entity_count_estimate == 1);
  }
  SUBCASE("invariant under monotone transforms, equivariant under relabelling") {
    std::mt19937_64 rng(3);
    std::exponential_distribution<double> expo(1.0);
    std::vector<std::vector<double>> rows(40, std::vector<double>(5));
    for (auto& row : rows) {
      double total = 0.0;
      for (double& p : row) total += (p = expo(rng));
      for (double& p : row) p /= total;
    }
    const auto state = state_with_phi(rows);
    const auto base = map_linkage(state);
    CHECK(base.entity_count_estimate <= 5);

    auto squared = rows;
    for (auto& row : squared) {
      for (double& p : row) p = p * p;
    }
    CHECK(map_linkage(state_with_phi(squared)).map_entity == base.map_entity);

    const std::vector<std::size_t> perm{2, 4, 0, 1, 3};
    const auto moved = map_linkage(state.permuted(perm));
    for (std::size_t n = 0; n < rows.size(); ++n) {
      CHECK(perm[moved.map_entity[n] - 1] + 1 == base.map_entity[n]);
      CHECK(moved.max_prob[n] == base.max_prob[n]);
    }
  }
}

TEST_CASE("pairwise metrics") {
  SUBCASE("perfect match") {
    const auto s = pairwise_metrics(labels({1, 1, 2, 3}), labels({4, 4, 9, 1}));
    CHECK(s.pairwise_precision == 1.0);
    CHECK(s.pairwise_recall == 1.0);
    CHECK(s.pairwise_f1 == 1.0);
    CHECK(s.true_entity_count == 3);
    CHECK(s.estimated_entity_count == 3);
  }
  SUBCASE("one merged cluster") {
    const auto s = pairwise_metrics(labels({1, 1, 1}), labels({1, 1, 2}));
    CHECK(s.pairwise_precision == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(s.pairwise_recall == 1.0);
    CHECK(s.pairwise_f1 == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("all singletons against a pair") {
    const auto s = pairwise_metrics(labels({1, 2, 3}), labels({1, 1, 2}));
    CHECK(s.pairwise_precision == 1.0);
    CHECK(s.pairwise_recall == 0.0);
    CHECK(s.pairwise_f1 == 0.0);
  }
  SUBCASE("all singletons on both sides") {
    const auto s = pairwise_metrics(labels({3, 1, 2}), labels({1, 2, 3}));
    CHECK(s.pairwise_f1 == 1.0);
  }
  SUBCASE("size mismatch") {
    CHECK_THROWS_AS(pairwise_metrics(labels({1, 2}), labels({1})), ArgumentError);
  }
  SUBCASE("agrees with a pair loop and ignores label names and order") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t N = 1 + trial * 3;
      std::uniform_int_distribution<std::uint32_t> label(1, 1 + trial % 7);
      std::vector<std::uint32_t> pred(N), truth(N);
      for (auto& l : pred) l = label(rng);
      for (auto& l : truth) l = label(rng);
      const auto s = pairwise_metrics(pred, truth);
      const auto ref = brute_force(pred, truth);
      CHECK(s.pairwise_precision == doctest::Approx(ref.pairwise_precision).epsilon(1e-14));
      CHECK(s.pairwise_recall == doctest::Approx(ref.pairwise_recall).epsilon(1e-14));
      CHECK(s.pairwise_f1 == doctest::Approx(ref.pairwise_f1).epsilon(1e-14));
      if (ref.pairwise_precision + ref.pairwise_recall > 0) {
        CHECK(s.pairwise_f1 ==
              doctest::Approx(2 * s.pairwise_precision * s.pairwise_recall /
                              (s.pairwise_precision + s.pairwise_recall)));
      }

      std::vector<std::size_t> order(N);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      std::vector<std::uint32_t> pred2(N), truth2(N);
      for (std::size_t i = 0; i < N; ++i) {
        pred2[i] = pred[order[i]] * 13 + 5;
        truth2[i] = truth[order[i]] + 100;
      }
      const auto moved = pairwise_metrics(pred2, truth2);
      CHECK(moved.pairwise_precision == s.pairwise_precision);
      CHECK(moved.pairwise_recall == s.pairwise_recall);
      CHECK(moved.pairwise_f1 == s.pairwise_f1);
    }
  }
}

TEST_CASE("posterior co-cluster estimate") {
  const auto state = state_with_phi({{0.7, 0.3}, {0.4, 0.6}, {1.0, 0.0}, {0.5, 0.5}});
  using Pair = std::pair<std::size_t, std::size_t>;
  const std::vector<Pair> pairs{{0, 1}, {1, 0}, {2, 2}, {3, 3}};
  const auto p = posterior_cocluster_estimate(state, pairs);
  CHECK(p[0] == doctest::Approx(0.46).epsilon(1e-15));
  CHECK(p[1] == p[0]);
  CHECK(p[2] == 1.0);
  CHECK(p[3] == doctest::Approx(0.5).epsilon(1e-15));
  const std::vector<Pair> bad{{0, 4}};
  CHECK_THROWS_AS(posterior_cocluster_estimate(state, bad), IndexError);
}

TEST_CASE("linkage and truth files") {
  testing::TempDir dir;
  Linkage link;
  link.map_entity = {2, 1, 2};
  link.max_prob = {0.9, 1.0 / 3.0, 0.5};
  link.entity_count_estimate = 2;
  write_linkage(link, {2, 1}, dir / "linkage.csv");
  const auto back = read_linkage(dir / "linkage.csv");
  CHECK(back.records.labels == link.map_entity);
  CHECK(back.max_prob == link.max_prob);
  using Key = std::pair<std::size_t, std::size_t>;
  CHECK(back.records.keys == std::vector<Key>{{1, 1}, {1, 2}, {2, 1}});
  CHECK_THROWS_AS(write_linkage(link, {1, 1}, dir / "x.csv"), ArgumentError);

  testing::write_text(dir / "truth.csv", "db,record,entity\n1,1,5\n1,2,5\n2,1,7\n");
  const auto truth = read_ground_truth(dir / "truth.csv");
  CHECK(truth.records_per_db == std::vector<std::size_t>{2, 1});
  CHECK(truth.assignments == labels({5, 5, 7}));

  KeyedLabels shuffled{{{2, 1}, {1, 2}, {1, 1}}, {7, 5, 5}};
  const auto [pred, aligned] = align_records(back.records, shuffled);
  CHECK(pred == link.map_entity);
  CHECK(aligned == labels({5, 5, 7}));

  KeyedLabels missing{{{1, 1}, {1, 2}, {3, 1}}, {1, 1, 1}};
  CHECK_THROWS_AS(align_records(back.records, missing), ArgumentError);
  KeyedLabels short_truth{{{1, 1}}, {1}};
  CHECK_THROWS_AS(align_records(back.records, short_truth), ArgumentError);

  testing::write_text(dir / "gap.csv", "db,record,entity\n1,1,5\n1,3,5\n");
  CHECK_THROWS_AS(read_ground_truth(dir / "gap.csv"), ArgumentError);
  CHECK_THROWS_AS(read_ground_truth(dir / "absent.csv"), IoError);
}

TEST_CASE("score json") {
  LinkageScore s;
  s.pairwise_precision = 1.0 / 3.0;
  s.pairwise_recall = 1.0;
  s.pairwise_f1 = 0.5;
  s.true_entity_count = 2;
  s.estimated_entity_count = 1;
  const auto j = nlohmann::json::parse(score_json(s));
  CHECK(j.size() == 5);
  CHECK(j["pairwise_precision"].get<double>() == 1.0 / 3.0);
  CHECK(j["pairwise_f1"].get<double>() == 0.5);
  CHECK(j["true_entity_count"].get<int>() == 2);
  CHECK(j["estimated_entity_count"].get<int>() == 1);
}
