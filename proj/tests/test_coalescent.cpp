#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "wavefront/coalescent.hpp"
#include "wavefront/stats.hpp"

using namespace wavefront;
using namespace wavefront::coalescent;

namespace {
constexpr auto BS = LambdaMeasure::BolthausenSznitman;
constexpr auto K = LambdaMeasure::Kingman;
}  // namespace

TEST_SUITE("coalescent") {

TEST_CASE("merger rates") {
  CHECK(lambda_rate(3, 2, BS) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(lambda_rate(4, 2, BS) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(lambda_rate(4, 4, BS) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(lambda_rate(10, 3, K) == 0.0);
  CHECK(lambda_rate(10, 2, K) == 1.0);
  CHECK(lambda_rate(2, 2, BS) == doctest::Approx(1.0));
  CHECK_THROWS_AS(lambda_rate(4, 1, BS), std::invalid_argument);
  CHECK_THROWS_AS(lambda_rate(4, 5, K), std::invalid_argument);
}

TEST_CASE("total rates") {
  CHECK(total_rate(4, BS) == doctest::Approx(3.0).epsilon(1e-13));
  CHECK(total_rate(4, K) == 6.0);
  CHECK(total_rate(2, BS) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(total_rate(2, K) == 1.0);
  CHECK_THROWS_AS(total_rate(1, BS), std::invalid_argument);
}

TEST_CASE("Bolthausen-Sznitman total rate is k - 1 up to 10^4 blocks") {
  for (int k = 2; k <= 10000; k += (k < 200 ? 1 : 97)) {
    const double r = total_rate(k, BS);
    CHECK(std::abs(r - (k - 1)) <= 1e-10 * (k - 1));
  }
  CHECK(std::abs(total_rate(10000, BS) - 9999.0) <= 1e-10 * 9999.0);
}

TEST_CASE("merger size probabilities") {
  const auto p4 = merger_size_probabilities(4, BS);
  REQUIRE(p4.size() == 5);
  CHECK(p4[0] == 0.0);
  CHECK(p4[1] == 0.0);
  CHECK(p4[2] == doctest::Approx(2.0 / 3.0));
  CHECK(p4[3] == doctest::Approx(2.0 / 9.0));
  CHECK(p4[4] == doctest::Approx(1.0 / 9.0));
  for (int k : {2, 3, 7, 50, 1000}) {
    for (auto m : {BS, K}) {
      const auto p = merger_size_probabilities(k, m);
      CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  const auto k5 = merger_size_probabilities(5, K);
  CHECK(k5[2] == 1.0);
}

TEST_CASE("merger sizes follow their law") {
  Rng rng(12);
  std::vector<std::int64_t> counts(5, 0);
  for (int i = 0; i < 100000; ++i) ++counts[static_cast<std::size_t>(sample_merger_size(4, BS, rng))];
  CHECK(counts[0] == 0);
  CHECK(counts[1] == 0);
  const std::vector<std::int64_t> obs(counts.begin() + 2, counts.end());
  const std::vector<double> probs{2.0 / 3.0, 2.0 / 9.0, 1.0 / 9.0};
  CHECK(stats::chi_square_test(obs, probs).p_value > 1e-3);

  // Larger k against the computed probabilities, pooling the sparse tail.
  const int k = 30;
  const auto p = merger_size_probabilities(k, BS);
  std::vector<std::int64_t> c(7, 0);
  for (int i = 0; i < 100000; ++i) ++c[std::min<std::size_t>(6, sample_merger_size(k, BS, rng) - 2)];
  std::vector<double> q(7, 0.0);
  for (int l = 2; l <= k; ++l) q[std::min<std::size_t>(6, l - 2)] += p[static_cast<std::size_t>(l)];
  CHECK(stats::chi_square_test(c, q).p_value > 1e-3);

  for (int i = 0; i < 100; ++i) CHECK(sample_merger_size(9, K, rng) == 2);
}

TEST_CASE("block count paths") {
  const auto one = simulate_block_counts(1, 5.0, BS, 3);
  CHECK(one.times.size() == 1);
  CHECK(one.blocks == std::vector<int>{1});
  CHECK(one.value_at(4.0) == 1);

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto path = simulate_block_counts(40, 2.0, BS, seed);
    CHECK(path.blocks.front() == 40);
    CHECK(path.times.front() == 0.0);
    for (std::size_t i = 1; i < path.blocks.size(); ++i) {
      CHECK(path.blocks[i] < path.blocks[i - 1]);
      CHECK(path.blocks[i] >= 1);
      CHECK(path.times[i] > path.times[i - 1]);
      CHECK(path.times[i] <= 2.0);
    }
    if (path.blocks.back() == 1) CHECK(path.value_at(1e9) == 1);
    Rng rng(seed);
    CHECK(blocks_at(40, 2.0, BS, rng) == path.value_at(2.0));
  }
}

TEST_CASE("Kingman pair coalesces at rate one") {
  std::vector<double> holding, reference;
  for (std::uint64_t seed = 0; seed < 5000; ++seed) {
    const auto path = simulate_block_counts(2, 1e9, K, seed);
    REQUIRE(path.blocks.size() == 2);
    holding.push_back(path.times[1]);
    reference.push_back(-std::log(1.0 - (seed + 0.5) / 5000.0));
  }
  CHECK(stats::ks_distance(holding, reference) < 1.63 / std::sqrt(2500.0));
}

TEST_CASE("Kingman time to absorption") {
  for (int k : {2, 5, 20}) {
    std::vector<double> t;
    for (std::uint64_t seed = 0; seed < 20000; ++seed)
      t.push_back(simulate_block_counts(k, 1e9, K, seed).times.back());
    const auto est = stats::moment_with_se(t, 1);
    CHECK(std::abs(est.mean - 2.0 * (1.0 - 1.0 / k)) <= 3.0 * est.se);
  }
}

TEST_CASE("two blocks: closed form") {
  CHECK(two_block_moment(0.3, 0.0) == doctest::Approx(0.09));
  CHECK(two_block_moment(0.3, 50.0) == doctest::Approx(0.3));
  for (double t : {0.2, 1.0}) {
    Rng rng(77);
    std::vector<double> v;
    for (int r = 0; r < 100000; ++r) v.push_back(std::pow(0.4, blocks_at(2, t, BS, rng)));
    const auto est = stats::moment_with_se(v, 1);
    CHECK(std::abs(est.mean - two_block_moment(0.4, t)) <= 3.0 * est.se);
  }
}

TEST_CASE("duality") {
  const auto one = duality_gap(1, 0.3, 1.0, 2000, 1e-3, 4);
  CHECK(one.coalescent_moment == 0.3);
  CHECK(one.coalescent_se == 0.0);
  CHECK(one.pass);

  const auto three = duality_gap(3, 0.3, 1.0, 100000, 1e-3, 8);
  CHECK(three.blocks == 3);
  CHECK(three.gap == doctest::Approx(std::abs(three.sde_moment - three.coalescent_moment)));
  CHECK(three.combined_se == doctest::Approx(std::hypot(three.sde_se, three.coalescent_se)));
  CHECK(three.gap <= 3.0 * three.combined_se);
  CHECK(three.pass);

  CHECK_THROWS_AS(duality_gap(3, 0.3, 1.0, 100, 1e-3, 1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(duality_gap(0, 0.3, 1.0, 100, 1e-3, 1), std::invalid_argument);
  CHECK_THROWS_AS(duality_gap(2, 1.3, 1.0, 100, 1e-3, 1), std::invalid_argument);
}

TEST_CASE("duality is reproducible") {
  const auto a = duality_gap(2, 0.6, 0.5, 500, 1e-2, 99);
  const auto b = duality_gap(2, 0.6, 0.5, 500, 1e-2, 99, 0.0, 2);
  CHECK(a.sde_moment == b.sde_moment);
  CHECK(a.coalescent_moment == b.coalescent_moment);
}

}
