#include <doctest.h>

#include <cmath>

#include "wavefront/params.hpp"

using namespace wavefront;

namespace {
ModelParams reference() { return {1'000'000, 1e-4, 0.01, 1.0, 0.3, 5.0}; }
}  // namespace

TEST_SUITE("params") {

TEST_CASE("reference scalings") {
  const auto d = derive_scalings(reference());
  CHECK(d.wave_width == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(d.time_scale == doctest::Approx(460.517018598809).epsilon(1e-12));
  CHECK(d.ceil_s_over_mu == 100);
  CHECK(d.tau_threshold_count == 101);
  CHECK(d.y_marked_count == 30);
  CHECK(d.y_quantized == 0.30);
}

TEST_CASE("wave width is one when N equals s/mu in log scale") {
  // N = e is not an integer population; the same identity at N = (s/mu)^1
  // would violate N > s/mu, so take N = (s/mu)^2 and check k_N = 2 instead.
  ModelParams p = reference();
  p.population_size = 10'000;
  const auto d = derive_scalings(p);
  CHECK(d.wave_width == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(d.time_scale == doctest::Approx(std::log(100.0) / 0.01).epsilon(1e-14));
}

TEST_CASE("a_N does not depend on N, k_N increases with N") {
  ModelParams p = reference();
  double previous = 0.0;
  const double a_n = derive_scalings(p).time_scale;
  for (std::int64_t n : {1'000, 10'000, 100'000, 1'000'000, 10'000'000}) {
    p.population_size = n;
    const auto d = derive_scalings(p);
    CHECK(d.time_scale == a_n);
    CHECK(d.wave_width > previous);
    previous = d.wave_width;
  }
}

TEST_CASE("quantized y stays inside the open interval") {
  ModelParams p = reference();
  for (double y : {0.001, 0.004, 0.3, 0.555, 0.996, 0.999}) {
    p.initial_y_fraction = y;
    const auto d = derive_scalings(p);
    CHECK(d.y_marked_count >= 1);
    CHECK(d.y_marked_count <= d.ceil_s_over_mu - 1);
    CHECK(std::abs(d.y_quantized - y) <= 1.0 / static_cast<double>(d.ceil_s_over_mu));
    CHECK(d.y_quantized * static_cast<double>(d.ceil_s_over_mu) ==
          doctest::Approx(static_cast<double>(d.y_marked_count)));
  }
}

TEST_CASE("non-integer s/mu: threshold count equals the ceiling") {
  ModelParams p = reference();
  p.mutation_rate = 0.0048;
  p.selection = 0.05;
  const auto d = derive_scalings(p);
  CHECK(d.ceil_s_over_mu == 11);
  CHECK(d.tau_threshold_count == 11);
}

TEST_CASE("derive_scalings is pure") {
  CHECK(derive_scalings(reference()) == derive_scalings(reference()));
}

TEST_CASE("invalid parameters name the violated constraint") {
  auto expect = [](ModelParams p, const std::string& fragment) {
    try {
      validate(p);
      FAIL("accepted invalid parameters");
    } catch (const ParameterError& e) {
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  ModelParams p = reference();
  p.mutation_rate = 0.0;
  expect(p, "0 < mu");
  p = reference();
  p.mutation_rate = 0.02;
  expect(p, "mu < s");
  p = reference();
  p.selection = 1.5;
  p.mutation_rate = 0.1;
  expect(p, "s < 1");
  p = reference();
  p.population_size = 50;
  expect(p, "N > s/mu");
  p = reference();
  p.weak_selection = -1.0;
  expect(p, "alpha >= 0");
  p = reference();
  p.initial_y_fraction = 1.0;
  expect(p, "0 < y < 1");
  p = reference();
  p.horizon = 2.0;
  expect(p, "T > 2");
  CHECK_THROWS_AS(derive_scalings(p), ParameterError);
}

TEST_CASE("assumption report") {
  const auto r = check_assumptions(reference());
  CHECK(r.a3_value == doctest::Approx(0.03).epsilon(1e-12));
  for (const auto& w : r.warnings) CHECK(w.rfind("A3", 0) != 0);
  CHECK(r.a1_value * std::log(1.0 / 0.01) == doctest::Approx(3.0).epsilon(1e-14));

  ModelParams strong = reference();
  strong.selection = 0.2;
  strong.mutation_rate = 0.002;
  const auto s = check_assumptions(strong);
  CHECK(s.a3_value == doctest::Approx(0.6).epsilon(1e-12));
  bool a3 = false;
  for (const auto& w : s.warnings) a3 = a3 || w.rfind("A3", 0) == 0;
  CHECK(a3);
}

TEST_CASE("assumption values are finite and positive") {
  for (std::int64_t n : {1'000, 100'000, 10'000'000}) {
    ModelParams p = reference();
    p.population_size = n;
    const auto r = check_assumptions(p);
    for (double v : {r.a1_value, r.a2_value, r.a3_value}) {
      CHECK(std::isfinite(v));
      CHECK(v > 0.0);
    }
  }
}

TEST_CASE("mutation rate at or below 1/N is flagged") {
  ModelParams p{1'000'000, 1e-6, 0.001, 0.0, 0.5, 3.0};
  const auto r = check_assumptions(p);
  bool flagged = false;
  for (const auto& w : r.warnings) flagged = flagged || w.find("mu <= 1/N") != std::string::npos;
  CHECK(flagged);
}

TEST_CASE("early window constant") {
  // delta = min(1/100, 1/95, 1e-3) = 1e-3 at T = 5, eps = 0.1
  CHECK(default_delta(5.0, 0.1) == doctest::Approx(1e-3));
  const double b = std::log(24000.0 * 5.0 / (1e-6 * 0.1));
  CHECK(default_early_window(5.0).offset == doctest::Approx(b).epsilon(1e-14));
  CHECK(b == doctest::Approx(27.8133).epsilon(1e-5));

  EarlyWindow w{1.0, 0.0};
  // s q = 0.02: length ln(50)/0.02
  CHECK(w.end(10.0, 0.01, 2.0) == doctest::Approx(10.0 + std::log(50.0) / 0.02));
  // s q > 1 makes the log negative; clipped at tau
  CHECK(w.end(10.0, 0.9, 2.0) == 10.0);
}

}
