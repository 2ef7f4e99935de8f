#include <doctest.h>

#include <random>

#include "cemu/dag.hpp"
#include "cemu/delay.hpp"

using namespace cemu;

TEST_CASE("ring all-reduce closed form matches hand-computed values") {
  LinkParams zero;
  CHECK(ring_allreduce_delay_us(2, 0, zero) == 0.0);
  CHECK(ring_allreduce_delay_us(8, 123456, zero) == 0.0);

  LinkParams alpha_only{10.0, 0.0, 0.0};
  CHECK(ring_allreduce_delay_us(2, 0, alpha_only) == doctest::Approx(20.0));

  LinkParams link{10.0, 0.01, 0.001};
  CHECK(ring_allreduce_delay_us(4, 4096, link) ==
        doctest::Approx(124.512).epsilon(1e-12));
}

TEST_CASE("ring all-gather closed form matches hand-computed values") {
  LinkParams link{5.0, 0.02, 0.0};
  CHECK(ring_allgather_delay_us(4, 1024, link) ==
        doctest::Approx(76.44).epsilon(1e-12));
  LinkParams alpha_only{5.0, 0.0, 0.0};
  CHECK(ring_allgather_delay_us(2, 0, alpha_only) == doctest::Approx(5.0));
  CHECK(ring_allgather_delay_us(6, 999, LinkParams{}) == 0.0);
}

TEST_CASE("delay models are monotone in every parameter") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    const uint32_t n = 2 + rng() % 15;
    const uint64_t m = rng() % (1 << 24);
    LinkParams link{(rng() % 1000) / 10.0, (rng() % 1000) / 1e5,
                    (rng() % 1000) / 1e6};
    const double base = ring_allreduce_delay_us(n, m, link);
    CHECK(ring_allreduce_delay_us(n + 1, m, link) >= base);
    CHECK(ring_allreduce_delay_us(n, m + 4096, link) >= base);
    LinkParams more = link;
    more.alpha_us += 1;
    CHECK(ring_allreduce_delay_us(n, m, more) >= base);
    more = link;
    more.beta_us_per_byte += 1e-4;
    CHECK(ring_allreduce_delay_us(n, m, more) >= base);
    more = link;
    more.gamma_us_per_byte += 1e-4;
    CHECK(ring_allreduce_delay_us(n, m, more) >= base);
  }
}

TEST_CASE("closed forms agree with an independent per-step accumulation") {
  // Oracle route: walk the 2(n-1) ring steps explicitly in long double,
  // charging alpha per message, beta per chunk byte, gamma per reduced byte.
  std::mt19937_64 rng(22);
  for (int i = 0; i < 1000; ++i) {
    const uint32_t n = 2 + rng() % 15;
    const uint64_t m = rng() % (1ull << 30);
    LinkParams link{(rng() % 10000) / 13.0, (rng() % 10000) / 777777.0,
                    (rng() % 10000) / 3333333.0};

    long double acc = 0;
    const long double chunk = static_cast<long double>(m) / n;
    for (uint32_t s = 0; s < n - 1; ++s) {  // reduce-scatter steps
      acc += link.alpha_us + chunk * link.beta_us_per_byte +
             chunk * link.gamma_us_per_byte;
    }
    for (uint32_t t = 0; t < n - 1; ++t) {  // all-gather steps
      acc += link.alpha_us + chunk * link.beta_us_per_byte;
    }
    const double got = ring_allreduce_delay_us(n, m, link);
    CHECK(std::abs(got - static_cast<double>(acc)) <=
          1e-9 * std::max(1.0, std::abs(static_cast<double>(acc))));

    long double ag = 0;
    for (uint32_t t = 0; t < n - 1; ++t) {
      ag += link.alpha_us +
            static_cast<long double>(m) * link.beta_us_per_byte;
    }
    const double got_ag = ring_allgather_delay_us(n, m, link);
    CHECK(std::abs(got_ag - static_cast<double>(ag)) <=
          1e-9 * std::max(1.0, std::abs(static_cast<double>(ag))));
  }
}

TEST_CASE("release offsets per kind") {
  const CollectiveDag dag = build_ring_allreduce_dag(4, 4096, 0);
  const BoundaryDag b = project_boundary(dag, {0});
  REQUIRE(b.count(BoundaryDir::kToReal) == 6);

  DelayModelParams none;
  CHECK(release_offsets_us(b, none, 4096) ==
        std::vector<double>(6, 0.0));

  DelayModelParams fixed;
  fixed.kind = DelayKind::kFixed;
  fixed.fixed_us = 100;
  CHECK(release_offsets_us(b, fixed, 4096) ==
        std::vector<double>(6, 100.0));

  DelayModelParams ab;
  ab.kind = DelayKind::kAlphaBeta;
  ab.link = LinkParams{10.0, 0.01, 0.001};
  const double total = ring_allreduce_delay_us(4, 4096, ab.link);
  const auto offsets = release_offsets_us(b, ab, 4096);
  REQUIRE(offsets.size() == 6);
  for (size_t j = 0; j < 6; ++j) {
    CHECK(offsets[j] == doctest::Approx(total * (j + 1) / 6.0));
  }
  // monotone along the chain
  for (size_t j = 1; j < 6; ++j) CHECK(offsets[j] >= offsets[j - 1]);
}

TEST_CASE("injection stalls exactly the first reply") {
  const CollectiveDag dag = build_ring_allreduce_dag(2, 64, 0);
  const BoundaryDag b = project_boundary(dag, {0});
  DelayModelParams p;
  p.inject_us = 2500;
  const auto offsets = release_offsets_us(b, p, 64);
  REQUIRE(offsets.size() == 2);
  CHECK(offsets[0] == 2500.0);
  CHECK(offsets[1] == 0.0);

  DelayModelParams fixed = p;
  fixed.kind = DelayKind::kFixed;
  fixed.fixed_us = 10;
  const auto with_fixed = release_offsets_us(b, fixed, 64);
  CHECK(with_fixed[0] == 2510.0);
  CHECK(with_fixed[1] == 10.0);
}

TEST_CASE("unknown plugin kinds cannot be constructed from config text") {
  CHECK_THROWS_AS(parse_delay_kind("banana"), ConfigError);
  const DelayModelFn fn = make_delay_model(DelayModelParams{});
  const CollectiveDag dag = build_ring_allgather_dag(3, 99, 0);
  const BoundaryDag b = project_boundary(dag, {0});
  CHECK(fn(b, 99).size() == b.count(BoundaryDir::kToReal));
}
