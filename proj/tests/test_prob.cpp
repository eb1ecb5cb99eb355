#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mmlab/prob.hpp"
#include "oracles.hpp"

using namespace mmlab;

TEST_CASE("distribution validation") {
  CHECK_THROWS_AS(Distribution({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(Distribution({-0.1, 1.1}), std::invalid_argument);
  CHECK_THROWS_AS(Distribution(Vec{}), std::invalid_argument);

  Distribution u = Distribution::uniform(4);
  CHECK(u.size() == 4);
  CHECK(u[2] == doctest::Approx(0.25).epsilon(1e-15));

  Distribution pm = Distribution::point_mass(3, 1);
  CHECK(pm[0] == 0.0);
  CHECK(pm[1] == 1.0);

  // A rounding-level negative entry is clamped instead of rejected.
  Distribution tiny({1.0 + 1e-13, -1e-13});
  CHECK(tiny[1] >= 0.0);
}

TEST_CASE("channel rows and output marginal") {
  Channel w = testkit::demo_channel();
  CHECK(w.input_size() == 2);
  CHECK(w.output_size() == 3);
  CHECK(w(1, 2) == doctest::Approx(0.8).epsilon(1e-15));

  Distribution py = w.output_marginal(Distribution::uniform(2));
  CHECK(py[0] == doctest::Approx(0.535).epsilon(1e-12));
  CHECK(py[1] == doctest::Approx(0.065).epsilon(1e-12));
  CHECK(py[2] == doctest::Approx(0.400).epsilon(1e-12));

  Mat bad(1, 2);
  bad(0, 0) = 0.7;
  bad(0, 1) = 0.7;
  CHECK_THROWS_AS(Channel{bad}, std::invalid_argument);
}

TEST_CASE("coupling shape checks and diagonal embedding") {
  Channel w = testkit::demo_channel();
  Coupling d = Coupling::diagonal(w);
  CHECK(d.input_size() == 2);
  CHECK(d.output_size() == 3);
  // Diagonal coupling reproduces the channel on both marginals.
  Channel my = marginal_y(d), mh = marginal_yhat(d);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(my(j, k) == doctest::Approx(w(j, k)).epsilon(1e-15));
      CHECK(mh(j, k) == doctest::Approx(w(j, k)).epsilon(1e-15));
    }
  CHECK(d.table(1)(2, 2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(d.table(1)(2, 1) == 0.0);

  Mat half(2, 2);
  half(0, 0) = 0.5;
  CHECK_THROWS_AS(Coupling({half}), std::invalid_argument);
}

TEST_CASE("published joint law has the expected marginals") {
  Coupling c = testkit::demo_coupling();
  Channel my = marginal_y(c), mh = marginal_yhat(c);

  double expect_y[2][3] = {{0.97, 0.03, 0.0}, {0.10, 0.0911, 0.8089}};
  double expect_h[2][3] = {{0.3778, 0.6222, 0.0}, {0.10, 0.2044, 0.6956}};
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(my(j, k) == doctest::Approx(expect_y[j][k]).epsilon(1e-12));
      CHECK(mh(j, k) == doctest::Approx(expect_h[j][k]).epsilon(1e-12));
    }

  // Y-marginal sits within 1e-2 of the true channel (the rounding gap of the
  // published table), not exactly on it.
  Channel w = testkit::demo_channel();
  double dev = 0.0;
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 3; ++k) dev = std::max(dev, std::abs(my(j, k) - w(j, k)));
  CHECK(dev <= 1e-2);
  CHECK(dev >= 1e-3);
}

TEST_CASE("entropy") {
  CHECK(entropy(Distribution::uniform(4)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(entropy(Distribution::point_mass(5, 2)) == doctest::Approx(0.0).epsilon(1e-15));
  double h01 = -(0.1 * std::log2(0.1) + 0.9 * std::log2(0.9));
  CHECK(entropy(Distribution({0.1, 0.9})) == doctest::Approx(h01).epsilon(1e-14));
}

TEST_CASE("mutual information") {
  // Product law carries no information.
  Mat rows(2, 2);
  rows(0, 0) = rows(1, 0) = 0.3;
  rows(0, 1) = rows(1, 1) = 0.7;
  CHECK(mutual_information(Distribution({0.4, 0.6}), Channel(rows)) ==
        doctest::Approx(0.0).epsilon(1e-14));

  // Noiseless channel: I = H(px).
  Mat id(2, 2);
  id(0, 0) = id(1, 1) = 1.0;
  Distribution px({0.3, 0.7});
  CHECK(mutual_information(px, Channel(id)) ==
        doctest::Approx(entropy(px)).epsilon(1e-14));

  // Cross-check through the entropy decomposition I = H(Y) - H(Y|X).
  Channel w = testkit::demo_channel();
  Distribution u = Distribution::uniform(2);
  double hy = entropy(w.output_marginal(u));
  double hyx = 0.5 * entropy(w.row(0)) + 0.5 * entropy(w.row(1));
  CHECK(mutual_information(u, w) == doctest::Approx(hy - hyx).epsilon(1e-12));
  CHECK(mutual_information(u, w) == doctest::Approx(0.709711556057).epsilon(1e-9));
}

TEST_CASE("conditional divergence") {
  Channel w = testkit::demo_channel();
  Distribution u = Distribution::uniform(2);
  CHECK(conditional_kl(w, w, u) == doctest::Approx(0.0).epsilon(1e-15));

  // Hand-computed single-row value: 0.3 log2(0.3/0.2) + 0.7 log2(0.7/0.8).
  Mat pa(1, 2), pb(1, 2);
  pa(0, 0) = 0.3; pa(0, 1) = 0.7;
  pb(0, 0) = 0.2; pb(0, 1) = 0.8;
  CHECK(conditional_kl(Channel(pa), Channel(pb), Distribution::point_mass(1, 0)) ==
        doctest::Approx(0.04063719565666967).epsilon(1e-12));

  // Support escape: mass where the reference has none diverges.
  Mat qa(1, 2), qb(1, 2);
  qa(0, 0) = 0.5; qa(0, 1) = 0.5;
  qb(0, 0) = 1.0; qb(0, 1) = 0.0;
  CHECK(conditional_kl(Channel(qa), Channel(qb), Distribution::point_mass(1, 0)) == kInf);

  // Zero rows of the outer distribution do not contribute, even if divergent.
  Mat two_a(2, 2), two_b(2, 2);
  two_a(0, 0) = 1.0; two_a(1, 0) = 0.5; two_a(1, 1) = 0.5;
  two_b(0, 0) = 1.0; two_b(1, 0) = 1.0;
  CHECK(conditional_kl(Channel(two_a), Channel(two_b), Distribution::point_mass(2, 0)) ==
        doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("capacity iteration certifies its gap") {
  Channel w = testkit::demo_channel();
  CapacityResult r = blahut_arimoto_capacity(w, 1e-10);
  CHECK(r.gap <= 1e-10);
  CHECK(r.bits == doctest::Approx(0.713288134784).epsilon(1e-8));
  CHECK(r.bits == doctest::Approx(0.7133).epsilon(1e-3));

  double mass = 0.0;
  for (double v : r.input.probs()) mass += v;
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.input[0] == doctest::Approx(0.539835535).epsilon(1e-6));

  // Capacity never exceeds the uniform-input information by more than the
  // optimization headroom, and never falls below it.
  CHECK(r.bits >= mutual_information(Distribution::uniform(2), w) - 1e-12);
}

TEST_CASE("capacity closed forms") {
  // Binary symmetric, crossover 0.1: C = 1 - h2(0.1).
  Mat bsc(2, 2);
  bsc(0, 0) = bsc(1, 1) = 0.9;
  bsc(0, 1) = bsc(1, 0) = 0.1;
  CHECK(blahut_arimoto_capacity(Channel(bsc), 1e-12).bits ==
        doctest::Approx(0.531004406410719).epsilon(1e-9));

  // Noiseless binary channel: 1 bit.
  Mat id(2, 2);
  id(0, 0) = id(1, 1) = 1.0;
  CHECK(blahut_arimoto_capacity(Channel(id), 1e-12).bits ==
        doctest::Approx(1.0).epsilon(1e-9));

  // Useless channel (identical rows): 0 bits.
  Mat flat(2, 2, 0.5);
  CHECK(blahut_arimoto_capacity(Channel(flat), 1e-12).bits ==
        doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("capacity of the published auxiliary marginal") {
  Coupling c = testkit::demo_coupling();
  CapacityResult r = blahut_arimoto_capacity(marginal_yhat(c), 1e-10);
  CHECK(r.bits == doctest::Approx(0.499911542551).epsilon(1e-8));
  CHECK(r.bits == doctest::Approx(0.4999).epsilon(1e-3));
}
