#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "stm/errors.hpp"
#include "stm/transformer.hpp"

using namespace stm;
using healpix::Level;

namespace {

template <typename T>
BasicSignal<T> random_signal(Level lv, std::int64_t c, std::uint64_t seed, T lo = -1, T hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  BasicSignal<T> s(lv, c);
  for (auto& v : s.data) v = static_cast<T>(u(rng));
  return s;
}

template <typename T>
SphericalKernel<T> random_kernel(std::int64_t cin, std::int64_t cout, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  SphericalKernel<T> k(cin, cout);
  for (auto& v : k.weights) v = static_cast<T>(u(rng));
  for (auto& v : k.bias) v = static_cast<T>(u(rng));
  return k;
}

// Slot -> neighbor slot read straight from the HEALPix neighbor list.
constexpr int kSlotToDirection[9] = {2, 3, 4, 1, -1, 5, 0, 7, 6};

std::int32_t oracle_slot_pixel(Level lv, std::int64_t p, int slot) {
  if (slot == 4) return static_cast<std::int32_t>(p);
  return healpix::neighbors(lv, p)[static_cast<std::size_t>(kSlotToDirection[slot])];
}

}  // namespace

TEST_CASE("transformer grid") {
  const auto grid = TransformerGrid::get(Level(3));
  const auto row213 = grid->row(213);
  CHECK(std::count(row213.begin(), row213.end(), -1) == 1);
  CHECK(grid->missing_entries() == 24);
  for (std::int64_t p = 0; p < grid->n_pix(); ++p) {
    CHECK(grid->row(p)[4] == p);
    for (auto q : grid->row(p)) CHECK(q < grid->n_pix());
  }
  for (int l = 1; l <= 5; ++l) {
    const auto g = TransformerGrid::get(Level(l));
    std::int64_t rows_with_missing = 0;
    for (std::int64_t p = 0; p < g->n_pix(); ++p) {
      const auto r = g->row(p);
      const auto m = std::count(r.begin(), r.end(), -1);
      CHECK(m <= 1);
      rows_with_missing += m;
    }
    CHECK(rows_with_missing == 24);
  }
  // Two builds agree.
  const TransformerGrid again(*healpix::GridLevel::get(Level(3)));
  CHECK(std::equal(again.rows().begin(), again.rows().end(), grid->rows().begin()));
}

TEST_CASE("gather") {
  const Level lv(2);
  const auto grid = TransformerGrid::get(lv);

  SUBCASE("constant signal") {
    BasicSignal<float> s(lv, 3);
    std::fill(s.data.begin(), s.data.end(), 2.5f);
    const auto patches = gather(s, *grid);
    for (std::int64_t p = 0; p < s.n_pix(); ++p) {
      for (int slot = 0; slot < 9; ++slot) {
        const float expected = grid->row(p)[static_cast<std::size_t>(slot)] < 0 ? 0.0f : 2.5f;
        for (int c = 0; c < 3; ++c) CHECK(patches.at(slot / 3, 3 * p + slot % 3, c) == expected);
      }
    }
  }
  SUBCASE("center column reproduces the signal and the source is untouched") {
    const auto s = random_signal<float>(lv, 4, 1);
    const auto copy = s;
    const auto patches = gather(s, *grid);
    CHECK(s.data == copy.data);
    for (std::int64_t p = 0; p < s.n_pix(); ++p) {
      for (int c = 0; c < 4; ++c) CHECK(patches.at(1, 3 * p + 1, c) == s.at(p, c));
    }
  }
  SUBCASE("matches per-pixel neighbor reads") {
    const auto s = random_signal<double>(lv, 5, 2);
    const auto patches = gather(s, *grid);
    for (std::int64_t p = 0; p < s.n_pix(); ++p) {
      for (int slot = 0; slot < 9; ++slot) {
        const std::int32_t q = oracle_slot_pixel(lv, p, slot);
        for (int c = 0; c < 5; ++c) {
          const double expected = q < 0 ? 0.0 : s.at(q, c);
          REQUIRE(patches.at(slot / 3, 3 * p + slot % 3, c) == expected);
        }
      }
    }
  }
  SUBCASE("level mismatch") {
    const BasicSignal<float> s(Level(3), 1);
    CHECK_THROWS_AS(gather(s, *grid), ContractError);
  }
}

TEST_CASE("spherical_conv") {
  SUBCASE("768 pixels in, 768 pixels out") {
    const auto s = random_signal<float>(Level(3), 4, 3);
    const auto out = spherical_conv(s, random_kernel<float>(4, 7, 4));
    CHECK(out.level == Level(3));
    CHECK(out.n_pix() == 768);
    CHECK(out.channels == 7);
  }
  SUBCASE("center identity kernel is the identity, bit for bit") {
    const auto s = random_signal<double>(Level(2), 3, 5);
    SphericalKernel<double> k(3, 3);
    for (int c = 0; c < 3; ++c) k.w(4, c, c) = 1.0;
    CHECK(spherical_conv(s, k).data == s.data);
  }
  SUBCASE("matches the nine-term per-pixel sum") {
    const Level lv(2);
    const auto s = random_signal<double>(lv, 3, 6);
    const auto k = random_kernel<double>(3, 5, 7);
    const auto out = spherical_conv(s, k);
    double worst = 0;
    for (std::int64_t p = 0; p < s.n_pix(); ++p) {
      for (int co = 0; co < 5; ++co) {
        double acc = k.bias[static_cast<std::size_t>(co)];
        for (int slot = 0; slot < 9; ++slot) {
          const std::int32_t q = oracle_slot_pixel(lv, p, slot);
          if (q < 0) continue;
          for (int ci = 0; ci < 3; ++ci) {
            acc += k.weights[static_cast<std::size_t>((slot * 3 + ci) * 5 + co)] * s.at(q, ci);
          }
        }
        worst = std::max(worst, std::abs(out.at(p, co) - acc) / std::max(1.0, std::abs(acc)));
      }
    }
    CHECK(worst <= 1e-6);
  }
  SUBCASE("linear in signal and weights") {
    const Level lv(2);
    const auto x = random_signal<double>(lv, 2, 8);
    const auto y = random_signal<double>(lv, 2, 9);
    auto k1 = random_kernel<double>(2, 3, 10);
    auto k2 = random_kernel<double>(2, 3, 11);
    std::fill(k1.bias.begin(), k1.bias.end(), 0.0);
    std::fill(k2.bias.begin(), k2.bias.end(), 0.0);
    const double a = 0.7, b = -1.3;

    BasicSignal<double> mix(lv, 2);
    for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * x.data[i] + b * y.data[i];
    const auto lhs = spherical_conv(mix, k1);
    const auto cx = spherical_conv(x, k1);
    const auto cy = spherical_conv(y, k1);
    for (std::size_t i = 0; i < lhs.data.size(); ++i) {
      CHECK(std::abs(lhs.data[i] - (a * cx.data[i] + b * cy.data[i])) <= 1e-6);
    }

    SphericalKernel<double> kmix(2, 3);
    for (std::size_t i = 0; i < kmix.weights.size(); ++i) {
      kmix.weights[i] = a * k1.weights[i] + b * k2.weights[i];
    }
    const auto wl = spherical_conv(x, kmix);
    const auto w2 = spherical_conv(x, k2);
    for (std::size_t i = 0; i < wl.data.size(); ++i) {
      CHECK(std::abs(wl.data[i] - (a * cx.data[i] + b * w2.data[i])) <= 1e-6);
    }
  }
  SUBCASE("deterministic") {
    const auto s = random_signal<float>(Level(3), 6, 12);
    const auto k = random_kernel<float>(6, 6, 13);
    CHECK(spherical_conv(s, k).data == spherical_conv(s, k).data);
  }
  SUBCASE("errors") {
    const auto s = random_signal<float>(Level(1), 2, 14);
    CHECK_THROWS_AS(spherical_conv(s, random_kernel<float>(3, 2, 15)), ContractError);
    auto k = random_kernel<float>(2, 2, 16);
    k.weights[5] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(spherical_conv(s, k), NumericError);
  }
}

TEST_CASE("spherical_pool") {
  SUBCASE("768 -> 192 and per-parent maximum") {
    const auto s = random_signal<float>(Level(3), 3, 17);
    const auto r = spherical_pool(s);
    CHECK(r.signal.level == Level(2));
    CHECK(r.signal.n_pix() == 192);
    for (std::int64_t p = 0; p < 192; ++p) {
      for (int c = 0; c < 3; ++c) {
        float best = -std::numeric_limits<float>::infinity();
        int arg = -1;
        for (auto child : healpix::children(Level(2), p)) {
          if (s.at(child, c) > best) {
            best = s.at(child, c);
            arg = static_cast<int>(child - 4 * p);
          }
        }
        REQUIRE(r.signal.at(p, c) == best);
        REQUIRE(r.argmax[static_cast<std::size_t>(p * 3 + c)] == arg);
      }
    }
  }
  SUBCASE("constant stays constant; ties pick the first child") {
    BasicSignal<float> s(Level(2), 2);
    std::fill(s.data.begin(), s.data.end(), -0.25f);
    const auto r = spherical_pool(s);
    for (auto v : r.signal.data) CHECK(v == -0.25f);
    for (auto a : r.argmax) CHECK(a == 0);
  }
  SUBCASE("level 0") { CHECK_THROWS_AS(spherical_pool(BasicSignal<float>(Level(0), 1)), DomainError); }
}

TEST_CASE("spherical_unpool_conv") {
  SUBCASE("192 -> 768") {
    const auto s = random_signal<float>(Level(2), 3, 18);
    UnpoolKernel<float> k(3, 5);
    CHECK(spherical_unpool_conv(s, k).n_pix() == 768);
    CHECK(spherical_unpool_conv(s, k).channels == 5);
  }
  SUBCASE("identity weights copy the parent into each child; pooling recovers it") {
    const auto s = random_signal<double>(Level(2), 3, 19, 0.0, 2.0);
    UnpoolKernel<double> k(3, 3);
    for (int c = 0; c < 3; ++c) {
      for (int child = 0; child < 4; ++child) k.w(c, child, c) = 1.0;
    }
    const auto up = spherical_unpool_conv(s, k);
    for (std::int64_t p = 0; p < up.n_pix(); ++p) {
      for (int c = 0; c < 3; ++c) REQUIRE(up.at(p, c) == s.at(p / 4, c));
    }
    CHECK(spherical_pool(up).signal.data == s.data);
  }
  SUBCASE("child k uses weight slice k") {
    const auto s = random_signal<double>(Level(1), 2, 20);
    UnpoolKernel<double> k(2, 1);
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& v : k.weights) v = u(rng);
    k.bias[0] = 0.5;
    const auto up = spherical_unpool_conv(s, k);
    for (std::int64_t p = 0; p < s.n_pix(); ++p) {
      for (int child = 0; child < 4; ++child) {
        const double expected = 0.5 + k.w(0, child, 0) * s.at(p, 0) + k.w(1, child, 0) * s.at(p, 1);
        CHECK(up.at(4 * p + child, 0) == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
  SUBCASE("channel mismatch") {
    CHECK_THROWS_AS(spherical_unpool_conv(BasicSignal<float>(Level(1), 2), UnpoolKernel<float>(3, 1)),
                    ContractError);
  }
}

TEST_CASE("rotation equivariance about the polar axis") {
  const Level lv(2);
  const auto grid = TransformerGrid::get(lv);
  const auto x = random_signal<double>(lv, 3, 22);

  for (int q = 1; q < 4; ++q) {
    const auto perm = healpix::z_rotation_permutation(lv, q);
    const auto rx = permute_pixels(x, perm);

    SUBCASE("gather commutes with the permutation, slot for slot") {
      const auto a = gather(rx, *grid);
      const auto b = gather(x, *grid);
      for (std::int64_t p = 0; p < lv.n_pixels(); ++p) {
        const std::int64_t pp = perm[static_cast<std::size_t>(p)];
        for (int slot = 0; slot < 9; ++slot) {
          for (int c = 0; c < 3; ++c) {
            REQUIRE(a.at(slot / 3, 3 * pp + slot % 3, c) == b.at(slot / 3, 3 * p + slot % 3, c));
          }
        }
      }
    }
    SUBCASE("symmetric kernels and 1x1 kernels commute") {
      auto sym = random_kernel<double>(3, 4, 23);
      for (int slot = 1; slot < 9; ++slot) {
        for (int ci = 0; ci < 3; ++ci) {
          for (int co = 0; co < 4; ++co) sym.w(slot, ci, co) = sym.w(0, ci, co);
        }
      }
      auto center = random_kernel<double>(3, 4, 24);
      for (int slot = 0; slot < 9; ++slot) {
        if (slot == 4) continue;
        for (int ci = 0; ci < 3; ++ci) {
          for (int co = 0; co < 4; ++co) center.w(slot, ci, co) = 0.0;
        }
      }
      for (const auto* k : {&sym, &center}) {
        const auto lhs = spherical_conv(rx, *k);
        const auto rhs = permute_pixels(spherical_conv(x, *k), perm);
        for (std::size_t i = 0; i < lhs.data.size(); ++i) REQUIRE(std::abs(lhs.data[i] - rhs.data[i]) <= 1e-6);
      }
    }
    SUBCASE("pool commutes exactly") {
      const auto fine = random_signal<double>(Level(3), 2, 25);
      const auto pf = healpix::z_rotation_permutation(Level(3), q);
      const auto lhs = spherical_pool(permute_pixels(fine, pf)).signal;
      const auto rhs = permute_pixels(spherical_pool(fine).signal, perm);
      CHECK(lhs.data == rhs.data);
    }
  }
}

TEST_CASE("signal validation") {
  CHECK_THROWS_AS(SphericalSignal(Level(1), 2, std::vector<float>(10)), ContractError);
  std::vector<float> bad(48, 0.0f);
  bad[3] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(SphericalSignal(Level(1), 1, bad), NumericError);
}
