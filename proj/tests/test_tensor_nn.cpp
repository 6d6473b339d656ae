#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "grad_check.hpp"
#include "stm/checkpoint.hpp"
#include "stm/errors.hpp"
#include "stm/ops.hpp"
#include "stm/optim.hpp"

using namespace stm;
using namespace stm::nn;
using stm::testing::check_gradients;
using stm::testing::project;
using stm::testing::random_tensor;

TEST_CASE("conv2d") {
  SUBCASE("stride 1x3 over a 3 x 3n patch image yields n outputs") {
    Tape<float> tape(false);
    const Tensor<float> x({1, 3, 3 * 768, 2});
    const Tensor<float> w({3, 3, 2, 5});
    const Tensor<float> b({5});
    const auto y = conv2d(tape, x, w, b, 1, 3);
    CHECK(y.shape() == Shape{1, 1, 768, 5});
  }
  SUBCASE("delta kernel picks the window centers") {
    Tape<double> tape(false);
    const auto x = random_tensor({2, 3, 9, 1}, 1, false);
    Tensor<double> w({3, 3, 1, 1});
    w.values()[4] = 1.0;
    const auto y = conv2d(tape, x, w, Tensor<double>(), 1, 3);
    for (int b = 0; b < 2; ++b) {
      for (int j = 0; j < 3; ++j) {
        CHECK(y.values()[static_cast<std::size_t>(b * 3 + j)] ==
              x.values()[static_cast<std::size_t>((b * 3 + 1) * 9 + 3 * j + 1)]);
      }
    }
  }
  SUBCASE("all-ones kernel sums each window") {
    // 3x6 image with values 1..18 (row-major); stride 1x3 -> two windows.
    std::vector<double> v(18);
    std::iota(v.begin(), v.end(), 1.0);
    Tape<double> tape(false);
    const Tensor<double> x({1, 3, 6, 1}, v);
    const Tensor<double> w({3, 3, 1, 1}, std::vector<double>(9, 1.0));
    const auto y = conv2d(tape, x, w, Tensor<double>(), 1, 3);
    // window 0: columns 0-2 -> (1+2+3)+(7+8+9)+(13+14+15) = 72; window 1: 99.
    CHECK(y.values() == std::vector<double>{72.0, 99.0});
    // stride 1: four windows 72, 81, 90, 99.
    const auto y1 = conv2d(tape, x, w, Tensor<double>(), 1, 1);
    CHECK(y1.values() == std::vector<double>{72.0, 81.0, 90.0, 99.0});
  }
  SUBCASE("linear in the input") {
    Tape<double> tape(false);
    const auto x = random_tensor({1, 5, 7, 3}, 2, false);
    const auto z = random_tensor({1, 5, 7, 3}, 3, false);
    const auto w = random_tensor({3, 3, 3, 4}, 4, false);
    Tensor<double> mix({1, 5, 7, 3});
    for (std::size_t i = 0; i < mix.values().size(); ++i) mix.values()[i] = 2.0 * x.values()[i] - 0.5 * z.values()[i];
    const auto lhs = conv2d(tape, mix, w, Tensor<double>(), 1, 2);
    const auto a = conv2d(tape, x, w, Tensor<double>(), 1, 2);
    const auto b = conv2d(tape, z, w, Tensor<double>(), 1, 2);
    for (std::size_t i = 0; i < lhs.values().size(); ++i) {
      CHECK(std::abs(lhs.values()[i] - (2.0 * a.values()[i] - 0.5 * b.values()[i])) <= 1e-6);
    }
  }
  SUBCASE("gradients") {
    auto x = random_tensor({2, 4, 7, 3}, 5);
    auto w = random_tensor({3, 3, 3, 2}, 6);
    auto b = random_tensor({2}, 7);
    const auto r = check_gradients([&](Tape<double>& t) { return project(t, conv2d(t, x, w, b, 1, 2)); },
                                   {x, w, b});
    CHECK(r.worst_relative <= 1e-4);
  }
  SUBCASE("shape errors") {
    Tape<float> tape(false);
    CHECK_THROWS_AS(conv2d(tape, Tensor<float>({1, 3, 8, 2}), Tensor<float>({3, 3, 2, 1}), Tensor<float>(), 1, 3),
                    ContractError);
    CHECK_THROWS_AS(conv2d(tape, Tensor<float>({1, 3, 9, 2}), Tensor<float>({3, 3, 3, 1}), Tensor<float>(), 1, 3),
                    ContractError);
    CHECK_THROWS_AS(conv2d(tape, Tensor<float>({1, 2, 9, 2}), Tensor<float>({3, 3, 2, 1}), Tensor<float>(), 1, 3),
                    ContractError);
  }
}

TEST_CASE("spherical conv through the tape") {
  const auto grid = TransformerGrid::get(healpix::Level(1));
  auto x = random_tensor({2, 48, 3}, 8);
  auto w = random_tensor({3, 3, 3, 4}, 9);
  auto b = random_tensor({4}, 10);
  Tape<double> tape(false);
  const auto y = spherical_conv(tape, x, *grid, w, b);
  CHECK(y.shape() == Shape{2, 48, 4});

  // Same numbers as the direct transformer API on each batch item.
  for (int item = 0; item < 2; ++item) {
    SphericalKernel<double> k(3, 4);
    k.weights = w.values();
    k.bias = b.values();
    BasicSignal<double> s(healpix::Level(1), 3,
                          std::vector<double>(x.values().begin() + item * 144, x.values().begin() + (item + 1) * 144));
    const auto direct = stm::spherical_conv(s, k);
    for (std::size_t i = 0; i < direct.data.size(); ++i) CHECK(direct.data[i] == y.values()[item * 192 + i]);
  }

  const auto r = check_gradients(
      [&](Tape<double>& t) { return project(t, nn::spherical_conv(t, x, *grid, w, b)); }, {x, w, b});
  CHECK(r.worst_relative <= 1e-4);
}

TEST_CASE("conv1x1 and linear") {
  SUBCASE("identity weights") {
    Tape<double> tape(false);
    const auto x = random_tensor({2, 12, 3}, 11, false);
    Tensor<double> w({3, 3});
    for (int i = 0; i < 3; ++i) w.values()[static_cast<std::size_t>(i * 4)] = 1.0;
    CHECK(conv1x1(tape, x, w, Tensor<double>({3})).values() == x.values());
  }
  SUBCASE("commutes with pixel permutations") {
    Tape<double> tape(false);
    const auto x = random_tensor({1, 48, 3}, 12, false);
    const auto w = random_tensor({3, 5}, 13, false);
    const auto b = random_tensor({5}, 14, false);
    const auto perm = healpix::z_rotation_permutation(healpix::Level(1), 1);
    Tensor<double> px({1, 48, 3});
    for (int p = 0; p < 48; ++p) {
      for (int c = 0; c < 3; ++c) px.values()[static_cast<std::size_t>(perm[p] * 3 + c)] = x.values()[static_cast<std::size_t>(p * 3 + c)];
    }
    const auto y = conv1x1(tape, x, w, b);
    const auto py = conv1x1(tape, px, w, b);
    for (int p = 0; p < 48; ++p) {
      for (int c = 0; c < 5; ++c) {
        CHECK(py.values()[static_cast<std::size_t>(perm[p] * 5 + c)] == y.values()[static_cast<std::size_t>(p * 5 + c)]);
      }
    }
  }
  SUBCASE("matches per-row matrix-vector products") {
    Tape<double> tape(false);
    const auto x = random_tensor({3, 7, 4}, 15, false);
    const auto w = random_tensor({4, 6}, 16, false);
    const auto b = random_tensor({6}, 17, false);
    const auto y = conv1x1(tape, x, w, b);
    for (int row = 0; row < 21; ++row) {
      for (int o = 0; o < 6; ++o) {
        double acc = b.values()[static_cast<std::size_t>(o)];
        for (int i = 0; i < 4; ++i) acc += x.values()[static_cast<std::size_t>(row * 4 + i)] * w.values()[static_cast<std::size_t>(i * 6 + o)];
        CHECK(std::abs(y.values()[static_cast<std::size_t>(row * 6 + o)] - acc) <= 1e-6);
      }
    }
  }
  SUBCASE("gradients") {
    auto x = random_tensor({2, 5, 3}, 18);
    auto w = random_tensor({3, 4}, 19);
    auto b = random_tensor({4}, 20);
    CHECK(check_gradients([&](Tape<double>& t) { return project(t, conv1x1(t, x, w, b)); }, {x, w, b})
              .worst_relative <= 1e-4);
  }
  SUBCASE("shape mismatch") {
    Tape<float> tape(false);
    CHECK_THROWS_AS(linear(tape, Tensor<float>({2, 3}), Tensor<float>({4, 2}), Tensor<float>()), ContractError);
  }
}

TEST_CASE("relu") {
  Tape<double> tape(false);
  const Tensor<double> x({3}, {-1.0, 0.0, 2.0});
  CHECK(relu(tape, x).values() == std::vector<double>{0.0, 0.0, 2.0});
  auto y = random_tensor({20}, 21);
  for (auto& v : y.values()) v += v > 0 ? 0.1 : -0.1;  // keep clear of the kink
  CHECK(check_gradients([&](Tape<double>& t) { return project(t, relu(t, y)); }, {y}).worst_relative <= 1e-4);
}

TEST_CASE("maxpool1x4") {
  auto x = random_tensor({2, 16, 3}, 22);
  SUBCASE("gradients") {
    CHECK(check_gradients([&](Tape<double>& t) { return project(t, maxpool1x4(t, x)); }, {x}).worst_relative <= 1e-4);
  }
  SUBCASE("routes each upstream gradient to exactly one child") {
    Tape<double> tape;
    std::vector<std::uint8_t> argmax;
    const auto y = maxpool1x4(tape, x, &argmax);
    const auto loss = project(tape, y);
    x.zero_grad();
    tape.backward(loss);
    const auto r = random_tensor({y.size(), 1}, 99, false);  // the projection's upstream gradient
    for (std::int64_t bp = 0; bp < 8; ++bp) {
      for (int c = 0; c < 3; ++c) {
        double routed = 0;
        int nonzero = 0;
        for (int child = 0; child < 4; ++child) {
          const double g = x.grad()[static_cast<std::size_t>((bp * 4 + child) * 3 + c)];
          routed += g;
          nonzero += g != 0.0;
          if (child == argmax[static_cast<std::size_t>(bp * 3 + c)]) CHECK(g != 0.0);
        }
        CHECK(nonzero == 1);
        CHECK(routed == r.values()[static_cast<std::size_t>(bp * 3 + c)]);
      }
    }
  }
  SUBCASE("pixel count must be a multiple of 4") {
    Tape<float> tape(false);
    CHECK_THROWS_AS(maxpool1x4(tape, Tensor<float>({1, 6, 1})), ContractError);
  }
}

TEST_CASE("unpool_conv") {
  auto x = random_tensor({2, 3, 2}, 23);
  auto w = random_tensor({2, 4, 3}, 24);
  auto b = random_tensor({3}, 25);
  Tape<double> tape(false);
  const auto y = unpool_conv(tape, x, w, b);
  CHECK(y.shape() == Shape{2, 12, 3});
  for (int bb = 0; bb < 2; ++bb) {
    for (int p = 0; p < 3; ++p) {
      for (int k = 0; k < 4; ++k) {
        for (int co = 0; co < 3; ++co) {
          double acc = b.values()[static_cast<std::size_t>(co)];
          for (int ci = 0; ci < 2; ++ci) {
            acc += x.values()[static_cast<std::size_t>((bb * 3 + p) * 2 + ci)] * w.values()[static_cast<std::size_t>((ci * 4 + k) * 3 + co)];
          }
          CHECK(std::abs(y.values()[static_cast<std::size_t>(((bb * 12) + 4 * p + k) * 3 + co)] - acc) <= 1e-12);
        }
      }
    }
  }
  CHECK(check_gradients([&](Tape<double>& t) { return project(t, unpool_conv(t, x, w, b)); }, {x, w, b})
            .worst_relative <= 1e-4);
}

TEST_CASE("batchnorm") {
  SUBCASE("training output is standardized per channel before the affine map") {
    Tape<double> tape(false);
    const auto x = random_tensor({4, 12, 3}, 26, false, -3.0, 5.0);
    const Tensor<double> gamma({3}, {1.0, 1.0, 1.0});
    const Tensor<double> beta({3});
    BatchNormState<double> st(3);
    const auto y = batchnorm(tape, x, gamma, beta, st, true);
    for (int c = 0; c < 3; ++c) {
      double mean = 0, var = 0;
      for (int r = 0; r < 48; ++r) mean += y.values()[static_cast<std::size_t>(r * 3 + c)];
      mean /= 48;
      for (int r = 0; r < 48; ++r) var += std::pow(y.values()[static_cast<std::size_t>(r * 3 + c)] - mean, 2);
      var /= 48;
      CHECK(std::abs(mean) <= 1e-5);
      CHECK(std::abs(var - 1.0) <= 1e-4);
    }
  }
  SUBCASE("running statistics and eval mode") {
    Tape<double> tape(false);
    const Tensor<double> x({4, 1}, {1.0, 2.0, 3.0, 4.0});
    const Tensor<double> gamma({1}, std::vector<double>{2.0});
    const Tensor<double> beta({1}, std::vector<double>{0.5});
    BatchNormState<double> st(1);
    batchnorm(tape, x, gamma, beta, st, true);
    CHECK(st.running_mean[0] == doctest::Approx(0.25));           // 0.9*0 + 0.1*2.5
    CHECK(st.running_var[0] == doctest::Approx(0.9 + 0.1 * 5.0 / 3.0));  // unbiased batch variance
    const auto y = batchnorm(tape, x, gamma, beta, st, false);
    const double inv = 1.0 / std::sqrt(st.running_var[0] + 1e-5);
    CHECK(y.values()[0] == doctest::Approx(2.0 * (1.0 - 0.25) * inv + 0.5));
  }
  SUBCASE("gradients in both modes") {
    auto x = random_tensor({3, 4, 2}, 27);
    auto g = random_tensor({2}, 28);
    auto b = random_tensor({2}, 29);
    for (bool training : {true, false}) {
      BatchNormState<double> st(2);
      st.running_mean = {0.1, -0.2};
      st.running_var = {0.7, 1.3};
      const auto r = check_gradients(
          [&](Tape<double>& t) {
            BatchNormState<double> local = st;  // keep running stats fixed across evaluations
            return project(t, batchnorm(t, x, g, b, local, training));
          },
          {x, g, b});
      CHECK(r.worst_relative <= 1e-4);
    }
  }
  SUBCASE("empty batch") {
    Tape<float> tape(false);
    BatchNormState<float> st(2);
    CHECK_THROWS_AS(batchnorm(tape, Tensor<float>({0, 2}), Tensor<float>({2}), Tensor<float>({2}), st, true),
                    ContractError);
  }
}

TEST_CASE("add, concat, reshape, global_average") {
  auto a = random_tensor({2, 3, 2}, 30);
  auto b = random_tensor({2, 3, 2}, 31);
  auto c = random_tensor({2, 3, 4}, 32);
  Tape<double> tape(false);
  const auto cat = concat(tape, a, c);
  CHECK(cat.shape() == Shape{2, 3, 6});
  CHECK(cat.values()[6] == a.values()[2]);
  CHECK(cat.values()[8] == c.values()[4]);
  const auto avg = global_average(tape, a);
  CHECK(avg.values()[1] == doctest::Approx((a.values()[1] + a.values()[3] + a.values()[5]) / 3));

  CHECK(check_gradients([&](Tape<double>& t) { return project(t, add(t, a, b)); }, {a, b}).worst_relative <= 1e-4);
  CHECK(check_gradients([&](Tape<double>& t) { return project(t, concat(t, a, c)); }, {a, c}).worst_relative <= 1e-4);
  CHECK(check_gradients([&](Tape<double>& t) { return project(t, global_average(t, c)); }, {c}).worst_relative <= 1e-4);
  CHECK_THROWS_AS(add(tape, a, c), ContractError);
  CHECK_THROWS_AS(reshape(tape, a, {5}), ContractError);
}

TEST_CASE("softmax cross-entropy") {
  SUBCASE("uniform logits give ln k") {
    Tape<double> tape(false);
    const Tensor<double> z({2, 7}, std::vector<double>(14, 0.3));
    const std::vector<std::int32_t> labels{2, 5};
    CHECK(std::abs(softmax_xent(tape, z, labels).item() - std::log(7.0)) <= 1e-6);
  }
  SUBCASE("ignored rows do not count") {
    Tape<double> tape(false);
    const Tensor<double> z({2, 2}, {0.0, 0.0, 10.0, -10.0});
    const std::vector<std::int32_t> labels{0, 255};
    CHECK(softmax_xent(tape, z, labels, 255).item() == doctest::Approx(std::log(2.0)));
    const std::vector<std::int32_t> all_ignored{255, 255};
    CHECK_THROWS_AS(softmax_xent(tape, z, all_ignored, 255), ContractError);
    const std::vector<std::int32_t> bad{0, 2};
    CHECK_THROWS_AS(softmax_xent(tape, z, bad), ContractError);
  }
  SUBCASE("gradients") {
    auto z = random_tensor({5, 4}, 33, true, -3, 3);
    const std::vector<std::int32_t> labels{0, 3, 255, 1, 1};
    CHECK(check_gradients([&](Tape<double>& t) { return softmax_xent(t, z, labels, 255); }, {z}).worst_relative <= 1e-4);
  }
}

TEST_CASE("backward") {
  SUBCASE("d(x.x)/dx = 2x") {
    auto x = random_tensor({10}, 34);
    Tape<double> tape;
    const auto l = sum_squares(tape, x);
    tape.backward(l);
    for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(x.grad()[i] - 2 * x.values()[i]) <= 1e-6);
    CHECK(tape.visited() == 1);
  }
  SUBCASE("zero weights upstream give zero gradients") {
    auto x = random_tensor({2, 3}, 35);
    Tensor<double> w({3, 2}, true);
    Tape<double> tape;
    const auto l = project(tape, linear(tape, x, w, Tensor<double>()));
    tape.backward(l);
    for (double g : x.grad()) CHECK(g == 0.0);
  }
  SUBCASE("second call without a new forward pass") {
    auto x = random_tensor({3}, 36);
    Tape<double> tape;
    const auto l = sum_squares(tape, x);
    tape.backward(l);
    CHECK_THROWS_AS(tape.backward(l), ContractError);
  }
  SUBCASE("detached tensors") {
    Tape<double> tape;
    Tape<double> other;
    auto x = random_tensor({3}, 37);
    const auto l = sum_squares(other, x);
    CHECK_THROWS_AS(tape.backward(l), ContractError);
    CHECK_THROWS_AS(tape.backward(random_tensor({1}, 38)), ContractError);
    Tape<double> eval(false);
    const auto le = sum_squares(eval, x);
    CHECK_THROWS_AS(eval.backward(le), ContractError);
  }
  SUBCASE("forward is deterministic") {
    const auto grid = TransformerGrid::get(healpix::Level(3));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-1, 1);
    auto rnd = [&](Shape s) {
      std::vector<float> v(static_cast<std::size_t>(numel(s)));
      for (auto& e : v) e = u(rng);
      return Tensor<float>(s, v, true);
    };
    auto x = rnd({4, 768, 8});
    auto w = rnd({3, 3, 8, 16});
    auto b = rnd({16});
    auto run = [&] {
      w.zero_grad();
      Tape<float> tape;
      auto y = relu(tape, nn::spherical_conv(tape, x, *grid, w, b));
      auto l = sum_squares(tape, maxpool1x4(tape, y));
      tape.backward(l);
      return std::pair{l.item(), std::vector<float>(w.grad().begin(), w.grad().end())};
    };
    CHECK(run() == run());
  }
}

TEST_CASE("sgd") {
  SUBCASE("lr 0 leaves parameters alone") {
    auto w = random_tensor({4}, 39);
    const auto before = w.values();
    for (auto& g : w.grad()) g = 1.0;
    Sgd<double> opt({w}, {0.0, 0.9, 1e-4});
    opt.step();
    CHECK(w.values() == before);
  }
  SUBCASE("one step on w^2/2") {
    Tensor<double> w({1}, {1.0}, true);
    Sgd<double> opt({w}, {0.1, 0.0, 0.0});
    w.grad()[0] = w.values()[0];
    opt.step();
    CHECK(w.values()[0] == doctest::Approx(0.9).epsilon(1e-15));
  }
  SUBCASE("converges on a 2D quadratic") {
    // f(w) = 1/2 (3 w0^2 + w1^2) - w0 + 2 w1, optimum (1/3, -2).
    Tensor<double> w({2}, {4.0, 5.0}, true);
    Sgd<double> opt({w}, {0.1, 0.5, 0.0});
    for (int i = 0; i < 200; ++i) {
      opt.zero_grad();
      w.grad()[0] = 3 * w.values()[0] - 1;
      w.grad()[1] = w.values()[1] + 2;
      opt.step();
    }
    CHECK(std::hypot(w.values()[0] - 1.0 / 3.0, w.values()[1] + 2.0) < 1e-6);
  }
  SUBCASE("non-finite gradient") {
    Tensor<double> w({2}, {1.0, 1.0}, true);
    w.grad()[1] = std::numeric_limits<double>::quiet_NaN();
    Sgd<double> opt({w}, {});
    CHECK_THROWS_AS(opt.step(), NumericError);
    CHECK(w.values() == std::vector<double>{1.0, 1.0});
  }
}

TEST_CASE("checkpoint format") {
  std::vector<NamedArray> arrays{{"conv0.weight", {3, 3, 1, 2}, {}}, {"bn0.running_var", {2}, {1.5f, -0.0f}}};
  arrays[0].data.resize(18);
  for (std::size_t i = 0; i < 18; ++i) arrays[0].data[i] = std::ldexp(static_cast<float>(i) - 7.3f, -static_cast<int>(i));
  std::stringstream ss;
  write_checkpoint(ss, arrays);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "STMW");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 2);

  std::stringstream in(bytes);
  const auto back = read_checkpoint(in);
  REQUIRE(back.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(back[k].name == arrays[k].name);
    CHECK(back[k].shape == arrays[k].shape);
    CHECK(std::memcmp(back[k].data.data(), arrays[k].data.data(), arrays[k].data.size() * 4) == 0);
  }

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(truncated), ParseError);
  std::stringstream trailing(bytes + "x");
  CHECK_THROWS_AS(read_checkpoint(trailing), ParseError);
  std::stringstream bad("STMX" + bytes.substr(4));
  CHECK_THROWS_AS(read_checkpoint(bad), ParseError);
}
