#include <doctest.h>

#include <sstream>

#include "stm/errors.hpp"
#include "stm/training.hpp"

using namespace stm;
using healpix::Level;

namespace {

const std::filesystem::path kDigits = std::filesystem::path(STM_FIXTURE_DIR) / "mnist64";

train::Dataset digits(bool train_split, std::size_t limit, Level level) {
  const auto images = io::parse_idx_images(
      io::read_file(kDigits / (train_split ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte")));
  const auto labels = io::parse_idx_labels(
      io::read_file(kDigits / (train_split ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte")));
  return train::project_mnist(images, labels, limit, level);
}

}  // namespace

TEST_CASE("datasets") {
  const auto d = digits(true, 10, Level(3));
  CHECK(d.size() == 10);
  CHECK(d.labels.size() == 10);
  CHECK(d.sample_values() == 768);
  CHECK(digits(false, 0, Level(2)).size() == 64);

  train::Dataset bad;
  bad.level = Level(1);
  CHECK_THROWS_AS(bad.add(std::vector<float>(47), std::vector<std::int32_t>{1}), ContractError);

  const auto seg = train::synthetic_segmentation(3, Level(3), 1, 4, 3, 9);
  CHECK(seg.size() == 3);
  CHECK(seg.labels.size() == 3 * 768);
  // Labels are the argmax of the first three channels.
  for (std::int64_t p = 0; p < 768; ++p) {
    const float* x = seg.signals.data() + p * 4;
    const auto y = seg.labels[static_cast<std::size_t>(p)];
    for (int c = 0; c < 3; ++c) CHECK(x[y] >= x[c]);
  }
  const auto again = train::synthetic_segmentation(3, Level(3), 1, 4, 3, 9);
  CHECK(again.signals == seg.signals);
  CHECK_THROWS_AS(train::synthetic_segmentation(1, Level(3), 4, 4, 3, 9), ConfigError);
}

TEST_CASE("fit is deterministic and learns") {
  const auto tr = digits(true, 32, Level(4));
  const auto spec = models::build_smnist({8, 8, 8, 8}, 4);
  train::TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.sgd.lr = 0.05;
  models::Model<float> a(spec, 5), b(spec, 5);
  const auto ha = train::fit(a, tr, &tr, cfg);
  const auto hb = train::fit(b, tr, &tr, cfg);
  REQUIRE(ha.size() == 8);
  for (std::size_t i = 0; i < ha.size(); ++i) {
    CHECK(ha[i].loss == hb[i].loss);
    CHECK(ha[i].accuracy == hb[i].accuracy);
  }
  CHECK(ha[6].loss < ha[0].loss);

  cfg.epochs = 0;
  CHECK_THROWS_AS(train::fit(a, tr, nullptr, cfg), ConfigError);
}

TEST_CASE("segmentation evaluation") {
  const auto data = train::synthetic_segmentation(2, Level(2), 1, 3, 3, 1);
  auto spec = models::build_unet_spherical(3, 2, 3, {4, 4});
  models::Model<float> m(spec, 1);
  const auto ev = train::evaluate(m, data, 2);
  CHECK(ev.predictions.size() == 2 * 192);
  CHECK(ev.accuracy >= 0.0);
  CHECK(ev.accuracy <= 1.0);
  CHECK(ev.miou >= 0.0);
  CHECK(ev.miou <= 1.0);
}

TEST_CASE("metrics csv") {
  std::ostringstream out;
  train::write_metrics_header(out, {"seed: 42"}, true);
  train::write_metrics_row(out, {3, "test", 0.5, 0.75, 0.25}, true);
  CHECK(out.str() == "# seed: 42\nepoch,split,loss,accuracy,miou\n3,test,0.500000,0.750000,0.250000\n");
}
