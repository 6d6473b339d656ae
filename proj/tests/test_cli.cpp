#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stm/formats.hpp"

namespace fs = std::filesystem;
using namespace stm;

namespace {

const fs::path kFixtures = fs::path(STM_FIXTURE_DIR);

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(STM_CLI_PATH) + " --threads 1 " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// Value of a "key value" line in command output.
std::string field(const std::string& out, const std::string& key) {
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  }
  return {};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("stm_cli_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(run("").code == 1);
  CHECK(run("grid").code == 1);
  CHECK(run("grid info --bogus").code == 1);
  CHECK(run("grid info --help").code == 0);
}

TEST_CASE("grid") {
  const auto info = run("grid info --level 3");
  CHECK(info.code == 0);
  CHECK(field(info.out, "pixels") == "768");
  CHECK(field(info.out, "incomplete neighbor rows") == "24");

  const auto nb = run("--level 3 grid neighbors --pix 213");
  CHECK(nb.code == 0);
  int missing = 0;
  for (const char* k : {"SW", "W", "NW", "N", "NE", "E", "SE", "S"}) missing += field(nb.out, k) == "-1";
  CHECK(missing == 1);
  CHECK(run("grid neighbors --level 1 --pix 48").code == 2);

  const auto dump = run("grid dump --level 0");
  CHECK(dump.code == 0);
  CHECK(dump.out.rfind("pix,x,y,z,base,sw,w,nw,n,ne,e,se,s\n", 0) == 0);
  CHECK(std::count(dump.out.begin(), dump.out.end(), '\n') == 13);
}

TEST_CASE("project") {
  TempDir tmp("project");
  const auto cube = (kFixtures / "formats" / "cube_quads.off").string();

  SUBCASE("single mesh, digit and gather") {
    REQUIRE(run("project depth --mesh " + cube + " --level 2 --out " + tmp / "d.sphs").code == 0);
    const auto d = io::load_sphs(tmp / "d.sphs");
    CHECK(d.channels == 6);
    CHECK(d.level.value() == 2);

    REQUIRE(run("project render --mesh " + cube + " --level 2 --res 32 --out " + tmp / "r.sphs" + " --dump-views " +
                tmp / "views")
                .code == 0);
    CHECK(io::load_sphs(tmp / "r.sphs").channels == 1);
    CHECK(io::read_pnm(tmp / "views/view_11.pgm").width == 32);
    CHECK(run("project render --mesh " + cube + " --level 2 --res 8 --out " + tmp / "x.sphs").code == 1);

    const auto idx = (kFixtures / "mnist64" / "t10k-images-idx3-ubyte").string();
    REQUIRE(run("project digit --idx " + idx + " --index 5 --level 3 --out " + tmp / "g.sphs").code == 0);
    CHECK(io::load_sphs(tmp / "g.sphs").values.size() == 768);
    CHECK(run("project digit --idx " + idx + " --index 64 --level 3 --out " + tmp / "g.sphs").code == 2);

    REQUIRE(run("stm gather --in " + tmp / "d.sphs" + " --out " + tmp / "p.npy").code == 0);
    const auto npy = io::read_file(tmp / "p.npy");
    CHECK(npy.size() % 64 == (3 * 3 * 192 * 6 * 4) % 64);
    CHECK(std::string(npy.begin() + 1, npy.begin() + 6) == "NUMPY");
  }

  SUBCASE("equirect") {
    io::Image labels{8, 4, 1, {}};
    for (int i = 0; i < 32; ++i) labels.data.push_back(static_cast<std::uint8_t>(i % 3));
    io::write_pnm(tmp / "l.pgm", labels);
    REQUIRE(run("project equirect --img " + tmp / "l.pgm" + " --level 1 --mode nearest --out " + tmp / "l.sphs")
                .code == 0);
    const auto f = io::load_sphs(tmp / "l.sphs");
    CHECK(f.dtype == io::SphsType::U8);
    for (const auto v : f.labels) CHECK(v < 3);
    CHECK(run("project equirect --img " + tmp / "l.pgm" + " --mode cubic --out " + tmp / "x.sphs").code == 1);
  }

  SUBCASE("batch") {
    const auto meshes = tmp / "meshes";
    fs::create_directories(meshes);
    for (const char* name : {"tetra.off", "cube_quads.off", "cube_glued.off"}) {
      fs::copy_file(kFixtures / "formats" / name, fs::path(meshes) / name);
    }
    const auto out = run("project batch --mesh-dir " + meshes + " --level 2 --kind depth --out-dir " + tmp / "out");
    CHECK(out.code == 0);
    int files = 0;
    for (const auto& e : fs::directory_iterator(tmp / "out")) {
      ++files;
      CHECK(io::load_sphs(e.path()).channels == 6);
    }
    CHECK(files == 3);

    // Already produced outputs are skipped unless forced.
    CHECK(run("project batch --mesh-dir " + meshes + " --level 2 --out-dir " + tmp / "out").out.find("3 skipped") !=
          std::string::npos);
    CHECK(run("project batch --mesh-dir " + meshes + " --level 2 --out-dir " + tmp / "out" + " --force")
              .out.find("3 written") != std::string::npos);

    const auto both = run("project batch --mesh-dir " + meshes + " --level 2 --kind both --res 16 --out-dir " +
                          tmp / "both");
    CHECK(both.code == 0);
    CHECK(io::load_sphs(tmp / "both/tetra.sphs").channels == 7);

    fs::create_directories(tmp / "empty");
    const auto empty = run("project batch --mesh-dir " + tmp / "empty" + " --level 2 --out-dir " + tmp / "none");
    CHECK(empty.code == 0);
    CHECK(fs::is_empty(tmp / "none"));

    std::ofstream(fs::path(meshes) / "broken.off") << "OFF\n4 1 0\n0 0 0\n1 0 0\n";
    const auto partial =
        run("project batch --mesh-dir " + meshes + " --level 2 --out-dir " + tmp / "partial");
    CHECK(partial.code == 2);
    CHECK(partial.out.find("3 written, 0 skipped, 1 failed") != std::string::npos);

    CHECK(run("project batch --mesh-dir " + meshes + " --kind shaded --out-dir " + tmp / "x").code == 1);
  }
}

TEST_CASE("eval seg") {
  TempDir tmp("seg");
  fs::create_directories(tmp / "labels");
  fs::create_directories(tmp / "pred");
  const healpix::Level level(0);
  // Half the pixels are class 0, half class 1; the prediction says 0 everywhere.
  const std::vector<std::uint8_t> truth{0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  const std::vector<std::uint8_t> zeros(12, 0);
  io::save_sphs_labels(tmp / "labels/a.sphs", level, truth);

  io::save_sphs_labels(tmp / "pred/a.sphs", level, truth);
  auto r = run("eval seg --labels " + tmp / "labels" + " --predictions " + tmp / "pred" + " --classes 2");
  CHECK(r.code == 0);
  CHECK(field(r.out, "miou") == "1.000000");
  CHECK(field(r.out, "pixel accuracy") == "1.000000");

  io::save_sphs_labels(tmp / "pred/a.sphs", level, zeros);
  r = run("eval seg --labels " + tmp / "labels" + " --predictions " + tmp / "pred" + " --classes 2 --csv " +
          tmp / "iou.csv");
  CHECK(r.code == 0);
  CHECK(field(r.out, "pixel accuracy") == "0.500000");
  CHECK(field(r.out, "miou") == "0.250000");
  CHECK(slurp(tmp / "iou.csv").rfind("class,iou\n0,0.500000\n1,0.000000\n", 0) == 0);

  io::save_sphs_labels(tmp / "pred/b.sphs", level, zeros);
  CHECK(run("eval seg --labels " + tmp / "labels" + " --predictions " + tmp / "pred" + " --classes 2").code == 2);
  CHECK(run("eval seg --labels " + tmp / "labels" + " --classes 2").code == 1);
}

TEST_CASE("bench gather") {
  CHECK(run("bench gather --level 2 --iterations 0").code == 1);
  const auto a = run("bench gather --level 3 --channels 8 --iterations 3");
  const auto b = run("bench gather --level 3 --channels 16 --iterations 3");
  const auto c = run("bench gather --level 3 --channels 8 --iterations 3");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(std::stoll(field(b.out, "bytes moved")) == 2 * std::stoll(field(a.out, "bytes moved")));
  CHECK(field(a.out, "checksum") == field(c.out, "checksum"));
  CHECK(std::stod(field(a.out, "pixels per second")) > 0.0);
}

TEST_CASE("train smnist on 64 digits") {
  TempDir tmp("train");
  const std::string data = (kFixtures / "mnist64").string();
  const std::string common = "train smnist --level 4 --data-dir " + data + " --limit-train 64 --limit-test 64 --epochs 30 --batch-size 16 --lr 0.05";
  const auto first = run(common + " --out-dir " + tmp / "a");
  REQUIRE(first.code == 0);
  const auto second = run(common + " --out-dir " + tmp / "b");
  REQUIRE(second.code == 0);
  const auto csv = slurp(tmp / "a/metrics.csv");
  CHECK(csv == slurp(tmp / "b/metrics.csv"));

  std::istringstream in(csv);
  std::string line;
  std::vector<double> train_loss;
  double last_train_acc = 0.0;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') {
      CHECK_FALSE(header);  // provenance comes first
      continue;
    }
    if (!header) {
      CHECK(line == "epoch,split,loss,accuracy");
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string epoch, split, loss, acc;
    std::getline(row, epoch, ',');
    std::getline(row, split, ',');
    std::getline(row, loss, ',');
    std::getline(row, acc, ',');
    if (split == "train") {
      train_loss.push_back(std::stod(loss));
      last_train_acc = std::stod(acc);
    }
  }
  REQUIRE(train_loss.size() == 30);
  for (int e = 1; e < 5; ++e) CHECK(train_loss[static_cast<std::size_t>(e)] < train_loss[static_cast<std::size_t>(e - 1)]);
  CHECK(last_train_acc >= 0.95);

  const auto ev = run("eval cls --level 4 --data-dir " + data + " --checkpoint " + tmp / "a/model.ckpt" +
                      " --model-config " + tmp / "a/model.cfg");
  CHECK(ev.code == 0);
  CHECK(field(ev.out, "samples") == "64");

  CHECK(run("train smnist --data-dir " + tmp / "missing" + " --out-dir " + tmp / "c").code == 2);
  CHECK(run("train smnist --data-dir " + data + " --lr 1e6 --epochs 3 --limit-train 64 --limit-test 8 --out-dir " +
            tmp / "d")
            .code == 3);
}
