// stm: grid inspection, projection, training, evaluation and benchmarks.
//
// Exit codes: 0 success, 1 usage or configuration, 2 data error, 3 numeric failure.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#ifdef STM_HAVE_OPENMP
#include <omp.h>
#endif

#include "stm/bench.hpp"
#include "stm/checkpoint.hpp"
#include "stm/errors.hpp"
#include "stm/formats.hpp"
#include "stm/metrics.hpp"
#include "stm/models.hpp"
#include "stm/projection.hpp"
#include "stm/training.hpp"
#include "stm/transformer.hpp"

namespace fs = std::filesystem;
using namespace stm;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Globals {
  std::uint64_t seed = 42;
  int threads = 0;
  std::optional<int> level;

  healpix::Level level_or(int fallback) const { return healpix::Level(level.value_or(fallback)); }
};

SphericalSignal to_f32(const SphericalSignal64& s) {
  std::vector<float> v(s.data.begin(), s.data.end());
  return SphericalSignal(s.level, s.channels, std::move(v));
}

TriMesh load_normalized(const fs::path& path) { return normalize_mesh(io::load_off(path).mesh); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// NumPy .npy, version 1.0, little-endian float32.
void write_npy(const fs::path& path, const std::vector<float>& data, const std::vector<std::int64_t>& shape) {
  std::string dims;
  for (const auto d : shape) dims += std::to_string(d) + ", ";
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
  const std::size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_le[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_le, 2);
  out << header;
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
}

io::Image gray_image(const std::vector<double>& gray, int size) {
  io::Image img{size, size, 1, std::vector<std::uint8_t>(gray.size())};
  for (std::size_t i = 0; i < gray.size(); ++i) {
    img.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(gray[i], 0.0, 1.0) * 255.0));
  }
  return img;
}

models::ModelSpec model_spec_or_default(const std::string& config, healpix::Level level) {
  if (!config.empty()) return models::load_model_config(config);
  return models::build_smnist({16, 24, 32, 48}, level.value());
}

// ---------------------------------------------------------------------------------------------
// grid

int grid_info(const Globals& g) {
  const auto level = g.level_or(3);
  const auto grid = healpix::GridLevel::get(level);
  const auto tg = TransformerGrid::get(level);
  std::printf("level %d\nnside %d\npixels %lld\nincomplete neighbor rows %lld\ntransformer missing entries %lld\n",
              level.value(), level.nside(), static_cast<long long>(grid->n_pix()),
              static_cast<long long>(grid->count_incomplete_rows()), static_cast<long long>(tg->missing_entries()));
  return kOk;
}

int grid_neighbors(const Globals& g, std::int64_t pix) {
  const auto level = g.level_or(3);
  const auto nb = healpix::neighbors(level, pix);
  static const char* names[] = {"SW", "W", "NW", "N", "NE", "E", "SE", "S"};
  for (int k = 0; k < healpix::kNeighborSlots; ++k) std::printf("%s %d\n", names[k], nb[static_cast<std::size_t>(k)]);
  return kOk;
}

int grid_dump(const Globals& g, const std::string& out_path) {
  const auto level = g.level_or(3);
  const auto grid = healpix::GridLevel::get(level);
  std::ostringstream out;
  out << "pix,x,y,z,base,sw,w,nw,n,ne,e,se,s\n";
  char buf[128];
  for (std::int64_t p = 0; p < grid->n_pix(); ++p) {
    const auto& c = grid->center(p);
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%d", static_cast<long long>(p), c.x, c.y, c.z,
                  grid->base_region(p));
    out << buf;
    for (const auto q : grid->neighbors(p)) out << ',' << q;
    out << '\n';
  }
  if (out_path.empty() || out_path == "-") {
    std::cout << out.str();
  } else {
    write_text(out_path, out.str());
  }
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// project

struct RenderFlags {
  int resolution = 128;
  double distance = 3.0;
  double fov = 40.0;

  projection::RenderConfig config() const { return {resolution, distance, fov}; }
};

SphericalSignal project_mesh(const TriMesh& mesh, healpix::Level level, const std::string& kind,
                             const RenderFlags& rf, const std::string& dump_views) {
  if (kind == "depth") return to_f32(projection::depth_channels(mesh, level));
  const auto set = projection::render_views(mesh, rf.config());
  if (!dump_views.empty()) {
    fs::create_directories(dump_views);
    for (std::size_t r = 0; r < set.views.size(); ++r) {
      char name[32];
      std::snprintf(name, sizeof name, "view_%02zu.pgm", r);
      io::write_pnm(fs::path(dump_views) / name, gray_image(set.views[r].gray, set.resolution));
    }
  }
  const auto gray = projection::render_projection(mesh, level, set);
  if (kind == "render") return to_f32(gray);
  const auto depth = projection::depth_channels(mesh, level);
  SphericalSignal out(level, 7);
  for (std::int64_t p = 0; p < out.n_pix(); ++p) {
    for (int c = 0; c < 6; ++c) out.at(p, c) = static_cast<float>(depth.at(p, c));
    out.at(p, 6) = static_cast<float>(gray.at(p, 0));
  }
  return out;
}

int project_single(const Globals& g, const std::string& kind, const std::string& mesh_path,
                   const std::string& out, const RenderFlags& rf, const std::string& dump_views) {
  const auto level = g.level_or(5);
  const auto mesh = load_normalized(mesh_path);
  const auto signal = project_mesh(mesh, level, kind, rf, dump_views);
  io::save_sphs(out, signal);
  std::printf("wrote %s: level %d, %lld channels\n", out.c_str(), level.value(),
              static_cast<long long>(signal.channels));
  return kOk;
}

int project_equirect(const Globals& g, const std::string& img_path, const std::string& mode_name,
                     const std::string& out) {
  const auto level = g.level_or(5);
  const auto mode = projection::parse_interpolation(mode_name);
  const auto pnm = io::read_pnm(img_path);
  const bool labels = mode == projection::Interpolation::Nearest && pnm.channels == 1;
  projection::EquirectImage img{pnm.width, pnm.height, pnm.channels, {}};
  img.data.reserve(pnm.data.size());
  for (const auto v : pnm.data) img.data.push_back(labels ? v : v / 255.0);
  const auto s = projection::equirect_resample(img, level, mode);
  if (labels) {
    std::vector<std::uint8_t> l(s.data.size());
    std::transform(s.data.begin(), s.data.end(), l.begin(), [](double v) { return static_cast<std::uint8_t>(v); });
    io::save_sphs_labels(out, level, l);
    std::printf("wrote %s: level %d, labels\n", out.c_str(), level.value());
  } else {
    io::save_sphs(out, to_f32(s));
    std::printf("wrote %s: level %d, %d channels\n", out.c_str(), level.value(), pnm.channels);
  }
  return kOk;
}

int project_digit(const Globals& g, const std::string& idx_path, std::size_t index, const std::string& out) {
  const auto level = g.level_or(4);
  const auto images = io::parse_idx_images(io::read_file(idx_path));
  if (index >= images.count) {
    throw IndexError("image " + std::to_string(index) + " of " + std::to_string(images.count));
  }
  if (images.rows != 28 || images.cols != 28) throw ContractError("digit images must be 28 x 28");
  io::save_sphs(out, to_f32(projection::project_digit(images.image(index), level)));
  std::printf("wrote %s: level %d\n", out.c_str(), level.value());
  return kOk;
}

int project_batch(const Globals& g, const std::string& mesh_dir, const std::string& kind, const std::string& out_dir,
                  bool force, const RenderFlags& rf) {
  const auto level = g.level_or(5);
  if (kind != "depth" && kind != "render" && kind != "both") {
    throw ConfigError("unknown projection kind '" + kind + "' (depth, render or both)");
  }
  if (!fs::is_directory(mesh_dir)) throw std::runtime_error("not a directory: " + mesh_dir);
  std::vector<fs::path> meshes;
  for (const auto& e : fs::directory_iterator(mesh_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".off") meshes.push_back(e.path());
  }
  std::sort(meshes.begin(), meshes.end());
  fs::create_directories(out_dir);
  int written = 0, skipped = 0, failed = 0;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    const auto target = fs::path(out_dir) / (meshes[i].stem().string() + ".sphs");
    if (!force && fs::exists(target)) {
      ++skipped;
      continue;
    }
    try {
      io::save_sphs(target, project_mesh(load_normalized(meshes[i]), level, kind, rf, ""));
      ++written;
      std::fprintf(stderr, "[%zu/%zu] %s\n", i + 1, meshes.size(), meshes[i].filename().c_str());
    } catch (const std::exception& e) {
      ++failed;
      std::fprintf(stderr, "[%zu/%zu] FAILED %s: %s\n", i + 1, meshes.size(), meshes[i].filename().c_str(), e.what());
    }
  }
  std::printf("%d written, %d skipped, %d failed\n", written, skipped, failed);
  return failed > 0 ? kData : kOk;
}

// ---------------------------------------------------------------------------------------------
// stm gather

int stm_gather(const std::string& in, const std::string& out) {
  const auto signal = io::load_sphs(in).signal();
  const auto patches = gather(signal, *TransformerGrid::get(signal.level));
  write_npy(out, patches.data, {3, patches.width(), patches.channels});
  std::printf("wrote %s: 3 x %lld x %lld\n", out.c_str(), static_cast<long long>(patches.width()),
              static_cast<long long>(patches.channels));
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// train / eval

struct MnistPaths {
  std::string dir = "data/mnist";
  fs::path images(bool train) const {
    return fs::path(dir) / (train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte");
  }
  fs::path labels(bool train) const {
    return fs::path(dir) / (train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte");
  }
};

train::Dataset load_mnist(const MnistPaths& paths, bool train_split, std::size_t limit, healpix::Level level) {
  const auto images = io::parse_idx_images(io::read_file(paths.images(train_split)));
  const auto labels = io::parse_idx_labels(io::read_file(paths.labels(train_split)));
  return train::project_mnist(images, labels, limit, level);
}

struct TrainFlags {
  MnistPaths data;
  std::size_t limit_train = 6000;
  std::size_t limit_test = 1000;
  int epochs = 5;
  int batch_size = 32;
  double lr = 0.01, momentum = 0.9, weight_decay = 1e-4;
  std::string model_config;
  std::string out_dir = "runs/smnist";
};

int train_smnist(const Globals& g, const TrainFlags& f) {
  const auto level = g.level_or(4);
  auto spec = model_spec_or_default(f.model_config, level);
  if (spec.entry_level != level.value()) {
    throw ConfigError("model config is for level " + std::to_string(spec.entry_level) + ", data for level " +
                      std::to_string(level.value()));
  }
  const auto tr = load_mnist(f.data, true, f.limit_train, level);
  const auto te = load_mnist(f.data, false, f.limit_test, level);
  models::Model<float> model(spec, g.seed);
  train::TrainConfig cfg;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch_size;
  cfg.sgd = {f.lr, f.momentum, f.weight_decay};
  cfg.seed = g.seed;

  fs::create_directories(f.out_dir);
  std::ofstream csv(fs::path(f.out_dir) / "metrics.csv");
  if (!csv) throw std::runtime_error("cannot write metrics to " + f.out_dir);
  char opt[160];
  std::snprintf(opt, sizeof opt, "optimizer: sgd lr=%g momentum=%g weight_decay=%g batch_size=%d epochs=%d", f.lr,
                f.momentum, f.weight_decay, f.batch_size, f.epochs);
  train::write_metrics_header(csv,
                              {"command: train smnist", "seed: " + std::to_string(g.seed),
                               "level: " + std::to_string(level.value()), opt,
                               "train samples: " + std::to_string(tr.size()),
                               "test samples: " + std::to_string(te.size()),
                               "parameters: " + std::to_string(models::count_params(spec))},
                              false);
  std::printf("parameters %lld, train %lld, test %lld\n", static_cast<long long>(models::count_params(spec)),
              static_cast<long long>(tr.size()), static_cast<long long>(te.size()));
  train::fit(model, tr, &te, cfg, [&](const train::EpochMetrics& m) {
    train::write_metrics_row(csv, m, false);
    csv.flush();
    std::printf("epoch %d %-5s loss %.4f accuracy %.4f\n", m.epoch, m.split.c_str(), m.loss, m.accuracy);
    std::fflush(stdout);
  });
  nn::save_checkpoint(fs::path(f.out_dir) / "model.ckpt", model.state());
  write_text(fs::path(f.out_dir) / "model.cfg", models::format_model_config(spec));
  return kOk;
}

int eval_cls(const Globals& g, const MnistPaths& data, const std::string& checkpoint, const std::string& config,
             std::size_t limit) {
  const auto level = g.level_or(4);
  const auto spec = model_spec_or_default(config, level);
  models::Model<float> model(spec, g.seed);
  model.load_state(nn::load_checkpoint(checkpoint));
  const auto te = load_mnist(data, false, limit, healpix::Level(spec.entry_level));
  const auto ev = train::evaluate(model, te);
  std::printf("samples %lld\nloss %.6f\naccuracy %.6f\n", static_cast<long long>(te.size()), ev.loss, ev.accuracy);
  return kOk;
}

std::map<std::string, fs::path> sphs_by_stem(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".sphs") out[e.path().stem().string()] = e.path();
  }
  return out;
}

std::vector<std::int32_t> label_values(const io::SphsFile& f, const fs::path& path) {
  if (f.dtype != io::SphsType::U8) throw ContractError(path.string() + ": expected a label file");
  return {f.labels.begin(), f.labels.end()};
}

struct SegFlags {
  std::string signals, labels, predictions, checkpoint, config, csv;
  int classes = 0;
};

int eval_seg(const SegFlags& f) {
  const auto truth = sphs_by_stem(f.labels);
  const bool from_model = !f.checkpoint.empty();
  if (from_model == !f.predictions.empty()) {
    throw ConfigError("give either --checkpoint with --model-config, or --predictions");
  }
  const auto inputs = sphs_by_stem(from_model ? f.signals : f.predictions);
  if (inputs.empty()) throw std::runtime_error("no .sphs files to evaluate");
  std::optional<models::Model<float>> model;
  std::int32_t k = f.classes;
  if (from_model) {
    if (f.config.empty()) throw ConfigError("--checkpoint needs --model-config");
    const auto spec = models::load_model_config(f.config);
    model.emplace(spec, 42);
    model->load_state(nn::load_checkpoint(f.checkpoint));
    k = static_cast<std::int32_t>(spec.num_classes);
  }
  if (k < 2) throw ConfigError("--classes must be at least 2");
  for (const auto& [stem, path] : inputs) {
    if (!truth.count(stem)) throw std::runtime_error("no label file for " + path.filename().string());
  }
  metrics::ConfusionMatrix cm(k);
  for (const auto& [stem, path] : inputs) {
    const auto t = label_values(io::load_sphs(truth.at(stem)), truth.at(stem));
    std::vector<std::int32_t> pred;
    const auto file = io::load_sphs(path);
    if (from_model) {
      const auto s = file.signal();
      nn::Tape<float> tape(false);
      const nn::Tensor<float> x({1, s.n_pix(), s.channels}, s.data);
      const auto logits = model->forward(tape, x, false);
      pred = metrics::argmax_rows<float>(logits.data(), k);
    } else {
      pred = label_values(file, path);
    }
    if (pred.size() != t.size()) throw ContractError(stem + ": prediction and label sizes differ");
    cm.add(pred, t);
  }
  std::ostringstream table;
  table << "class,iou\n";
  std::printf("class  iou\n");
  for (std::int32_t c = 0; c < k; ++c) {
    const double iou = cm.iou(c);
    std::printf("%5d  %s\n", c, std::isnan(iou) ? "-" : std::to_string(iou).c_str());
    table << c << ',' << (std::isnan(iou) ? std::string("nan") : std::to_string(iou)) << '\n';
  }
  std::printf("files %zu\npixel accuracy %.6f\nmiou %.6f\n", inputs.size(), cm.pixel_accuracy(), cm.miou());
  table << "pixel_accuracy," << cm.pixel_accuracy() << "\nmiou," << cm.miou() << '\n';
  if (!f.csv.empty()) write_text(f.csv, table.str());
  return kOk;
}

// ---------------------------------------------------------------------------------------------
// bench

int bench_gather(const Globals& g, std::int64_t channels, int iterations) {
  const auto r = bench::bench_gather(g.level_or(5), channels, iterations, g.seed);
  std::printf("level %d\npixels %lld\nchannels %lld\niterations %d\n", r.level, static_cast<long long>(r.pixels),
              static_cast<long long>(r.channels), r.iterations);
  std::printf("gather seconds %.6e\nconv seconds %.6e\npixels per second %.6e\nbytes moved %lld\nchecksum %.9e\n",
              r.gather_seconds, r.conv_seconds, r.pixels_per_second, static_cast<long long>(r.bytes_moved),
              r.checksum);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spherical transformer toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  int level_flag = -1;
  app.add_option("--seed", g.seed, "random seed")->default_val(42);
  app.add_option("--threads", g.threads, "worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--level", level_flag, "HEALPix level")->check(CLI::Range(0, healpix::kMaxLevel));

  std::function<int()> action;

  // grid
  auto* grid = app.add_subcommand("grid", "inspect HEALPix levels");
  grid->require_subcommand(1);
  grid->add_subcommand("info", "counts for a level")->callback([&] { action = [&] { return grid_info(g); }; });
  std::int64_t pix = 0;
  auto* nb = grid->add_subcommand("neighbors", "8 neighbor slots of a pixel");
  nb->add_option("--pix", pix, "nested pixel index")->required();
  nb->callback([&] { action = [&] { return grid_neighbors(g, pix); }; });
  std::string dump_out;
  auto* dump = grid->add_subcommand("dump", "CSV of centers and neighbors");
  dump->add_option("--out", dump_out, "output file (default stdout)");
  dump->callback([&] { action = [&] { return grid_dump(g, dump_out); }; });

  // project
  auto* project = app.add_subcommand("project", "build spherical signals");
  project->require_subcommand(1);
  std::string mesh_path, out_path, dump_views, img_path, mode = "bilinear", idx_path, mesh_dir, kind = "depth";
  std::size_t digit_index = 0;
  bool force = false;
  RenderFlags rf;
  const auto render_flags = [&](CLI::App* cmd) {
    cmd->add_option("--res", rf.resolution, "render resolution")->default_val(128);
    cmd->add_option("--distance", rf.distance, "camera distance")->default_val(3.0);
    cmd->add_option("--fov", rf.fov, "field of view, degrees")->default_val(40.0);
  };
  auto* depth = project->add_subcommand("depth", "6-channel ray-cast depth of a mesh and its hull");
  depth->add_option("--mesh", mesh_path)->required()->check(CLI::ExistingFile);
  depth->add_option("--out", out_path)->required();
  depth->callback([&] { action = [&] { return project_single(g, "depth", mesh_path, out_path, rf, ""); }; });
  auto* render = project->add_subcommand("render", "1-channel rendering-based projection");
  render->add_option("--mesh", mesh_path)->required()->check(CLI::ExistingFile);
  render->add_option("--out", out_path)->required();
  render->add_option("--dump-views", dump_views, "write the 12 renders as PGM");
  render_flags(render);
  render->callback([&] { action = [&] { return project_single(g, "render", mesh_path, out_path, rf, dump_views); }; });
  auto* equi = project->add_subcommand("equirect", "resample an equirectangular PPM/PGM");
  equi->add_option("--img", img_path)->required()->check(CLI::ExistingFile);
  equi->add_option("--mode", mode, "bilinear or nearest")->default_val("bilinear");
  equi->add_option("--out", out_path)->required();
  equi->callback([&] { action = [&] { return project_equirect(g, img_path, mode, out_path); }; });
  auto* digit = project->add_subcommand("digit", "project one IDX digit onto the north cap");
  digit->add_option("--idx", idx_path)->required()->check(CLI::ExistingFile);
  digit->add_option("--index", digit_index)->default_val(0);
  digit->add_option("--out", out_path)->required();
  digit->callback([&] { action = [&] { return project_digit(g, idx_path, digit_index, out_path); }; });
  auto* batch = project->add_subcommand("batch", "project every OFF file in a directory");
  batch->add_option("--mesh-dir", mesh_dir)->required();
  batch->add_option("--kind", kind, "depth, render or both")->default_val("depth");
  batch->add_option("--out-dir", out_path)->required();
  batch->add_flag("--force", force, "overwrite existing outputs");
  render_flags(batch);
  batch->callback([&] { action = [&] { return project_batch(g, mesh_dir, kind, out_path, force, rf); }; });

  // stm gather
  auto* stm_cmd = app.add_subcommand("stm", "spherical transformer operations");
  stm_cmd->require_subcommand(1);
  std::string gather_in;
  auto* gather_cmd = stm_cmd->add_subcommand("gather", "write the 3 x 3N patch image of a signal as .npy");
  gather_cmd->add_option("--in", gather_in)->required()->check(CLI::ExistingFile);
  gather_cmd->add_option("--out", out_path)->required();
  gather_cmd->callback([&] { action = [&] { return stm_gather(gather_in, out_path); }; });

  // train
  auto* train_cmd = app.add_subcommand("train", "train a network");
  train_cmd->require_subcommand(1);
  TrainFlags tf;
  auto* smnist = train_cmd->add_subcommand("smnist", "spherical MNIST classifier");
  smnist->add_option("--data-dir", tf.data.dir, "directory with the four MNIST IDX files")->default_val("data/mnist");
  smnist->add_option("--limit-train", tf.limit_train, "training digits (0 = all)")->default_val(6000);
  smnist->add_option("--limit-test", tf.limit_test, "test digits (0 = all)")->default_val(1000);
  smnist->add_option("--epochs", tf.epochs)->default_val(5)->check(CLI::PositiveNumber);
  smnist->add_option("--batch-size", tf.batch_size)->default_val(32)->check(CLI::PositiveNumber);
  smnist->add_option("--lr", tf.lr)->default_val(0.01)->check(CLI::PositiveNumber);
  smnist->add_option("--momentum", tf.momentum)->default_val(0.9)->check(CLI::Range(0.0, 1.0));
  smnist->add_option("--weight-decay", tf.weight_decay)->default_val(1e-4)->check(CLI::NonNegativeNumber);
  smnist->add_option("--model-config", tf.model_config, "key=value model file (default: smnist)");
  smnist->add_option("--out-dir", tf.out_dir)->default_val("runs/smnist");
  smnist->callback([&] { action = [&] { return train_smnist(g, tf); }; });

  // eval
  auto* eval = app.add_subcommand("eval", "score a trained network");
  eval->require_subcommand(1);
  MnistPaths eval_data;
  std::string checkpoint, model_config;
  std::size_t eval_limit = 0;
  auto* cls = eval->add_subcommand("cls", "classification accuracy on the MNIST test split");
  cls->add_option("--data-dir", eval_data.dir)->default_val("data/mnist");
  cls->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  cls->add_option("--model-config", model_config);
  cls->add_option("--limit", eval_limit, "test digits (0 = all)")->default_val(0);
  cls->callback([&] { action = [&] { return eval_cls(g, eval_data, checkpoint, model_config, eval_limit); }; });
  SegFlags sf;
  auto* seg = eval->add_subcommand("seg", "per-class IoU, mIoU and pixel accuracy");
  seg->add_option("--labels", sf.labels, "directory of label .sphs files")->required();
  seg->add_option("--predictions", sf.predictions, "directory of predicted label .sphs files");
  seg->add_option("--signals", sf.signals, "directory of input .sphs files (with --checkpoint)");
  seg->add_option("--checkpoint", sf.checkpoint);
  seg->add_option("--model-config", sf.config);
  seg->add_option("--classes", sf.classes, "class count when scoring --predictions");
  seg->add_option("--csv", sf.csv, "write the table as CSV");
  seg->callback([&] { action = [&] { return eval_seg(sf); }; });

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "micro-benchmarks");
  bench_cmd->require_subcommand(1);
  std::int64_t channels = 64;
  int iterations = 10;
  auto* bg = bench_cmd->add_subcommand("gather", "gather + conv throughput of one layer");
  bg->add_option("--channels", channels)->default_val(64);
  bg->add_option("--iterations", iterations)->default_val(10);
  bg->callback([&] { action = [&] { return bench_gather(g, channels, iterations); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (level_flag >= 0) g.level = level_flag;
#ifdef STM_HAVE_OPENMP
  if (g.threads > 0) omp_set_num_threads(g.threads);
#endif

  try {
    return action ? action() : kUsage;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
}
