#include "stm/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "stm/errors.hpp"
#include "stm/healpix.hpp"

namespace stm::models {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::SphericalConv: return "spherical_conv";
    case LayerKind::Conv1x1: return "conv1x1";
    case LayerKind::Pool: return "pool";
    case LayerKind::Unpool: return "unpool";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Relu: return "relu";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::GlobalAverage: return "global_average";
    case LayerKind::Linear: return "linear";
    case LayerKind::Concat: return "concat";
    case LayerKind::Sum: return "sum";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

std::string to_string(const ActivationShape& shape) {
  if (!shape.spherical) return "dense(" + std::to_string(shape.channels) + ")";
  return "sphere(level " + std::to_string(shape.level) + ", " + std::to_string(shape.channels) + " ch)";
}

namespace {

std::size_t expected_inputs(LayerKind kind) {
  return kind == LayerKind::Concat || kind == LayerKind::Sum ? 2 : 1;
}

bool has_weights(LayerKind kind) {
  return kind == LayerKind::SphericalConv || kind == LayerKind::Conv1x1 || kind == LayerKind::Unpool ||
         kind == LayerKind::Linear;
}

}  // namespace

std::vector<ActivationShape> check_shapes(const ModelSpec& spec) {
  if (spec.entry_level < 0 || spec.entry_level > healpix::kMaxLevel) {
    throw ContractError("entry level " + std::to_string(spec.entry_level) + " outside 0.." +
                        std::to_string(healpix::kMaxLevel));
  }
  if (spec.in_channels <= 0) throw ContractError("model needs at least one input channel");
  const ActivationShape input{true, spec.entry_level, spec.in_channels};
  std::vector<ActivationShape> out;
  out.reserve(spec.layers.size());

  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(layer.kind) + ")";
    if (layer.inputs.size() != expected_inputs(layer.kind)) {
      throw ContractError(where + ": expected " + std::to_string(expected_inputs(layer.kind)) + " inputs");
    }
    std::vector<ActivationShape> in;
    for (const int src : layer.inputs) {
      if (src < kModelInput || src >= static_cast<int>(i)) {
        throw ContractError(where + ": input " + std::to_string(src) + " is not an earlier layer");
      }
      in.push_back(src == kModelInput ? input : out[static_cast<std::size_t>(src)]);
    }
    if (has_weights(layer.kind) && layer.out_width <= 0) throw ContractError(where + ": width must be positive");
    if (layer.kind == LayerKind::Softmax && i + 1 != spec.layers.size()) {
      throw ContractError(where + ": softmax must be the last layer");
    }
    const auto need_sphere = [&] {
      if (!in[0].spherical) throw ContractError(where + ": needs a spherical input, got " + to_string(in[0]));
    };

    ActivationShape s = in[0];
    switch (layer.kind) {
      case LayerKind::SphericalConv:
      case LayerKind::Conv1x1:
        need_sphere();
        s.channels = layer.out_width;
        break;
      case LayerKind::Pool:
        need_sphere();
        if (s.level == 0) throw ContractError(where + ": cannot pool below level 0");
        --s.level;
        break;
      case LayerKind::Unpool:
        need_sphere();
        if (s.level == healpix::kMaxLevel) throw ContractError(where + ": cannot unpool above the level cap");
        ++s.level;
        s.channels = layer.out_width;
        break;
      case LayerKind::Flatten:
        need_sphere();
        s = {false, 0, healpix::Level(s.level).n_pixels() * s.channels};
        break;
      case LayerKind::GlobalAverage:
        need_sphere();
        s = {false, 0, s.channels};
        break;
      case LayerKind::Linear:
        if (s.spherical) throw ContractError(where + ": needs a dense input, got " + to_string(s));
        s.channels = layer.out_width;
        break;
      case LayerKind::Concat:
        if (in[0].spherical != in[1].spherical || in[0].level != in[1].level) {
          throw ContractError(where + ": cannot concatenate " + to_string(in[0]) + " and " + to_string(in[1]));
        }
        s.channels = in[0].channels + in[1].channels;
        break;
      case LayerKind::Sum:
        if (!(in[0] == in[1])) {
          throw ContractError(where + ": cannot add " + to_string(in[0]) + " and " + to_string(in[1]));
        }
        break;
      case LayerKind::BatchNorm:
      case LayerKind::Relu:
      case LayerKind::Softmax:
        break;
    }
    out.push_back(s);
  }
  return out;
}

std::int64_t layer_params(const ModelSpec& spec, std::size_t layer) {
  const auto shapes = check_shapes(spec);
  const auto& l = spec.layers.at(layer);
  const int src = l.inputs.at(0);
  const std::int64_t cin = src == kModelInput ? spec.in_channels : shapes[static_cast<std::size_t>(src)].channels;
  switch (l.kind) {
    case LayerKind::SphericalConv: return 9 * cin * l.out_width + l.out_width;
    case LayerKind::Conv1x1:
    case LayerKind::Linear: return cin * l.out_width + l.out_width;
    case LayerKind::Unpool: return 4 * cin * l.out_width + l.out_width;
    case LayerKind::BatchNorm: return 2 * cin;
    default: return 0;
  }
}

std::int64_t count_params(const ModelSpec& spec) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) total += layer_params(spec, i);
  return total;
}

namespace {

class Builder {
 public:
  explicit Builder(ModelSpec& spec) : spec_(spec) {}

  int add(LayerKind kind, std::vector<int> inputs, std::int64_t width = 0) {
    const int idx = static_cast<int>(spec_.layers.size());
    spec_.layers.push_back({kind, std::move(inputs), width, to_string(kind) + std::to_string(idx)});
    return idx;
  }
  int add(LayerKind kind, int input, std::int64_t width = 0) { return add(kind, std::vector<int>{input}, width); }

  // conv -> batchnorm -> relu
  int conv_bn_relu(int input, std::int64_t width, LayerKind conv = LayerKind::SphericalConv) {
    return add(LayerKind::Relu, add(LayerKind::BatchNorm, add(conv, input, width)));
  }

 private:
  ModelSpec& spec_;
};

void require_positive(const std::vector<std::int64_t>& widths, const char* what) {
  for (const auto w : widths) {
    if (w <= 0) throw ConfigError(std::string(what) + ": widths must be positive");
  }
}

void require_classes(std::int64_t num_classes, const char* what) {
  if (num_classes < 2) {
    throw ConfigError(std::string(what) + ": need at least 2 classes, got " + std::to_string(num_classes));
  }
}

void require_level(int entry_level, int pools, const char* what) {
  if (entry_level > healpix::kMaxLevel) {
    throw ConfigError(std::string(what) + ": level " + std::to_string(entry_level) + " above the cap");
  }
  if (entry_level < pools) {
    throw ConfigError(std::string(what) + ": entry level " + std::to_string(entry_level) + " cannot take " +
                      std::to_string(pools) + " pools");
  }
}

}  // namespace

ModelSpec build_smnist(std::vector<std::int64_t> widths, int entry_level, std::int64_t in_channels,
                       std::int64_t num_classes) {
  if (widths.size() != 4) throw ConfigError("smnist: expected 4 conv widths");
  require_positive(widths, "smnist");
  require_classes(num_classes, "smnist");
  require_level(entry_level, 4, "smnist");
  if (in_channels <= 0) throw ConfigError("smnist: in_channels must be positive");

  ModelSpec spec{"smnist", entry_level, in_channels, num_classes, widths, false, 0, {}};
  Builder b(spec);
  int cur = kModelInput;
  for (const auto w : widths) {
    cur = b.add(LayerKind::SphericalConv, cur, w);
    cur = b.add(LayerKind::Pool, cur);
    cur = b.add(LayerKind::BatchNorm, cur);
    cur = b.add(LayerKind::Relu, cur);
  }
  cur = b.add(LayerKind::Flatten, cur);
  cur = b.add(LayerKind::Linear, cur, num_classes);
  b.add(LayerKind::Softmax, cur);
  return spec;
}

ModelSpec build_vgg11_spherical(bool anti_rotation, std::int64_t num_classes, int entry_level,
                                std::int64_t in_channels, std::int64_t fc_width, std::vector<std::int64_t> widths) {
  if (widths.size() != 8) throw ConfigError("vgg11: expected 8 conv widths");
  require_positive(widths, "vgg11");
  require_classes(num_classes, "vgg11");
  require_level(entry_level, 5, "vgg11");
  if (in_channels <= 0 || fc_width <= 0) throw ConfigError("vgg11: in_channels and fc_width must be positive");

  ModelSpec spec{"vgg11", entry_level, in_channels, num_classes, widths, anti_rotation, fc_width, {}};
  Builder b(spec);
  static constexpr bool kPoolAfter[8] = {true, true, false, true, false, true, false, true};
  int main = kModelInput;
  int rot = kModelInput;
  for (std::size_t i = 0; i < 8; ++i) {
    main = b.conv_bn_relu(main, widths[i]);
    if (!kPoolAfter[i]) continue;
    if (anti_rotation) {
      const int branch = b.conv_bn_relu(rot, widths[i], LayerKind::Conv1x1);
      main = b.add(LayerKind::Sum, {main, branch});
      rot = b.add(LayerKind::Pool, branch);
    }
    main = b.add(LayerKind::Pool, main);
  }
  int features = b.add(LayerKind::Flatten, main);
  if (anti_rotation) features = b.add(LayerKind::Concat, {features, b.add(LayerKind::Flatten, rot)});
  int cur = b.add(LayerKind::Relu, b.add(LayerKind::Linear, features, fc_width));
  cur = b.add(LayerKind::Relu, b.add(LayerKind::Linear, cur, fc_width));
  cur = b.add(LayerKind::Linear, cur, num_classes);
  b.add(LayerKind::Softmax, cur);
  return spec;
}

ModelSpec build_unet_spherical(std::int64_t num_classes, int entry_level, std::int64_t in_channels,
                               std::vector<std::int64_t> widths) {
  if (widths.size() < 2) throw ConfigError("unet: need at least 2 stage widths");
  require_positive(widths, "unet");
  require_classes(num_classes, "unet");
  require_level(entry_level, static_cast<int>(widths.size()) - 1, "unet");
  if (in_channels <= 0) throw ConfigError("unet: in_channels must be positive");

  ModelSpec spec{"unet", entry_level, in_channels, num_classes, widths, false, 0, {}};
  Builder b(spec);
  std::vector<int> skips;
  int cur = kModelInput;
  for (std::size_t s = 0; s < widths.size(); ++s) {
    if (s > 0) cur = b.add(LayerKind::Pool, cur);
    cur = b.conv_bn_relu(cur, widths[s]);
    cur = b.conv_bn_relu(cur, widths[s]);
    skips.push_back(cur);
  }
  for (std::size_t s = widths.size() - 1; s-- > 0;) {
    cur = b.add(LayerKind::Relu, b.add(LayerKind::BatchNorm, b.add(LayerKind::Unpool, cur, widths[s])));
    cur = b.add(LayerKind::Concat, {cur, skips[s]});
    cur = b.conv_bn_relu(cur, widths[s]);
    cur = b.conv_bn_relu(cur, widths[s]);
  }
  cur = b.add(LayerKind::SphericalConv, cur, num_classes);
  b.add(LayerKind::Softmax, cur);
  return spec;
}

ModelSpec build_pointwise_classifier(std::int64_t in_channels, std::vector<std::int64_t> widths,
                                     std::int64_t num_classes, int entry_level) {
  require_positive(widths, "pointwise");
  require_classes(num_classes, "pointwise");
  require_level(entry_level, 0, "pointwise");
  if (in_channels <= 0) throw ConfigError("pointwise: in_channels must be positive");

  ModelSpec spec{"pointwise", entry_level, in_channels, num_classes, widths, false, 0, {}};
  Builder b(spec);
  int cur = kModelInput;
  for (const auto w : widths) cur = b.add(LayerKind::Relu, b.add(LayerKind::Conv1x1, cur, w));
  cur = b.add(LayerKind::GlobalAverage, cur);
  cur = b.add(LayerKind::Linear, cur, num_classes);
  b.add(LayerKind::Softmax, cur);
  return spec;
}

// ---------------------------------------------------------------------------
// config files

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::int64_t parse_int(const std::string& v, const std::string& key, int line) {
  std::size_t used = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError("line " + std::to_string(line) + ": " + key + " expects an integer, got '" + v + "'");
  }
  return out;
}

}  // namespace

ModelSpec parse_model_config(std::istream& in) {
  std::map<std::string, std::pair<std::string, int>> kv;
  static const std::vector<std::string> kKeys = {"architecture", "level",  "in_channels",  "num_classes",
                                                 "widths",       "fc_width", "anti_rotation"};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key=value");
    const std::string key = trim(text.substr(0, eq));
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError("line " + std::to_string(line) + ": unknown key '" + key + "'");
    }
    if (kv.count(key)) throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
    kv[key] = {trim(text.substr(eq + 1)), line};
  }
  if (!kv.count("architecture")) throw ConfigError("model config: missing 'architecture'");

  const auto get_int = [&](const std::string& key, std::int64_t fallback) {
    const auto it = kv.find(key);
    return it == kv.end() ? fallback : parse_int(it->second.first, key, it->second.second);
  };
  const auto get_widths = [&](std::vector<std::int64_t> fallback) {
    const auto it = kv.find("widths");
    if (it == kv.end()) return fallback;
    std::vector<std::int64_t> w;
    std::stringstream ss(it->second.first);
    std::string item;
    while (std::getline(ss, item, ',')) w.push_back(parse_int(trim(item), "widths", it->second.second));
    return w;
  };
  bool anti = false;
  if (const auto it = kv.find("anti_rotation"); it != kv.end()) {
    const auto& v = it->second.first;
    if (v == "true" || v == "1") {
      anti = true;
    } else if (v != "false" && v != "0") {
      throw ConfigError("line " + std::to_string(it->second.second) + ": anti_rotation expects true/false");
    }
  }

  const std::string arch = kv["architecture"].first;
  if (arch == "smnist") {
    return build_smnist(get_widths({16, 24, 32, 48}), static_cast<int>(get_int("level", 4)),
                        get_int("in_channels", 1), get_int("num_classes", 10));
  }
  if (arch == "vgg11") {
    return build_vgg11_spherical(anti, get_int("num_classes", 40), static_cast<int>(get_int("level", 5)),
                                 get_int("in_channels", 6), get_int("fc_width", 1024),
                                 get_widths({64, 128, 256, 256, 512, 512, 512, 512}));
  }
  if (arch == "unet") {
    return build_unet_spherical(get_int("num_classes", 13), static_cast<int>(get_int("level", 5)),
                                get_int("in_channels", 4), get_widths({64, 128, 256, 512, 512}));
  }
  if (arch == "pointwise") {
    return build_pointwise_classifier(get_int("in_channels", 1), get_widths({16, 16}), get_int("num_classes", 10),
                                      static_cast<int>(get_int("level", 2)));
  }
  throw ConfigError("line " + std::to_string(kv["architecture"].second) + ": unknown architecture '" + arch + "'");
}

ModelSpec load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model config " + path.string());
  return parse_model_config(in);
}

std::string format_model_config(const ModelSpec& spec) {
  std::ostringstream out;
  out << "architecture=" << spec.architecture << "\n"
      << "level=" << spec.entry_level << "\n"
      << "in_channels=" << spec.in_channels << "\n"
      << "num_classes=" << spec.num_classes << "\n"
      << "widths=";
  for (std::size_t i = 0; i < spec.widths.size(); ++i) out << (i ? "," : "") << spec.widths[i];
  out << "\n";
  if (spec.architecture == "vgg11") {
    out << "fc_width=" << spec.fc_width << "\n"
        << "anti_rotation=" << (spec.anti_rotation ? "true" : "false") << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Model

template <typename T>
Model<T>::Model(ModelSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), shapes_(check_shapes(spec_)), params_(spec_.layers.size()), bn_(spec_.layers.size()) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    const int src = l.inputs[0];
    const std::int64_t cin = src == kModelInput ? spec_.in_channels : shapes_[static_cast<std::size_t>(src)].channels;
    const std::int64_t cout = l.out_width;

    const auto weights = [&](nn::Shape shape, std::int64_t fan_in) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      std::vector<T> v(static_cast<std::size_t>(nn::numel(shape)));
      for (auto& x : v) x = static_cast<T>(u(rng));
      return nn::Tensor<T>(std::move(shape), std::move(v), true);
    };
    const auto filled = [](std::int64_t n, T value) {
      return nn::Tensor<T>({n}, std::vector<T>(static_cast<std::size_t>(n), value), true);
    };

    switch (l.kind) {
      case LayerKind::SphericalConv:
        params_[i] = {weights({3, 3, cin, cout}, 9 * cin), filled(cout, T(0))};
        break;
      case LayerKind::Conv1x1:
      case LayerKind::Linear:
        params_[i] = {weights({cin, cout}, cin), filled(cout, T(0))};
        break;
      case LayerKind::Unpool:
        params_[i] = {weights({cin, 4, cout}, cin), filled(cout, T(0))};
        break;
      case LayerKind::BatchNorm:
        params_[i] = {filled(cin, T(1)), filled(cin, T(0))};
        bn_[i] = nn::BatchNormState<T>(cin);
        break;
      default:
        break;
    }
  }
}

template <typename T>
nn::Tensor<T> Model<T>::forward(nn::Tape<T>& tape, const nn::Tensor<T>& x, bool training) {
  const auto n_pix = healpix::Level(spec_.entry_level).n_pixels();
  if (x.shape().size() != 3 || x.dim(1) != n_pix || x.dim(2) != spec_.in_channels) {
    throw ContractError("model input must be [B, " + std::to_string(n_pix) + ", " +
                        std::to_string(spec_.in_channels) + "], got " + nn::to_string(x.shape()));
  }
  std::vector<nn::Tensor<T>> outs(spec_.layers.size());
  const auto input = [&](const LayerSpec& l, std::size_t k) -> const nn::Tensor<T>& {
    const int src = l.inputs[k];
    return src == kModelInput ? x : outs[static_cast<std::size_t>(src)];
  };
  nn::Tensor<T> result;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    const auto& a = input(l, 0);
    auto& p = params_[i];
    switch (l.kind) {
      case LayerKind::SphericalConv: {
        const auto grid = TransformerGrid::get(healpix::Level(shapes_[i].level));
        outs[i] = nn::spherical_conv(tape, a, *grid, p[0], p[1]);
        break;
      }
      case LayerKind::Conv1x1: outs[i] = nn::conv1x1(tape, a, p[0], p[1]); break;
      case LayerKind::Pool: outs[i] = nn::maxpool1x4(tape, a); break;
      case LayerKind::Unpool: outs[i] = nn::unpool_conv(tape, a, p[0], p[1]); break;
      case LayerKind::BatchNorm: outs[i] = nn::batchnorm(tape, a, p[0], p[1], bn_[i], training); break;
      case LayerKind::Relu: outs[i] = nn::relu(tape, a); break;
      case LayerKind::Flatten: outs[i] = nn::reshape(tape, a, {a.dim(0), a.size() / a.dim(0)}); break;
      case LayerKind::GlobalAverage: outs[i] = nn::global_average(tape, a); break;
      case LayerKind::Linear: outs[i] = nn::linear(tape, a, p[0], p[1]); break;
      case LayerKind::Concat: outs[i] = nn::concat(tape, a, input(l, 1)); break;
      case LayerKind::Sum: outs[i] = nn::add(tape, a, input(l, 1)); break;
      case LayerKind::Softmax: outs[i] = a; break;
    }
    result = outs[i];
  }
  return result.defined() ? result : x;
}

template <typename T>
std::vector<nn::Tensor<T>> Model<T>::parameters() const {
  std::vector<nn::Tensor<T>> all;
  for (const auto& p : params_) all.insert(all.end(), p.begin(), p.end());
  return all;
}

namespace {

const char* const kWeightNames[] = {"weight", "bias"};
const char* const kNormNames[] = {"gamma", "beta"};

}  // namespace

template <typename T>
std::vector<nn::NamedArray> Model<T>::state() const {
  std::vector<nn::NamedArray> arrays;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& l = spec_.layers[i];
    const bool norm = l.kind == LayerKind::BatchNorm;
    for (std::size_t k = 0; k < params_[i].size(); ++k) {
      const auto& t = params_[i][k];
      arrays.push_back({l.name + "." + (norm ? kNormNames[k] : kWeightNames[k]), t.shape(),
                        std::vector<float>(t.values().begin(), t.values().end())});
    }
    if (norm) {
      const auto c = static_cast<std::int64_t>(bn_[i].running_mean.size());
      arrays.push_back({l.name + ".running_mean", {c},
                        std::vector<float>(bn_[i].running_mean.begin(), bn_[i].running_mean.end())});
      arrays.push_back({l.name + ".running_var", {c},
                        std::vector<float>(bn_[i].running_var.begin(), bn_[i].running_var.end())});
    }
  }
  return arrays;
}

template <typename T>
void Model<T>::load_state(const std::vector<nn::NamedArray>& arrays) {
  std::map<std::string, const nn::NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  const auto fetch = [&](const std::string& name, const nn::Shape& shape) -> const nn::NamedArray& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw ContractError("checkpoint has no array '" + name + "'");
    if (it->second->shape != shape) {
      throw ContractError("checkpoint array '" + name + "' has shape " + nn::to_string(it->second->shape) +
                          ", model expects " + nn::to_string(shape));
    }
    return *it->second;
  };
  const auto copy_into = [](const nn::NamedArray& a, std::vector<T>& dst) {
    std::transform(a.data.begin(), a.data.end(), dst.begin(), [](float v) { return static_cast<T>(v); });
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& l = spec_.layers[i];
    const bool norm = l.kind == LayerKind::BatchNorm;
    for (std::size_t k = 0; k < params_[i].size(); ++k) {
      auto& t = params_[i][k];
      copy_into(fetch(l.name + "." + (norm ? kNormNames[k] : kWeightNames[k]), t.shape()), t.values());
    }
    if (norm) {
      const nn::Shape c{static_cast<std::int64_t>(bn_[i].running_mean.size())};
      copy_into(fetch(l.name + ".running_mean", c), bn_[i].running_mean);
      copy_into(fetch(l.name + ".running_var", c), bn_[i].running_var);
    }
  }
}

template class Model<float>;
template class Model<double>;

}  // namespace stm::models
