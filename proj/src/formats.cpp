#include "stm/formats.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "binary_io.hpp"
#include "stm/errors.hpp"

namespace stm::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// OFF

namespace {

struct OffLine {
  std::vector<std::string_view> tokens;
  std::size_t line = 0;
  std::size_t offset = 0;
};

std::vector<OffLine> tokenize_lines(std::string_view text) {
  std::vector<OffLine> lines;
  std::size_t pos = 0, number = 0;
  while (pos < text.size()) {
    ++number;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    OffLine out{{}, number, pos};
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      const std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i > start) out.tokens.push_back(line.substr(start, i - start));
    }
    if (!out.tokens.empty()) lines.push_back(std::move(out));
    pos = end + 1;
  }
  return lines;
}

template <typename T>
T parse_number(std::string_view token, const OffLine& line, const char* what) {
  T value{};
  if (token.size() > 1 && token[0] == '+') token.remove_prefix(1);  // from_chars rejects a leading '+'
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("OFF: expected " + std::string(what) + ", got '" + std::string(token) + "'", line.offset,
                     line.line);
  }
  return value;
}

}  // namespace

OffMesh parse_off(std::string_view text) {
  const auto lines = tokenize_lines(text);
  if (lines.empty()) throw ParseError("OFF: empty input", 0, 1);

  std::size_t cursor = 0;
  const auto& header = lines[0];
  std::string_view first = header.tokens[0];
  if (first.substr(0, 3) != "OFF") {
    throw ParseError("OFF: missing 'OFF' header, got '" + std::string(first) + "'", header.offset, header.line);
  }
  // Counts either follow on the header line (possibly glued to "OFF") or on the next line.
  std::vector<std::string_view> count_tokens;
  if (first.size() > 3) count_tokens.push_back(first.substr(3));
  count_tokens.insert(count_tokens.end(), header.tokens.begin() + 1, header.tokens.end());
  const OffLine* count_line = &header;
  ++cursor;
  if (count_tokens.empty()) {
    if (cursor >= lines.size()) throw ParseError("OFF: missing element counts", text.size(), header.line);
    count_line = &lines[cursor++];
    count_tokens = count_line->tokens;
  }
  if (count_tokens.size() < 2 || count_tokens.size() > 3) {
    throw ParseError("OFF: expected 'vertices faces [edges]'", count_line->offset, count_line->line);
  }
  const auto nv = parse_number<std::int64_t>(count_tokens[0], *count_line, "a vertex count");
  const auto nf = parse_number<std::int64_t>(count_tokens[1], *count_line, "a face count");
  if (count_tokens.size() == 3) parse_number<std::int64_t>(count_tokens[2], *count_line, "an edge count");
  if (nv < 0 || nf < 0) throw ParseError("OFF: negative element count", count_line->offset, count_line->line);

  std::vector<Vec3> vertices;
  vertices.reserve(static_cast<std::size_t>(nv));
  for (std::int64_t i = 0; i < nv; ++i) {
    if (cursor >= lines.size()) {
      throw ParseError("OFF: file ends after " + std::to_string(i) + " of " + std::to_string(nv) + " vertices",
                       text.size(), lines.back().line);
    }
    const auto& l = lines[cursor++];
    if (l.tokens.size() < 3) throw ParseError("OFF: vertex needs 3 coordinates", l.offset, l.line);
    vertices.push_back({parse_number<double>(l.tokens[0], l, "a coordinate"),
                        parse_number<double>(l.tokens[1], l, "a coordinate"),
                        parse_number<double>(l.tokens[2], l, "a coordinate")});
  }

  std::vector<Face> triangles;
  for (std::int64_t f = 0; f < nf; ++f) {
    if (cursor >= lines.size()) {
      throw ParseError("OFF: file ends after " + std::to_string(f) + " of " + std::to_string(nf) + " faces",
                       text.size(), lines.back().line);
    }
    const auto& l = lines[cursor++];
    const auto n = parse_number<std::int64_t>(l.tokens[0], l, "a polygon size");
    if (n < 3) throw ParseError("OFF: polygon with fewer than 3 vertices", l.offset, l.line);
    if (static_cast<std::int64_t>(l.tokens.size()) < n + 1) {
      throw ParseError("OFF: polygon lists fewer indices than its size", l.offset, l.line);
    }
    std::vector<std::int32_t> idx(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
      const auto v = parse_number<std::int64_t>(l.tokens[static_cast<std::size_t>(k + 1)], l, "a vertex index");
      if (v < 0 || v >= nv) {
        throw ParseError("OFF: vertex index " + std::to_string(v) + " out of range [0, " + std::to_string(nv) + ")",
                         l.offset, l.line);
      }
      idx[static_cast<std::size_t>(k)] = static_cast<std::int32_t>(v);
    }
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) triangles.push_back({idx[0], idx[k], idx[k + 1]});
  }
  if (cursor < lines.size()) {
    throw ParseError("OFF: unexpected content after the last face", lines[cursor].offset, lines[cursor].line);
  }

  OffMesh out;
  out.polygons = static_cast<std::size_t>(nf);
  out.mesh = make_mesh(std::move(vertices), std::move(triangles), &out.dropped_faces);
  return out;
}

OffMesh load_off(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_off(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ---------------------------------------------------------------------------
// IDX

std::vector<float> IdxImages::image(std::size_t i) const {
  if (i >= count) throw IndexError("IDX image " + std::to_string(i) + " of " + std::to_string(count));
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  std::vector<float> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = static_cast<float>(pixels[i * n + k]) / 255.0f;
  return out;
}

namespace {

void expect_magic(detail::ByteReader& r, std::uint32_t want, const char* kind) {
  const auto magic = r.u32_be("IDX magic");
  if (magic != want) {
    std::ostringstream msg;
    msg << "IDX " << kind << ": magic 0x" << std::hex << magic << ", expected 0x" << want;
    throw ParseError(msg.str(), 0);
  }
}

void expect_end(const detail::ByteReader& r, const char* what) {
  if (!r.done()) throw ParseError(std::string(what) + ": trailing bytes after payload", r.offset());
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

}  // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  expect_magic(r, kIdxImagesMagic, "images");
  IdxImages out;
  out.count = r.u32_be("image count");
  out.rows = r.u32_be("row count");
  out.cols = r.u32_be("column count");
  const std::uint64_t n = std::uint64_t{out.count} * out.rows * out.cols;
  const auto payload = r.take(static_cast<std::size_t>(n), "image payload");
  out.pixels.assign(payload.begin(), payload.end());
  expect_end(r, "IDX images");
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  expect_magic(r, kIdxLabelsMagic, "labels");
  const auto count = r.u32_be("label count");
  const auto payload = r.take(count, "label payload");
  expect_end(r, "IDX labels");
  return {payload.begin(), payload.end()};
}

std::vector<std::uint8_t> format_idx_images(const IdxImages& images) {
  std::vector<std::uint8_t> out;
  put_u32_be(out, kIdxImagesMagic);
  put_u32_be(out, images.count);
  put_u32_be(out, images.rows);
  put_u32_be(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

std::vector<std::uint8_t> format_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_u32_be(out, kIdxLabelsMagic);
  put_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

// ---------------------------------------------------------------------------
// PNM

namespace {

// Next header token, skipping whitespace and comments.
std::string pnm_token(std::span<const std::uint8_t> b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') tok.push_back(static_cast<char>(b[pos++]));
  if (tok.empty()) throw ParseError("PNM: truncated header", pos);
  return tok;
}

int pnm_int(std::span<const std::uint8_t> b, std::size_t& pos, const char* what) {
  const std::size_t at = pos;
  const auto tok = pnm_token(b, pos);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v <= 0) {
    throw ParseError(std::string("PNM: bad ") + what + " '" + tok + "'", at);
  }
  return v;
}

}  // namespace

Image parse_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const auto magic = pnm_token(bytes, pos);
  Image img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw ParseError("PNM: unsupported format '" + magic + "' (binary P5/P6 only)", 0);
  }
  img.width = pnm_int(bytes, pos, "width");
  img.height = pnm_int(bytes, pos, "height");
  const std::size_t maxval_at = pos;
  const int maxval = pnm_int(bytes, pos, "maxval");
  if (maxval != 255) throw ParseError("PNM: maxval " + std::to_string(maxval) + " unsupported (255 only)", maxval_at);
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw ParseError("PNM: missing separator before pixels", pos);
  ++pos;
  detail::ByteReader r(bytes.subspan(pos));
  const auto n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  try {
    const auto payload = r.take(n, "pixel payload");
    img.data.assign(payload.begin(), payload.end());
  } catch (const ParseError&) {
    throw ParseError("PNM: truncated pixel payload", bytes.size());
  }
  if (!r.done()) throw ParseError("PNM: trailing bytes after payload", pos + r.offset());
  return img;
}

std::vector<std::uint8_t> format_pnm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ContractError("PNM: 1 or 3 channels required");
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * image.channels) {
    throw ContractError("PNM: pixel buffer does not match the image size");
  }
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(image.width) +
                             " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.data.begin(), image.data.end());
  return out;
}

Image read_pnm(const std::filesystem::path& path) { return parse_pnm(read_file(path)); }

void write_pnm(const std::filesystem::path& path, const Image& image) { write_file(path, format_pnm(image)); }

// ---------------------------------------------------------------------------
// SPHS

SphericalSignal SphsFile::signal() const {
  SphericalSignal s(level, channels);
  if (dtype == SphsType::F32) {
    s.data = values;
  } else {
    s.data.assign(labels.begin(), labels.end());
  }
  return s;
}

std::vector<std::uint8_t> format_sphs(const SphsFile& file) {
  const auto n = static_cast<std::size_t>(file.level.n_pixels()) * file.channels;
  if (file.dtype == SphsType::U8 && file.channels != 1) throw ContractError("SPHS: label files have one channel");
  if ((file.dtype == SphsType::F32 ? file.values.size() : file.labels.size()) != n) {
    throw ContractError("SPHS: payload does not match level and channels");
  }
  std::ostringstream out;
  out.write("SPHS", 4);
  detail::put_u8(out, 1);
  detail::put_u8(out, static_cast<std::uint8_t>(file.dtype));
  detail::put_u16_le(out, 0);
  detail::put_u32_le(out, static_cast<std::uint32_t>(file.level.value()));
  detail::put_u32_le(out, file.channels);
  if (file.dtype == SphsType::F32) {
    for (const float v : file.values) detail::put_f32_le(out, v);
  } else {
    out.write(reinterpret_cast<const char*>(file.labels.data()), static_cast<std::streamsize>(n));
  }
  const std::string s = out.str();
  return {s.begin(), s.end()};
}

SphsFile parse_sphs(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(4, "SPHS magic");
  if (std::string(magic.begin(), magic.end()) != "SPHS") throw ParseError("SPHS: bad magic", 0);
  const auto version = r.u8("version");
  if (version != 1) throw ParseError("SPHS: unsupported version " + std::to_string(version), 4);
  const auto dtype = r.u8("dtype");
  if (dtype > 1) throw ParseError("SPHS: unknown dtype " + std::to_string(dtype), 5);
  if (r.u16_le("reserved") != 0) throw ParseError("SPHS: reserved field must be 0", 6);
  const auto level = r.u32_le("level");
  if (level > static_cast<std::uint32_t>(healpix::kMaxLevel)) {
    throw ParseError("SPHS: level " + std::to_string(level) + " above the cap", 8);
  }
  const auto channels = r.u32_le("channels");
  if (channels == 0) throw ParseError("SPHS: zero channels", 12);
  if (dtype == 1 && channels != 1) {
    throw ParseError("SPHS: label payload (dtype 1) must have 1 channel, header says " + std::to_string(channels), 12);
  }

  SphsFile file;
  file.level = healpix::Level(static_cast<int>(level));
  file.channels = channels;
  file.dtype = static_cast<SphsType>(dtype);
  const std::uint64_t n = static_cast<std::uint64_t>(file.level.n_pixels()) * channels;
  const std::uint64_t expected = n * (dtype == 0 ? 4 : 1);
  if (r.remaining() != expected) {
    throw ParseError("SPHS: payload has " + std::to_string(r.remaining()) + " bytes, header implies " +
                         std::to_string(expected),
                     r.offset());
  }
  if (dtype == 0) {
    file.values.resize(static_cast<std::size_t>(n));
    for (auto& v : file.values) v = r.f32_le("payload");
  } else {
    const auto payload = r.take(static_cast<std::size_t>(n), "payload");
    file.labels.assign(payload.begin(), payload.end());
  }
  return file;
}

SphsFile read_sphs(std::istream& in) {
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_sphs(bytes);
}

void write_sphs(std::ostream& out, const SphericalSignal& signal) {
  signal.validate();
  SphsFile f;
  f.level = signal.level;
  f.channels = static_cast<std::uint32_t>(signal.channels);
  f.values = signal.data;
  const auto bytes = format_sphs(f);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_sphs_labels(std::ostream& out, healpix::Level level, std::span<const std::uint8_t> labels) {
  SphsFile f;
  f.level = level;
  f.dtype = SphsType::U8;
  f.labels.assign(labels.begin(), labels.end());
  const auto bytes = format_sphs(f);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_sphs(const std::filesystem::path& path, const SphericalSignal& signal) {
  std::ostringstream out;
  write_sphs(out, signal);
  const std::string s = out.str();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

void save_sphs_labels(const std::filesystem::path& path, healpix::Level level, std::span<const std::uint8_t> labels) {
  std::ostringstream out;
  write_sphs_labels(out, level, labels);
  const std::string s = out.str();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

SphsFile load_sphs(const std::filesystem::path& path) { return parse_sphs(read_file(path)); }

}  // namespace stm::io
