#include "stm/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include "binary_io.hpp"
#include "stm/errors.hpp"

namespace stm::nn {

void write_checkpoint(std::ostream& out, const std::vector<NamedArray>& arrays) {
  out.write("STMW", 4);
  detail::put_u32_le(out, kCheckpointVersion);
  detail::put_u32_le(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    std::int64_t n = 1;
    for (auto d : a.shape) n *= d;
    if (n != static_cast<std::int64_t>(a.data.size())) {
      throw ContractError("checkpoint array '" + a.name + "' data does not match its shape");
    }
    detail::put_u32_le(out, static_cast<std::uint32_t>(a.name.size()));
    out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    detail::put_u32_le(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) detail::put_u32_le(out, static_cast<std::uint32_t>(d));
    for (float v : a.data) detail::put_f32_le(out, v);
  }
}

std::vector<NamedArray> read_checkpoint(std::istream& in) {
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  detail::ByteReader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::string(magic.begin(), magic.end()) != "STMW") throw ParseError("not a checkpoint (bad magic)", 0);
  const std::size_t version_at = r.offset();
  if (r.u32_le("version") != kCheckpointVersion) throw ParseError("unsupported checkpoint version", version_at);
  const std::uint32_t count = r.u32_le("array count");
  std::vector<NamedArray> arrays;
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedArray a;
    const auto name = r.take(r.u32_le("name length"), "name");
    a.name.assign(name.begin(), name.end());
    const std::uint32_t rank = r.u32_le("rank");
    std::int64_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      a.shape.push_back(r.u32_le("dimension"));
      n *= a.shape.back();
    }
    if (static_cast<std::size_t>(n) > r.remaining() / 4) {
      throw ParseError("truncated data for array '" + a.name + "'", r.offset());
    }
    a.data.resize(static_cast<std::size_t>(n));
    for (auto& v : a.data) v = r.f32_le("array data");
    arrays.push_back(std::move(a));
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint", r.offset());
  return arrays;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(out, arrays);
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_checkpoint(in);
}

}  // namespace stm::nn
