#include "sketchprune/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "sketchprune/error.hpp"

namespace sketchprune::npy {

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;

static_assert(std::endian::native == std::endian::little,
              "NPY '<f4' payloads are copied without byte swapping");

[[noreturn]] void malformed(std::string_view source, const std::string& what) {
  throw Error(ErrorCode::malformed_npy, std::string(source) + ": " + what);
}

std::string shape_tuple(std::span<const std::int64_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ',';
  s += ')';
  return s;
}

// Value text that follows `'key':` in the header dict.
std::string_view dict_value(std::string_view header, std::string_view key, std::string_view source) {
  const std::string quoted = "'" + std::string(key) + "'";
  auto pos = header.find(quoted);
  if (pos == std::string_view::npos) malformed(source, "header lacks " + quoted);
  pos = header.find(':', pos + quoted.size());
  if (pos == std::string_view::npos) malformed(source, "header key " + quoted + " has no value");
  ++pos;
  while (pos < header.size() && header[pos] == ' ') ++pos;
  return header.substr(pos);
}

std::vector<std::int64_t> parse_shape(std::string_view text, std::string_view source) {
  if (text.empty() || text.front() != '(') malformed(source, "shape is not a tuple");
  const auto close = text.find(')');
  if (close == std::string_view::npos) malformed(source, "unterminated shape tuple");
  std::vector<std::int64_t> shape;
  std::string inner(text.substr(1, close - 1));
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item.substr(first), &used);
    } catch (const std::exception&) {
      malformed(source, "non-integer shape entry '" + item + "'");
    }
    if (v < 0) malformed(source, "negative shape entry");
    shape.push_back(v);
  }
  return shape;
}

}  // namespace

std::string encode(std::span<const std::int64_t> shape, std::span<const float> data) {
  std::string dict = "{'descr': '<f4', 'fortran_order': False, 'shape': " + shape_tuple(shape) + ", }";
  const std::size_t preamble = kMagicLen + 2 + 2;
  std::size_t total = preamble + dict.size() + 1;
  const std::size_t padded = (total + 63) / 64 * 64;
  dict.append(padded - total, ' ');
  dict += '\n';
  if (dict.size() > 0xFFFF) throw Error(ErrorCode::invalid_argument, "NPY header too long for v1.0");

  std::string out;
  out.reserve(padded + data.size() * sizeof(float));
  out.append(kMagic, kMagicLen);
  out += '\x01';
  out += '\x00';
  const auto len = static_cast<std::uint16_t>(dict.size());
  out += static_cast<char>(len & 0xFF);
  out += static_cast<char>(len >> 8);
  out += dict;
  out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  return out;
}

Array decode(std::string_view bytes, std::string_view source) {
  if (bytes.size() < kMagicLen + 4 || bytes.substr(0, kMagicLen) != std::string_view(kMagic, kMagicLen)) {
    malformed(source, "missing NPY magic");
  }
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t offset = 0;
  const auto byte = [&](std::size_t i) { return static_cast<std::size_t>(static_cast<unsigned char>(bytes[i])); };
  if (major == 1) {
    header_len = byte(8) | (byte(9) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) malformed(source, "truncated header length");
    header_len = byte(8) | (byte(9) << 8) | (byte(10) << 16) | (byte(11) << 24);
    offset = 12;
  } else {
    malformed(source, "unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) malformed(source, "truncated header");
  const auto header = bytes.substr(offset, header_len);

  const auto descr = dict_value(header, "descr", source);
  if (!descr.starts_with("'<f4'")) malformed(source, "dtype must be '<f4'");
  const auto fortran = dict_value(header, "fortran_order", source);
  if (!fortran.starts_with("False")) malformed(source, "fortran_order must be False");

  Array a;
  a.shape = parse_shape(dict_value(header, "shape", source), source);
  const auto count = std::accumulate(a.shape.begin(), a.shape.end(), std::int64_t{1}, std::multiplies<>());
  const auto payload = bytes.substr(offset + header_len);
  if (payload.size() != static_cast<std::size_t>(count) * sizeof(float)) {
    throw Error(ErrorCode::shape_mismatch,
                std::string(source) + ": payload holds " + std::to_string(payload.size() / sizeof(float)) +
                    " values but header shape needs " + std::to_string(count));
  }
  a.data.resize(static_cast<std::size_t>(count));
  std::memcpy(a.data.data(), payload.data(), payload.size());
  return a;
}

Array read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::missing_file, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode(buf.str(), path.string());
}

void write(const std::filesystem::path& path, std::span<const std::int64_t> shape,
           std::span<const float> data) {
  const auto bytes = encode(shape, data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "write failed for '" + path.string() + "'");
}

}  // namespace sketchprune::npy
