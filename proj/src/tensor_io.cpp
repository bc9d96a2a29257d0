#include "mbrbf/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "mbrbf/errors.hpp"

namespace mbrbf {

namespace {

constexpr std::size_t kHeaderFixed = 6;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | in[static_cast<std::size_t>(i)];
  return v;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() > 255) throw FormatError("tensor rank exceeds 255");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderFixed + 8 * t.rank() + 8 * t.size());
  out.insert(out.end(), std::begin(kTensorMagic), std::end(kTensorMagic));
  out.push_back(kTensorVersion);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) put_u64(out, d);
  for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderFixed) throw LengthError("tensor file shorter than its header");
  if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
  if (bytes[4] != kTensorVersion) {
    throw FormatError("unsupported tensor version " + std::to_string(bytes[4]));
  }
  const std::size_t rank = bytes[5];
  if (rank == 0) throw FormatError("tensor rank 0 is not allowed");
  if (bytes.size() < kHeaderFixed + 8 * rank) throw LengthError("truncated tensor dims");

  Shape shape(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint64_t d = get_u64(bytes.subspan(kHeaderFixed + 8 * i, 8));
    if (d == 0) throw FormatError("tensor dimension of 0");
    if (count > (SIZE_MAX / 8) / d) throw FormatError("tensor dims overflow");
    shape[i] = static_cast<std::size_t>(d);
    count *= shape[i];
  }

  const std::size_t payload_at = kHeaderFixed + 8 * rank;
  const std::size_t expected = payload_at + 8 * count;
  if (bytes.size() != expected) {
    throw LengthError("tensor payload is " + std::to_string(bytes.size() - payload_at) +
                      " bytes, expected " + std::to_string(8 * count));
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<double>(get_u64(bytes.subspan(payload_at + 8 * i, 8)));
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  return decode_tensor(bytes);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_checksum(const std::filesystem::path& path) { return fnv1a64(read_all(path)); }

}  // namespace mbrbf
