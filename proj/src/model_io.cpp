#include "sparsegate/model_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <iterator>
#include <limits>

#include <fmt/format.h>

namespace sparsegate {

std::string_view to_string(FormatErrc code) {
  switch (code) {
    case FormatErrc::io:
      return "io";
    case FormatErrc::bad_magic:
      return "bad_magic";
    case FormatErrc::unsupported_version:
      return "unsupported_version";
    case FormatErrc::truncated:
      return "truncated";
    case FormatErrc::duplicate_name:
      return "duplicate_name";
    case FormatErrc::bad_dtype:
      return "bad_dtype";
    case FormatErrc::trailing_bytes:
      return "trailing_bytes";
    case FormatErrc::missing_tensor:
      return "missing_tensor";
    case FormatErrc::shape_mismatch:
      return "shape_mismatch";
    case FormatErrc::bad_config:
      return "bad_config";
  }
  return "unknown";
}

FormatError::FormatError(FormatErrc code, const std::string& what)
    : std::runtime_error(fmt::format("{}: {}", to_string(code), what)), code_(code) {}

std::uint64_t Tensor::element_count() const {
  std::uint64_t count = 1;
  for (auto d : dims) count *= d;
  return count;
}

const std::vector<float>& Tensor::f32() const {
  if (const auto* v = std::get_if<std::vector<float>>(&data)) return *v;
  throw FormatError(FormatErrc::bad_dtype, fmt::format("tensor '{}' is not f32", name));
}

const std::vector<double>& Tensor::f64() const {
  if (const auto* v = std::get_if<std::vector<double>>(&data)) return *v;
  throw FormatError(FormatErrc::bad_dtype, fmt::format("tensor '{}' is not f64", name));
}

void TensorFile::add(Tensor t) {
  if (find(t.name) != nullptr) throw FormatError(FormatErrc::duplicate_name, fmt::format("tensor '{}' already present", t.name));
  const std::size_t stored = std::visit([](const auto& v) { return v.size(); }, t.data);
  if (t.element_count() != stored) {
    throw FormatError(FormatErrc::shape_mismatch,
                      fmt::format("tensor '{}' declares {} elements but holds {}", t.name, t.element_count(), stored));
  }
  tensors_.push_back(std::move(t));
}

const Tensor* TensorFile::find(std::string_view name) const {
  const auto it = std::find_if(tensors_.begin(), tensors_.end(), [&](const Tensor& t) { return t.name == name; });
  return it == tensors_.end() ? nullptr : &*it;
}

const Tensor& TensorFile::at(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw FormatError(FormatErrc::missing_tensor, fmt::format("tensor '{}' not found", name));
}

namespace {

constexpr std::array<char, 4> kMagic{'T', 'S', 'P', 'W'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
  }
  void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  std::span<const std::byte> take(std::size_t n, std::string_view what) {
    if (n > remaining()) {
      throw FormatError(FormatErrc::truncated,
                        fmt::format("need {} bytes for {} at offset {}, only {} left", n, what, pos_, remaining()));
    }
    const auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U uint(std::string_view what) {
    const auto s = take(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(std::to_integer<U>(s[i])) << (8 * i);
    return v;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::byte> encode_tspw(const TensorFile& file) {
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.uint<std::uint32_t>(kTspwVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(file.size()));
  for (const auto& t : file.tensors()) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.dtype()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.uint<std::uint64_t>(d);
    if (t.dtype() == DType::f32) {
      for (float v : t.f32()) w.uint<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
    } else {
      for (double v : t.f64()) w.uint<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
    }
  }
  return w.take();
}

TensorFile decode_tspw(std::span<const std::byte> bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size()) throw FormatError(FormatErrc::bad_magic, "file shorter than the magic");
  const auto magic = r.take(kMagic.size(), "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin(), [](std::byte b, char c) { return b == std::byte(c); })) {
    throw FormatError(FormatErrc::bad_magic, "expected \"TSPW\"");
  }
  const auto version = r.uint<std::uint32_t>("version");
  if (version != kTspwVersion) {
    throw FormatError(FormatErrc::unsupported_version, fmt::format("version {} (supported: {})", version, kTspwVersion));
  }
  const auto count = r.uint<std::uint32_t>("tensor count");

  TensorFile file;
  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor t;
    const auto name_len = r.uint<std::uint32_t>("name length");
    const auto name = r.take(name_len, "name");
    t.name.assign(reinterpret_cast<const char*>(name.data()), name.size());
    const auto dtype = r.uint<std::uint8_t>("dtype");
    if (dtype > static_cast<std::uint8_t>(DType::f64)) {
      throw FormatError(FormatErrc::bad_dtype, fmt::format("tensor '{}' has dtype code {}", t.name, dtype));
    }
    const auto ndim = r.uint<std::uint32_t>("ndim");
    if (ndim > r.remaining() / 8) throw FormatError(FormatErrc::truncated, fmt::format("tensor '{}' dims", t.name));
    std::uint64_t elements = 1;
    const std::uint64_t elem_size = dtype == 0 ? 4 : 8;
    for (std::uint32_t k = 0; k < ndim; ++k) {
      const auto dim = r.uint<std::uint64_t>("dim");
      t.dims.push_back(dim);
      if (dim != 0 && elements > std::numeric_limits<std::uint64_t>::max() / elem_size / dim) {
        throw FormatError(FormatErrc::truncated, fmt::format("tensor '{}' is larger than any file", t.name));
      }
      elements *= dim;
    }
    const auto payload = r.take(static_cast<std::size_t>(elements * elem_size), "tensor data");
    if (dtype == 0) {
      std::vector<float> values(elements);
      for (std::size_t e = 0; e < values.size(); ++e) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < 4; ++b) bits |= std::to_integer<std::uint32_t>(payload[e * 4 + b]) << (8 * b);
        values[e] = std::bit_cast<float>(bits);
      }
      t.data = std::move(values);
    } else {
      std::vector<double> values(elements);
      for (std::size_t e = 0; e < values.size(); ++e) {
        std::uint64_t bits = 0;
        for (std::size_t b = 0; b < 8; ++b) bits |= std::to_integer<std::uint64_t>(payload[e * 8 + b]) << (8 * b);
        values[e] = std::bit_cast<double>(bits);
      }
      t.data = std::move(values);
    }
    file.add(std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatErrc::trailing_bytes, fmt::format("{} bytes after the last tensor", r.remaining()));
  }
  return file;
}

void save_tspw(const TensorFile& file, const std::filesystem::path& path) {
  const auto bytes = encode_tspw(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io, fmt::format("cannot open '{}' for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrc::io, fmt::format("write to '{}' failed", path.string()));
}

TensorFile load_tspw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io, fmt::format("cannot open '{}'", path.string()));
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tspw(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace sparsegate
