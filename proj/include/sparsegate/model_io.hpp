#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace sparsegate {

// TSPW binary layout, all integers little-endian:
//
//   "TSPW"            4 bytes magic
//   version           u32 (= 1)
//   tensor count      u32
//   per tensor:
//     name length     u32
//     name            UTF-8 bytes, no terminator
//     dtype           u8 (0 = f32, 1 = f64)
//     ndim            u32
//     dims            ndim x u64
//     data            product(dims) elements, little-endian, row-major

inline constexpr std::uint32_t kTspwVersion = 1;
inline constexpr std::size_t kTspwHeaderBytes = 12;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

enum class FormatErrc {
  io,
  bad_magic,
  unsupported_version,
  truncated,
  duplicate_name,
  bad_dtype,
  trailing_bytes,
  missing_tensor,
  shape_mismatch,
  bad_config,
};

std::string_view to_string(FormatErrc code);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& what);
  FormatErrc code() const { return code_; }

 private:
  FormatErrc code_;
};

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<double>> data;

  DType dtype() const { return data.index() == 0 ? DType::f32 : DType::f64; }
  std::uint64_t element_count() const;
  const std::vector<float>& f32() const;
  const std::vector<double>& f64() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Ordered collection of uniquely named tensors.
class TensorFile {
 public:
  void add(Tensor t);
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  const Tensor* find(std::string_view name) const;
  const Tensor& at(std::string_view name) const;

  friend bool operator==(const TensorFile&, const TensorFile&) = default;

 private:
  std::vector<Tensor> tensors_;
};

std::vector<std::byte> encode_tspw(const TensorFile& file);
TensorFile decode_tspw(std::span<const std::byte> bytes);

void save_tspw(const TensorFile& file, const std::filesystem::path& path);
TensorFile load_tspw(const std::filesystem::path& path);

}  // namespace sparsegate
