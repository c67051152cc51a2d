#pragma once

// Binary interchange format for dense tensors (".cplt").
//
// Layout, all integers little-endian:
//   magic "CPLT" | u32 version | u32 entry_count |
//   per entry: u32 name_len | name bytes | u8 dtype | u8 ndim | u64 shape[ndim] | payload
//
// Payloads are row-major; f32 values are stored as their IEEE-754 bit pattern.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace vlmcpl {

inline constexpr char kBundleMagic[4] = {'C', 'P', 'L', 'T'};
inline constexpr std::uint32_t kBundleVersion = 1;

enum class DType : std::uint8_t { f32 = 0, u32 = 1 };

enum class BundleErrc {
  bad_magic,
  unsupported_version,
  shape_payload_mismatch,
  duplicate_name,
  truncated_header,
  invalid_dtype,
  invalid_shape,
  trailing_bytes,
  io,
};

const char* to_string(BundleErrc code);

class BundleError : public std::runtime_error {
 public:
  BundleError(BundleErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  BundleErrc code() const noexcept { return code_; }

 private:
  BundleErrc code_;
};

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::variant<std::vector<float>, std::vector<std::uint32_t>> data;

  static Tensor f32(std::string name, std::vector<std::uint64_t> shape, std::vector<float> values);
  static Tensor u32(std::string name, std::vector<std::uint64_t> shape,
                    std::vector<std::uint32_t> values);

  DType dtype() const noexcept { return data.index() == 0 ? DType::f32 : DType::u32; }
  std::uint64_t element_count() const noexcept;
  std::size_t payload_size() const noexcept;  // in elements

  const std::vector<float>& as_f32() const;
  const std::vector<std::uint32_t>& as_u32() const;

  // Bitwise on payloads, so NaN patterns compare equal to themselves.
  friend bool operator==(const Tensor& a, const Tensor& b);
};

class TensorBundle {
 public:
  TensorBundle() = default;

  std::uint32_t version = kBundleVersion;

  const std::vector<Tensor>& entries() const noexcept { return entries_; }
  bool contains(const std::string& name) const noexcept;
  const Tensor& at(const std::string& name) const;  // throws std::out_of_range

  // Rejects duplicate names; does not check the shape/payload invariant (see validate()).
  void add(Tensor tensor);

  // Throws BundleError if any invariant is violated.
  void validate() const;

  friend bool operator==(const TensorBundle& a, const TensorBundle& b) = default;

 private:
  std::vector<Tensor> entries_;
};

std::vector<std::uint8_t> serialize_bundle(const TensorBundle& bundle);
std::uint64_t write_bundle(const TensorBundle& bundle, std::ostream& sink);
void write_bundle_file(const TensorBundle& bundle, const std::filesystem::path& path);

TensorBundle read_bundle(std::span<const std::uint8_t> bytes);
TensorBundle read_bundle(std::istream& source);
TensorBundle read_bundle_file(const std::filesystem::path& path);

}  // namespace vlmcpl
