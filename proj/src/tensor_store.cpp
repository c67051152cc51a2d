#include "vlmcpl/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>
#include <sstream>

namespace vlmcpl {

const char* to_string(BundleErrc code) {
  switch (code) {
    case BundleErrc::bad_magic: return "bad magic";
    case BundleErrc::unsupported_version: return "unsupported version";
    case BundleErrc::shape_payload_mismatch: return "shape/payload mismatch";
    case BundleErrc::duplicate_name: return "duplicate entry name";
    case BundleErrc::truncated_header: return "truncated header";
    case BundleErrc::invalid_dtype: return "invalid dtype";
    case BundleErrc::invalid_shape: return "invalid shape";
    case BundleErrc::trailing_bytes: return "trailing bytes";
    case BundleErrc::io: return "i/o error";
  }
  return "unknown";
}

Tensor Tensor::f32(std::string name, std::vector<std::uint64_t> shape, std::vector<float> values) {
  return Tensor{std::move(name), std::move(shape), std::move(values)};
}

Tensor Tensor::u32(std::string name, std::vector<std::uint64_t> shape,
                   std::vector<std::uint32_t> values) {
  return Tensor{std::move(name), std::move(shape), std::move(values)};
}

std::uint64_t Tensor::element_count() const noexcept {
  std::uint64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

std::size_t Tensor::payload_size() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, data);
}

const std::vector<float>& Tensor::as_f32() const {
  if (dtype() != DType::f32) throw std::invalid_argument("tensor '" + name + "' is not f32");
  return std::get<0>(data);
}

const std::vector<std::uint32_t>& Tensor::as_u32() const {
  if (dtype() != DType::u32) throw std::invalid_argument("tensor '" + name + "' is not u32");
  return std::get<1>(data);
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.name != b.name || a.shape != b.shape || a.dtype() != b.dtype()) return false;
  if (a.payload_size() != b.payload_size()) return false;
  const void* pa = std::visit([](const auto& v) -> const void* { return v.data(); }, a.data);
  const void* pb = std::visit([](const auto& v) -> const void* { return v.data(); }, b.data);
  return a.payload_size() == 0 || std::memcmp(pa, pb, a.payload_size() * 4) == 0;
}

bool TensorBundle::contains(const std::string& name) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Tensor& t) { return t.name == name; });
}

const Tensor& TensorBundle::at(const std::string& name) const {
  for (const auto& t : entries_)
    if (t.name == name) return t;
  throw std::out_of_range("bundle has no entry '" + name + "'");
}

void TensorBundle::add(Tensor tensor) {
  if (contains(tensor.name))
    throw BundleError(BundleErrc::duplicate_name, "'" + tensor.name + "'");
  entries_.push_back(std::move(tensor));
}

void TensorBundle::validate() const {
  if (version != kBundleVersion)
    throw BundleError(BundleErrc::unsupported_version, std::to_string(version));
  std::set<std::string> names;
  for (const auto& t : entries_) {
    if (!names.insert(t.name).second)
      throw BundleError(BundleErrc::duplicate_name, "'" + t.name + "'");
    if (t.shape.empty() || t.shape.size() > 3)
      throw BundleError(BundleErrc::invalid_shape,
                        "'" + t.name + "' has ndim " + std::to_string(t.shape.size()));
    if (t.name.size() > std::numeric_limits<std::uint32_t>::max())
      throw BundleError(BundleErrc::invalid_shape, "entry name too long");
    if (t.element_count() != t.payload_size())
      throw BundleError(BundleErrc::shape_payload_mismatch,
                        "'" + t.name + "' shape holds " + std::to_string(t.element_count()) +
                            " elements, payload has " + std::to_string(t.payload_size()));
  }
}

namespace {

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const noexcept { return bytes_.size() - pos_ >= n; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (!has(n)) throw BundleError(BundleErrc::truncated_header, what);
  }

  std::uint8_t u8() { return bytes_[pos_++]; }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{bytes_[pos_++]} << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes_[pos_++]} << (8 * i);
    return v;
  }

  std::string str(std::size_t n) {
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_bundle(const TensorBundle& bundle) {
  bundle.validate();
  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kBundleMagic), std::end(kBundleMagic));
  put_u32(out, bundle.version);
  put_u32(out, static_cast<std::uint32_t>(bundle.entries().size()));
  for (const auto& t : bundle.entries()) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u8(out, static_cast<std::uint8_t>(t.dtype()));
    put_u8(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto s : t.shape) put_u64(out, s);
    if (t.dtype() == DType::f32) {
      for (float v : t.as_f32()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    } else {
      for (std::uint32_t v : t.as_u32()) put_u32(out, v);
    }
  }
  return out;
}

std::uint64_t write_bundle(const TensorBundle& bundle, std::ostream& sink) {
  const auto bytes = serialize_bundle(bundle);
  sink.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw BundleError(BundleErrc::io, "write failed");
  return bytes.size();
}

void write_bundle_file(const TensorBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = serialize_bundle(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw BundleError(BundleErrc::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw BundleError(BundleErrc::io, "write failed: " + path.string());
}

TensorBundle read_bundle(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  in.need(4, "missing magic");
  if (in.str(4) != std::string_view(kBundleMagic, 4))
    throw BundleError(BundleErrc::bad_magic, "expected CPLT");
  in.need(4, "missing version");
  TensorBundle bundle;
  bundle.version = in.u32();
  if (bundle.version != kBundleVersion)
    throw BundleError(BundleErrc::unsupported_version, std::to_string(bundle.version));
  in.need(4, "missing entry count");
  const std::uint32_t count = in.u32();

  for (std::uint32_t e = 0; e < count; ++e) {
    in.need(4, "missing name length");
    const std::uint32_t name_len = in.u32();
    in.need(name_len, "name cut short");
    std::string name = in.str(name_len);
    in.need(2, "missing dtype/ndim");
    const std::uint8_t dtype = in.u8();
    const std::uint8_t ndim = in.u8();
    if (dtype > static_cast<std::uint8_t>(DType::u32))
      throw BundleError(BundleErrc::invalid_dtype, "code " + std::to_string(dtype));
    if (ndim < 1 || ndim > 3)
      throw BundleError(BundleErrc::invalid_shape, "ndim " + std::to_string(ndim));
    in.need(8u * ndim, "shape cut short");
    std::vector<std::uint64_t> shape(ndim);
    std::uint64_t count_elems = 1;
    bool overflow = false;
    for (auto& s : shape) {
      s = in.u64();
      if (s != 0 && count_elems > std::numeric_limits<std::uint64_t>::max() / 4 / s)
        overflow = true;
      count_elems *= s;
    }
    if (overflow || count_elems * 4 > in.remaining())
      throw BundleError(BundleErrc::shape_payload_mismatch,
                        "'" + name + "' declares more payload than available");
    if (bundle.contains(name)) throw BundleError(BundleErrc::duplicate_name, "'" + name + "'");

    const auto n = static_cast<std::size_t>(count_elems);
    if (dtype == static_cast<std::uint8_t>(DType::f32)) {
      std::vector<float> v(n);
      for (auto& x : v) x = std::bit_cast<float>(in.u32());
      bundle.add(Tensor::f32(std::move(name), std::move(shape), std::move(v)));
    } else {
      std::vector<std::uint32_t> v(n);
      for (auto& x : v) x = in.u32();
      bundle.add(Tensor::u32(std::move(name), std::move(shape), std::move(v)));
    }
  }
  if (in.remaining() != 0)
    throw BundleError(BundleErrc::trailing_bytes, std::to_string(in.remaining()) + " bytes");
  return bundle;
}

TensorBundle read_bundle(std::istream& source) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(source),
                                  std::istreambuf_iterator<char>()};
  return read_bundle(std::span<const std::uint8_t>(bytes));
}

TensorBundle read_bundle_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BundleError(BundleErrc::io, "cannot open " + path.string());
  return read_bundle(in);
}

}  // namespace vlmcpl
