#include "compdiff/tensor_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "compdiff/errors.hpp"

namespace compdiff {

void TensorTable::put(std::string name, std::vector<std::uint32_t> dims, std::vector<float> data) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  if (n != data.size()) throw ShapeError("tensor '" + name + "' dims do not match data length");
  for (float v : data) {
    if (!std::isfinite(v)) throw NumericError("tensor '" + name + "' holds a non-finite value");
  }
  for (auto& t : tensors_) {
    if (t.name == name) {
      t.dims = std::move(dims);
      t.data = std::move(data);
      return;
    }
  }
  tensors_.push_back({std::move(name), std::move(dims), std::move(data)});
}

const NamedTensor* TensorTable::find(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& TensorTable::get(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw LookupError("tensor '" + std::string(name) + "' not present");
}

namespace {

constexpr char kMagic[4] = {'C', 'D', 'I', 'F'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw TruncatedFileError(std::string("tensor file truncated while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n, "tensor name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32("tensor data");
    return std::bit_cast<float>(bits);
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_tensor_table(const TensorTable& table, std::uint32_t version) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, version);
  put_u32(out, static_cast<std::uint32_t>(table.tensors().size()));
  for (const auto& t : table.tensors()) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(out, d);
    for (float v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TensorTable decode_tensor_table(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw BadMagicError("bad magic: not a CDIF tensor file");
  }
  Reader r(bytes);
  r.str(4);
  const std::uint32_t version = r.u32("version");
  if (version != kTensorFileVersion) {
    throw VersionError("unsupported tensor file version " + std::to_string(version) +
                       " (reader supports " + std::to_string(kTensorFileVersion) + ")");
  }
  const std::uint32_t count = r.u32("tensor count");
  TensorTable table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32("name length");
    std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32("rank");
    std::vector<std::uint32_t> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = r.u32("dims");
      n *= d;
    }
    r.need(n * 4, "tensor data");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    table.put(std::move(name), std::move(dims), std::move(data));
  }
  return table;
}

void save_tensor_table(const TensorTable& table, const std::filesystem::path& path) {
  const auto bytes = encode_tensor_table(table);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

TensorTable load_tensor_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open weight file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor_table(bytes);
}

}  // namespace compdiff
