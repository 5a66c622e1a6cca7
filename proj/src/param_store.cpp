#include "vctc/param_store.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "vctc/error.hpp"

namespace vctc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'V', 'C', 'T', 'C', 'P', 'R', 'M', '\0'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("checkpoint: truncated");
  return v;
}

std::string get_string(std::istream& is) {
  const auto n = read_raw<std::uint32_t>(is);
  if (n > (1u << 24)) throw FormatError("checkpoint: implausible string length");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw FormatError("checkpoint: truncated");
  return s;
}

}  // namespace

ad::Tensor ParamStore::add(const std::string& name, Array init, bool trainable) {
  detail::require(!name.empty(), "ParamStore::add: empty name");
  detail::require(!contains(name), "ParamStore::add: duplicate parameter '" + name + "'");
  ad::Tensor t = ad::Tensor::variable(std::move(init));
  entries_.emplace(name, Entry{t, trainable});
  return t;
}

const ad::Tensor& ParamStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("ParamStore: no parameter '" + name + "'");
  return it->second.tensor;
}

bool ParamStore::trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("ParamStore: no parameter '" + name + "'");
  return it->second.trainable;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) {
    if (!trainable_only || e.trainable) n += e.tensor.size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) e.tensor.zero_grad();
}

ParamStore ParamStore::replicate() const {
  ParamStore out;
  out.metadata = metadata;
  for (const auto& [name, e] : entries_) out.add(name, e.tensor.value(), e.trainable);
  return out;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  for (auto& [name, e] : entries_) {
    const ad::Tensor& src = other.get(name);
    detail::require(src.shape() == e.tensor.shape(), "copy_values_from: shape mismatch for " + name);
    e.tensor.mutable_value().data = src.value().data;
  }
}

void ParamStore::write(std::ostream& os) const {
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kFormatVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(metadata.size()));
  for (const auto& [k, v] : metadata) {
    put_string(os, k);
    put_string(os, v);
  }
  put<std::uint32_t>(os, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    put_string(os, name);
    put<std::uint8_t>(os, e.trainable ? 1 : 0);
    const auto& shape = e.tensor.shape();
    put<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put<std::uint64_t>(os, d);
    const auto& data = e.tensor.value().data;
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!os) throw FormatError("checkpoint: write failed");
}

ParamStore ParamStore::read(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto version = read_raw<std::uint32_t>(is);
  if (version != kFormatVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  ParamStore out;
  const auto n_meta = read_raw<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = get_string(is);
    out.metadata[k] = get_string(is);
  }
  const auto n_params = read_raw<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = get_string(is);
    const bool trainable = read_raw<std::uint8_t>(is) != 0;
    const auto rank = read_raw<std::uint32_t>(is);
    if (rank > 8) throw FormatError("checkpoint: implausible rank");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(read_raw<std::uint64_t>(is));
    Array a(shape);
    if (!a.data.empty() &&
        !is.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)))) {
      throw FormatError("checkpoint: truncated values for " + name);
    }
    if (out.contains(name)) throw FormatError("checkpoint: duplicate parameter " + name);
    out.add(name, std::move(a), trainable);
  }
  return out;
}

void ParamStore::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("checkpoint: cannot open " + tmp);
    write(os);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw FormatError("checkpoint: cannot rename to " + path);
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open " + path);
  return read(is);
}

}  // namespace vctc
