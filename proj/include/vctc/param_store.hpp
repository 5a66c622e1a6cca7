#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "vctc/autodiff.hpp"

namespace vctc {

// Named parameter collection with a flat binary checkpoint format.
//
// Checkpoint layout (all integers and floats little-endian):
//
//   bytes 0..7   magic "VCTCPRM\0"
//   u32          format version (currently 1)
//   u32          metadata entry count M
//   M x          { u32 key length, key bytes, u32 value length, value bytes }
//   u32          parameter count P
//   P x          { u32 name length, name bytes, u8 trainable, u32 rank,
//                  rank x u64 extent, prod(extents) x f64 row-major values }
//
// Entries are written in name order, metadata in key order.
class ParamStore {
 public:
  struct Entry {
    ad::Tensor tensor;
    bool trainable = true;
  };

  static constexpr std::uint32_t kFormatVersion = 1;

  // Registers a new leaf. Throws ContractError if the name is taken.
  ad::Tensor add(const std::string& name, Array init, bool trainable = true);
  const ad::Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  bool trainable(const std::string& name) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::vector<std::string> names() const;

  std::size_t scalar_count(bool trainable_only = true) const;
  void zero_grad();

  // Deep copy of every value into fresh leaves; gradients start empty.
  ParamStore replicate() const;
  // Copies values from a store with the same names and shapes.
  void copy_values_from(const ParamStore& other);

  std::map<std::string, std::string> metadata;

  void write(std::ostream& os) const;
  static ParamStore read(std::istream& is);
  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace vctc
