#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbref/tensor.hpp"

namespace kbref {

// KBRF named-tensor container. This layout is a bit-exact interchange
// contract; all integers are little-endian regardless of host.
//
//   bytes 0..3    magic "KBRF"
//   bytes 4..5    version u16 = 1
//   bytes 6..9    entry count u32
//   entry table, per tensor:
//     u16 name length, name bytes (UTF-8)
//     u8  dtype (0 = f32)
//     u8  rank
//     u32 x rank dims
//     u64 payload byte offset from file start
//   payload region: f32 values, row-major, entries in table order
struct ContainerEntry {
  std::string name;
  std::vector<int64_t> dims;
  uint64_t offset = 0;
};

class TensorContainer {
 public:
  static constexpr uint16_t kVersion = 1;

  // Stores a copy, narrowing to f32. Duplicate names are rejected.
  void put(const std::string& name, const Tensor& t);
  void put_f32(const std::string& name, std::vector<int64_t> dims, std::vector<float> values);

  bool has(const std::string& name) const;
  // Widens back to double.
  Tensor get(const std::string& name) const;
  const std::vector<float>& get_f32(const std::string& name) const;
  const std::vector<int64_t>& dims(const std::string& name) const;

  size_t count() const { return items_.size(); }
  std::vector<std::string> names() const;  // insertion order

  // Entry table exactly as write() lays it out.
  std::vector<ContainerEntry> manifest() const;

  void write(std::ostream& out) const;
  void write_file(const std::string& path) const;
  static TensorContainer read(std::istream& in, const std::string& origin);
  static TensorContainer read_file(const std::string& path);

 private:
  struct Item {
    std::string name;
    std::vector<int64_t> dims;
    std::vector<float> values;
  };
  const Item& item(const std::string& name) const;

  std::vector<Item> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace kbref
