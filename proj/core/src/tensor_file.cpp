#include "kbref/tensor_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "kbref/errors.hpp"

namespace kbref {

namespace {

constexpr char kMagic[4] = {'K', 'B', 'R', 'F'};

void put_u16(std::string& b, uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& b, uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& origin) : data_(data), origin_(origin) {}

  uint8_t u8() { return static_cast<uint8_t>(byte()); }
  uint16_t u16() { return static_cast<uint16_t>(u8()) | static_cast<uint16_t>(u8()) << 8; }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  size_t size() const { return data_.size(); }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(origin_ + ": " + what);
  }

 private:
  char byte() {
    need(1);
    return data_[pos_++];
  }
  void need(size_t n) const {
    if (pos_ + n > data_.size()) {
      throw DataError(origin_ + ": truncated container (need " + std::to_string(n) +
                      " bytes at offset " + std::to_string(pos_) + ")");
    }
  }
  const std::string& data_;
  const std::string& origin_;
  size_t pos_ = 0;
};

}  // namespace

void TensorContainer::put(const std::string& name, const Tensor& t) {
  std::vector<float> values(static_cast<size_t>(t.size()));
  for (int64_t i = 0; i < t.size(); ++i) values[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  put_f32(name, t.shape(), std::move(values));
}

void TensorContainer::put_f32(const std::string& name, std::vector<int64_t> dims,
                              std::vector<float> values) {
  if (index_.count(name)) throw DataError("duplicate container entry '" + name + "'");
  if (name.empty() || name.size() > std::numeric_limits<uint16_t>::max()) {
    throw DataError("container entry name length out of range");
  }
  if (dims.size() > 255) throw DataError("container entry rank out of range");
  if (shape_product(dims) != static_cast<int64_t>(values.size())) {
    throw ShapeError("container entry '" + name + "' dims do not match value count");
  }
  index_[name] = items_.size();
  items_.push_back(Item{name, std::move(dims), std::move(values)});
}

bool TensorContainer::has(const std::string& name) const { return index_.count(name) != 0; }

const TensorContainer::Item& TensorContainer::item(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("no container entry '" + name + "'");
  return items_[it->second];
}

Tensor TensorContainer::get(const std::string& name) const {
  const Item& it = item(name);
  std::vector<double> values(it.values.begin(), it.values.end());
  return Tensor(it.dims, std::move(values));
}

const std::vector<float>& TensorContainer::get_f32(const std::string& name) const {
  return item(name).values;
}

const std::vector<int64_t>& TensorContainer::dims(const std::string& name) const {
  return item(name).dims;
}

std::vector<std::string> TensorContainer::names() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.name);
  return out;
}

std::vector<ContainerEntry> TensorContainer::manifest() const {
  // Header size: magic + version + count, then the entry table.
  uint64_t header = 4 + 2 + 4;
  for (const auto& it : items_) {
    header += 2 + it.name.size() + 1 + 1 + 4 * it.dims.size() + 8;
  }
  std::vector<ContainerEntry> out;
  uint64_t offset = header;
  for (const auto& it : items_) {
    out.push_back(ContainerEntry{it.name, it.dims, offset});
    offset += 4 * it.values.size();
  }
  return out;
}

void TensorContainer::write(std::ostream& out) const {
  std::vector<ContainerEntry> mf = manifest();
  std::string buf;
  buf.append(kMagic, 4);
  put_u16(buf, kVersion);
  put_u32(buf, static_cast<uint32_t>(items_.size()));
  for (size_t i = 0; i < items_.size(); ++i) {
    const Item& it = items_[i];
    put_u16(buf, static_cast<uint16_t>(it.name.size()));
    buf.append(it.name);
    buf.push_back(0);  // dtype f32
    buf.push_back(static_cast<char>(it.dims.size()));
    for (int64_t d : it.dims) put_u32(buf, static_cast<uint32_t>(d));
    put_u64(buf, mf[i].offset);
  }
  for (const Item& it : items_) {
    for (float f : it.values) put_u32(buf, std::bit_cast<uint32_t>(f));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("container write failed");
}

void TensorContainer::write_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write(out);
}

TensorContainer TensorContainer::read(std::istream& in, const std::string& origin) {
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string data = ss.str();
  Reader r(data, origin);

  if (r.bytes(4) != std::string(kMagic, 4)) r.fail("bad magic, not a KBRF container");
  uint16_t version = r.u16();
  if (version != kVersion) {
    r.fail("unsupported container version " + std::to_string(version));
  }
  uint32_t count = r.u32();

  struct RawEntry {
    std::string name;
    std::vector<int64_t> dims;
    uint64_t offset;
    uint64_t bytes;
  };
  std::vector<RawEntry> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    RawEntry e;
    uint16_t name_len = r.u16();
    e.name = r.bytes(name_len);
    uint8_t dtype = r.u8();
    if (dtype != 0) r.fail("entry '" + e.name + "': unsupported dtype " + std::to_string(dtype));
    uint8_t rank = r.u8();
    int64_t n = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      uint32_t dim = r.u32();
      e.dims.push_back(static_cast<int64_t>(dim));
      n *= static_cast<int64_t>(dim);
    }
    e.offset = r.u64();
    e.bytes = static_cast<uint64_t>(n) * 4;
    entries.push_back(std::move(e));
  }

  uint64_t table_end = r.pos();
  // Validate payload placement: inside the file, past the table, no overlap.
  std::vector<std::pair<uint64_t, uint64_t>> spans;
  for (const RawEntry& e : entries) {
    if (e.offset < table_end || e.offset + e.bytes > data.size()) {
      r.fail("entry '" + e.name + "': payload outside file bounds (truncated?)");
    }
    spans.emplace_back(e.offset, e.offset + e.bytes);
  }
  std::sort(spans.begin(), spans.end());
  for (size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) r.fail("overlapping payload spans");
  }

  TensorContainer c;
  for (const RawEntry& e : entries) {
    std::vector<float> values(static_cast<size_t>(e.bytes / 4));
    for (size_t i = 0; i < values.size(); ++i) {
      size_t p = static_cast<size_t>(e.offset) + 4 * i;
      uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        u |= static_cast<uint32_t>(static_cast<uint8_t>(data[p + static_cast<size_t>(b)]))
             << (8 * b);
      }
      values[i] = std::bit_cast<float>(u);
    }
    c.put_f32(e.name, e.dims, std::move(values));
  }
  return c;
}

TensorContainer TensorContainer::read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read(in, path);
}

}  // namespace kbref
