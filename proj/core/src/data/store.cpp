#include "histaid/data/store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "histaid/data/io.hpp"
#include "histaid/error.hpp"

namespace histaid::data {

static_assert(std::endian::native == std::endian::little, "store I/O assumes a little-endian host");

namespace {

constexpr char kMagic[5] = {'T', 'M', 'E', 'B', '1'};

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::span<const char> bytes, std::string_view source) : bytes_(bytes), source_(source) {}

  template <class T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what), sizeof(T));
    return v;
  }

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CorruptionError(std::string(source_) + ": truncated " + what + " at byte offset " + std::to_string(pos_) +
                            " (need " + std::to_string(n) + ", have " + std::to_string(bytes_.size() - pos_) + ")");
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const char> bytes_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

}  // namespace

void EmbeddingStore::add(std::string key, StoreModality modality, std::vector<float> values) {
  if (values.size() != dim_) {
    throw ContractError("embedding '" + key + "' has width " + std::to_string(values.size()) + ", store expects " +
                        std::to_string(dim_));
  }
  if (index_.count(key)) throw ContractError("duplicate embedding key '" + key + "'");
  index_.emplace(key, entries_.size());
  entries_.push_back({std::move(key), modality, std::move(values)});
}

const EmbeddingStore::Entry* EmbeddingStore::find(std::string_view key) const {
  auto it = index_.find(std::string(key));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

const EmbeddingStore::Entry& EmbeddingStore::at(std::string_view key) const {
  if (const auto* e = find(key)) return *e;
  throw ContractError("embedding key '" + std::string(key) + "' not found in store");
}

bool EmbeddingStore::operator==(const EmbeddingStore& other) const {
  if (dim_ != other.dim_ || entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.key != b.key || a.modality != b.modality ||
        std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) != 0) {
      return false;
    }
  }
  return true;
}

std::string serialize_store(const EmbeddingStore& store) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, store.dim());
  put<std::uint64_t>(out, store.size());
  for (const auto& e : store.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.key.size()));
    out += e.key;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.modality));
    out.append(reinterpret_cast<const char*>(e.values.data()), e.values.size() * sizeof(float));
  }
  return out;
}

EmbeddingStore parse_store(std::span<const char> bytes, std::string_view source) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(std::string(source) + ": not an embedding store (bad magic)");
  }
  Reader r(bytes, source);
  r.take(sizeof(kMagic), "magic");
  const auto dim = r.get<std::uint32_t>("header dim");
  const auto count = r.get<std::uint64_t>("header count");
  EmbeddingStore store(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto at = r.pos();
    const auto len = r.get<std::uint32_t>("key length");
    std::string key(r.take(len, "key"), len);
    const auto modality = r.get<std::uint8_t>("modality");
    if (modality > 1) {
      throw CorruptionError(std::string(source) + ": record at byte offset " + std::to_string(at) +
                            " has modality byte " + std::to_string(modality));
    }
    std::vector<float> values(dim);
    std::memcpy(values.data(), r.take(std::size_t{dim} * sizeof(float), "vector"), std::size_t{dim} * sizeof(float));
    if (store.contains(key)) {
      throw CorruptionError(std::string(source) + ": duplicate key '" + key + "' at byte offset " + std::to_string(at));
    }
    store.add(std::move(key), static_cast<StoreModality>(modality), std::move(values));
  }
  if (r.remaining() != 0) {
    throw CorruptionError(std::string(source) + ": " + std::to_string(r.remaining()) +
                          " trailing bytes after the last record at byte offset " + std::to_string(r.pos()));
  }
  return store;
}

void embstore_write(const EmbeddingStore& store, const std::string& path) {
  write_file_atomic(path, serialize_store(store));
}

EmbeddingStore embstore_read(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_store(bytes, path);
}

}  // namespace histaid::data
