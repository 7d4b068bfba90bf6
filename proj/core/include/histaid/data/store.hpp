#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace histaid::data {

enum class StoreModality : std::uint8_t { image = 0, text = 1 };

// Key -> float vector map persisted as
//   "TMEB1" | u32 dim | u64 count | count x (u32 key_len | key | u8 modality | dim x f32)
// with all integers and floats little-endian.
class EmbeddingStore {
 public:
  struct Entry {
    std::string key;
    StoreModality modality = StoreModality::text;
    std::vector<float> values;
  };

  EmbeddingStore() = default;
  explicit EmbeddingStore(std::uint32_t dim) : dim_(dim) {}

  std::uint32_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  // Throws ContractError on a duplicate key or width mismatch.
  void add(std::string key, StoreModality modality, std::vector<float> values);
  const Entry* find(std::string_view key) const;
  // Throws ContractError naming the key when it is absent.
  const Entry& at(std::string_view key) const;
  bool contains(std::string_view key) const { return find(key) != nullptr; }

  bool operator==(const EmbeddingStore& other) const;

 private:
  std::uint32_t dim_ = 0;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline constexpr std::size_t kStoreHeaderBytes = 17;

std::string serialize_store(const EmbeddingStore& store);
// FormatError on a bad magic; CorruptionError (with byte offset) on truncated
// records, trailing bytes or duplicate keys.
EmbeddingStore parse_store(std::span<const char> bytes, std::string_view source = "<memory>");

void embstore_write(const EmbeddingStore& store, const std::string& path);
EmbeddingStore embstore_read(const std::string& path);

}  // namespace histaid::data
