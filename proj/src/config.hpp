#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace clusdiff {

/// Flat key = value configuration with '#' comments. Keys keep their file
/// order for echoing; lookups are by exact key. Values are raw strings until
/// a typed getter parses them, so an override can be spliced in as text.
class KeyValues {
 public:
  static KeyValues parse_file(const std::string& path);
  static KeyValues parse_text(const std::string& text, const std::string& origin = "<text>");

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);  // add or replace

  std::string get_string(const std::string& key, const std::string& def) const;
  std::string require_string(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t def) const;
  uint64_t get_u64(const std::string& key, uint64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  /// Reject keys outside the allowed set (typo safety before any work runs).
  void check_known(const std::vector<std::string>& allowed) const;

  /// "key = value" lines in sorted key order; the checksum is its crc32, so
  /// two configs agree iff their effective contents do.
  std::string canonical() const;
  uint32_t checksum() const;

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

 private:
  const std::string* find(const std::string& key) const;

  std::vector<std::pair<std::string, std::string>> items_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace clusdiff
