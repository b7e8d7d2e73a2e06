#ifndef MTOC_CONFIG_HPP
#define MTOC_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mtoc {

enum class Variant : uint8_t {
  Ocksr = 0,    // independent per-task baseline
  COcksr = 1,   // joint one-hot responses, shared kernel
  OcksrL = 2,   // linear structure matrix
  OcksrN = 3,   // similarity-layer structure, Tikhonov penalty
  OcksrNs = 4,  // similarity-layer structure, sparse-group penalty
};

Variant parse_variant(const std::string& name);
const char* variant_name(Variant variant);

// Flat key = value configuration with '#' comments. Keys are unique; values
// are strings until a typed getter interprets them.
class Config {
public:
  Config() = default;

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text,
                            const std::string& origin = "<config>");

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  uint64_t get_uint64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_string_list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  const std::map<std::string, std::string>& entries() const {
    return values_;
  }

  // FNV-1a over the sorted key=value lines; stable across reordering and
  // comments, sensitive to any value change.
  uint64_t fingerprint() const;

  // Rejects keys outside the recognized set (typo guard).
  void validate_keys() const;

private:
  std::map<std::string, std::string> values_;
};

}  // namespace mtoc

#endif
