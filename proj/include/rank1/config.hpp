#pragma once
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rank1 {

// Sectioned key=value text, used for both model definition files and
// experiment configs:
//
//   [model]
//   kind = flat-cylinder-funnels
//   core_half_width = 1.0
//
// '#' starts a comment, keys are unique within a section.
class Config {
public:
  static Config parse_text(const std::string& text);
  static Config parse_file(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;
  double get_num(const std::string& section, const std::string& key) const;
  double get_num(const std::string& section, const std::string& key, double fallback) const;
  long get_int(const std::string& section, const std::string& key, long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  // comma-separated list of numbers
  std::vector<double> get_list(const std::string& section, const std::string& key) const;
  std::vector<double> get_list(const std::string& section, const std::string& key,
                               const std::vector<double>& fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  std::vector<std::string> sections() const;
  std::vector<std::pair<std::string, std::string>> entries(const std::string& section) const;

  // canonical form: sections and keys sorted, one "section.key = value" per
  // line. Hashing this makes the config fingerprint independent of layout.
  std::string canonical() const;
  uint64_t hash() const; // FNV-1a over canonical()

private:
  std::map<std::string, std::map<std::string, std::string>> data_;
};

// FNV-1a 64-bit, also used for report fingerprints.
uint64_t fnv1a(const std::string& s);
std::string hex64(uint64_t v);

} // namespace rank1
