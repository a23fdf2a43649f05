#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace shipid {

// One `key = value` line of a plain-text config file.
struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Grammar: `key = value` per line, `#` starts a comment, blank lines ignored.
// Duplicate keys are rejected.
std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source);
std::vector<KeyValue> read_key_value_file(const std::filesystem::path& path);

// Typed access to a parsed file that remembers which keys were consumed so
// callers can reject anything left over.
class KeyValueReader {
 public:
  KeyValueReader(std::vector<KeyValue> entries, std::string source);

  bool has(const std::string& key) const;
  double get_double(const std::string& key, double fallback);
  long get_int(const std::string& key, long fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_string(const std::string& key, const std::string& fallback);

  // Throws UsageError naming the first key that was never read.
  void reject_unknown() const;

  const std::string& source() const { return source_; }

 private:
  const KeyValue* find(const std::string& key);

  std::vector<KeyValue> entries_;
  std::string source_;
  std::set<std::string> used_;
};

double parse_double(const std::string& text, const std::string& context);
long parse_int(const std::string& text, const std::string& context);
bool parse_bool(const std::string& text, const std::string& context);

// Shortest decimal form that parses back to the identical double.
std::string format_double(double x);

}  // namespace shipid
