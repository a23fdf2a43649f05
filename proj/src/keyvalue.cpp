#include "shipid/keyvalue.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <system_error>

#include "shipid/error.hpp"

namespace shipid {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw MalformedFileError(source + ":" + std::to_string(line_no) + ": expected `key = value`",
                               line_no);
    }
    KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (kv.key.empty()) {
      throw MalformedFileError(source + ":" + std::to_string(line_no) + ": empty key", line_no);
    }
    if (!seen.insert(kv.key).second) {
      throw MalformedFileError(
          source + ":" + std::to_string(line_no) + ": duplicate key '" + kv.key + "'", line_no);
    }
    out.push_back(std::move(kv));
  }
  return out;
}

std::vector<KeyValue> read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  return parse_key_values(in, path.string());
}

KeyValueReader::KeyValueReader(std::vector<KeyValue> entries, std::string source)
    : entries_(std::move(entries)), source_(std::move(source)) {}

const KeyValue* KeyValueReader::find(const std::string& key) {
  for (const auto& kv : entries_) {
    if (kv.key == key) {
      used_.insert(key);
      return &kv;
    }
  }
  return nullptr;
}

bool KeyValueReader::has(const std::string& key) const {
  for (const auto& kv : entries_) {
    if (kv.key == key) {
      return true;
    }
  }
  return false;
}

double KeyValueReader::get_double(const std::string& key, double fallback) {
  const KeyValue* kv = find(key);
  return kv ? parse_double(kv->value, source_ + ":" + std::to_string(kv->line) + ": " + key)
            : fallback;
}

long KeyValueReader::get_int(const std::string& key, long fallback) {
  const KeyValue* kv = find(key);
  return kv ? parse_int(kv->value, source_ + ":" + std::to_string(kv->line) + ": " + key)
            : fallback;
}

bool KeyValueReader::get_bool(const std::string& key, bool fallback) {
  const KeyValue* kv = find(key);
  return kv ? parse_bool(kv->value, source_ + ":" + std::to_string(kv->line) + ": " + key)
            : fallback;
}

std::string KeyValueReader::get_string(const std::string& key, const std::string& fallback) {
  const KeyValue* kv = find(key);
  return kv ? kv->value : fallback;
}

void KeyValueReader::reject_unknown() const {
  for (const auto& kv : entries_) {
    if (!used_.contains(kv.key)) {
      throw UsageError(source_ + ":" + std::to_string(kv.line) + ": unknown key '" + kv.key +
                       "'");
    }
  }
}

double parse_double(const std::string& text, const std::string& context) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw UsageError(context + ": not a number: '" + text + "'");
  }
  return value;
}

long parse_int(const std::string& text, const std::string& context) {
  long value = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw UsageError(context + ": not an integer: '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& text, const std::string& context) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") {
    return true;
  }
  if (text == "false" || text == "0" || text == "no" || text == "off") {
    return false;
  }
  throw UsageError(context + ": not a boolean: '" + text + "'");
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) {
    throw NumericError("cannot format double");
  }
  return std::string(buf, ptr);
}

}  // namespace shipid
