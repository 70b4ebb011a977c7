#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rpos::report {

// Deterministic JSON writer: keys keep insertion order, finite doubles are
// emitted as decimals with 17 significant digits via to_chars, infinities as
// the strings "inf" / "-inf". Byte-identical output for identical inputs.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(const std::string& k);
  JsonWriter& value(double v);
  JsonWriter& value(std::int64_t v);
  JsonWriter& value(int v) { return value(std::int64_t(v)); }
  JsonWriter& value(std::uint64_t v);
  JsonWriter& value(const std::string& s);
  JsonWriter& value(const char* s) { return value(std::string(s)); }
  JsonWriter& value(bool b);
  JsonWriter& value_null();
  JsonWriter& bracket(double lo, double hi);  // [lo, hi]

  template <typename T>
  JsonWriter& kv(const std::string& k, const T& v) {
    key(k);
    return value(v);
  }

  const std::string& str() const { return buf_; }

 private:
  void separate();
  std::string buf_;
  std::vector<bool> has_item_;
  bool after_key_ = false;
};

std::string format_double(double v);

}  // namespace rpos::report
