#include "rpos/report.hpp"

#include <charconv>
#include <cmath>

namespace rpos::report {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void JsonWriter::separate() {
  if (after_key_) {
    after_key_ = false;
    return;
  }
  if (!has_item_.empty()) {
    if (has_item_.back()) buf_ += ',';
    has_item_.back() = true;
  }
}

JsonWriter& JsonWriter::begin_object() {
  separate();
  buf_ += '{';
  has_item_.push_back(false);
  return *this;
}

JsonWriter& JsonWriter::end_object() {
  buf_ += '}';
  has_item_.pop_back();
  return *this;
}

JsonWriter& JsonWriter::begin_array() {
  separate();
  buf_ += '[';
  has_item_.push_back(false);
  return *this;
}

JsonWriter& JsonWriter::end_array() {
  buf_ += ']';
  has_item_.pop_back();
  return *this;
}

JsonWriter& JsonWriter::key(const std::string& k) {
  separate();
  buf_ += '"';
  buf_ += k;
  buf_ += "\":";
  after_key_ = true;
  return *this;
}

JsonWriter& JsonWriter::value(double v) {
  separate();
  if (std::isinf(v)) {
    buf_ += v > 0 ? "\"inf\"" : "\"-inf\"";
  } else if (std::isnan(v)) {
    buf_ += "\"nan\"";
  } else {
    buf_ += format_double(v);
  }
  return *this;
}

JsonWriter& JsonWriter::value(std::int64_t v) {
  separate();
  buf_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::value(std::uint64_t v) {
  separate();
  buf_ += std::to_string(v);
  return *this;
}

JsonWriter& JsonWriter::value(const std::string& s) {
  separate();
  buf_ += '"';
  for (char c : s) {
    switch (c) {
      case '"': buf_ += "\\\""; break;
      case '\\': buf_ += "\\\\"; break;
      case '\n': buf_ += "\\n"; break;
      case '\t': buf_ += "\\t"; break;
      default: buf_ += c;
    }
  }
  buf_ += '"';
  return *this;
}

JsonWriter& JsonWriter::value(bool b) {
  separate();
  buf_ += b ? "true" : "false";
  return *this;
}

JsonWriter& JsonWriter::value_null() {
  separate();
  buf_ += "null";
  return *this;
}

JsonWriter& JsonWriter::bracket(double lo, double hi) {
  begin_array();
  value(lo);
  value(hi);
  return end_array();
}

}  // namespace rpos::report
