#include "hykey/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace hykey::config {

using nlohmann::json;

namespace {

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : text_(text) {}

  json parse() {
    json root = json::object();
    json* table = &root;
    while (pos_ < text_.size()) {
      skip_blank();
      if (pos_ >= text_.size()) break;
      if (peek() == '[') {
        ++pos_;
        const bool array_of_tables = peek() == '[';
        if (array_of_tables) ++pos_;
        const auto path = key_path(']');
        expect(']');
        if (array_of_tables) expect(']');
        table = &root;
        for (std::size_t i = 0; i < path.size(); ++i) {
          json& next = (*table)[path[i]];
          const bool last = i + 1 == path.size();
          if (last && array_of_tables) {
            if (next.is_null()) next = json::array();
            if (!next.is_array()) error("array-of-tables header collides with a value");
            next.push_back(json::object());
            table = &next.back();
            break;
          }
          if (next.is_null()) next = json::object();
          // A header below an array of tables extends its latest element.
          json* target = next.is_array() && !next.empty() && next.back().is_object() ? &next.back() : &next;
          if (!target->is_object()) error("table header collides with a value");
          table = target;
        }
      } else {
        const auto path = key_path('=');
        expect('=');
        skip_inline_space();
        json* target = table;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
          json& next = (*target)[path[i]];
          if (next.is_null()) next = json::object();
          target = &next;
        }
        if (target->contains(path.back())) error("duplicate key '" + path.back() + "'");
        (*target)[path.back()] = value();
      }
      end_of_line();
    }
    return root;
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  [[noreturn]] void error(const std::string& what) const {
    int line = 1;
    for (std::size_t i = 0; i < pos_ && i < text_.size(); ++i) line += text_[i] == '\n' ? 1 : 0;
    fail(ErrorCode::kConfig, "TOML line " + std::to_string(line) + ": " + what);
  }

  void expect(char c) {
    skip_inline_space();
    if (peek() != c) error(std::string("expected '") + c + "'");
    ++pos_;
  }

  void skip_inline_space() {
    while (peek() == ' ' || peek() == '\t') ++pos_;
  }

  void skip_blank() {
    while (pos_ < text_.size()) {
      const char c = peek();
      if (c == '#') {
        while (pos_ < text_.size() && peek() != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  void end_of_line() {
    skip_inline_space();
    if (peek() == '#') {
      while (pos_ < text_.size() && peek() != '\n') ++pos_;
    }
    if (pos_ < text_.size() && peek() != '\n' && peek() != '\r') error("unexpected trailing characters");
  }

  std::vector<std::string> key_path(char terminator) {
    std::vector<std::string> parts;
    while (true) {
      skip_inline_space();
      std::string key;
      if (peek() == '"') {
        key = basic_string();
      } else {
        while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-') key += text_[pos_++];
      }
      if (key.empty()) error("empty key");
      parts.push_back(key);
      skip_inline_space();
      if (peek() == '.') {
        ++pos_;
        continue;
      }
      if (peek() != terminator) error(std::string("expected '") + terminator + "' after key");
      return parts;
    }
  }

  std::string basic_string() {
    ++pos_;  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= text_.size() || peek() == '\n') error("unterminated string");
      const char c = text_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      const char e = text_[pos_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: error(std::string("unsupported escape \\") + e);
      }
    }
  }

  json value() {
    skip_inline_space();
    const char c = peek();
    if (c == '"') return basic_string();
    if (c == '[') {
      ++pos_;
      json arr = json::array();
      while (true) {
        skip_inline_space();
        if (peek() == ']') {
          ++pos_;
          return arr;
        }
        arr.push_back(value());
        skip_inline_space();
        if (peek() == ',') {
          ++pos_;
        } else if (peek() != ']') {
          error("expected ',' or ']' in array");
        }
      }
    }
    std::string token;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != ',' &&
           peek() != ']' && peek() != '#') {
      token += text_[pos_++];
    }
    if (token == "true") return true;
    if (token == "false") return false;
    std::string digits;
    for (char ch : token) {
      if (ch != '_') digits += ch;
    }
    if (digits.empty()) error("missing value");
    const bool is_float = digits.find_first_of(".eE") != std::string::npos || digits == "inf" || digits == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      const char* begin = digits.data() + (digits[0] == '+' ? 1 : 0);
      const auto [ptr, ec] = std::from_chars(begin, digits.data() + digits.size(), v);
      if (ec == std::errc() && ptr == digits.data() + digits.size()) return v;
      error("invalid value '" + token + "'");
    }
    std::istringstream in(digits);
    in.imbue(std::locale::classic());
    double v = 0.0;
    in >> v;
    if (!in || in.peek() != std::char_traits<char>::eof()) error("invalid number '" + token + "'");
    return v;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

json load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  if (path.extension() == ".toml") return parse_toml(buffer.str());
  try {
    return json::parse(buffer.str());
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
}

void merge(json& base, const json& overlay) {
  if (!overlay.is_object() || !base.is_object()) {
    base = overlay;
    return;
  }
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      merge(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

Reader::Reader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
  if (!object_.is_object()) fail(ErrorCode::kConfig, (path_.empty() ? "config" : path_) + ": expected a table");
}

Reader Reader::child(const std::string& key) const {
  static const json kEmpty = json::object();
  const auto it = object_.find(key);
  if (it == object_.end()) return Reader(kEmpty, where(key));
  return Reader(*it, where(key));
}

void Reader::require_known(std::initializer_list<std::string_view> keys) const {
  for (auto it = object_.begin(); it != object_.end(); ++it) {
    bool known = false;
    for (auto k : keys) known = known || k == it.key();
    if (!known) fail(ErrorCode::kConfig, where(it.key()) + ": unknown field");
  }
}

}  // namespace hykey::config
