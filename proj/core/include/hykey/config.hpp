#pragma once

#include <filesystem>
#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>

#include "hykey/error.hpp"

namespace hykey::config {

// TOML subset: [table], [dotted.table] and [[array.of.tables]] headers, bare
// or dotted keys, basic strings, integers, floats, booleans and single-line
// arrays of those.
nlohmann::json parse_toml(std::string_view text);

// JSON unless the extension is .toml.
nlohmann::json load_file(const std::filesystem::path& path);

// Recursively overlays objects; any non-object value in `overlay` replaces
// the one in `base`.
void merge(nlohmann::json& base, const nlohmann::json& overlay);

// Typed access to one object of a config document that reports failures with
// their dotted field path and rejects unknown keys.
class Reader {
 public:
  Reader(const nlohmann::json& object, std::string path);

  template <class T>
  T get(const std::string& key, T fallback) const {
    const auto it = object_.find(key);
    if (it == object_.end()) return fallback;
    try {
      return it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(ErrorCode::kConfig, where(key) + ": expected " + type_name(fallback) + ", got " + it->dump());
    }
  }

  bool has(const std::string& key) const { return object_.contains(key); }
  Reader child(const std::string& key) const;
  const nlohmann::json& raw() const { return object_; }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void require_known(std::initializer_list<std::string_view> keys) const;

 private:
  template <class T>
  static std::string type_name(const T&) {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_arithmetic_v<T>) return "a number";
    else if constexpr (std::is_convertible_v<T, std::string>) return "a string";
    else return "a structured value";
  }

  const nlohmann::json& object_;
  std::string path_;
};

}  // namespace hykey::config
