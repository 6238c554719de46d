#include "defembed/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "defembed/error.hpp"

namespace defembed {
namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const auto n = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw Error("config: '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
}

std::filesystem::path resolve(const std::string& value, const std::optional<std::filesystem::path>& base) {
  std::filesystem::path p(value);
  if (base && p.is_relative()) return *base / p;
  return p;
}

}  // namespace

ConfigValues parse_config_text(std::string_view text, std::string_view name) {
  ConfigValues values;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto content = trim(line);
    if (content.empty() || content.front() == '#') continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ParseError(std::string(name), line_no, "expected key=value");
    auto key = trim(std::string_view(content).substr(0, eq));
    if (key.empty()) throw ParseError(std::string(name), line_no, "empty key");
    values[key] = trim(std::string_view(content).substr(eq + 1));
  }
  return values;
}

ConfigValues environment_overrides(const char* const* envp) {
  ConfigValues values;
  constexpr std::string_view kPrefix = "DEFEMBED_";
  for (; envp && *envp; ++envp) {
    const std::string_view entry(*envp);
    if (!entry.starts_with(kPrefix)) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    std::string key(entry.substr(kPrefix.size(), eq - kPrefix.size()));
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    values[key] = std::string(entry.substr(eq + 1));
  }
  return values;
}

void apply_config(ServiceConfig& config, const ConfigValues& values,
                  const std::optional<std::filesystem::path>& base_dir) {
  for (const auto& [key, value] : values) {
    if (key == "checkpoint") {
      config.checkpoint = resolve(value, base_dir);
    } else if (key == "target_embeddings") {
      config.target_embeddings = resolve(value, base_dir);
    } else if (key == "input_embeddings") {
      if (value.empty()) {
        config.input_embeddings.reset();
      } else {
        config.input_embeddings = resolve(value, base_dir);
      }
    } else if (key == "bilingual_embeddings") {
      // "fr=path/fr.vec,de=path/de.vec"
      config.bilingual_embeddings.clear();
      std::istringstream items(value);
      std::string item;
      while (std::getline(items, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) throw Error("config: bilingual_embeddings entries are lang=path");
        config.bilingual_embeddings[trim(item.substr(0, eq))] = resolve(trim(item.substr(eq + 1)), base_dir);
      }
    } else if (key == "host") {
      config.host = value;
    } else if (key == "port") {
      const auto port = parse_count(key, value);
      if (port > 65535) throw Error("config: port out of range");
      config.port = static_cast<int>(port);
    } else if (key == "default_k") {
      config.default_k = parse_count(key, value);
      if (config.default_k == 0) throw Error("config: default_k must be at least 1");
    } else if (key == "max_request_tokens") {
      config.max_request_tokens = parse_count(key, value);
      if (config.max_request_tokens == 0) throw Error("config: max_request_tokens must be at least 1");
    } else {
      throw Error("config: unknown key '" + key + "'");
    }
  }
}

ServiceConfig resolve_service_config(const std::optional<std::filesystem::path>& config_file, const ConfigValues& flags,
                                     const ConfigValues& environment) {
  ServiceConfig config;
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw Error("cannot open config file " + config_file->string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    apply_config(config, parse_config_text(buffer.str(), config_file->string()), config_file->parent_path());
  }
  apply_config(config, flags);
  apply_config(config, environment);
  return config;
}

}  // namespace defembed
