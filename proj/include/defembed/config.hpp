#pragma once

// Service configuration. Layering, lowest to highest precedence:
//   key=value config file  <  command-line flags  <  DEFEMBED_* environment.
// Relative paths in a config file resolve against the file's directory.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace defembed {

struct ServiceConfig {
  std::filesystem::path checkpoint;
  std::filesystem::path target_embeddings;
  std::optional<std::filesystem::path> input_embeddings;              // pretrained_fixed checkpoints
  std::map<std::string, std::filesystem::path> bilingual_embeddings;  // language -> file
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t default_k = 10;
  std::size_t max_request_tokens = 64;
};

using ConfigValues = std::map<std::string, std::string, std::less<>>;

/// Parses "key = value" lines; '#' starts a comment line. Throws ParseError.
ConfigValues parse_config_text(std::string_view text, std::string_view name = "<config>");

/// Collects DEFEMBED_<KEY> variables (key lowercased) from an environ-style array.
ConfigValues environment_overrides(const char* const* envp);

/// Applies values onto `config`. Paths are resolved against `base_dir` when
/// given. Unknown keys are an error.
void apply_config(ServiceConfig& config, const ConfigValues& values,
                  const std::optional<std::filesystem::path>& base_dir = std::nullopt);

ServiceConfig resolve_service_config(const std::optional<std::filesystem::path>& config_file, const ConfigValues& flags,
                                     const ConfigValues& environment);

}  // namespace defembed
