#pragma once

// Model checkpoint: a text header (config, vocabulary, fingerprints)
// followed by named float32 tensors in little-endian byte order.
//
//   defembed-checkpoint 1
//   architecture lstm
//   ...
//   vocab <n>
//   <n token lines>
//   tensors <k>
//   tensor <name> <rows> <cols>
//   <rows*cols*4 raw bytes>
//   ...
//
// save -> load -> save reproduces the same bytes.

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>

#include "defembed/encoders.hpp"

namespace defembed {

void save_checkpoint(std::ostream& out, const Encoder& encoder);
void save_checkpoint(const std::filesystem::path& path, const Encoder& encoder);

/// `input_store` is required for pretrained_fixed checkpoints and must match
/// the fingerprint recorded at save time.
Encoder load_checkpoint(std::istream& in, std::shared_ptr<const EmbeddingStore> input_store = nullptr);
Encoder load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const EmbeddingStore> input_store = nullptr);

std::string checkpoint_bytes(const Encoder& encoder);
/// FNV-1a of the serialized checkpoint, hex.
std::string checkpoint_hash(const Encoder& encoder);

}  // namespace defembed
