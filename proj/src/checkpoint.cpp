#include "defembed/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "defembed/error.hpp"
#include "defembed/hash.hpp"

namespace defembed {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr std::string_view kMagic = "defembed-checkpoint 1";

std::string read_line(std::istream& in, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("checkpoint", line_no + 1, "unexpected end of file");
  ++line_no;
  return line;
}

// Reads "key value" and checks the key.
std::string read_field(std::istream& in, std::size_t& line_no, std::string_view key) {
  const auto line = read_line(in, line_no);
  const auto space = line.find(' ');
  if (space == std::string::npos || std::string_view(line).substr(0, space) != key) {
    throw ParseError("checkpoint", line_no, "expected field '" + std::string(key) + "'");
  }
  return line.substr(space + 1);
}

std::size_t to_size(const std::string& text, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const auto value = std::stoull(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return static_cast<std::size_t>(value);
  } catch (const std::exception&) {
    throw ParseError("checkpoint", line_no, "expected an integer, got '" + text + "'");
  }
}

std::string input_fingerprint(const Encoder& encoder) {
  if (encoder.config().input_mode == InputMode::pretrained_fixed) return to_hex(encoder.input_store()->fingerprint());
  return "none";
}

}  // namespace

void save_checkpoint(std::ostream& out, const Encoder& encoder) {
  const auto& c = encoder.config();
  const auto& vocab = encoder.vocabulary();
  out << kMagic << '\n';
  out << "architecture " << to_string(c.architecture) << '\n';
  out << "input_mode " << to_string(c.input_mode) << '\n';
  out << "input_dim " << c.input_dim << '\n';
  out << "hidden_dim " << c.hidden_dim << '\n';
  out << "target_dim " << c.target_dim << '\n';
  out << "output_nonlinearity " << to_string(c.output) << '\n';
  out << "seed " << c.seed << '\n';
  out << "vocab_hash " << to_hex(vocab.fingerprint()) << '\n';
  out << "input_store_hash " << input_fingerprint(encoder) << '\n';
  out << "vocab " << vocab.size() << '\n';
  for (std::size_t i = 0; i < vocab.size(); ++i) out << vocab.token(i) << ' ' << vocab.count(i) << '\n';
  const auto& p = encoder.parameters();
  out << "tensors " << p.size() << '\n';
  for (const auto& [name, value] : p) {
    out << "tensor " << name << ' ' << value.rows() << ' ' << value.cols() << '\n';
    out.write(reinterpret_cast<const char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(float)));
    out << '\n';
  }
  if (!out) throw Error("failed to write checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const Encoder& encoder) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  save_checkpoint(out, encoder);
}

Encoder load_checkpoint(std::istream& in, std::shared_ptr<const EmbeddingStore> input_store) {
  std::size_t line_no = 0;
  if (read_line(in, line_no) != kMagic) throw ParseError("checkpoint", line_no, "not a defembed checkpoint");
  EncoderConfig c;
  c.architecture = parse_architecture(read_field(in, line_no, "architecture"));
  c.input_mode = parse_input_mode(read_field(in, line_no, "input_mode"));
  c.input_dim = to_size(read_field(in, line_no, "input_dim"), line_no);
  c.hidden_dim = to_size(read_field(in, line_no, "hidden_dim"), line_no);
  c.target_dim = to_size(read_field(in, line_no, "target_dim"), line_no);
  c.output = parse_output_nonlinearity(read_field(in, line_no, "output_nonlinearity"));
  c.seed = to_size(read_field(in, line_no, "seed"), line_no);
  const auto vocab_hash = read_field(in, line_no, "vocab_hash");
  const auto store_hash = read_field(in, line_no, "input_store_hash");

  const auto vocab_size = to_size(read_field(in, line_no, "vocab"), line_no);
  std::vector<std::string> tokens;
  std::vector<std::size_t> counts;
  tokens.reserve(vocab_size);
  counts.reserve(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    const auto line = read_line(in, line_no);
    const auto space = line.rfind(' ');
    if (space == std::string::npos) throw ParseError("checkpoint", line_no, "expected 'token count'");
    tokens.push_back(line.substr(0, space));
    counts.push_back(to_size(line.substr(space + 1), line_no));
  }
  Vocabulary vocab(std::move(tokens), std::move(counts));
  if (to_hex(vocab.fingerprint()) != vocab_hash) throw ParseError("checkpoint", line_no, "vocabulary hash mismatch");

  if (c.input_mode == InputMode::pretrained_fixed) {
    if (!input_store) throw Error("checkpoint uses pretrained_fixed inputs: an input embedding store is required");
    if (to_hex(input_store->fingerprint()) != store_hash) {
      throw Error("input embedding store does not match the one the checkpoint was trained with");
    }
  }

  auto p = parameter_layout(c, vocab.size());
  const auto tensor_count = to_size(read_field(in, line_no, "tensors"), line_no);
  if (tensor_count != p.size()) throw ParseError("checkpoint", line_no, "unexpected tensor count");
  for (auto& [name, value] : p) {
    std::istringstream header(read_line(in, line_no));
    std::string keyword, got_name;
    Eigen::Index rows = -1, cols = -1;
    header >> keyword >> got_name >> rows >> cols;
    if (keyword != "tensor" || got_name != name || rows != value.rows() || cols != value.cols()) {
      throw ParseError("checkpoint", line_no, "expected tensor '" + name + "' " + std::to_string(value.rows()) + "x" +
                                                  std::to_string(value.cols()));
    }
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(float)));
    if (!in || in.get() != '\n') throw ParseError("checkpoint", line_no, "truncated tensor '" + name + "'");
  }
  return Encoder(c, std::move(vocab), std::move(input_store), std::move(p));
}

Encoder load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const EmbeddingStore> input_store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return load_checkpoint(in, std::move(input_store));
}

std::string checkpoint_bytes(const Encoder& encoder) {
  std::ostringstream out(std::ios::binary);
  save_checkpoint(out, encoder);
  return std::move(out).str();
}

std::string checkpoint_hash(const Encoder& encoder) {
  Fnv1a hash;
  hash.update(checkpoint_bytes(encoder));
  return to_hex(hash.digest());
}

}  // namespace defembed
