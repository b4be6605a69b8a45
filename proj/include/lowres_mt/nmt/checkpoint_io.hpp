#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "lowres_mt/nmt/train.hpp"

namespace lowres_mt::nmt {

/// Everything needed to decode: configuration, vocabulary, parameters.
struct NmtModel {
  ModelConfig config;
  Vocab vocab;
  Checkpoint checkpoint;

  ModelBinding binding() const { return {config, vocab.hash()}; }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

inline std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

inline std::string encode_tensor(const Matrix& m) {
  std::string out;
  const auto n = static_cast<std::uint64_t>(m.size());
  out.reserve(8 + 8 * n);
  put_u64(out, n);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_u64(out, std::bit_cast<std::uint64_t>(m(r, c)));
  return out;
}

inline void decode_tensor(const std::string& in, Matrix& m, const std::string& name) {
  if (in.size() < 8) throw Error("checkpoint tensor " + name + " is truncated");
  const std::uint64_t n = get_u64(in, 0);
  if (n != static_cast<std::uint64_t>(m.size()) || in.size() != 8 + 8 * n)
    throw Error("checkpoint tensor " + name + " has the wrong size");
  std::size_t pos = 8;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c, pos += 8) m(r, c) = std::bit_cast<double>(get_u64(in, pos));
  if (!m.allFinite()) throw Error("checkpoint tensor " + name + " contains non-finite values");
}

inline std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string model_manifest(const NmtModel& m) {
  std::string s;
  s += "architecture " + m.config.architecture_id + "\n";
  s += "vocab_size " + std::to_string(m.config.vocab_size) + "\n";
  s += "embed_dim " + std::to_string(m.config.embed_dim) + "\n";
  s += "hidden_dim " + std::to_string(m.config.hidden_dim) + "\n";
  s += "max_decode_len " + std::to_string(m.config.max_decode_len) + "\n";
  s += "step " + std::to_string(m.checkpoint.step) + "\n";
  s += "vocab_hash " + m.vocab.hash() + "\n";
  s += "dev_bleu " + detail::format_exact(m.checkpoint.dev_bleu) + "\n";
  return s;
}

/// Writes manifest.txt, vocab.txt and one <tensor>.bin per parameter.
inline void save_model(const Path& dir, const NmtModel& m) {
  std::filesystem::create_directories(dir);
  write_file(dir / "manifest.txt", model_manifest(m));
  write_lines(dir / "vocab.txt", m.vocab.symbols());
  for (std::size_t i = 0; i < kNumParams; ++i)
    write_file(dir / (std::string(kParamNames[i]) + ".bin"), detail::encode_tensor(m.checkpoint.params[i]));
}

inline NmtModel load_model(const Path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("checkpoint directory not found: " + dir.string());
  std::map<std::string, std::string> kv;
  for (const auto& line : read_lines(dir / "manifest.txt")) {
    const auto sp = line.find(' ');
    if (sp == std::string::npos) continue;
    kv[line.substr(0, sp)] = line.substr(sp + 1);
  }
  auto field = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw Error("checkpoint manifest lacks '" + k + "'");
    return it->second;
  };
  auto count = [&](const std::string& k) { return static_cast<std::size_t>(std::stoull(field(k))); };
  NmtModel m;
  m.config.architecture_id = field("architecture");
  m.config.vocab_size = count("vocab_size");
  m.config.embed_dim = count("embed_dim");
  m.config.hidden_dim = count("hidden_dim");
  m.config.max_decode_len = count("max_decode_len");
  m.config.validate();
  m.checkpoint.step = count("step");
  m.checkpoint.dev_bleu = std::stod(field("dev_bleu"));
  m.vocab = Vocab::from_symbols(read_lines(dir / "vocab.txt"));
  if (m.vocab.hash() != field("vocab_hash")) throw Error("checkpoint vocabulary does not match its manifest hash");
  if (m.vocab.size() != m.config.vocab_size) throw Error("checkpoint vocabulary size does not match its manifest");
  m.checkpoint.params = Parameters::zeros(m.config);
  for (std::size_t i = 0; i < kNumParams; ++i)
    detail::decode_tensor(read_file(dir / (std::string(kParamNames[i]) + ".bin")), m.checkpoint.params[i],
                          kParamNames[i]);
  return m;
}

}  // namespace lowres_mt::nmt
