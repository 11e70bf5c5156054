#pragma once

// Run manifests (content hashes stamped into every output) and the binary
// model checkpoint format.
//
// Checkpoint layout:
//   8 bytes  "DUPDCKPT"
//   u32      format version (1)
//   u64      header length in bytes
//   header   JSON {config, vocab, manifest_hash, tensors: [{name, shape, offset}]}
//   payload  little-endian IEEE-754 doubles, tensors back to back

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "corpus.hpp"
#include "model.hpp"

#ifndef DUPDIST_VERSION
#define DUPDIST_VERSION "0.1.0"
#endif

namespace dupdist {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

// Content hash of a file, streamed.
inline std::string fingerprint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for fingerprinting");
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return hex64(h);
}

// Fingerprint of a loaded corpus (ids, titles, duplicate groups), so
// synthetic corpora get one too.
inline std::string fingerprint_corpus(const Corpus& c) {
  std::uint64_t h = kFnvOffset;
  for (const auto& r : c.reports) {
    h = fnv1a64(r.id, h);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(r.title_text, h);
    h = fnv1a64("\x1e", h);
  }
  for (const auto& g : c.groups.members) {
    for (auto m : g) h = fnv1a64(std::to_string(m) + ",", h);
    h = fnv1a64(";", h);
  }
  return hex64(h);
}

struct RunManifest {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::string dataset_fingerprint;
  std::string version = DUPDIST_VERSION;
  std::string command;
  std::map<std::string, std::string> outputs;  // not part of the hash

  // Hash over everything that determines results; output paths excluded.
  std::string hash() const {
    const nlohmann::json j = {{"config", config},
                              {"seeds", seeds},
                              {"dataset", dataset_fingerprint},
                              {"version", version},
                              {"command", command}};
    return hex64(fnv1a64(j.dump()));
  }

  nlohmann::json to_json() const {
    return {{"config", config},   {"seeds", seeds},   {"dataset_fingerprint", dataset_fingerprint},
            {"version", version}, {"command", command}, {"outputs", outputs},
            {"manifest_hash", hash()}};
  }
};

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr char kCheckpointMagic[8] = {'D', 'U', 'P', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  Vocabulary vocab;
  std::string manifest_hash;
};

inline void save_checkpoint(std::ostream& out, ModelParams& m, const Vocabulary& vocab,
                            std::string_view manifest_hash = {}) {
  if (vocab.size() != m.embedding.vocab_size()) throw Error("checkpoint: vocabulary and embedding sizes differ");
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  std::vector<const Tensor*> order;
  m.for_each([&](const std::string& name, Tensor& t) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
    order.push_back(&t);
  });
  // vocab words beyond the two reserved entries
  std::vector<std::string> words(vocab.words().begin() + 2, vocab.words().end());
  const nlohmann::json header = {{"config", m.config},
                                 {"embedding_trainable", m.embedding.trainable},
                                 {"vocab", words},
                                 {"manifest_hash", std::string(manifest_hash)},
                                 {"tensors", tensors}};
  const std::string hs = header.dump();
  const std::uint64_t hlen = hs.size();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const Tensor* t : order) {
    out.write(reinterpret_cast<const char*>(t->data().data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
  }
  if (!out) throw Error("checkpoint: write failed");
}

inline void save_checkpoint(const std::string& path, ModelParams& m, const Vocabulary& vocab,
                            std::string_view manifest_hash = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  save_checkpoint(out, m, vocab, manifest_hash);
}

inline Checkpoint load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw Error("checkpoint: bad magic");
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  if (!in) throw Error("checkpoint: truncated preamble");
  if (version != kCheckpointVersion) throw Error("checkpoint: unsupported format version " + std::to_string(version));
  if (hlen > (1ULL << 32)) throw Error("checkpoint: implausible header length");
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw Error("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: bad header: ") + e.what());
  }
  Checkpoint c;
  HyperConfig cfg = header.at("config").get<HyperConfig>();
  cfg.validate();
  c.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>());
  c.manifest_hash = header.value("manifest_hash", "");
  c.params = ModelParams::init(cfg, c.vocab.size(), 0);
  c.params.embedding.trainable = header.value("embedding_trainable", true);

  std::map<std::string, nlohmann::json> entries;
  for (const auto& t : header.at("tensors")) entries[t.at("name").get<std::string>()] = t;
  std::vector<double> payload;
  std::uint64_t expected = 0;
  c.params.for_each([&](const std::string& name, Tensor& t) {
    auto it = entries.find(name);
    if (it == entries.end()) throw Error("checkpoint: missing tensor '" + name + "'");
    if (it->second.at("shape").get<std::vector<std::size_t>>() != t.shape()) {
      throw Error("checkpoint: shape mismatch for '" + name + "'");
    }
    if (it->second.at("offset").get<std::uint64_t>() != expected) {
      throw Error("checkpoint: unexpected offset for '" + name + "'");
    }
    expected += t.size();
  });
  if (entries.size() != c.params.named_tensors().size()) throw Error("checkpoint: unexpected extra tensors");
  c.params.for_each([&](const std::string& name, Tensor& t) {
    in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw Error("checkpoint: truncated payload at '" + name + "'");
  });
  return c;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace dupdist
